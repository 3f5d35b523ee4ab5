#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

namespace heterrec::htfl {

// One line of items.jsonl:
//   {"item_id": "...", "categorical": {name: id}, "numerical": {name: value},
//    "multimodal": {name: [floats]}}
struct ItemRecord {
  std::string item_id;
  std::map<std::string, std::int64_t> categorical;
  std::map<std::string, double> numerical;
  std::map<std::string, std::vector<float>> multimodal;

  static ItemRecord from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

}  // namespace heterrec::htfl
