#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "heterrec/htfl/item_record.hpp"
#include "heterrec/model.hpp"
#include "json.hpp"

namespace heterrec::data {

enum class Behavior { kClick, kAddToCart, kConversion };

const char* to_string(Behavior b);
Behavior behavior_from_string(const std::string& s);  // DataError on unknown names

struct Interaction {
  std::string user_id;
  std::string item_id;
  std::int64_t ts = 0;
  Behavior behavior = Behavior::kClick;

  static Interaction from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

// Items in file order (catalog index = position) and per-user chronological
// sequences. Users are ordered by user_id; a user's events by (ts, item_id).
struct Dataset {
  std::vector<htfl::ItemRecord> items;
  std::map<std::string, std::int64_t> item_index;
  std::vector<UserSequence> users;
  std::vector<std::vector<Behavior>> behaviors;  // parallel to users[i].items

  std::size_t num_interactions() const;
  nlohmann::json summary() const;
};

std::vector<htfl::ItemRecord> read_items(const std::filesystem::path& path);
std::vector<Interaction> read_interactions(const std::filesystem::path& path);

// Validates references and builds sorted sequences. DataError names the
// offending line (1-based) for parse problems and unknown item ids.
Dataset build_dataset(std::vector<htfl::ItemRecord> items, const std::vector<Interaction>& interactions);
Dataset ingest(const std::filesystem::path& interactions, const std::filesystem::path& items);

// Normalized output: interactions sorted by (user_id, ts, item_id).
void write_items(const std::filesystem::path& path, const std::vector<htfl::ItemRecord>& items);
void write_interactions(const std::filesystem::path& path, const Dataset& dataset);

// Leave-one-out: the last event of each user is held out. Training keeps
// users with >= 2 remaining events; evaluation keeps users with >= 1.
struct Split {
  std::vector<UserSequence> train;
  std::vector<UserSequence> eval_history;
  std::vector<std::int64_t> eval_truth;
};
Split leave_one_out(const Dataset& dataset);

}  // namespace heterrec::data
