#include "heterrec/htfl/item_record.hpp"

#include "heterrec/errors.hpp"

namespace heterrec::htfl {

ItemRecord ItemRecord::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw DataError("item record must be a JSON object");
  ItemRecord r;
  try {
    const auto& id = j.at("item_id");
    r.item_id = id.is_string() ? id.get<std::string>() : id.dump();
    if (j.contains("categorical")) r.categorical = j.at("categorical").get<std::map<std::string, std::int64_t>>();
    if (j.contains("numerical")) r.numerical = j.at("numerical").get<std::map<std::string, double>>();
    if (j.contains("multimodal")) {
      r.multimodal = j.at("multimodal").get<std::map<std::string, std::vector<float>>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed item record: ") + e.what());
  }
  return r;
}

nlohmann::json ItemRecord::to_json() const {
  nlohmann::json j;
  j["item_id"] = item_id;
  j["categorical"] = categorical;
  j["numerical"] = numerical;
  j["multimodal"] = multimodal;
  return j;
}

}  // namespace heterrec::htfl
