#include "heterrec/data/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>

#include "heterrec/errors.hpp"

namespace heterrec::data {

namespace fs = std::filesystem;

const char* to_string(Behavior b) {
  switch (b) {
    case Behavior::kClick: return "click";
    case Behavior::kAddToCart: return "add_to_cart";
    case Behavior::kConversion: return "conversion";
  }
  return "click";
}

Behavior behavior_from_string(const std::string& s) {
  if (s == "click") return Behavior::kClick;
  if (s == "add_to_cart") return Behavior::kAddToCart;
  if (s == "conversion") return Behavior::kConversion;
  throw DataError("unknown behavior '" + s + "'");
}

Interaction Interaction::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw DataError("interaction must be a JSON object");
  Interaction x;
  try {
    auto str = [](const nlohmann::json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
    x.user_id = str(j.at("user_id"));
    x.item_id = str(j.at("item_id"));
    x.ts = j.at("ts").get<std::int64_t>();
    if (j.contains("behavior")) x.behavior = behavior_from_string(j.at("behavior").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed interaction: ") + e.what());
  }
  return x;
}

nlohmann::json Interaction::to_json() const {
  return {{"user_id", user_id}, {"item_id", item_id}, {"ts", ts}, {"behavior", to_string(behavior)}};
}

std::size_t Dataset::num_interactions() const {
  std::size_t n = 0;
  for (const auto& u : users) n += u.items.size();
  return n;
}

nlohmann::json Dataset::summary() const {
  std::size_t min_len = users.empty() ? 0 : users[0].items.size(), max_len = 0;
  for (const auto& u : users) {
    min_len = std::min(min_len, u.items.size());
    max_len = std::max(max_len, u.items.size());
  }
  const double mean = users.empty() ? 0.0 : static_cast<double>(num_interactions()) / users.size();
  return {{"items", items.size()},
          {"users", users.size()},
          {"interactions", num_interactions()},
          {"min_sequence_length", min_len},
          {"max_sequence_length", max_len},
          {"mean_sequence_length", mean}};
}

namespace {

template <typename Fn>
void for_each_line(const fs::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      fn(nlohmann::json::parse(line));
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(path.filename().string() + " line " + std::to_string(lineno) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError(path.filename().string() + " line " + std::to_string(lineno) + ": " + e.what());
    }
  }
}

}  // namespace

std::vector<htfl::ItemRecord> read_items(const fs::path& path) {
  std::vector<htfl::ItemRecord> items;
  for_each_line(path, [&](const nlohmann::json& j) { items.push_back(htfl::ItemRecord::from_json(j)); });
  return items;
}

std::vector<Interaction> read_interactions(const fs::path& path) {
  std::vector<Interaction> out;
  std::size_t n = 0;
  for_each_line(path, [&](const nlohmann::json& j) {
    ++n;
    out.push_back(Interaction::from_json(j));
  });
  return out;
}

Dataset build_dataset(std::vector<htfl::ItemRecord> items, const std::vector<Interaction>& interactions) {
  Dataset ds;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (!ds.item_index.emplace(items[i].item_id, static_cast<std::int64_t>(i)).second) {
      throw DataError("duplicate item_id '" + items[i].item_id + "'");
    }
  }
  ds.items = std::move(items);

  std::vector<std::size_t> order(interactions.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t n = 0; n < interactions.size(); ++n) {
    if (!ds.item_index.count(interactions[n].item_id)) {
      throw DataError("interaction " + std::to_string(n + 1) + " references unknown item '" +
                      interactions[n].item_id + "'");
    }
  }
  // Full-key sort so that input line order never matters.
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = interactions[a];
    const auto& y = interactions[b];
    return std::tie(x.user_id, x.ts, x.item_id, x.behavior) < std::tie(y.user_id, y.ts, y.item_id, y.behavior);
  });
  for (std::size_t n : order) {
    const auto& x = interactions[n];
    if (ds.users.empty() || ds.users.back().user_id != x.user_id) {
      ds.users.push_back({x.user_id, {}, {}});
      ds.behaviors.emplace_back();
    }
    ds.users.back().items.push_back(ds.item_index.at(x.item_id));
    ds.users.back().timestamps.push_back(x.ts);
    ds.behaviors.back().push_back(x.behavior);
  }
  return ds;
}

Dataset ingest(const fs::path& interactions, const fs::path& items) {
  return build_dataset(read_items(items), read_interactions(interactions));
}

void write_items(const fs::path& path, const std::vector<htfl::ItemRecord>& items) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& it : items) out << it.to_json().dump() << '\n';
}

void write_interactions(const fs::path& path, const Dataset& dataset) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (std::size_t u = 0; u < dataset.users.size(); ++u) {
    const auto& seq = dataset.users[u];
    for (std::size_t i = 0; i < seq.items.size(); ++i) {
      Interaction x{seq.user_id, dataset.items[static_cast<std::size_t>(seq.items[i])].item_id, seq.timestamps[i],
                    dataset.behaviors[u][i]};
      out << x.to_json().dump() << '\n';
    }
  }
}

Split leave_one_out(const Dataset& dataset) {
  Split s;
  for (const auto& u : dataset.users) {
    if (u.items.size() < 2) continue;
    UserSequence hist{u.user_id, {u.items.begin(), u.items.end() - 1}, {u.timestamps.begin(), u.timestamps.end() - 1}};
    if (hist.items.size() >= 2) s.train.push_back(hist);
    s.eval_truth.push_back(u.items.back());
    s.eval_history.push_back(std::move(hist));
  }
  return s;
}

}  // namespace heterrec::data
