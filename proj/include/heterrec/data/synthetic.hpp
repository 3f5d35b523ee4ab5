#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include "heterrec/data/dataset.hpp"
#include "heterrec/htfl/schema.hpp"
#include "json.hpp"

namespace heterrec::data {

// Portable sampling on top of the raw mt19937_64 stream (no <random>
// distributions, whose output differs between standard libraries).
class PortableRng {
 public:
  explicit PortableRng(std::uint64_t seed) : engine_(seed) {}
  std::uint64_t next() { return engine_(); }
  double uniform01();                 // [0, 1)
  std::uint64_t below(std::uint64_t n);  // [0, n)
  double normal();                    // Box-Muller, one value per call
  template <typename It>
  void shuffle(It first, It last) {
    for (auto n = last - first; n > 1; --n) std::swap(first[n - 1], first[static_cast<std::ptrdiff_t>(below(static_cast<std::uint64_t>(n)))]);
  }

 private:
  std::mt19937_64 engine_;
};

struct SyntheticSpec {
  std::size_t num_items = 1000;
  std::size_t num_users = 5000;
  std::size_t categories = 20;
  std::size_t brands = 10;
  std::size_t min_length = 5;
  std::size_t max_length = 20;
  std::size_t multimodal_dim = 8;
  double noise = 0.2;
  double multimodal_noise = 0.35;
  std::uint64_t seed = 7;

  void validate() const;
  static SyntheticSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

// The planted transition rule. Items live in (category, brand) cells; the
// item after x_t is drawn from cell (category_map[cat(x_t)], brand_map[brand(x_{t-1})])
// with probability 1 - noise, otherwise uniformly from the catalog. For the
// first transition x_{t-1} is x_t itself.
struct SyntheticRules {
  SyntheticSpec spec;
  std::vector<std::size_t> category_map;
  std::vector<std::size_t> brand_map;
  std::vector<std::size_t> item_category;
  std::vector<std::size_t> item_brand;

  std::size_t cell(std::size_t category, std::size_t brand) const { return category * spec.brands + brand; }
  std::vector<std::int64_t> cell_items(std::size_t cell) const;

  nlohmann::json to_json() const;
  static SyntheticRules from_json(const nlohmann::json& j);
};

struct SyntheticData {
  std::vector<htfl::ItemRecord> items;
  std::vector<Interaction> interactions;
  SyntheticRules rules;
  htfl::FeatureSchema schema;
};

// Pure function of the spec (seed included).
SyntheticData generate_synthetic(const SyntheticSpec& spec);

// Writes items.jsonl, interactions.jsonl, rules.json and schema.json.
void write_synthetic(const std::filesystem::path& dir, const SyntheticData& data);

}  // namespace heterrec::data
