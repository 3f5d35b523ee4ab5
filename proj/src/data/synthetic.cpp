#include "heterrec/data/synthetic.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "heterrec/errors.hpp"
#include "heterrec/json_util.hpp"

namespace heterrec::data {

namespace fs = std::filesystem;

double PortableRng::uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

std::uint64_t PortableRng::below(std::uint64_t n) {
  if (n == 0) throw ContractError("below(0)");
  // rejection sampling removes modulo bias
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t v;
  do {
    v = next();
  } while (v >= limit);
  return v % n;
}

double PortableRng::normal() {
  double u1 = uniform01();
  while (u1 <= 0.0) u1 = uniform01();
  const double u2 = uniform01();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

void SyntheticSpec::validate() const {
  if (num_items == 0 || num_users == 0) throw ConfigError("synthetic: num_items and num_users must be positive");
  if (categories == 0 || brands == 0) throw ConfigError("synthetic: categories and brands must be positive");
  if (num_items < categories * brands) throw ConfigError("synthetic: need at least one item per (category, brand) cell");
  if (min_length < 2 || max_length < min_length) throw ConfigError("synthetic: need 2 <= min_length <= max_length");
  if (!(noise >= 0.0 && noise <= 1.0)) throw ConfigError("synthetic: noise must lie in [0, 1]");
  if (multimodal_dim == 0 || multimodal_dim % 2 != 0) throw ConfigError("synthetic: multimodal_dim must be even");
}

SyntheticSpec SyntheticSpec::from_json(const nlohmann::json& j) {
  require_known_keys(j,
                     {"num_items", "num_users", "categories", "brands", "min_length", "max_length", "multimodal_dim",
                      "noise", "multimodal_noise", "seed"},
                     "synthetic");
  SyntheticSpec s;
  const std::string w = "synthetic";
  read_opt(j, "num_items", s.num_items, w);
  read_opt(j, "num_users", s.num_users, w);
  read_opt(j, "categories", s.categories, w);
  read_opt(j, "brands", s.brands, w);
  read_opt(j, "min_length", s.min_length, w);
  read_opt(j, "max_length", s.max_length, w);
  read_opt(j, "multimodal_dim", s.multimodal_dim, w);
  read_opt(j, "noise", s.noise, w);
  read_opt(j, "multimodal_noise", s.multimodal_noise, w);
  read_opt(j, "seed", s.seed, w);
  s.validate();
  return s;
}

nlohmann::json SyntheticSpec::to_json() const {
  return {{"num_items", num_items},   {"num_users", num_users},     {"categories", categories},
          {"brands", brands},         {"min_length", min_length},   {"max_length", max_length},
          {"multimodal_dim", multimodal_dim}, {"noise", noise}, {"multimodal_noise", multimodal_noise},
          {"seed", seed}};
}

std::vector<std::int64_t> SyntheticRules::cell_items(std::size_t c) const {
  std::vector<std::int64_t> out;
  for (std::size_t i = 0; i < item_category.size(); ++i) {
    if (cell(item_category[i], item_brand[i]) == c) out.push_back(static_cast<std::int64_t>(i));
  }
  return out;
}

nlohmann::json SyntheticRules::to_json() const {
  return {{"spec", spec.to_json()},
          {"rule", "next ~ (1-noise) * Uniform(cell(category_map[category(x_t)], brand_map[brand(x_{t-1})])) + "
                   "noise * Uniform(catalog); x_{t-1} := x_t for the first transition"},
          {"category_map", category_map},
          {"brand_map", brand_map},
          {"item_category", item_category},
          {"item_brand", item_brand}};
}

SyntheticRules SyntheticRules::from_json(const nlohmann::json& j) {
  SyntheticRules r;
  try {
    r.spec = SyntheticSpec::from_json(j.at("spec"));
    r.category_map = j.at("category_map").get<std::vector<std::size_t>>();
    r.brand_map = j.at("brand_map").get<std::vector<std::size_t>>();
    r.item_category = j.at("item_category").get<std::vector<std::size_t>>();
    r.item_brand = j.at("item_brand").get<std::vector<std::size_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed rules file: ") + e.what());
  }
  return r;
}

namespace {

std::string pad(const char* prefix, std::size_t v, int width) {
  std::string digits = std::to_string(v);
  if (static_cast<int>(digits.size()) < width) digits.insert(0, static_cast<std::size_t>(width) - digits.size(), '0');
  return prefix + digits;
}

// Rounded to 1e-4 so the JSON text stays short and parses back to the same floats.
float tidy(double v) { return static_cast<float>(std::round(v * 1e4) / 1e4); }

}  // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  PortableRng rng(spec.seed);
  SyntheticData out;
  auto& rules = out.rules;
  rules.spec = spec;

  const std::size_t C = spec.categories, Bd = spec.brands, n_cells = C * Bd;
  rules.category_map.resize(C);
  rules.brand_map.resize(Bd);
  for (std::size_t c = 0; c < C; ++c) rules.category_map[c] = c;
  for (std::size_t b = 0; b < Bd; ++b) rules.brand_map[b] = b;
  rng.shuffle(rules.category_map.begin(), rules.category_map.end());
  rng.shuffle(rules.brand_map.begin(), rules.brand_map.end());

  // item i sits in cell i mod n_cells, so cells differ in size by at most one
  rules.item_category.resize(spec.num_items);
  rules.item_brand.resize(spec.num_items);
  for (std::size_t i = 0; i < spec.num_items; ++i) {
    const std::size_t c = i % n_cells;
    rules.item_category[i] = c / Bd;
    rules.item_brand[i] = c % Bd;
  }
  std::vector<std::vector<std::int64_t>> cells(n_cells);
  for (std::size_t i = 0; i < spec.num_items; ++i) {
    cells[rules.cell(rules.item_category[i], rules.item_brand[i])].push_back(static_cast<std::int64_t>(i));
  }

  // item features
  std::vector<std::vector<double>> centers(C, std::vector<double>(spec.multimodal_dim));
  for (auto& c : centers)
    for (auto& v : c) v = rng.normal();
  std::vector<double> brand_price(Bd);
  for (auto& p : brand_price) p = std::exp(2.0 + 4.0 * rng.uniform01());
  for (std::size_t i = 0; i < spec.num_items; ++i) {
    htfl::ItemRecord r;
    r.item_id = pad("item", i, 5);
    r.categorical["item_id"] = static_cast<std::int64_t>(i + 1);
    r.categorical["category"] = static_cast<std::int64_t>(rules.item_category[i] + 1);
    r.categorical["brand"] = static_cast<std::int64_t>(rules.item_brand[i] + 1);
    r.numerical["price"] = std::round(brand_price[rules.item_brand[i]] * std::exp(0.1 * rng.normal()) * 100.0) / 100.0;
    std::vector<float> v(spec.multimodal_dim);
    for (std::size_t d = 0; d < spec.multimodal_dim; ++d) {
      v[d] = tidy(centers[rules.item_category[i]][d] + spec.multimodal_noise * rng.normal());
    }
    r.multimodal["visual"] = std::move(v);
    out.items.push_back(std::move(r));
  }

  // sequences
  const std::int64_t epoch0 = 1'600'000'000;
  for (std::size_t u = 0; u < spec.num_users; ++u) {
    const std::string uid = pad("user", u, 6);
    const std::size_t len = spec.min_length + rng.below(spec.max_length - spec.min_length + 1);
    std::int64_t ts = epoch0 + static_cast<std::int64_t>(rng.below(10'000'000));
    std::vector<std::int64_t> seq;
    seq.push_back(static_cast<std::int64_t>(rng.below(spec.num_items)));
    for (std::size_t t = 1; t < len; ++t) {
      const auto cur = static_cast<std::size_t>(seq[t - 1]);
      const auto prev = static_cast<std::size_t>(t >= 2 ? seq[t - 2] : seq[t - 1]);
      if (rng.uniform01() < spec.noise) {
        seq.push_back(static_cast<std::int64_t>(rng.below(spec.num_items)));
      } else {
        const auto& cell = cells[rules.cell(rules.category_map[rules.item_category[cur]],
                                            rules.brand_map[rules.item_brand[prev]])];
        seq.push_back(cell[rng.below(cell.size())]);
      }
    }
    for (std::size_t t = 0; t < len; ++t) {
      const double b = rng.uniform01();
      const Behavior beh = b < 0.8 ? Behavior::kClick : (b < 0.95 ? Behavior::kAddToCart : Behavior::kConversion);
      out.interactions.push_back({uid, out.items[static_cast<std::size_t>(seq[t])].item_id, ts, beh});
      // strictly increasing timestamps keep the sort order equal to generation order
      ts += 1 + static_cast<std::int64_t>(-std::log(1.0 - rng.uniform01()) * 3600.0);
    }
  }

  auto& schema = out.schema;
  schema.token_dim = 16;
  schema.features = {
      {.name = "item_id", .kind = htfl::FeatureKind::kCategorical, .vocab_size = spec.num_items + 1},
      {.name = "category", .kind = htfl::FeatureKind::kCategorical, .vocab_size = C + 1},
      {.name = "brand", .kind = htfl::FeatureKind::kCategorical, .vocab_size = Bd + 1},
      {.name = "price", .kind = htfl::FeatureKind::kNumerical, .num_bins = 8},
      {.name = "visual",
       .kind = htfl::FeatureKind::kMultimodal,
       .dim = spec.multimodal_dim,
       .groups = 2,
       .quantiles = 4},
  };
  schema.validate();
  return out;
}

void write_synthetic(const fs::path& dir, const SyntheticData& data) {
  fs::create_directories(dir);
  write_items(dir / "items.jsonl", data.items);
  {
    std::ofstream f(dir / "interactions.jsonl", std::ios::binary);
    if (!f) throw DataError("cannot write " + (dir / "interactions.jsonl").string());
    for (const auto& x : data.interactions) f << x.to_json().dump() << '\n';
  }
  std::ofstream(dir / "rules.json", std::ios::binary) << data.rules.to_json().dump(2) << '\n';
  std::ofstream(dir / "schema.json", std::ios::binary) << data.schema.to_json().dump(2) << '\n';
}

}  // namespace heterrec::data
