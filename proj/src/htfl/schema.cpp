#include "heterrec/htfl/schema.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "heterrec/errors.hpp"
#include "heterrec/json_util.hpp"

namespace heterrec::htfl {

const char* to_string(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::kCategorical: return "categorical";
    case FeatureKind::kNumerical: return "numerical";
    case FeatureKind::kMultimodal: return "multimodal";
  }
  return "?";
}

std::uint64_t FeatureSpec::token_space() const {
  std::uint64_t space = 1;
  for (std::size_t m = 0; m < dims_per_group(); ++m) {
    if (space > (std::uint64_t{1} << 40) / std::max<std::size_t>(quantiles, 1)) return ~std::uint64_t{0};
    space *= quantiles;
  }
  return space;
}

std::size_t FeatureSchema::index_of(const std::string& name) const {
  for (std::size_t k = 0; k < features.size(); ++k) {
    if (features[k].name == name) return k;
  }
  throw ConfigError("schema has no feature named '" + name + "'");
}

void FeatureSchema::validate() const {
  if (features.empty()) throw ConfigError("schema: at least one feature is required");
  if (token_dim == 0) throw ConfigError("schema: token_dim must be positive");
  std::set<std::string> names;
  for (const auto& f : features) {
    const std::string where = "schema feature '" + f.name + "'";
    if (f.name.empty()) throw ConfigError("schema: feature without a name");
    if (!names.insert(f.name).second) throw ConfigError(where + " is declared twice");
    switch (f.kind) {
      case FeatureKind::kCategorical:
        if (f.vocab_size < 2) throw ConfigError(where + ": vocab_size must be >= 2 (row 0 is OOV)");
        break;
      case FeatureKind::kNumerical:
        if (f.boundaries.empty() && f.num_bins < 2) {
          throw ConfigError(where + ": needs explicit boundaries or num_bins >= 2");
        }
        if (!std::is_sorted(f.boundaries.begin(), f.boundaries.end())) {
          throw ConfigError(where + ": boundaries must be non-decreasing");
        }
        break;
      case FeatureKind::kMultimodal:
        if (f.dim == 0 || f.groups == 0 || f.quantiles < 2) {
          throw ConfigError(where + ": dim, groups must be positive and quantiles >= 2");
        }
        if (f.dim % f.groups != 0) throw ConfigError(where + ": groups must divide dim");
        if (token_dim % f.groups != 0) throw ConfigError(where + ": groups must divide token_dim");
        if (f.token_space() > max_token_space) {
          throw ConfigError(where + ": quantiles^(dim/groups) exceeds max_token_space");
        }
        break;
    }
  }
}

FeatureSchema FeatureSchema::from_json(const nlohmann::json& j) {
  require_known_keys(j, {"token_dim", "max_token_space", "features"}, "schema");
  FeatureSchema s;
  read_opt(j, "token_dim", s.token_dim, "schema");
  read_opt(j, "max_token_space", s.max_token_space, "schema");
  if (!j.contains("features") || !j.at("features").is_array()) {
    throw ConfigError("schema: 'features' array is required");
  }
  for (const auto& fj : j.at("features")) {
    require_known_keys(fj, {"name", "kind", "vocab_size", "boundaries", "num_bins", "dim", "groups", "quantiles"},
                       "schema feature");
    FeatureSpec f;
    read_opt(fj, "name", f.name, "schema feature");
    std::string kind;
    read_opt(fj, "kind", kind, "schema feature");
    if (kind == "categorical") {
      f.kind = FeatureKind::kCategorical;
    } else if (kind == "numerical") {
      f.kind = FeatureKind::kNumerical;
    } else if (kind == "multimodal") {
      f.kind = FeatureKind::kMultimodal;
    } else {
      throw ConfigError("schema feature '" + f.name + "': unknown kind '" + kind + "'");
    }
    const std::string where = "schema feature " + f.name;
    read_opt(fj, "vocab_size", f.vocab_size, where);
    read_opt(fj, "boundaries", f.boundaries, where);
    read_opt(fj, "num_bins", f.num_bins, where);
    read_opt(fj, "dim", f.dim, where);
    read_opt(fj, "groups", f.groups, where);
    read_opt(fj, "quantiles", f.quantiles, where);
    s.features.push_back(std::move(f));
  }
  s.validate();
  return s;
}

nlohmann::json FeatureSchema::to_json() const {
  nlohmann::json feats = nlohmann::json::array();
  for (const auto& f : features) {
    nlohmann::json fj{{"name", f.name}, {"kind", to_string(f.kind)}};
    switch (f.kind) {
      case FeatureKind::kCategorical: fj["vocab_size"] = f.vocab_size; break;
      case FeatureKind::kNumerical:
        if (!f.boundaries.empty()) fj["boundaries"] = f.boundaries;
        if (f.num_bins) fj["num_bins"] = f.num_bins;
        break;
      case FeatureKind::kMultimodal:
        fj["dim"] = f.dim;
        fj["groups"] = f.groups;
        fj["quantiles"] = f.quantiles;
        break;
    }
    feats.push_back(std::move(fj));
  }
  return {{"token_dim", token_dim}, {"max_token_space", max_token_space}, {"features", feats}};
}

FeatureSchema load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open schema file " + path);
  try {
    return FeatureSchema::from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("schema " + path + ": " + e.what());
  }
}

}  // namespace heterrec::htfl
