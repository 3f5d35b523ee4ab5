#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace heterrec::htfl {

enum class FeatureKind { kCategorical, kNumerical, kMultimodal };

const char* to_string(FeatureKind kind);

struct FeatureSpec {
  std::string name;
  FeatureKind kind = FeatureKind::kCategorical;

  // categorical: N_id, row 0 is the reserved out-of-vocabulary row
  std::size_t vocab_size = 0;

  // numerical: explicit bin boundaries, or num_bins equal-frequency bins
  // fitted from the item corpus when `boundaries` is empty
  std::vector<double> boundaries;
  std::size_t num_bins = 0;

  // multimodal: vector width d_v, group count Z, quantiles per dimension q
  std::size_t dim = 0;
  std::size_t groups = 0;
  std::size_t quantiles = 0;

  std::size_t dims_per_group() const { return dim / groups; }
  // q^(d_v / Z)
  std::uint64_t token_space() const;
};

// Ordered feature list plus the shared token width d_f. K = features.size().
struct FeatureSchema {
  std::vector<FeatureSpec> features;
  std::size_t token_dim = 16;
  std::uint64_t max_token_space = 1u << 16;

  std::size_t size() const { return features.size(); }
  std::size_t index_of(const std::string& name) const;
  const FeatureSpec& at(std::size_t k) const { return features.at(k); }

  // Throws ConfigError on any broken invariant.
  void validate() const;

  static FeatureSchema from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

FeatureSchema load_schema(const std::string& path);

}  // namespace heterrec::htfl
