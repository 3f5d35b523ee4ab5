#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "heterrec/htfl/item_record.hpp"
#include "heterrec/htfl/schema.hpp"

namespace heterrec::htfl {

// Number of boundaries <= value: intervals are left-closed, so a value equal
// to a boundary falls in the upper bin. NaN raises DataError.
std::size_t bin_index(std::span<const double> boundaries, double value);

// Empirical quantile at probability p with linear interpolation between order
// statistics (h = (n - 1) p). `sorted` must be ascending and non-empty.
double empirical_quantile(std::span<const double> sorted, double p);

// Per-dimension quantile boundaries for one multimodal feature, grouped into
// Z groups of d_v / Z contiguous dimensions.
struct MultimodalCodebook {
  std::string feature;
  std::size_t dim = 0;
  std::size_t groups = 0;
  std::size_t quantiles = 0;
  std::vector<float> boundaries;       // dim x (quantiles - 1), row per dimension
  std::vector<std::uint8_t> constant;  // dims with a single value; always quantile 0

  std::size_t dims_per_group() const { return dim / groups; }
  std::uint64_t token_space() const;
  std::span<const float> dim_boundaries(std::size_t d) const {
    return std::span<const float>(boundaries).subspan(d * (quantiles - 1), quantiles - 1);
  }
  std::size_t quantile_index(std::size_t d, float value) const;

  // Group g token = sum_m idx_m * q^m over the group's dimensions m = 0..d_v/Z-1
  // (first dimension of the group is the least significant digit).
  std::vector<std::int64_t> quantize(std::span<const float> vector) const;
};

struct QuantileCodebook {
  struct NumericalBins {
    std::string feature;
    std::vector<double> boundaries;
  };
  std::vector<MultimodalCodebook> multimodal;
  std::vector<NumericalBins> numerical;
  std::vector<std::string> warnings;

  const MultimodalCodebook& multimodal_for(const std::string& feature) const;
  // Fitted boundaries, or nullptr when the schema supplies them explicitly.
  const std::vector<double>* numerical_for(const std::string& feature) const;
};

// `corpus` is n_items x dim, row-major. Requires n_items >= quantiles and
// groups | dim. Dimensions with fewer distinct values than `quantiles` add a
// warning; duplicate boundaries are kept.
MultimodalCodebook fit_quantile_codebook(std::span<const float> corpus, std::size_t n_items, std::size_t dim,
                                         std::size_t groups, std::size_t quantiles,
                                         std::vector<std::string>* warnings = nullptr);

// Equal-frequency bin boundaries (bins - 1 of them).
std::vector<double> fit_bin_boundaries(std::vector<double> values, std::size_t bins);

// Fits every multimodal feature and every numerical feature without explicit
// boundaries in `schema` from the item corpus.
QuantileCodebook fit_codebook(const FeatureSchema& schema, std::span<const ItemRecord> items);

// Stored with the checkpoint container: "<stem>.json" manifest + "<stem>.bin"
// float32 blob. Tensors: "multimodal.<name>" [dim, q-1], "numerical.<name>" [b].
void write_codebook(const std::filesystem::path& manifest_path, const QuantileCodebook& codebook);
QuantileCodebook read_codebook(const std::filesystem::path& manifest_path);

}  // namespace heterrec::htfl
