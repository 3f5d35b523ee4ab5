#include "heterrec/htfl/codebook.hpp"

#include <algorithm>
#include <cmath>

#include "heterrec/errors.hpp"
#include "heterrec/numerics/checkpoint.hpp"

namespace heterrec::htfl {

std::size_t bin_index(std::span<const double> boundaries, double value) {
  if (std::isnan(value)) throw DataError("numerical feature value is NaN");
  return static_cast<std::size_t>(std::upper_bound(boundaries.begin(), boundaries.end(), value) -
                                  boundaries.begin());
}

double empirical_quantile(std::span<const double> sorted, double p) {
  const double h = static_cast<double>(sorted.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

std::uint64_t MultimodalCodebook::token_space() const {
  std::uint64_t space = 1;
  for (std::size_t m = 0; m < dims_per_group(); ++m) space *= quantiles;
  return space;
}

std::size_t MultimodalCodebook::quantile_index(std::size_t d, float value) const {
  if (std::isnan(value)) throw DataError("multimodal feature '" + feature + "' has a NaN component");
  if (constant[d]) return 0;
  auto b = dim_boundaries(d);
  return static_cast<std::size_t>(std::upper_bound(b.begin(), b.end(), value) - b.begin());
}

std::vector<std::int64_t> MultimodalCodebook::quantize(std::span<const float> vector) const {
  if (vector.size() != dim) {
    throw DimensionError("multimodal feature '" + feature + "' expects " + std::to_string(dim) +
                         " values, got " + std::to_string(vector.size()));
  }
  const std::size_t per = dims_per_group();
  std::vector<std::int64_t> tokens(groups);
  for (std::size_t g = 0; g < groups; ++g) {
    std::int64_t token = 0;
    std::int64_t radix = 1;
    for (std::size_t m = 0; m < per; ++m) {
      const std::size_t d = g * per + m;
      token += static_cast<std::int64_t>(quantile_index(d, vector[d])) * radix;
      radix *= static_cast<std::int64_t>(quantiles);
    }
    tokens[g] = token;
  }
  return tokens;
}

const MultimodalCodebook& QuantileCodebook::multimodal_for(const std::string& feature) const {
  for (const auto& cb : multimodal) {
    if (cb.feature == feature) return cb;
  }
  throw ConfigError("codebook has no multimodal feature '" + feature + "'");
}

const std::vector<double>* QuantileCodebook::numerical_for(const std::string& feature) const {
  for (const auto& nb : numerical) {
    if (nb.feature == feature) return &nb.boundaries;
  }
  return nullptr;
}

MultimodalCodebook fit_quantile_codebook(std::span<const float> corpus, std::size_t n_items, std::size_t dim,
                                         std::size_t groups, std::size_t quantiles,
                                         std::vector<std::string>* warnings) {
  if (groups == 0 || dim % groups != 0) throw ConfigError("quantile codebook: groups must divide dim");
  if (quantiles < 2) throw ConfigError("quantile codebook: need at least 2 quantiles");
  if (corpus.size() != n_items * dim) throw DimensionError("quantile codebook: corpus is not n_items x dim");
  if (n_items < quantiles) {
    throw DataError("quantile codebook: " + std::to_string(n_items) + " items cannot fill " +
                    std::to_string(quantiles) + " quantiles");
  }
  MultimodalCodebook cb;
  cb.dim = dim;
  cb.groups = groups;
  cb.quantiles = quantiles;
  cb.boundaries.resize(dim * (quantiles - 1));
  cb.constant.assign(dim, 0);
  std::vector<double> column(n_items);
  for (std::size_t d = 0; d < dim; ++d) {
    for (std::size_t i = 0; i < n_items; ++i) column[i] = corpus[i * dim + d];
    std::sort(column.begin(), column.end());
    std::size_t n_distinct = 1;
    for (std::size_t i = 1; i < n_items; ++i) n_distinct += column[i] != column[i - 1];
    if (n_distinct < quantiles && warnings) {
      warnings->push_back("dimension " + std::to_string(d) + " has " + std::to_string(n_distinct) +
                          " distinct values for " + std::to_string(quantiles) + " quantiles");
    }
    cb.constant[d] = n_distinct == 1;
    for (std::size_t k = 1; k < quantiles; ++k) {
      const double p = static_cast<double>(k) / static_cast<double>(quantiles);
      cb.boundaries[d * (quantiles - 1) + (k - 1)] = static_cast<float>(empirical_quantile(column, p));
    }
  }
  return cb;
}

std::vector<double> fit_bin_boundaries(std::vector<double> values, std::size_t bins) {
  if (bins < 2) throw ConfigError("binning needs at least 2 bins");
  if (values.empty()) throw DataError("binning: no values to fit");
  for (double v : values) {
    if (std::isnan(v)) throw DataError("numerical feature value is NaN");
  }
  std::sort(values.begin(), values.end());
  std::vector<double> out(bins - 1);
  for (std::size_t k = 1; k < bins; ++k) {
    out[k - 1] = static_cast<float>(empirical_quantile(values, static_cast<double>(k) / static_cast<double>(bins)));
  }
  return out;
}

QuantileCodebook fit_codebook(const FeatureSchema& schema, std::span<const ItemRecord> items) {
  QuantileCodebook out;
  for (const auto& f : schema.features) {
    if (f.kind == FeatureKind::kMultimodal) {
      std::vector<float> corpus;
      corpus.reserve(items.size() * f.dim);
      for (const auto& item : items) {
        auto it = item.multimodal.find(f.name);
        if (it == item.multimodal.end()) {
          throw DataError("item " + item.item_id + " lacks multimodal feature '" + f.name + "'");
        }
        if (it->second.size() != f.dim) {
          throw DataError("item " + item.item_id + ": feature '" + f.name + "' has " +
                          std::to_string(it->second.size()) + " values, schema says " + std::to_string(f.dim));
        }
        corpus.insert(corpus.end(), it->second.begin(), it->second.end());
      }
      std::vector<std::string> warnings;
      auto cb = fit_quantile_codebook(corpus, items.size(), f.dim, f.groups, f.quantiles, &warnings);
      cb.feature = f.name;
      for (auto& w : warnings) out.warnings.push_back(f.name + ": " + w);
      out.multimodal.push_back(std::move(cb));
    } else if (f.kind == FeatureKind::kNumerical && f.boundaries.empty()) {
      std::vector<double> values;
      values.reserve(items.size());
      for (const auto& item : items) {
        auto it = item.numerical.find(f.name);
        if (it == item.numerical.end()) {
          throw DataError("item " + item.item_id + " lacks numerical feature '" + f.name + "'");
        }
        values.push_back(it->second);
      }
      out.numerical.push_back({f.name, fit_bin_boundaries(std::move(values), f.num_bins)});
    }
  }
  return out;
}

void write_codebook(const std::filesystem::path& manifest_path, const QuantileCodebook& codebook) {
  std::vector<numerics::CheckpointEntry> tensors;
  nlohmann::json mm = nlohmann::json::array();
  nlohmann::json num = nlohmann::json::array();
  for (const auto& cb : codebook.multimodal) {
    tensors.push_back({"multimodal." + cb.feature, {cb.dim, cb.quantiles - 1}, cb.boundaries});
    std::vector<std::size_t> constant;
    for (std::size_t d = 0; d < cb.dim; ++d) {
      if (cb.constant[d]) constant.push_back(d);
    }
    mm.push_back({{"feature", cb.feature},
                  {"dim", cb.dim},
                  {"groups", cb.groups},
                  {"quantiles", cb.quantiles},
                  {"constant_dims", constant}});
  }
  for (const auto& nb : codebook.numerical) {
    std::vector<float> b(nb.boundaries.begin(), nb.boundaries.end());
    tensors.push_back({"numerical." + nb.feature, {b.size()}, b});
    num.push_back({{"feature", nb.feature}, {"bins", nb.boundaries.size() + 1}});
  }
  nlohmann::json meta{{"kind", "heterrec-codebook"},
                      {"multimodal", mm},
                      {"numerical", num},
                      {"warnings", codebook.warnings}};
  numerics::write_checkpoint(manifest_path, std::move(tensors), meta);
}

QuantileCodebook read_codebook(const std::filesystem::path& manifest_path) {
  auto ckpt = numerics::read_checkpoint(manifest_path);
  if (ckpt.meta.value("kind", "") != "heterrec-codebook") {
    throw DataError(manifest_path.string() + " is not a codebook");
  }
  QuantileCodebook out;
  for (const auto& m : ckpt.meta.at("multimodal")) {
    MultimodalCodebook cb;
    cb.feature = m.at("feature").get<std::string>();
    cb.dim = m.at("dim").get<std::size_t>();
    cb.groups = m.at("groups").get<std::size_t>();
    cb.quantiles = m.at("quantiles").get<std::size_t>();
    cb.boundaries = ckpt.at("multimodal." + cb.feature).values;
    if (cb.boundaries.size() != cb.dim * (cb.quantiles - 1)) {
      throw DataError("codebook entry " + cb.feature + " has the wrong size");
    }
    cb.constant.assign(cb.dim, 0);
    for (auto d : m.at("constant_dims").get<std::vector<std::size_t>>()) cb.constant.at(d) = 1;
    out.multimodal.push_back(std::move(cb));
  }
  for (const auto& n : ckpt.meta.at("numerical")) {
    const auto name = n.at("feature").get<std::string>();
    const auto& values = ckpt.at("numerical." + name).values;
    out.numerical.push_back({name, std::vector<double>(values.begin(), values.end())});
  }
  out.warnings = ckpt.meta.value("warnings", std::vector<std::string>{});
  return out;
}

}  // namespace heterrec::htfl
