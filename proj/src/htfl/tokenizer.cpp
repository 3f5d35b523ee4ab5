#include "heterrec/htfl/tokenizer.hpp"

#include <cmath>

#include "heterrec/errors.hpp"

namespace heterrec::htfl {

Tokenizer::Tokenizer(FeatureSchema schema, QuantileCodebook codebook)
    : schema_(std::move(schema)), codebook_(std::move(codebook)) {
  schema_.validate();
  boundaries_.resize(schema_.size());
  multimodal_.assign(schema_.size(), nullptr);
  for (std::size_t k = 0; k < schema_.size(); ++k) {
    const auto& f = schema_.at(k);
    if (f.kind == FeatureKind::kNumerical) {
      if (!f.boundaries.empty()) {
        boundaries_[k] = f.boundaries;
      } else if (const auto* fitted = codebook_.numerical_for(f.name)) {
        boundaries_[k] = *fitted;
      } else {
        throw ConfigError("numerical feature '" + f.name + "' has no boundaries in schema or codebook");
      }
    } else if (f.kind == FeatureKind::kMultimodal) {
      const auto& cb = codebook_.multimodal_for(f.name);
      if (cb.dim != f.dim || cb.groups != f.groups || cb.quantiles != f.quantiles) {
        throw ConfigError("codebook for '" + f.name + "' does not match the schema");
      }
      multimodal_[k] = &cb;
    }
  }
}

std::int64_t Tokenizer::categorical_id(std::size_t k, std::int64_t id, OovPolicy policy) const {
  const auto& f = schema_.at(k);
  if (id >= 0 && static_cast<std::size_t>(id) < f.vocab_size) return id;
  if (policy == OovPolicy::kMapToReserved) return 0;
  throw IndexError("categorical feature '" + f.name + "': id " + std::to_string(id) +
                   " outside vocabulary of size " + std::to_string(f.vocab_size));
}

std::int64_t Tokenizer::numerical_bin(std::size_t k, double value) const {
  if (std::isnan(value)) throw DataError("numerical feature '" + schema_.at(k).name + "' is NaN");
  return static_cast<std::int64_t>(bin_index(boundaries_.at(k), value));
}

std::vector<std::int64_t> Tokenizer::multimodal_tokens(std::size_t k, std::span<const float> vector) const {
  const auto* cb = multimodal_.at(k);
  if (!cb) throw ContractError("feature '" + schema_.at(k).name + "' is not multimodal");
  return cb->quantize(vector);
}

std::size_t Tokenizer::table_rows(std::size_t k) const {
  const auto& f = schema_.at(k);
  switch (f.kind) {
    case FeatureKind::kCategorical: return f.vocab_size;
    case FeatureKind::kNumerical: return boundaries_[k].size() + 1;
    case FeatureKind::kMultimodal: return static_cast<std::size_t>(f.token_space());
  }
  return 0;
}

std::size_t Tokenizer::width(std::size_t k) const {
  const auto& f = schema_.at(k);
  return f.kind == FeatureKind::kMultimodal ? f.groups : 1;
}

TokenizedCatalog Tokenizer::tokenize(std::span<const ItemRecord> items, OovPolicy policy) const {
  TokenizedCatalog out;
  out.num_items_ = items.size();
  const std::size_t K = schema_.size();
  out.widths_.resize(K);
  out.ids_.resize(K);
  out.raw_dims_.assign(K, 0);
  out.raw_.resize(K);
  for (std::size_t k = 0; k < K; ++k) {
    const auto& f = schema_.at(k);
    out.widths_[k] = width(k);
    out.ids_[k].reserve(items.size() * out.widths_[k]);
    if (f.kind == FeatureKind::kMultimodal) {
      out.raw_dims_[k] = f.dim;
      out.raw_[k].reserve(items.size() * f.dim);
    }
    for (const auto& item : items) {
      auto missing = [&] {
        return DataError("item " + item.item_id + " lacks " + to_string(f.kind) + " feature '" + f.name + "'");
      };
      switch (f.kind) {
        case FeatureKind::kCategorical: {
          auto it = item.categorical.find(f.name);
          if (it == item.categorical.end()) throw missing();
          out.ids_[k].push_back(categorical_id(k, it->second, policy));
          break;
        }
        case FeatureKind::kNumerical: {
          auto it = item.numerical.find(f.name);
          if (it == item.numerical.end()) throw missing();
          out.ids_[k].push_back(numerical_bin(k, it->second));
          break;
        }
        case FeatureKind::kMultimodal: {
          auto it = item.multimodal.find(f.name);
          if (it == item.multimodal.end()) throw missing();
          if (it->second.size() != f.dim) {
            throw DataError("item " + item.item_id + ": feature '" + f.name + "' has wrong width");
          }
          auto tokens = multimodal_tokens(k, it->second);
          out.ids_[k].insert(out.ids_[k].end(), tokens.begin(), tokens.end());
          out.raw_[k].insert(out.raw_[k].end(), it->second.begin(), it->second.end());
          break;
        }
      }
    }
  }
  return out;
}

}  // namespace heterrec::htfl
