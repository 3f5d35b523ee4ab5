#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "heterrec/htfl/codebook.hpp"
#include "heterrec/htfl/item_record.hpp"
#include "heterrec/htfl/schema.hpp"

namespace heterrec::htfl {

enum class OovPolicy {
  kStrict,          // ids outside [0, N_id) raise IndexError
  kMapToReserved,   // ids outside [0, N_id) map to the reserved row 0
};

class TokenizedCatalog;

// Turns raw item features into per-feature token ids using a schema and a
// fitted codebook.
class Tokenizer {
 public:
  Tokenizer(FeatureSchema schema, QuantileCodebook codebook);

  const FeatureSchema& schema() const { return schema_; }
  const QuantileCodebook& codebook() const { return codebook_; }
  std::size_t num_features() const { return schema_.size(); }

  std::int64_t categorical_id(std::size_t k, std::int64_t id, OovPolicy policy) const;
  std::int64_t numerical_bin(std::size_t k, double value) const;
  std::vector<std::int64_t> multimodal_tokens(std::size_t k, std::span<const float> vector) const;

  const std::vector<double>& numerical_boundaries(std::size_t k) const { return boundaries_.at(k); }
  // Rows of the feature's lookup table(s).
  std::size_t table_rows(std::size_t k) const;
  // Token ids per item: 1, or Z for multimodal features.
  std::size_t width(std::size_t k) const;

  TokenizedCatalog tokenize(std::span<const ItemRecord> items, OovPolicy policy) const;

 private:
  FeatureSchema schema_;
  QuantileCodebook codebook_;
  std::vector<std::vector<double>> boundaries_;          // numerical features, resolved
  std::vector<const MultimodalCodebook*> multimodal_;    // per feature, null if not multimodal
};

// Token ids (and raw multimodal vectors) for every catalog item, addressed by
// dense item index 0..num_items-1 in input order.
class TokenizedCatalog {
 public:
  TokenizedCatalog() = default;

  std::size_t num_items() const { return num_items_; }
  std::size_t num_features() const { return ids_.size(); }
  std::size_t width(std::size_t k) const { return widths_.at(k); }

  std::span<const std::int64_t> ids(std::size_t k, std::size_t item) const {
    return std::span<const std::int64_t>(ids_.at(k)).subspan(item * widths_[k], widths_[k]);
  }
  std::span<const float> raw(std::size_t k, std::size_t item) const {
    const std::size_t d = raw_dims_.at(k);
    return std::span<const float>(raw_.at(k)).subspan(item * d, d);
  }
  std::size_t raw_dim(std::size_t k) const { return raw_dims_.at(k); }

 private:
  friend class Tokenizer;
  std::size_t num_items_ = 0;
  std::vector<std::size_t> widths_;
  std::vector<std::vector<std::int64_t>> ids_;
  std::vector<std::size_t> raw_dims_;
  std::vector<std::vector<float>> raw_;
};

}  // namespace heterrec::htfl
