#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "heterrec/htfl/tokenizer.hpp"
#include "heterrec/model_config.hpp"
#include "heterrec/numerics/init.hpp"
#include "heterrec/numerics/param_store.hpp"
#include "heterrec/numerics/tape.hpp"

namespace heterrec::htfl {

// Flattened H0 for one user: K rows per item, item-major.
template <typename T>
struct TokenSequence {
  numerics::Tensor<T> embeddings;           // [K*T, d_f]
  std::size_t tokens_per_item = 0;          // K (1 when htfl_off)
  std::vector<std::int64_t> items;          // catalog index per item slot, length T
  std::vector<std::int64_t> item_timestamps;
  std::vector<std::int64_t> item_index;     // per position
  std::vector<std::int64_t> feature_type;   // per position
  std::vector<std::int64_t> timestamps;     // per position

  std::size_t num_items() const { return items.size(); }
  std::size_t length() const { return item_index.size(); }
};

// Keep the most recent `max_len` entries. Timestamps must be non-decreasing
// and the sequence non-empty, otherwise DataError.
void check_and_truncate(std::vector<std::int64_t>& items, std::vector<std::int64_t>& timestamps,
                        std::size_t max_len);

std::string feature_table_name(const FeatureSpec& f);
std::string group_table_name(const FeatureSpec& f, std::size_t group);

// Creates the encoder's learnable tables in `store`.
void declare_htfl_params(numerics::ParamStore<float>& store, const Tokenizer& tokenizer,
                         const ModelConfig& config, numerics::ParamInit& init);

template <typename T>
class HtflEncoder {
 public:
  using Tensor = numerics::Tensor<T>;
  using Tape = numerics::Tape<T>;

  HtflEncoder(const numerics::ParamStore<T>& params, const Tokenizer& tokenizer,
              const TokenizedCatalog& catalog, const ModelConfig& config);

  std::size_t num_features() const { return tokenizer_.num_features(); }
  std::size_t token_dim() const { return tokenizer_.schema().token_dim; }

  // Standalone single-value encoders, each [1, d_f].
  Tensor encode_categorical(Tape& tape, std::size_t k, std::int64_t id) const;
  Tensor encode_numerical(Tape& tape, std::size_t k, double value) const;
  Tensor embed_multimodal(Tape& tape, std::size_t k, std::span<const std::int64_t> tokens) const;

  // Feature k for a batch of catalog items: [n, d_f].
  Tensor encode_feature(Tape& tape, std::size_t k, std::span<const std::int64_t> items) const;
  // All K features, one tensor each.
  std::vector<Tensor> item_features(Tape& tape, std::span<const std::int64_t> items) const;

  // Builds H0 from a chronological item list (catalog indices). Applies
  // truncation to T_max; the returned sequence records which items survived.
  TokenSequence<T> flatten(Tape& tape, std::vector<std::int64_t> items,
                           std::vector<std::int64_t> timestamps) const;

 private:
  Tensor lookup_groups(Tape& tape, std::size_t k, std::span<const std::int64_t> tokens, std::size_t n) const;

  const numerics::ParamStore<T>& params_;
  const Tokenizer& tokenizer_;
  const TokenizedCatalog& catalog_;
  ModelConfig config_;
};

extern template class HtflEncoder<float>;
extern template class HtflEncoder<double>;

}  // namespace heterrec::htfl
