#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "heterrec/hct/towers.hpp"
#include "heterrec/htfl/encoder.hpp"
#include "heterrec/lmp/lmp_loss.hpp"

namespace heterrec {

// One user's chronological history as catalog indices.
struct UserSequence {
  std::string user_id;
  std::vector<std::int64_t> items;
  std::vector<std::int64_t> timestamps;
};

// Tower outputs for a batch, stacked over sequences.
template <typename T>
struct BatchStates {
  std::vector<std::size_t> lengths;                 // input positions per sequence
  numerics::Tensor<T> user;                         // [sum T_j, d_k]
  std::vector<numerics::Tensor<T>> type_states;     // per feature type, [sum T_j, d_f] (token-level only)
  std::vector<std::int64_t> unique_items;           // distinct target items
  std::vector<std::int64_t> target_slot;            // per stacked row, index into unique_items
  numerics::Tensor<T> item;                         // [n_unique, d_k]
  std::vector<numerics::Tensor<T>> item_tokens;     // per feature type, [n_unique, d_f]
};

template <typename T>
struct BatchLoss {
  numerics::Tensor<T> total;
  lmp::LevelLoss<T> item;
  std::vector<lmp::LevelLoss<T>> token;  // one per feature type when token-level terms are on
};

// Ties the tokenizer, both towers and the LMP heads together.
class HeterRecModel {
 public:
  HeterRecModel(const htfl::Tokenizer& tokenizer, const htfl::TokenizedCatalog& catalog, ModelConfig model,
                lmp::LmpConfig lmp);

  const ModelConfig& model_config() const { return model_; }
  const lmp::LmpConfig& lmp_config() const { return lmp_; }
  const htfl::Tokenizer& tokenizer() const { return tokenizer_; }
  const htfl::TokenizedCatalog& catalog() const { return catalog_; }
  std::size_t num_items() const { return catalog_.num_items(); }

  // Token-level terms need a token stream with K feature tokens per item.
  bool token_level_active() const;

  numerics::ParamStore<float> init_params(std::uint64_t seed) const;

  // Training objective over B distinct users. Each sequence uses its first
  // n-1 items as input positions and items 2..n as step targets.
  template <typename T>
  BatchLoss<T> batch_loss(numerics::Tape<T>& tape, const numerics::ParamStore<T>& params,
                          std::span<const UserSequence> batch) const;

  // Same objective, split into the tower pass and the loss on its outputs.
  template <typename T>
  BatchStates<T> batch_states(numerics::Tape<T>& tape, const numerics::ParamStore<T>& params,
                              std::span<const UserSequence> batch, bool with_items = true) const;
  template <typename T>
  BatchLoss<T> loss_from_states(numerics::Tape<T>& tape, const numerics::ParamStore<T>& params,
                                const BatchStates<T>& states) const;

  // head_1 applied to the last user state: [n_users, d_k]. Uses every item
  // in each history as input.
  std::vector<float> user_embeddings(const numerics::ParamStore<float>& params,
                                     std::span<const UserSequence> histories) const;
  // Item tower over the whole catalog: [num_items, d_k], row-major.
  std::vector<float> item_embeddings(const numerics::ParamStore<float>& params) const;

 private:
  const htfl::Tokenizer& tokenizer_;
  const htfl::TokenizedCatalog& catalog_;
  ModelConfig model_;
  lmp::LmpConfig lmp_;
};

}  // namespace heterrec
