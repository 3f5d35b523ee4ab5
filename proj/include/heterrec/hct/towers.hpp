#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "heterrec/hct/attention.hpp"
#include "heterrec/htfl/encoder.hpp"
#include "heterrec/model_config.hpp"

namespace heterrec::hct {

template <typename T>
struct UserTowerOutput {
  htfl::TokenSequence<T> sequence;
  numerics::Tensor<T> token_states;  // H_{N1}: [K*T, d_f]; undefined when there is no token stream
  numerics::Tensor<T> user;          // [T, d_k]; row t only sees items 0..t
};

template <typename T>
struct ItemTowerOutput {
  std::vector<numerics::Tensor<T>> tokens;  // per feature type, [n, d_f]
  numerics::Tensor<T> item;                 // [n, d_k]
};

// Declares token/item stacks, the fusion MLP, time-gap tables and the item
// tower MLPs. The HTFL tables are declared separately.
void declare_tower_params(numerics::ParamStore<float>& store, std::size_t num_features, std::size_t token_dim,
                          const ModelConfig& config, numerics::ParamInit& init);

// Count of item-level blocks actually built (N2, or N1 + N2 when hct_off).
std::size_t item_block_count(const ModelConfig& config);
std::size_t token_block_count(const ModelConfig& config);

template <typename T>
class UserTower {
 public:
  UserTower(const numerics::ParamStore<T>& params, const ModelConfig& config);

  UserTowerOutput<T> forward(numerics::Tape<T>& tape, htfl::TokenSequence<T> sequence) const;

 private:
  numerics::Tensor<T> bias_for(numerics::Tape<T>& tape, const char* level, bool enabled,
                               std::span<const std::int64_t> item_index,
                               std::span<const std::int64_t> timestamps) const;

  const numerics::ParamStore<T>& params_;
  ModelConfig config_;
};

template <typename T>
class ItemTower {
 public:
  ItemTower(const numerics::ParamStore<T>& params, const htfl::HtflEncoder<T>& encoder);

  ItemTowerOutput<T> forward(numerics::Tape<T>& tape, std::span<const std::int64_t> items) const;

 private:
  const numerics::ParamStore<T>& params_;
  const htfl::HtflEncoder<T>& encoder_;
};

extern template class UserTower<float>;
extern template class UserTower<double>;
extern template class ItemTower<float>;
extern template class ItemTower<double>;

}  // namespace heterrec::hct
