#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "heterrec/numerics/init.hpp"
#include "heterrec/numerics/param_store.hpp"
#include "heterrec/numerics/tape.hpp"

namespace heterrec::hct {

// L x L additive mask: 0 where item_index(q) <= item_index(p), -inf otherwise.
// `strict_within_item` additionally hides later tokens of the same item.
// item_index must be non-decreasing (DataError otherwise).
template <typename T>
std::vector<T> build_token_mask(std::span<const std::int64_t> item_index, bool strict_within_item = false);

// min(floor(log2(1 + delta)), buckets - 1). Negative delta is a ContractError.
std::size_t time_gap_bucket(std::int64_t delta_seconds, std::size_t buckets);

// Bucket id per (p, q) pair, row-major L x L. Pairs hidden by the item-level
// causal rule get bucket 0; they are masked out anyway.
std::vector<std::int64_t> time_gap_buckets(std::span<const std::int64_t> item_index,
                                           std::span<const std::int64_t> timestamps, std::size_t buckets);

struct AttentionOptions {
  std::size_t heads = 1;
  bool bias_after_scale = false;
  float ln_eps = 1e-5f;
};

// Names under `prefix`: attn.{wq,wk,wv,wo}, ln1.{gain,bias}, ffn.{w1,b1,w2,b2}, ln2.{gain,bias}.
void declare_block_params(numerics::ParamStore<float>& store, const std::string& prefix, std::size_t width,
                          std::size_t ffn_hidden, numerics::ParamInit& init);

// Expands a [B, 1] time-gap table into the L x L bias P via bucket lookup.
template <typename T>
numerics::Tensor<T> time_gap_bias(numerics::Tape<T>& tape, const numerics::Tensor<T>& table,
                                  std::span<const std::int64_t> buckets, std::size_t length);

// softmax((Q K^T + P) / sqrt(d_head) + M) V per head, heads concatenated, then W^O.
// `bias` may be undefined (no time-gap term).
template <typename T>
numerics::Tensor<T> multi_head_attention(numerics::Tape<T>& tape, const numerics::Tensor<T>& x,
                                         std::span<const T> mask, const numerics::Tensor<T>& bias,
                                         const numerics::ParamStore<T>& params, const std::string& prefix,
                                         const AttentionOptions& opt);

// Post-LN block: y = LN(x + MHA(x)); out = LN(y + FFN(y)).
template <typename T>
numerics::Tensor<T> causal_block(numerics::Tape<T>& tape, const numerics::Tensor<T>& x, std::span<const T> mask,
                                 const numerics::Tensor<T>& bias, const numerics::ParamStore<T>& params,
                                 const std::string& prefix, const AttentionOptions& opt);

// relu(x W1 + b1) W2 + b2 with names prefix.{w1,b1,w2,b2}.
template <typename T>
numerics::Tensor<T> mlp2(numerics::Tape<T>& tape, const numerics::Tensor<T>& x,
                         const numerics::ParamStore<T>& params, const std::string& prefix);

void declare_mlp2_params(numerics::ParamStore<float>& store, const std::string& prefix, std::size_t in,
                         std::size_t hidden, std::size_t out, numerics::ParamInit& init);

}  // namespace heterrec::hct
