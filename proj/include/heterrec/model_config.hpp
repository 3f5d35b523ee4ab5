#pragma once

#include <cstddef>

#include "json.hpp"

namespace heterrec {

// Architecture hyperparameters shared by the HTFL encoder, both HCT stacks and
// the item tower. The token width d_f comes from the feature schema.
struct ModelConfig {
  std::size_t item_dim = 32;  // d_k
  std::size_t heads = 2;
  std::size_t token_ffn_hidden = 32;
  std::size_t item_ffn_hidden = 64;
  std::size_t token_layers = 2;  // N1
  std::size_t item_layers = 2;   // N2
  std::size_t time_buckets = 32;
  std::size_t max_seq_len = 256;  // T_max
  float ln_eps = 1e-5f;

  bool bias_after_scale = false;         // add P^tg after the 1/sqrt(d) scaling instead of before
  bool strict_causal_within_item = false;
  bool token_time_bias = true;
  bool item_time_bias = true;
  bool type_embedding = true;

  // Ablations
  bool htfl_off = false;  // one concat-projected token per item instead of K feature tokens
  bool mfk_off = false;   // multimodal vectors projected linearly instead of quantized
  bool hct_off = false;   // one flat stack of N1 + N2 item-level blocks

  void validate(std::size_t token_dim) const;
  static ModelConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

}  // namespace heterrec
