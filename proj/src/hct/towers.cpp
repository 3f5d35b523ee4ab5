#include "heterrec/hct/towers.hpp"

#include "heterrec/errors.hpp"

namespace heterrec::hct {

using numerics::ParamInit;
using numerics::ParamStore;
using numerics::Tape;
using numerics::Tensor;

std::size_t token_block_count(const ModelConfig& config) { return config.hct_off ? 0 : config.token_layers; }

std::size_t item_block_count(const ModelConfig& config) {
  return config.hct_off ? config.token_layers + config.item_layers : config.item_layers;
}

void declare_tower_params(ParamStore<float>& store, std::size_t num_features, std::size_t token_dim,
                          const ModelConfig& config, ParamInit& init) {
  config.validate(token_dim);
  const std::size_t df = token_dim, dk = config.item_dim, K = num_features;
  // tokens per item in the stream fed to the fusion MLP
  const std::size_t stream_k = config.htfl_off ? 1 : K;

  for (std::size_t i = 0; i < token_block_count(config); ++i) {
    declare_block_params(store, "token_blocks." + std::to_string(i), df, config.token_ffn_hidden, init);
  }
  if (token_block_count(config) > 0 && config.token_time_bias) {
    store.add("token_level.time_gap", {config.time_buckets, 1}, ParamInit::constant(config.time_buckets, 0.0f));
  }
  declare_mlp2_params(store, "fusion", stream_k * df, 2 * dk, dk, init);
  for (std::size_t i = 0; i < item_block_count(config); ++i) {
    declare_block_params(store, "item_blocks." + std::to_string(i), dk, config.item_ffn_hidden, init);
  }
  if (config.item_time_bias) {
    store.add("item_level.time_gap", {config.time_buckets, 1}, ParamInit::constant(config.time_buckets, 0.0f));
  }

  for (std::size_t k = 0; k < K; ++k) {
    declare_mlp2_params(store, "item_tower.type" + std::to_string(k), df, df, df, init);
  }
  declare_mlp2_params(store, "item_tower.fuse", K * df, 2 * dk, dk, init);
}

template <typename T>
UserTower<T>::UserTower(const ParamStore<T>& params, const ModelConfig& config) : params_(params), config_(config) {}

template <typename T>
Tensor<T> UserTower<T>::bias_for(Tape<T>& tape, const char* level, bool enabled,
                                 std::span<const std::int64_t> item_index,
                                 std::span<const std::int64_t> timestamps) const {
  if (!enabled) return {};
  auto buckets = time_gap_buckets(item_index, timestamps, config_.time_buckets);
  return time_gap_bias(tape, params_.get(std::string(level) + ".time_gap"), buckets, item_index.size());
}

template <typename T>
UserTowerOutput<T> UserTower<T>::forward(Tape<T>& tape, htfl::TokenSequence<T> sequence) const {
  const std::size_t n = sequence.num_items();
  if (n == 0) throw DataError("user tower needs at least one item");
  const std::size_t per = sequence.tokens_per_item;
  const std::size_t df = sequence.embeddings.cols();

  AttentionOptions opt{config_.heads, config_.bias_after_scale, config_.ln_eps};
  UserTowerOutput<T> out;

  Tensor<T> x = sequence.embeddings;
  if (token_block_count(config_) > 0) {
    auto mask = build_token_mask<T>(sequence.item_index, config_.strict_causal_within_item);
    auto bias = bias_for(tape, "token_level", config_.token_time_bias, sequence.item_index, sequence.timestamps);
    for (std::size_t i = 0; i < token_block_count(config_); ++i) {
      x = causal_block(tape, x, std::span<const T>(mask), bias, params_, "token_blocks." + std::to_string(i), opt);
    }
    out.token_states = x;
  }

  auto per_item = per == 1 ? x : tape.reshape(x, {n, per * df});
  auto u = mlp2(tape, per_item, params_, "fusion");

  std::vector<std::int64_t> items(n);
  for (std::size_t t = 0; t < n; ++t) items[t] = static_cast<std::int64_t>(t);
  auto mask = build_token_mask<T>(items);
  auto bias = bias_for(tape, "item_level", config_.item_time_bias, items, sequence.item_timestamps);
  for (std::size_t i = 0; i < item_block_count(config_); ++i) {
    u = causal_block(tape, u, std::span<const T>(mask), bias, params_, "item_blocks." + std::to_string(i), opt);
  }
  out.user = u;
  out.sequence = std::move(sequence);
  return out;
}

template <typename T>
ItemTower<T>::ItemTower(const ParamStore<T>& params, const htfl::HtflEncoder<T>& encoder)
    : params_(params), encoder_(encoder) {}

template <typename T>
ItemTowerOutput<T> ItemTower<T>::forward(Tape<T>& tape, std::span<const std::int64_t> items) const {
  if (items.empty()) throw DataError("item tower needs at least one item");
  ItemTowerOutput<T> out;
  auto features = encoder_.item_features(tape, items);
  out.tokens.reserve(features.size());
  for (std::size_t k = 0; k < features.size(); ++k) {
    out.tokens.push_back(mlp2(tape, features[k], params_, "item_tower.type" + std::to_string(k)));
  }
  auto cat = out.tokens.size() == 1 ? out.tokens[0] : tape.concat_last_dim(out.tokens);
  out.item = mlp2(tape, cat, params_, "item_tower.fuse");
  return out;
}

template class UserTower<float>;
template class UserTower<double>;
template class ItemTower<float>;
template class ItemTower<double>;

}  // namespace heterrec::hct
