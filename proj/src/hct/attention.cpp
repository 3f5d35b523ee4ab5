#include "heterrec/hct/attention.hpp"

#include <bit>
#include <cmath>
#include <limits>

#include "heterrec/errors.hpp"

namespace heterrec::hct {

using numerics::ParamInit;
using numerics::ParamStore;
using numerics::Tape;
using numerics::Tensor;

template <typename T>
std::vector<T> build_token_mask(std::span<const std::int64_t> item_index, bool strict_within_item) {
  const std::size_t L = item_index.size();
  for (std::size_t p = 1; p < L; ++p) {
    if (item_index[p] < item_index[p - 1]) {
      throw DataError("item_index decreases at position " + std::to_string(p));
    }
  }
  const T neg_inf = -std::numeric_limits<T>::infinity();
  std::vector<T> mask(L * L, neg_inf);
  for (std::size_t p = 0; p < L; ++p) {
    for (std::size_t q = 0; q < L; ++q) {
      const bool allowed = strict_within_item ? q <= p : item_index[q] <= item_index[p];
      if (allowed) mask[p * L + q] = T(0);
    }
  }
  return mask;
}

template std::vector<float> build_token_mask<float>(std::span<const std::int64_t>, bool);
template std::vector<double> build_token_mask<double>(std::span<const std::int64_t>, bool);

std::size_t time_gap_bucket(std::int64_t delta_seconds, std::size_t buckets) {
  if (delta_seconds < 0) {
    throw ContractError("time gap must be non-negative, got " + std::to_string(delta_seconds));
  }
  if (buckets == 0) throw ContractError("time gap bucket count must be positive");
  const auto v = static_cast<std::uint64_t>(delta_seconds) + 1;
  const std::size_t b = static_cast<std::size_t>(std::bit_width(v)) - 1;  // floor(log2 v)
  return std::min(b, buckets - 1);
}

std::vector<std::int64_t> time_gap_buckets(std::span<const std::int64_t> item_index,
                                           std::span<const std::int64_t> timestamps, std::size_t buckets) {
  const std::size_t L = item_index.size();
  if (timestamps.size() != L) throw DimensionError("time_gap_buckets: timestamps and item_index differ in length");
  std::vector<std::int64_t> out(L * L, 0);
  for (std::size_t p = 0; p < L; ++p) {
    for (std::size_t q = 0; q < L; ++q) {
      if (item_index[q] > item_index[p]) continue;
      out[p * L + q] = static_cast<std::int64_t>(time_gap_bucket(timestamps[p] - timestamps[q], buckets));
    }
  }
  return out;
}

void declare_block_params(ParamStore<float>& store, const std::string& prefix, std::size_t width,
                          std::size_t ffn_hidden, ParamInit& init) {
  for (const char* w : {"wq", "wk", "wv", "wo"}) {
    store.add(prefix + ".attn." + w, {width, width}, init.xavier(width, width));
  }
  for (const char* ln : {"ln1", "ln2"}) {
    store.add(prefix + "." + ln + ".gain", {width}, ParamInit::constant(width, 1.0f));
    store.add(prefix + "." + ln + ".bias", {width}, ParamInit::constant(width, 0.0f));
  }
  declare_mlp2_params(store, prefix + ".ffn", width, ffn_hidden, width, init);
}

void declare_mlp2_params(ParamStore<float>& store, const std::string& prefix, std::size_t in, std::size_t hidden,
                         std::size_t out, ParamInit& init) {
  store.add(prefix + ".w1", {in, hidden}, init.xavier(in, hidden));
  store.add(prefix + ".b1", {hidden}, ParamInit::constant(hidden, 0.0f));
  store.add(prefix + ".w2", {hidden, out}, init.xavier(hidden, out));
  store.add(prefix + ".b2", {out}, ParamInit::constant(out, 0.0f));
}

template <typename T>
Tensor<T> time_gap_bias(Tape<T>& tape, const Tensor<T>& table, std::span<const std::int64_t> buckets,
                        std::size_t length) {
  if (table.cols() != 1) throw DimensionError("time-gap table must have one column, got " + numerics::shape_str(table.shape()));
  auto rows = tape.gather_rows(table, buckets);  // [L*L, 1]
  return tape.reshape(rows, {length, length});
}

template <typename T>
Tensor<T> multi_head_attention(Tape<T>& tape, const Tensor<T>& x, std::span<const T> mask, const Tensor<T>& bias,
                               const ParamStore<T>& params, const std::string& prefix,
                               const AttentionOptions& opt) {
  const std::size_t d = x.cols();
  if (opt.heads == 0 || d % opt.heads != 0) {
    throw ConfigError("attention: " + std::to_string(opt.heads) + " heads do not divide width " + std::to_string(d));
  }
  const std::size_t dh = d / opt.heads;
  const T inv_sqrt = T(1) / static_cast<T>(std::sqrt(static_cast<double>(dh)));

  auto q = tape.matmul(x, params.get(prefix + ".wq"));
  auto k = tape.matmul(x, params.get(prefix + ".wk"));
  auto v = tape.matmul(x, params.get(prefix + ".wv"));

  std::vector<Tensor<T>> heads;
  heads.reserve(opt.heads);
  for (std::size_t h = 0; h < opt.heads; ++h) {
    const std::size_t b = h * dh, e = b + dh;
    auto qh = opt.heads == 1 ? q : tape.slice_last_dim(q, b, e);
    auto kh = opt.heads == 1 ? k : tape.slice_last_dim(k, b, e);
    auto vh = opt.heads == 1 ? v : tape.slice_last_dim(v, b, e);
    auto logits = tape.matmul_nt(qh, kh);
    if (bias.defined() && !opt.bias_after_scale) logits = tape.add(logits, bias);
    logits = tape.scale(logits, inv_sqrt);
    if (bias.defined() && opt.bias_after_scale) logits = tape.add(logits, bias);
    auto attn = tape.masked_softmax(logits, mask);
    heads.push_back(tape.matmul(attn, vh));
  }
  auto cat = opt.heads == 1 ? heads[0] : tape.concat_last_dim(heads);
  return tape.matmul(cat, params.get(prefix + ".wo"));
}

template <typename T>
Tensor<T> mlp2(Tape<T>& tape, const Tensor<T>& x, const ParamStore<T>& params, const std::string& prefix) {
  auto h = tape.relu(tape.add_bias(tape.matmul(x, params.get(prefix + ".w1")), params.get(prefix + ".b1")));
  return tape.add_bias(tape.matmul(h, params.get(prefix + ".w2")), params.get(prefix + ".b2"));
}

template <typename T>
Tensor<T> causal_block(Tape<T>& tape, const Tensor<T>& x, std::span<const T> mask, const Tensor<T>& bias,
                       const ParamStore<T>& params, const std::string& prefix, const AttentionOptions& opt) {
  const T eps = static_cast<T>(opt.ln_eps);
  auto attn = multi_head_attention(tape, x, mask, bias, params, prefix + ".attn", opt);
  auto y = tape.layer_norm(tape.add(x, attn), params.get(prefix + ".ln1.gain"), params.get(prefix + ".ln1.bias"), eps);
  auto f = mlp2(tape, y, params, prefix + ".ffn");
  return tape.layer_norm(tape.add(y, f), params.get(prefix + ".ln2.gain"), params.get(prefix + ".ln2.bias"), eps);
}

#define HETERREC_INSTANTIATE(T)                                                                                   \
  template Tensor<T> time_gap_bias<T>(Tape<T>&, const Tensor<T>&, std::span<const std::int64_t>, std::size_t);    \
  template Tensor<T> multi_head_attention<T>(Tape<T>&, const Tensor<T>&, std::span<const T>, const Tensor<T>&,    \
                                             const ParamStore<T>&, const std::string&, const AttentionOptions&); \
  template Tensor<T> mlp2<T>(Tape<T>&, const Tensor<T>&, const ParamStore<T>&, const std::string&);               \
  template Tensor<T> causal_block<T>(Tape<T>&, const Tensor<T>&, std::span<const T>, const Tensor<T>&,            \
                                     const ParamStore<T>&, const std::string&, const AttentionOptions&);

HETERREC_INSTANTIATE(float)
HETERREC_INSTANTIATE(double)

#undef HETERREC_INSTANTIATE

}  // namespace heterrec::hct
