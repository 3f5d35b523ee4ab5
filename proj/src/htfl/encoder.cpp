#include "heterrec/htfl/encoder.hpp"

#include "heterrec/errors.hpp"

namespace heterrec::htfl {

namespace {

constexpr double kEmbeddingInit = 0.5;

}  // namespace

void check_and_truncate(std::vector<std::int64_t>& items, std::vector<std::int64_t>& timestamps,
                        std::size_t max_len) {
  if (items.empty()) throw DataError("sequence is empty");
  if (items.size() != timestamps.size()) throw DataError("sequence items and timestamps differ in length");
  for (std::size_t i = 1; i < timestamps.size(); ++i) {
    if (timestamps[i] < timestamps[i - 1]) {
      throw DataError("sequence timestamps are not sorted at position " + std::to_string(i));
    }
  }
  if (items.size() > max_len) {
    const auto drop = static_cast<std::ptrdiff_t>(items.size() - max_len);
    items.erase(items.begin(), items.begin() + drop);
    timestamps.erase(timestamps.begin(), timestamps.begin() + drop);
  }
}

std::string feature_table_name(const FeatureSpec& f) { return "htfl." + f.name + ".table"; }

std::string group_table_name(const FeatureSpec& f, std::size_t group) {
  return "htfl." + f.name + ".group" + std::to_string(group);
}

void declare_htfl_params(numerics::ParamStore<float>& store, const Tokenizer& tokenizer,
                         const ModelConfig& config, numerics::ParamInit& init) {
  const auto& schema = tokenizer.schema();
  const std::size_t df = schema.token_dim;
  for (std::size_t k = 0; k < schema.size(); ++k) {
    const auto& f = schema.at(k);
    if (f.kind != FeatureKind::kMultimodal) {
      const std::size_t rows = tokenizer.table_rows(k);
      store.add(feature_table_name(f), {rows, df}, init.uniform(rows * df, kEmbeddingInit));
    } else if (config.mfk_off) {
      store.add("htfl." + f.name + ".proj.w", {f.dim, df}, init.xavier(f.dim, df));
      store.add("htfl." + f.name + ".proj.b", {df}, numerics::ParamInit::constant(df, 0.0f));
    } else {
      const std::size_t rows = tokenizer.table_rows(k);
      const std::size_t width = df / f.groups;
      for (std::size_t g = 0; g < f.groups; ++g) {
        store.add(group_table_name(f, g), {rows, width}, init.uniform(rows * width, kEmbeddingInit));
      }
    }
  }
  const std::size_t K = schema.size();
  if (config.htfl_off) {
    store.add("htfl.concat_proj.w", {K * df, df}, init.xavier(K * df, df));
    store.add("htfl.concat_proj.b", {df}, numerics::ParamInit::constant(df, 0.0f));
  } else if (config.type_embedding) {
    store.add("htfl.type_embedding", {K, df}, init.uniform(K * df, kEmbeddingInit));
  }
}

template <typename T>
HtflEncoder<T>::HtflEncoder(const numerics::ParamStore<T>& params, const Tokenizer& tokenizer,
                            const TokenizedCatalog& catalog, const ModelConfig& config)
    : params_(params), tokenizer_(tokenizer), catalog_(catalog), config_(config) {
  if (catalog.num_features() != tokenizer.num_features()) {
    throw ContractError("tokenized catalog does not match the schema");
  }
}

template <typename T>
auto HtflEncoder<T>::lookup_groups(Tape& tape, std::size_t k, std::span<const std::int64_t> tokens,
                                   std::size_t n) const -> Tensor {
  const auto& f = tokenizer_.schema().at(k);
  const std::size_t Z = f.groups;
  std::vector<Tensor> parts;
  parts.reserve(Z);
  std::vector<std::int64_t> ids(n);
  for (std::size_t g = 0; g < Z; ++g) {
    for (std::size_t i = 0; i < n; ++i) ids[i] = tokens[i * Z + g];
    parts.push_back(tape.gather_rows(params_.get(group_table_name(f, g)), ids));
  }
  return Z == 1 ? parts[0] : tape.concat_last_dim(parts);
}

template <typename T>
auto HtflEncoder<T>::encode_categorical(Tape& tape, std::size_t k, std::int64_t id) const -> Tensor {
  const auto& f = tokenizer_.schema().at(k);
  if (f.kind != FeatureKind::kCategorical) throw ContractError("feature '" + f.name + "' is not categorical");
  const std::int64_t row = tokenizer_.categorical_id(k, id, OovPolicy::kStrict);
  return tape.gather_rows(params_.get(feature_table_name(f)), std::span<const std::int64_t>(&row, 1));
}

template <typename T>
auto HtflEncoder<T>::encode_numerical(Tape& tape, std::size_t k, double value) const -> Tensor {
  const auto& f = tokenizer_.schema().at(k);
  if (f.kind != FeatureKind::kNumerical) throw ContractError("feature '" + f.name + "' is not numerical");
  const std::int64_t row = tokenizer_.numerical_bin(k, value);
  return tape.gather_rows(params_.get(feature_table_name(f)), std::span<const std::int64_t>(&row, 1));
}

template <typename T>
auto HtflEncoder<T>::embed_multimodal(Tape& tape, std::size_t k, std::span<const std::int64_t> tokens) const
    -> Tensor {
  const auto& f = tokenizer_.schema().at(k);
  if (f.kind != FeatureKind::kMultimodal) throw ContractError("feature '" + f.name + "' is not multimodal");
  if (config_.mfk_off) throw ContractError("multimodal tokens are unused when mfk_off is set");
  if (tokens.size() != f.groups) {
    throw DimensionError("expected " + std::to_string(f.groups) + " group tokens, got " +
                         std::to_string(tokens.size()));
  }
  return lookup_groups(tape, k, tokens, 1);
}

template <typename T>
auto HtflEncoder<T>::encode_feature(Tape& tape, std::size_t k, std::span<const std::int64_t> items) const
    -> Tensor {
  const auto& f = tokenizer_.schema().at(k);
  const std::size_t n = items.size();
  for (auto it : items) {
    if (it < 0 || static_cast<std::size_t>(it) >= catalog_.num_items()) {
      throw IndexError("item index " + std::to_string(it) + " outside catalog of " +
                       std::to_string(catalog_.num_items()));
    }
  }
  if (f.kind == FeatureKind::kMultimodal && config_.mfk_off) {
    std::vector<T> raw;
    raw.reserve(n * f.dim);
    for (auto it : items) {
      auto v = catalog_.raw(k, static_cast<std::size_t>(it));
      raw.insert(raw.end(), v.begin(), v.end());
    }
    Tensor x({n, f.dim}, std::move(raw));
    auto y = tape.matmul(x, params_.get("htfl." + f.name + ".proj.w"));
    return tape.add_bias(y, params_.get("htfl." + f.name + ".proj.b"));
  }
  const std::size_t w = catalog_.width(k);
  std::vector<std::int64_t> tokens;
  tokens.reserve(n * w);
  for (auto it : items) {
    auto ids = catalog_.ids(k, static_cast<std::size_t>(it));
    tokens.insert(tokens.end(), ids.begin(), ids.end());
  }
  if (f.kind == FeatureKind::kMultimodal) return lookup_groups(tape, k, tokens, n);
  return tape.gather_rows(params_.get(feature_table_name(f)), tokens);
}

template <typename T>
auto HtflEncoder<T>::item_features(Tape& tape, std::span<const std::int64_t> items) const -> std::vector<Tensor> {
  std::vector<Tensor> out;
  out.reserve(num_features());
  for (std::size_t k = 0; k < num_features(); ++k) out.push_back(encode_feature(tape, k, items));
  return out;
}

template <typename T>
TokenSequence<T> HtflEncoder<T>::flatten(Tape& tape, std::vector<std::int64_t> items,
                                         std::vector<std::int64_t> timestamps) const {
  check_and_truncate(items, timestamps, config_.max_seq_len);
  const std::size_t n = items.size();
  const std::size_t K = num_features();
  const std::size_t df = token_dim();

  TokenSequence<T> seq;
  auto features = item_features(tape, items);
  auto concat = K == 1 ? features[0] : tape.concat_last_dim(features);  // [T, K*d_f]
  if (config_.htfl_off) {
    auto y = tape.matmul(concat, params_.get("htfl.concat_proj.w"));
    seq.embeddings = tape.add_bias(y, params_.get("htfl.concat_proj.b"));
    seq.tokens_per_item = 1;
  } else {
    auto flat = tape.reshape(concat, {n * K, df});
    if (config_.type_embedding) {
      std::vector<std::int64_t> types(n * K);
      for (std::size_t p = 0; p < types.size(); ++p) types[p] = static_cast<std::int64_t>(p % K);
      flat = tape.add(flat, tape.gather_rows(params_.get("htfl.type_embedding"), types));
    }
    seq.embeddings = flat;
    seq.tokens_per_item = K;
  }

  const std::size_t per = seq.tokens_per_item;
  seq.item_index.resize(n * per);
  seq.feature_type.resize(n * per);
  seq.timestamps.resize(n * per);
  for (std::size_t p = 0; p < n * per; ++p) {
    seq.item_index[p] = static_cast<std::int64_t>(p / per);
    seq.feature_type[p] = static_cast<std::int64_t>(p % per);
    seq.timestamps[p] = timestamps[p / per];
  }
  seq.items = std::move(items);
  seq.item_timestamps = std::move(timestamps);
  return seq;
}

template class HtflEncoder<float>;
template class HtflEncoder<double>;

}  // namespace heterrec::htfl
