#pragma once

#include <random>
#include <string>
#include <vector>

#include "heterrec/hct/towers.hpp"
#include "heterrec/htfl/encoder.hpp"

namespace heterrec::testing {

// Three-feature schema (categorical, numerical, multimodal) over a handful of
// items, d_f = 8. Used by the tower and loss tests.
inline htfl::FeatureSchema tiny_schema() {
  htfl::FeatureSchema s;
  s.token_dim = 8;
  htfl::FeatureSpec cat{.name = "cat", .kind = htfl::FeatureKind::kCategorical, .vocab_size = 6};
  htfl::FeatureSpec price{.name = "price", .kind = htfl::FeatureKind::kNumerical, .boundaries = {10.0, 100.0}};
  htfl::FeatureSpec img{.name = "img", .kind = htfl::FeatureKind::kMultimodal, .dim = 4, .groups = 2, .quantiles = 2};
  s.features = {cat, price, img};
  return s;
}

inline std::vector<htfl::ItemRecord> tiny_items(std::size_t n = 8) {
  std::vector<htfl::ItemRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    htfl::ItemRecord r;
    r.item_id = "item" + std::to_string(i);
    r.categorical["cat"] = static_cast<std::int64_t>(1 + i % 5);
    r.numerical["price"] = 5.0 + 30.0 * static_cast<double>(i);
    r.multimodal["img"] = {static_cast<float>(i % 2), static_cast<float>((i / 2) % 2),
                           static_cast<float>((i / 4) % 2), static_cast<float>(i % 3 == 0)};
    out.push_back(std::move(r));
  }
  return out;
}

struct TinyModel {
  std::vector<htfl::ItemRecord> items;
  htfl::Tokenizer tokenizer;
  htfl::TokenizedCatalog catalog;
  ModelConfig config;
  numerics::ParamStore<double> params;

  explicit TinyModel(ModelConfig c = small_config(), std::uint64_t seed = 3, std::size_t n_items = 8)
      : items(tiny_items(n_items)),
        tokenizer(tiny_schema(), htfl::fit_codebook(tiny_schema(), items)),
        catalog(tokenizer.tokenize(items, htfl::OovPolicy::kStrict)),
        config(c) {
    numerics::ParamStore<float> store;
    numerics::ParamInit init(seed);
    htfl::declare_htfl_params(store, tokenizer, config, init);
    hct::declare_tower_params(store, tokenizer.num_features(), tokenizer.schema().token_dim, config, init);
    params = store.cast<double>();
    // Non-zero time-gap tables so the bias path is exercised.
    std::mt19937_64 rng(seed + 100);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (const char* name : {"token_level.time_gap", "item_level.time_gap"}) {
      if (!params.contains(name)) continue;
      auto t = params.get(name);
      for (auto& v : t.data_mut()) v = u(rng);
    }
  }

  static ModelConfig small_config() {
    ModelConfig c;
    c.item_dim = 8;
    c.heads = 2;
    c.token_ffn_hidden = 8;
    c.item_ffn_hidden = 8;
    c.token_layers = 1;
    c.item_layers = 1;
    c.time_buckets = 8;
    return c;
  }
};

}  // namespace heterrec::testing
