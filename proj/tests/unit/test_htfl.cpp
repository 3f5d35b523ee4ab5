#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <random>
#include <set>

#include "heterrec/errors.hpp"
#include "heterrec/htfl/codebook.hpp"
#include "heterrec/htfl/encoder.hpp"
#include "heterrec/htfl/tokenizer.hpp"

namespace {

using namespace heterrec;
using namespace heterrec::htfl;
using numerics::ParamInit;
using numerics::ParamStore;
using numerics::Tape;

FeatureSchema small_schema() {
  FeatureSchema s;
  s.token_dim = 8;
  FeatureSpec cat{.name = "cat", .kind = FeatureKind::kCategorical, .vocab_size = 10};
  FeatureSpec price{.name = "price", .kind = FeatureKind::kNumerical, .boundaries = {10.0, 100.0}};
  FeatureSpec img{.name = "img", .kind = FeatureKind::kMultimodal, .dim = 4, .groups = 2, .quantiles = 2};
  s.features = {cat, price, img};
  return s;
}

QuantileCodebook half_codebook() {
  QuantileCodebook cb;
  MultimodalCodebook m;
  m.feature = "img";
  m.dim = 4;
  m.groups = 2;
  m.quantiles = 2;
  m.boundaries.assign(4, 0.5f);
  m.constant.assign(4, 0);
  cb.multimodal.push_back(m);
  return cb;
}

ItemRecord make_item(int id, std::int64_t cat, double price, std::vector<float> img) {
  ItemRecord r;
  r.item_id = "i" + std::to_string(id);
  r.categorical["cat"] = cat;
  r.numerical["price"] = price;
  r.multimodal["img"] = std::move(img);
  return r;
}

struct Fixture {
  Tokenizer tokenizer{small_schema(), half_codebook()};
  std::vector<ItemRecord> items{
      make_item(0, 3, 5.0, {0, 1, 0, 1}),
      make_item(1, 4, 50.0, {1, 1, 1, 1}),
      make_item(2, 3, 500.0, {0, 0, 0, 0}),
  };
  TokenizedCatalog catalog = tokenizer.tokenize(items, OovPolicy::kStrict);
  ModelConfig config;
  ParamStore<float> params;
  ParamStore<double> params64;

  explicit Fixture(ModelConfig c = {}) : config(c) {
    ParamInit init(7);
    declare_htfl_params(params, tokenizer, config, init);
    params64 = params.cast<double>();
  }
};

// ---- numerical binning ----

TEST(HtflBinning, ExamplesFollowLeftClosedRule) {
  const std::vector<double> b{10, 100};
  EXPECT_EQ(bin_index(b, 5), 0u);
  EXPECT_EQ(bin_index(b, 50), 1u);
  EXPECT_EQ(bin_index(b, 10), 1u);
  EXPECT_EQ(bin_index(b, 100), 2u);
  EXPECT_EQ(bin_index(b, 1e9), 2u);
}

TEST(HtflBinning, NanIsDataError) {
  const std::vector<double> b{10, 100};
  EXPECT_THROW(bin_index(b, std::numeric_limits<double>::quiet_NaN()), DataError);
  Fixture fx;
  EXPECT_THROW(fx.tokenizer.numerical_bin(1, std::nan("")), DataError);
}

// ---- quantile codebook ----

TEST(HtflCodebook, TwoPointCorpusSplitsAtMidpoint) {
  const std::vector<float> corpus{0, 0, 1, 1};
  auto cb = fit_quantile_codebook(corpus, 2, 2, 1, 2);
  // Oracle: sort each dimension, the median of two points is their midpoint.
  for (std::size_t d = 0; d < 2; ++d) {
    std::vector<float> col{corpus[d], corpus[2 + d]};
    std::sort(col.begin(), col.end());
    EXPECT_FLOAT_EQ(cb.dim_boundaries(d)[0], 0.5f * (col[0] + col[1]));
  }
}

TEST(HtflCodebook, UniformSampleQuartiles) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  const std::size_t n = 1000;
  std::vector<float> corpus(n);
  for (auto& x : corpus) x = u(rng);
  auto cb = fit_quantile_codebook(corpus, n, 1, 1, 4);
  auto b = cb.dim_boundaries(0);
  ASSERT_EQ(b.size(), 3u);

  // Independent oracle: order statistics with linear interpolation.
  std::vector<double> sorted(corpus.begin(), corpus.end());
  std::sort(sorted.begin(), sorted.end());
  for (int k = 1; k <= 3; ++k) {
    const double h = (n - 1) * (k / 4.0);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const double expect = sorted[lo] + (h - lo) * (sorted[std::min(lo + 1, n - 1)] - sorted[lo]);
    EXPECT_NEAR(b[k - 1], expect, 1e-6);
    EXPECT_NEAR(b[k - 1], 0.25 * k, 0.03);
  }
}

TEST(HtflCodebook, BucketOccupancyIsBalanced) {
  std::mt19937_64 rng(5);
  std::normal_distribution<float> g(0.0f, 1.0f);
  const std::size_t n = 997, dim = 6, q = 5;
  std::vector<float> corpus(n * dim);
  for (auto& x : corpus) x = g(rng);
  auto cb = fit_quantile_codebook(corpus, n, dim, 3, q);
  const double tol = std::max(1.0, 0.02 * n);
  for (std::size_t d = 0; d < dim; ++d) {
    std::vector<int> counts(q, 0);
    for (std::size_t i = 0; i < n; ++i) ++counts[cb.quantile_index(d, corpus[i * dim + d])];
    for (int c : counts) EXPECT_NEAR(c, static_cast<double>(n) / q, tol) << "dim " << d;
  }
}

TEST(HtflCodebook, ConstantDimensionAlwaysQuantileZero) {
  const std::vector<float> corpus{3, 0.1f, 3, 0.7f, 3, 0.4f, 3, 0.9f};
  std::vector<std::string> warnings;
  auto cb = fit_quantile_codebook(corpus, 4, 2, 1, 3, &warnings);
  for (float b : cb.dim_boundaries(0)) EXPECT_FLOAT_EQ(b, 3.0f);
  EXPECT_FALSE(warnings.empty());
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(cb.quantile_index(0, corpus[2 * i]), 0u);
}

TEST(HtflCodebook, TooFewItemsRejected) {
  const std::vector<float> corpus{1, 2};
  EXPECT_ANY_THROW(fit_quantile_codebook(corpus, 2, 1, 1, 4));
}

// ---- multimodal quantization ----

TEST(HtflQuantize, MixedRadixExample) {
  auto cb = half_codebook().multimodal[0];
  const std::vector<float> v{0, 1, 0, 1};
  EXPECT_EQ(cb.quantize(v), (std::vector<std::int64_t>{2, 2}));
  const std::vector<float> zero{0, 0, 0, 0};
  EXPECT_EQ(cb.quantize(zero), (std::vector<std::int64_t>{0, 0}));
}

TEST(HtflQuantize, CellsBijectToTokens) {
  auto cb = half_codebook().multimodal[0];
  std::set<std::int64_t> seen;
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      const std::vector<float> v{static_cast<float>(a), static_cast<float>(b), 0.f, 0.f};
      auto t = cb.quantize(v);
      EXPECT_EQ(t[0], a + 2 * b);
      EXPECT_GE(t[0], 0);
      EXPECT_LT(t[0], 4);
      seen.insert(t[0]);
    }
  }
  EXPECT_EQ(seen.size(), 4u);
}

TEST(HtflQuantize, SameCellSameTokensAndShapeError) {
  auto cb = half_codebook().multimodal[0];
  const std::vector<float> a{0.1f, 0.9f, 0.2f, 0.6f};
  const std::vector<float> b{0.3f, 0.7f, 0.4f, 0.8f};
  EXPECT_EQ(cb.quantize(a), cb.quantize(b));
  const std::vector<float> bad{0, 1, 0};
  EXPECT_THROW(cb.quantize(bad), DimensionError);
}

TEST(HtflCodebook, RoundTripsThroughFiles) {
  auto dir = std::filesystem::temp_directory_path() / "heterrec_codebook_test";
  std::filesystem::create_directories(dir);
  QuantileCodebook cb = half_codebook();
  cb.numerical.push_back({"price", {1.5, 2.5, 9.0}});
  write_codebook(dir / "cb.json", cb);
  auto back = read_codebook(dir / "cb.json");
  ASSERT_EQ(back.multimodal.size(), 1u);
  EXPECT_EQ(back.multimodal[0].boundaries, cb.multimodal[0].boundaries);
  ASSERT_NE(back.numerical_for("price"), nullptr);
  EXPECT_EQ(*back.numerical_for("price"), (std::vector<double>{1.5, 2.5, 9.0}));
  std::filesystem::remove_all(dir);
}

// ---- schema ----

TEST(HtflSchema, RejectsGroupsNotDividingTokenDim) {
  auto s = small_schema();
  s.token_dim = 6;
  s.features[2].groups = 4;
  s.features[2].dim = 8;
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(HtflSchema, JsonRoundTrip) {
  auto s = small_schema();
  auto back = FeatureSchema::from_json(s.to_json());
  EXPECT_EQ(back.to_json(), s.to_json());
  auto j = s.to_json();
  j["bogus"] = 1;
  EXPECT_THROW(FeatureSchema::from_json(j), ConfigError);
}

// ---- encoders ----

TEST(HtflEncoder, CategoricalIsTableRow) {
  Fixture fx;
  HtflEncoder<float> enc(fx.params, fx.tokenizer, fx.catalog, fx.config);
  Tape<float> tape;
  auto e = enc.encode_categorical(tape, 0, 3);
  ASSERT_EQ(e.numel(), 8u);
  const auto& table = fx.params.get("htfl.cat.table");
  for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(e.at(c), table.at(3, c));
  auto again = enc.encode_categorical(tape, 0, 3);
  EXPECT_TRUE(std::equal(e.data().begin(), e.data().end(), again.data().begin()));
  EXPECT_THROW(enc.encode_categorical(tape, 0, 10), IndexError);
}

TEST(HtflEncoder, OovPolicyMapsToReservedRow) {
  Fixture fx;
  EXPECT_EQ(fx.tokenizer.categorical_id(0, 42, OovPolicy::kMapToReserved), 0);
  EXPECT_EQ(fx.tokenizer.categorical_id(0, -1, OovPolicy::kMapToReserved), 0);
  EXPECT_EQ(fx.tokenizer.categorical_id(0, 9, OovPolicy::kMapToReserved), 9);
  std::vector<ItemRecord> cold{make_item(9, 77, 1.0, {0, 0, 0, 0})};
  EXPECT_THROW(fx.tokenizer.tokenize(cold, OovPolicy::kStrict), IndexError);
  auto cat = fx.tokenizer.tokenize(cold, OovPolicy::kMapToReserved);
  EXPECT_EQ(cat.ids(0, 0)[0], 0);
}

TEST(HtflEncoder, NumericalUsesBinRow) {
  Fixture fx;
  HtflEncoder<float> enc(fx.params, fx.tokenizer, fx.catalog, fx.config);
  Tape<float> tape;
  const auto& table = fx.params.get("htfl.price.table");
  ASSERT_EQ(table.shape()[0], 3u);
  auto e = enc.encode_numerical(tape, 1, 10.0);
  for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(e.at(c), table.at(1, c));
}

TEST(HtflEncoder, MultimodalConcatenatesGroupRows) {
  Fixture fx;
  HtflEncoder<float> enc(fx.params, fx.tokenizer, fx.catalog, fx.config);
  Tape<float> tape;
  const std::vector<std::int64_t> tokens{1, 1};
  auto e = enc.embed_multimodal(tape, 2, tokens);
  ASSERT_EQ(e.numel(), 8u);
  const auto& g0 = fx.params.get("htfl.img.group0");
  const auto& g1 = fx.params.get("htfl.img.group1");
  for (std::size_t c = 0; c < 4; ++c) {
    EXPECT_EQ(e.at(c), g0.at(1, c));
    EXPECT_EQ(e.at(4 + c), g1.at(1, c));
  }
  bool differs = false;
  for (std::size_t c = 0; c < 4; ++c) differs |= e.at(c) != e.at(4 + c);
  EXPECT_TRUE(differs);
  const std::vector<std::int64_t> bad{4, 0};
  EXPECT_THROW(enc.embed_multimodal(tape, 2, bad), IndexError);
}

TEST(HtflEncoder, MultimodalGradientHitsOnlyLookedUpRows) {
  Fixture fx;
  HtflEncoder<double> enc(fx.params64, fx.tokenizer, fx.catalog, fx.config);
  Tape<double> tape;
  const std::vector<std::int64_t> tokens{3, 1};
  auto e = enc.embed_multimodal(tape, 2, tokens);
  // loss = sum_c (c + 1) * e_c, so d loss / d row = column weights.
  std::vector<double> w(8);
  for (std::size_t c = 0; c < 8; ++c) w[c] = static_cast<double>(c + 1);
  auto loss = tape.sum(tape.mul(e, numerics::Tensor<double>({1, 8}, w)));
  tape.backward(loss);
  for (std::size_t g = 0; g < 2; ++g) {
    const auto& table = fx.params64.get("htfl.img.group" + std::to_string(g));
    ASSERT_TRUE(table.has_grad());
    for (std::size_t r = 0; r < 4; ++r) {
      for (std::size_t c = 0; c < 4; ++c) {
        const double expect = static_cast<std::int64_t>(r) == tokens[g] ? w[g * 4 + c] : 0.0;
        EXPECT_EQ(table.grad()[r * 4 + c], expect);
      }
    }
  }
}

TEST(HtflEncoder, EveryTokenHasWidthDf) {
  Fixture fx;
  HtflEncoder<float> enc(fx.params, fx.tokenizer, fx.catalog, fx.config);
  Tape<float> tape;
  const std::vector<std::int64_t> all{0, 1, 2};
  for (auto& f : enc.item_features(tape, all)) EXPECT_EQ(f.shape(), (numerics::Shape{3, 8}));
}

// ---- flatten ----

TEST(HtflFlatten, LayoutIsItemMajor) {
  Fixture fx;
  HtflEncoder<float> enc(fx.params, fx.tokenizer, fx.catalog, fx.config);
  Tape<float> tape;
  auto seq = enc.flatten(tape, {0, 1}, {100, 200});
  EXPECT_EQ(seq.embeddings.shape(), (numerics::Shape{6, 8}));
  EXPECT_EQ(seq.item_index, (std::vector<std::int64_t>{0, 0, 0, 1, 1, 1}));
  EXPECT_EQ(seq.feature_type, (std::vector<std::int64_t>{0, 1, 2, 0, 1, 2}));
  EXPECT_EQ(seq.timestamps, (std::vector<std::int64_t>{100, 100, 100, 200, 200, 200}));
}

TEST(HtflFlatten, RowsMatchStandaloneEncodings) {
  Fixture fx;
  HtflEncoder<float> enc(fx.params, fx.tokenizer, fx.catalog, fx.config);
  Tape<float> tape;
  auto seq = enc.flatten(tape, {2, 0, 1}, {1, 2, 3});
  const auto& types = fx.params.get("htfl.type_embedding");
  for (std::size_t t = 0; t < 3; ++t) {
    const auto& rec = fx.items[static_cast<std::size_t>(seq.items[t])];
    auto cat = enc.encode_categorical(tape, 0, rec.categorical.at("cat"));
    auto num = enc.encode_numerical(tape, 1, rec.numerical.at("price"));
    auto mm = enc.embed_multimodal(tape, 2, fx.tokenizer.multimodal_tokens(2, rec.multimodal.at("img")));
    const numerics::Tensor<float>* standalone[] = {&cat, &num, &mm};
    for (std::size_t k = 0; k < 3; ++k) {
      for (std::size_t c = 0; c < 8; ++c) {
        EXPECT_FLOAT_EQ(seq.embeddings.at(t * 3 + k, c), standalone[k]->at(c) + types.at(k, c));
      }
    }
  }
}

TEST(HtflFlatten, EmptyAndUnsortedAreDataErrors) {
  Fixture fx;
  HtflEncoder<float> enc(fx.params, fx.tokenizer, fx.catalog, fx.config);
  Tape<float> tape;
  EXPECT_THROW(enc.flatten(tape, {}, {}), DataError);
  EXPECT_THROW(enc.flatten(tape, {0, 1}, {5, 4}), DataError);
  EXPECT_NO_THROW(enc.flatten(tape, {0, 1}, {5, 5}));
}

TEST(HtflFlatten, TruncatesToMostRecent256) {
  Fixture fx;
  ASSERT_EQ(fx.config.max_seq_len, 256u);
  HtflEncoder<float> enc(fx.params, fx.tokenizer, fx.catalog, fx.config);
  Tape<float> tape(false);
  std::vector<std::int64_t> items(300), ts(300);
  for (std::size_t i = 0; i < 300; ++i) {
    items[i] = static_cast<std::int64_t>(i % 3);
    ts[i] = static_cast<std::int64_t>(i);
  }
  auto seq = enc.flatten(tape, items, ts);
  EXPECT_EQ(seq.num_items(), 256u);
  EXPECT_EQ(seq.item_timestamps.front(), 44);
  EXPECT_EQ(seq.item_timestamps.back(), 299);
}

TEST(HtflFlatten, ConcatVariantEmitsOneTokenPerItem) {
  ModelConfig c;
  c.htfl_off = true;
  Fixture fx(c);
  HtflEncoder<float> enc(fx.params, fx.tokenizer, fx.catalog, fx.config);
  Tape<float> tape;
  auto seq = enc.flatten(tape, {0, 1}, {1, 2});
  EXPECT_EQ(seq.tokens_per_item, 1u);
  EXPECT_EQ(seq.embeddings.shape(), (numerics::Shape{2, 8}));
  EXPECT_FALSE(fx.params.contains("htfl.type_embedding"));
}

TEST(HtflFlatten, LinearMultimodalVariantUsesProjection) {
  ModelConfig c;
  c.mfk_off = true;
  Fixture fx(c);
  EXPECT_FALSE(fx.params.contains("htfl.img.group0"));
  HtflEncoder<float> enc(fx.params, fx.tokenizer, fx.catalog, fx.config);
  Tape<float> tape;
  const std::vector<std::int64_t> one{1};
  auto e = enc.encode_feature(tape, 2, one);
  const auto& w = fx.params.get("htfl.img.proj.w");
  // raw vector is all ones, bias zero: output column = column sum of W
  for (std::size_t c = 0; c < 8; ++c) {
    float s = 0;
    for (std::size_t r = 0; r < 4; ++r) s += w.at(r, c);
    EXPECT_NEAR(e.at(c), s, 1e-6);
  }
}

}  // namespace
