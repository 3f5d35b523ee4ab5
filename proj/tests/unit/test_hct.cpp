#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "heterrec/errors.hpp"
#include "heterrec/hct/attention.hpp"
#include "heterrec/hct/towers.hpp"
#include "heterrec/numerics/grad_check.hpp"
#include "test_support.hpp"
#include "tiny_model.hpp"

namespace {

using namespace heterrec;
using namespace heterrec::hct;
using numerics::ParamInit;
using numerics::ParamStore;
using numerics::Shape;
using numerics::Tape;
using numerics::Tensor;
using heterrec::testing::TinyModel;

constexpr double kInf = std::numeric_limits<double>::infinity();

using Mat = std::vector<std::vector<double>>;

// ---------- straight-loop reference transformer (test-only oracle) ----------

Mat to_mat(const Tensor<double>& t) {
  Mat m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) m[r][c] = t.at(r, c);
  return m;
}

Mat mm(const Mat& a, const Mat& b) {
  Mat out(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k)
      for (std::size_t j = 0; j < b[0].size(); ++j) out[i][j] += a[i][k] * b[k][j];
  return out;
}

Mat ref_attention(const Mat& x, const std::vector<std::vector<bool>>& allowed, const Mat& P, const Mat& wq,
                  const Mat& wk, const Mat& wv, const Mat& wo, std::size_t heads, bool after_scale) {
  const std::size_t L = x.size(), d = x[0].size(), dh = d / heads;
  Mat q = mm(x, wq), k = mm(x, wk), v = mm(x, wv);
  Mat cat(L, std::vector<double>(d, 0.0));
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t p = 0; p < L; ++p) {
      std::vector<double> s(L, -kInf);
      double mx = -kInf;
      for (std::size_t j = 0; j < L; ++j) {
        if (!allowed[p][j]) continue;
        double dot = 0;
        for (std::size_t c = 0; c < dh; ++c) dot += q[p][h * dh + c] * k[j][h * dh + c];
        s[j] = after_scale ? dot / std::sqrt(double(dh)) + P[p][j] : (dot + P[p][j]) / std::sqrt(double(dh));
        mx = std::max(mx, s[j]);
      }
      double z = 0;
      for (std::size_t j = 0; j < L; ++j) {
        s[j] = allowed[p][j] ? std::exp(s[j] - mx) : 0.0;
        z += s[j];
      }
      for (std::size_t j = 0; j < L; ++j)
        for (std::size_t c = 0; c < dh; ++c) cat[p][h * dh + c] += s[j] / z * v[j][h * dh + c];
    }
  }
  return mm(cat, wo);
}

Mat ref_ln(const Mat& x, const std::vector<double>& g, const std::vector<double>& b, double eps) {
  Mat out = x;
  for (auto& row : out) {
    double mu = 0, var = 0;
    for (double v : row) mu += v;
    mu /= row.size();
    for (double v : row) var += (v - mu) * (v - mu);
    var /= row.size();
    for (std::size_t c = 0; c < row.size(); ++c) row[c] = (row[c] - mu) / std::sqrt(var + eps) * g[c] + b[c];
  }
  return out;
}

Mat ref_mlp(const Mat& x, const ParamStore<double>& ps, const std::string& prefix) {
  auto vec = [&](const std::string& n) {
    auto d = ps.get(n).data();
    return std::vector<double>(d.begin(), d.end());
  };
  Mat h = mm(x, to_mat(ps.get(prefix + ".w1")));
  auto b1 = vec(prefix + ".b1");
  for (auto& r : h)
    for (std::size_t c = 0; c < r.size(); ++c) r[c] = std::max(0.0, r[c] + b1[c]);
  Mat o = mm(h, to_mat(ps.get(prefix + ".w2")));
  auto b2 = vec(prefix + ".b2");
  for (auto& r : o)
    for (std::size_t c = 0; c < r.size(); ++c) r[c] += b2[c];
  return o;
}

Mat add(const Mat& a, const Mat& b) {
  Mat o = a;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[0].size(); ++j) o[i][j] += b[i][j];
  return o;
}

Mat ref_block(const Mat& x, const std::vector<std::vector<bool>>& allowed, const Mat& P,
              const ParamStore<double>& ps, const std::string& pre, std::size_t heads, bool after_scale,
              double eps) {
  auto vec = [&](const std::string& n) {
    auto d = ps.get(n).data();
    return std::vector<double>(d.begin(), d.end());
  };
  Mat a = ref_attention(x, allowed, P, to_mat(ps.get(pre + ".attn.wq")), to_mat(ps.get(pre + ".attn.wk")),
                        to_mat(ps.get(pre + ".attn.wv")), to_mat(ps.get(pre + ".attn.wo")), heads, after_scale);
  Mat y = ref_ln(add(x, a), vec(pre + ".ln1.gain"), vec(pre + ".ln1.bias"), eps);
  return ref_ln(add(y, ref_mlp(y, ps, pre + ".ffn")), vec(pre + ".ln2.gain"), vec(pre + ".ln2.bias"), eps);
}

// Time-gap oracle: repeated halving instead of bit tricks.
std::size_t ref_bucket(long long delta, std::size_t B) {
  long long v = delta + 1;
  std::size_t lg = 0;
  while (v > 1) {
    v /= 2;
    ++lg;
  }
  return std::min(lg, B - 1);
}

ParamStore<double> random_block_store(std::uint64_t seed, std::size_t d, std::size_t hidden) {
  ParamStore<float> f;
  ParamInit init(seed);
  declare_block_params(f, "blk", d, hidden, init);
  auto ps = f.cast<double>();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (const auto& [name, t] : ps) {
    auto copy = t;
    if (name.find("ln") != std::string::npos) {
      for (auto& v : copy.data_mut()) v += u(rng);
    } else if (name.find(".b") != std::string::npos) {
      for (auto& v : copy.data_mut()) v = u(rng);
    }
  }
  return ps;
}

std::vector<std::vector<bool>> allowed_from(const std::vector<double>& mask, std::size_t L) {
  std::vector<std::vector<bool>> a(L, std::vector<bool>(L));
  for (std::size_t p = 0; p < L; ++p)
    for (std::size_t q = 0; q < L; ++q) a[p][q] = mask[p * L + q] == 0.0;
  return a;
}

// ---------- mask ----------

TEST(HctMask, TwoItemsTwoTokens) {
  const std::vector<std::int64_t> idx{0, 0, 1, 1};
  auto m = build_token_mask<double>(idx);
  const std::vector<double> expect{0, 0, -kInf, -kInf, 0, 0, -kInf, -kInf, 0, 0, 0, 0, 0, 0, 0, 0};
  EXPECT_EQ(m, expect);
}

TEST(HctMask, SingleTokenPerItemIsLowerTriangular) {
  const std::vector<std::int64_t> idx{0, 1, 2};
  auto m = build_token_mask<double>(idx);
  for (std::size_t p = 0; p < 3; ++p)
    for (std::size_t q = 0; q < 3; ++q) EXPECT_EQ(m[p * 3 + q], q <= p ? 0.0 : -kInf);
}

TEST(HctMask, SingleItemAllZeroAndStrictVariant) {
  const std::vector<std::int64_t> idx{0, 0, 0};
  for (double v : build_token_mask<double>(idx)) EXPECT_EQ(v, 0.0);
  auto strict = build_token_mask<double>(idx, true);
  EXPECT_EQ(strict[0 * 3 + 1], -kInf);
  EXPECT_EQ(strict[2 * 3 + 1], 0.0);
}

TEST(HctMask, DecreasingIndexIsDataError) {
  const std::vector<std::int64_t> idx{0, 1, 0};
  EXPECT_THROW(build_token_mask<float>(idx), DataError);
}

TEST(HctMask, TokensOfOneItemShareKeySet) {
  const std::vector<std::int64_t> idx{0, 0, 0, 1, 1, 1, 2, 2, 2};
  auto m = build_token_mask<double>(idx);
  for (std::size_t p = 0; p < 9; ++p)
    for (std::size_t p2 = 0; p2 < 9; ++p2)
      if (idx[p] == idx[p2])
        for (std::size_t q = 0; q < 9; ++q) EXPECT_EQ(m[p * 9 + q], m[p2 * 9 + q]);
}

// ---------- time-gap ----------

TEST(HctTimeGap, BucketExamples) {
  EXPECT_EQ(time_gap_bucket(0, 32), 0u);
  EXPECT_EQ(time_gap_bucket(60, 32), 5u);
  // floor(log2(1e9 + 1)) = 29, still below the clamp
  EXPECT_EQ(time_gap_bucket(1'000'000'000, 32), 29u);
  EXPECT_EQ(time_gap_bucket(std::int64_t{1} << 40, 32), 31u);
  EXPECT_EQ(time_gap_bucket(std::numeric_limits<std::int64_t>::max(), 32), 31u);
  EXPECT_THROW(time_gap_bucket(-1, 32), ContractError);
}

TEST(HctTimeGap, BucketMatchesHalvingOracle) {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 2000; ++i) {
    const long long d = static_cast<long long>(rng() % (1ull << (rng() % 40)));
    ASSERT_EQ(time_gap_bucket(d, 32), ref_bucket(d, 32)) << d;
    ASSERT_EQ(time_gap_bucket(d, 7), ref_bucket(d, 7)) << d;
  }
}

TEST(HctTimeGap, BiasSharedAcrossTokensOfItemPairs) {
  // T=4 items, K=3 tokens each: every (p,q) pair with the same item pair gets
  // the same bias value; exhaustive comparison over all pairs.
  const std::size_t T = 4, K = 3, L = T * K, B = 32;
  std::vector<std::int64_t> item_ts{10, 70, 5000, 5000};
  std::vector<std::int64_t> idx(L), ts(L);
  for (std::size_t p = 0; p < L; ++p) {
    idx[p] = static_cast<std::int64_t>(p / K);
    ts[p] = item_ts[p / K];
  }
  std::mt19937_64 rng(4);
  auto table = heterrec::testing::random_tensor(rng, {B, 1});
  Tape<double> tape;
  auto P = time_gap_bias(tape, table, time_gap_buckets(idx, ts, B), L);
  ASSERT_EQ(P.shape(), (Shape{L, L}));
  for (std::size_t p = 0; p < L; ++p) {
    for (std::size_t q = 0; q < L; ++q) {
      for (std::size_t p2 = 0; p2 < L; ++p2) {
        for (std::size_t q2 = 0; q2 < L; ++q2) {
          if (idx[p] == idx[p2] && idx[q] == idx[q2]) ASSERT_EQ(P.at(p, q), P.at(p2, q2));
        }
      }
      if (idx[q] <= idx[p]) {
        const auto b = ref_bucket(item_ts[p / K] - item_ts[q / K], B);
        EXPECT_EQ(P.at(p, q), table.at(b));
      }
    }
  }
}

// ---------- attention ----------

TEST(HctAttention, SinglePositionReturnsValueProjection) {
  auto ps = random_block_store(1, 4, 4);
  std::mt19937_64 rng(2);
  auto x = heterrec::testing::random_tensor(rng, {1, 4}, -1, 1, false);
  std::vector<double> mask{0.0};
  Tape<double> tape;
  auto y = multi_head_attention(tape, x, std::span<const double>(mask), Tensor<double>(), ps, "blk.attn",
                                {2, false, 1e-5f});
  auto expect = mm(mm(to_mat(x), to_mat(ps.get("blk.attn.wv"))), to_mat(ps.get("blk.attn.wo")));
  for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(y.at(0, c), expect[0][c], 1e-12);
}

TEST(HctAttention, ZeroQueryKeyAveragesAllowedValues) {
  auto ps = random_block_store(3, 4, 4);
  for (const char* n : {"blk.attn.wq", "blk.attn.wk"}) {
    auto t = ps.get(n);
    for (auto& v : t.data_mut()) v = 0.0;
  }
  std::mt19937_64 rng(5);
  auto x = heterrec::testing::random_tensor(rng, {3, 4}, -1, 1, false);
  const std::vector<std::int64_t> idx{0, 1, 2};
  auto mask = build_token_mask<double>(idx);
  Tape<double> tape;
  auto y = multi_head_attention(tape, x, std::span<const double>(mask), Tensor<double>(), ps, "blk.attn",
                                {2, false, 1e-5f});
  Mat v = mm(to_mat(x), to_mat(ps.get("blk.attn.wv")));
  Mat avg(3, std::vector<double>(4, 0.0));
  for (std::size_t p = 0; p < 3; ++p)
    for (std::size_t q = 0; q <= p; ++q)
      for (std::size_t c = 0; c < 4; ++c) avg[p][c] += v[q][c] / double(p + 1);
  auto expect = mm(avg, to_mat(ps.get("blk.attn.wo")));
  for (std::size_t p = 0; p < 3; ++p)
    for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(y.at(p, c), expect[p][c], 1e-12);
}

class HctAttentionOracle : public ::testing::TestWithParam<int> {};

TEST_P(HctAttentionOracle, MatchesLoopReference) {
  const auto seed = static_cast<std::uint64_t>(GetParam());
  const std::size_t d = 8, heads = 2;
  auto ps = random_block_store(seed, d, 6);
  std::mt19937_64 rng(seed * 31 + 1);
  const std::vector<std::int64_t> idx{0, 0, 1, 1, 1, 2};
  const std::size_t L = idx.size();
  auto x = heterrec::testing::random_tensor(rng, {L, d}, -1, 1, false);
  auto P = heterrec::testing::random_tensor(rng, {L, L}, -1, 1, false);
  for (bool after : {false, true}) {
    for (bool strict : {false, true}) {
      auto mask = build_token_mask<double>(idx, strict);
      Tape<double> tape;
      auto y = causal_block(tape, x, std::span<const double>(mask), P, ps, "blk", {heads, after, 1e-5f});
      auto ref = ref_block(to_mat(x), allowed_from(mask, L), to_mat(P), ps, "blk", heads, after, 1e-5);
      for (std::size_t p = 0; p < L; ++p)
        for (std::size_t c = 0; c < d; ++c) ASSERT_NEAR(y.at(p, c), ref[p][c], 1e-9) << after << strict;
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, HctAttentionOracle, ::testing::Range(1, 6));

TEST(HctAttention, BiasPlacementMatters) {
  auto ps = random_block_store(8, 4, 4);
  std::mt19937_64 rng(8);
  auto x = heterrec::testing::random_tensor(rng, {3, 4}, -1, 1, false);
  auto P = heterrec::testing::random_tensor(rng, {3, 3}, -2, 2, false);
  const std::vector<std::int64_t> idx{0, 1, 2};
  auto mask = build_token_mask<double>(idx);
  Tape<double> tape;
  auto a = multi_head_attention(tape, x, std::span<const double>(mask), P, ps, "blk.attn", {2, false, 1e-5f});
  auto b = multi_head_attention(tape, x, std::span<const double>(mask), P, ps, "blk.attn", {2, true, 1e-5f});
  double diff = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) diff = std::max(diff, std::abs(a.at(i) - b.at(i)));
  EXPECT_GT(diff, 1e-6);
}

// ---------- block ----------

TEST(HctBlock, ZeroWeightsHandEvaluated) {
  ParamStore<float> f;
  ParamInit init(1);
  declare_block_params(f, "blk", 2, 3, init);
  auto ps = f.cast<double>();
  for (const auto& [name, t] : ps) {
    auto copy = t;
    if (name.find("gain") == std::string::npos)
      for (auto& v : copy.data_mut()) v = 0.0;
  }
  auto b2 = ps.get("blk.ffn.b2");
  b2.data_mut()[0] = 0.5;
  b2.data_mut()[1] = -0.25;
  Tensor<double> x({1, 2}, {3.0, 1.0});
  std::vector<double> mask{0.0};
  Tape<double> tape;
  const float eps = 1e-5f;
  auto y = causal_block(tape, x, std::span<const double>(mask), Tensor<double>(), ps, "blk", {1, false, eps});
  // LN over two values [a,b]: mean (a+b)/2, var ((a-b)/2)^2.
  auto ln2 = [&](double a, double b) {
    const double half = (a - b) / 2, s = std::sqrt(half * half + double(eps));
    return std::pair{half / s, -half / s};
  };
  auto [y0, y1] = ln2(3.0, 1.0);
  auto [o0, o1] = ln2(y0 + 0.5, y1 - 0.25);
  EXPECT_NEAR(y.at(0, 0), o0, 1e-6);
  EXPECT_NEAR(y.at(0, 1), o1, 1e-6);
}

TEST(HctBlock, ShapePreserved) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t L = 1 + rng() % 7, d = 2 * (1 + rng() % 4);
    auto ps = random_block_store(trial, d, 5);
    auto x = heterrec::testing::random_tensor(rng, {L, d}, -1, 1, false);
    std::vector<std::int64_t> idx(L);
    for (std::size_t p = 0; p < L; ++p) idx[p] = static_cast<std::int64_t>(p);
    auto mask = build_token_mask<double>(idx);
    Tape<double> tape;
    EXPECT_EQ(causal_block(tape, x, std::span<const double>(mask), Tensor<double>(), ps, "blk", {2, false, 1e-5f})
                  .shape(),
              (Shape{L, d}));
  }
}

TEST(HctBlock, GradientCheckL4D8) {
  const std::size_t L = 4, d = 8, B = 8;
  auto ps = random_block_store(21, d, 12);
  std::mt19937_64 rng(21);
  auto x = heterrec::testing::random_tensor(rng, {L, d});
  auto table = heterrec::testing::random_tensor(rng, {B, 1});
  auto w = heterrec::testing::random_tensor(rng, {L, d}, -1, 1, false);
  const std::vector<std::int64_t> idx{0, 0, 1, 1}, ts{0, 0, 30, 30};
  auto buckets = time_gap_buckets(idx, ts, B);
  auto mask = build_token_mask<double>(idx);
  std::vector<numerics::NamedInput> inputs{{"x", x}, {"time_gap", table}};
  for (const auto& [name, t] : ps) inputs.emplace_back(name, t);
  auto graph = [&](Tape<double>& tape) {
    auto P = time_gap_bias(tape, table, buckets, L);
    auto y = causal_block(tape, x, std::span<const double>(mask), P, ps, "blk", {2, false, 1e-5f});
    return tape.sum(tape.mul(y, w));
  };
  auto report = numerics::grad_check(graph, inputs);
  for (const auto& e : report.entries) EXPECT_LT(e.max_rel_error, 1e-3) << e.name;
  EXPECT_TRUE(report.passed);
}

// ---------- towers ----------

TEST(HctUserTower, FutureItemsDoNotLeak) {
  TinyModel m;
  htfl::HtflEncoder<double> enc(m.params, m.tokenizer, m.catalog, m.config);
  UserTower<double> tower(m.params, m.config);
  Tape<double> tape(false);
  auto a = tower.forward(tape, enc.flatten(tape, {0, 3, 5, 1}, {0, 40, 900, 1000}));
  auto b = tower.forward(tape, enc.flatten(tape, {0, 3, 5, 6}, {0, 40, 900, 5000}));
  const std::size_t K = 3;
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t c = 0; c < m.config.item_dim; ++c) EXPECT_NEAR(a.user.at(t, c), b.user.at(t, c), 1e-6);
  for (std::size_t p = 0; p < 3 * K; ++p)
    for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(a.token_states.at(p, c), b.token_states.at(p, c), 1e-6);
  double moved = 0;
  for (std::size_t c = 0; c < m.config.item_dim; ++c) moved += std::abs(a.user.at(3, c) - b.user.at(3, c));
  EXPECT_GT(moved, 1e-6);
}

TEST(HctUserTower, TokenPerturbationAtFuturePositionsDoesNotLeak) {
  // Perturb H0 rows of the last item directly and compare token-level outputs.
  TinyModel m;
  htfl::HtflEncoder<double> enc(m.params, m.tokenizer, m.catalog, m.config);
  UserTower<double> tower(m.params, m.config);
  Tape<double> tape(false);
  auto seq = enc.flatten(tape, {2, 4, 7}, {0, 10, 20});
  auto seq2 = seq;
  std::vector<double> data(seq.embeddings.data().begin(), seq.embeddings.data().end());
  std::mt19937_64 rng(1);
  for (std::size_t i = 6 * 8; i < data.size(); ++i) data[i] += std::normal_distribution<double>(0, 3)(rng);
  seq2.embeddings = Tensor<double>(seq.embeddings.shape(), data);
  auto a = tower.forward(tape, seq);
  auto b = tower.forward(tape, seq2);
  for (std::size_t p = 0; p < 6; ++p)
    for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(a.token_states.at(p, c), b.token_states.at(p, c), 1e-6);
}

TEST(HctUserTower, SingleTokenStackMatchesReferenceTransformer) {
  // K=1 (concat variant), zero time-gap bias: token blocks + fusion + item
  // blocks equal a chain of loop-reference blocks.
  auto cfg = TinyModel::small_config();
  cfg.htfl_off = true;
  cfg.token_time_bias = false;
  cfg.item_time_bias = false;
  TinyModel m(cfg);
  htfl::HtflEncoder<double> enc(m.params, m.tokenizer, m.catalog, m.config);
  UserTower<double> tower(m.params, m.config);
  Tape<double> tape(false);
  auto seq = enc.flatten(tape, {1, 2, 3, 4, 5}, {0, 1, 2, 3, 4});
  Mat x = to_mat(seq.embeddings);
  auto out = tower.forward(tape, seq);

  const std::size_t T = 5;
  std::vector<std::vector<bool>> causal(T, std::vector<bool>(T));
  for (std::size_t p = 0; p < T; ++p)
    for (std::size_t q = 0; q < T; ++q) causal[p][q] = q <= p;
  Mat zeros(T, std::vector<double>(T, 0.0));
  Mat h = ref_block(x, causal, zeros, m.params, "token_blocks.0", 2, false, m.config.ln_eps);
  Mat u = ref_mlp(h, m.params, "fusion");
  u = ref_block(u, causal, zeros, m.params, "item_blocks.0", 2, false, m.config.ln_eps);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t c = 0; c < m.config.item_dim; ++c) EXPECT_NEAR(out.user.at(t, c), u[t][c], 1e-9);
}

TEST(HctUserTower, FlatVariantHasNoTokenStream) {
  auto cfg = TinyModel::small_config();
  cfg.hct_off = true;
  TinyModel m(cfg);
  EXPECT_FALSE(m.params.contains("token_blocks.0.attn.wq"));
  EXPECT_TRUE(m.params.contains("item_blocks.1.attn.wq"));
  htfl::HtflEncoder<double> enc(m.params, m.tokenizer, m.catalog, m.config);
  UserTower<double> tower(m.params, m.config);
  Tape<double> tape(false);
  auto out = tower.forward(tape, enc.flatten(tape, {1, 2}, {0, 1}));
  EXPECT_FALSE(out.token_states.defined());
  EXPECT_EQ(out.user.shape(), (Shape{2, m.config.item_dim}));
}

TEST(HctUserTower, ScalingPairsDeclareMatchingBlocks) {
  for (auto [n1, n2] : {std::pair{1, 1}, {1, 2}, {3, 3}}) {
    auto cfg = TinyModel::small_config();
    cfg.token_layers = n1;
    cfg.item_layers = n2;
    TinyModel m(cfg);
    EXPECT_TRUE(m.params.contains("token_blocks." + std::to_string(n1 - 1) + ".attn.wq"));
    EXPECT_FALSE(m.params.contains("token_blocks." + std::to_string(n1) + ".attn.wq"));
    EXPECT_TRUE(m.params.contains("item_blocks." + std::to_string(n2 - 1) + ".attn.wq"));
    EXPECT_FALSE(m.params.contains("item_blocks." + std::to_string(n2) + ".attn.wq"));
  }
}

TEST(HctItemTower, ShapesDeterminismAndGradient) {
  TinyModel m;
  htfl::HtflEncoder<double> enc(m.params, m.tokenizer, m.catalog, m.config);
  ItemTower<double> tower(m.params, enc);
  Tape<double> tape;
  const std::vector<std::int64_t> items{3, 3, 5};
  auto out = tower.forward(tape, items);
  ASSERT_EQ(out.tokens.size(), 3u);
  for (const auto& t : out.tokens) EXPECT_EQ(t.shape(), (Shape{3, 8}));
  EXPECT_EQ(out.item.shape(), (Shape{3, m.config.item_dim}));
  for (std::size_t c = 0; c < m.config.item_dim; ++c) EXPECT_EQ(out.item.at(0, c), out.item.at(1, c));
  tape.backward(tape.sum(out.item));
  for (const char* name : {"htfl.cat.table", "htfl.price.table", "htfl.img.group0", "htfl.img.group1"}) {
    const auto& t = m.params.get(name);
    ASSERT_TRUE(t.has_grad()) << name;
    double norm = 0;
    for (double g : t.grad()) norm += std::abs(g);
    EXPECT_GT(norm, 0.0) << name;
  }
}

TEST(HctItemTower, MissingFeatureIsDataError) {
  auto items = heterrec::testing::tiny_items(3);
  items[1].numerical.clear();
  htfl::Tokenizer tok(heterrec::testing::tiny_schema(), htfl::fit_codebook(heterrec::testing::tiny_schema(), heterrec::testing::tiny_items(3)));
  EXPECT_THROW(tok.tokenize(items, htfl::OovPolicy::kStrict), DataError);
}

TEST(HctTowers, GradientCheckThroughBothTowers) {
  TinyModel m;
  htfl::HtflEncoder<double> enc(m.params, m.tokenizer, m.catalog, m.config);
  UserTower<double> user(m.params, m.config);
  ItemTower<double> item(m.params, enc);
  std::vector<numerics::NamedInput> inputs;
  for (const auto& [name, t] : m.params) inputs.emplace_back(name, t);
  const std::vector<std::int64_t> targets{2, 6, 7};
  auto graph = [&](Tape<double>& tape) {
    auto u = user.forward(tape, enc.flatten(tape, {0, 1, 4}, {0, 100, 250})).user;
    auto v = item.forward(tape, targets).item;
    return tape.sum(tape.mul(u, v));
  };
  auto report = numerics::grad_check(graph, inputs);
  for (const auto& e : report.entries) EXPECT_LT(e.max_rel_error, 1e-3) << e.name;
}

}  // namespace
