#include "heterrec/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "heterrec/hct/attention.hpp"
#include "heterrec/htfl/codebook.hpp"
#include "heterrec/model.hpp"
#include "heterrec/numerics/grad_check.hpp"

namespace heterrec::diagnostics {

using numerics::ContrastiveForm;
using numerics::GraphFn;
using numerics::NamedInput;
using numerics::ParamStore;
using numerics::Shape;
using numerics::Tape;
using numerics::Tensor;

htfl::FeatureSchema toy_schema() {
  htfl::FeatureSchema s;
  s.token_dim = 8;
  htfl::FeatureSpec cat, price, img;
  cat.name = "cat";
  cat.kind = htfl::FeatureKind::kCategorical;
  cat.vocab_size = 6;
  price.name = "price";
  price.kind = htfl::FeatureKind::kNumerical;
  price.boundaries = {10.0, 100.0};
  img.name = "img";
  img.kind = htfl::FeatureKind::kMultimodal;
  img.dim = 4;
  img.groups = 2;
  img.quantiles = 2;
  s.features = {cat, price, img};
  return s;
}

std::vector<htfl::ItemRecord> toy_items(std::size_t n) {
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

ModelConfig toy_model_config() {
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

bool SuiteResult::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

double SuiteResult::max_rel_error() const {
  double worst = 0.0;
  for (const auto& c : checks) worst = std::max(worst, c.max_rel_error);
  return worst;
}

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Tensor<double> uniform(std::mt19937_64& rng, Shape shape, double lo = -1.0, double hi = 1.0, bool grad = true) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(numerics::shape_numel(shape));
  for (auto& x : v) x = u(rng);
  return Tensor<double>(std::move(shape), std::move(v), grad);
}

// Fixed weights for a scalar readout; avoids degenerate gradients such as
// d sum(layer_norm(x)) / dx = 0.
Tensor<double> readout(const Shape& shape, double phase) {
  auto w = Tensor<double>::zeros(shape);
  for (std::size_t i = 0; i < w.numel(); ++i) w.data_mut()[i] = std::sin(phase + 1.3 * static_cast<double>(i));
  return w;
}

Tensor<double> weighted(Tape<double>& t, const Tensor<double>& y, double phase) {
  return t.sum(t.mul(y, readout(y.shape(), phase)));
}

class Runner {
 public:
  Runner(std::string corrupt, SuiteResult& out) : corrupt_(std::move(corrupt)), out_(out) {}

  void run(const std::string& name, const GraphFn& g, const std::vector<NamedInput>& in) {
    numerics::GradCheckOptions opt;
    opt.corrupt_op = corrupt_;
    auto rep = numerics::grad_check(g, in, opt);
    out_.checks.push_back({name, rep.max_rel_error, rep.passed});
  }

 private:
  std::string corrupt_;
  SuiteResult& out_;
};

void primitive_checks(std::mt19937_64& rng, Runner& r) {
  std::uniform_int_distribution<std::size_t> ext(2, 4);
  const std::size_t m = ext(rng), k = ext(rng), n = ext(rng);
  auto a = uniform(rng, {m, k});
  auto b = uniform(rng, {k, n});
  auto bt = uniform(rng, {n, k});
  auto c = uniform(rng, {m, k});
  auto bias = uniform(rng, {k});
  auto gain = uniform(rng, {k}, 0.5, 1.5);
  auto kinked = uniform(rng, {m, k});
  for (auto& v : kinked.data_mut()) v += v < 0 ? -0.1 : 0.1;

  r.run("matmul", [&](Tape<double>& t) { return weighted(t, t.matmul(a, b), 0.1); }, {{"a", a}, {"b", b}});
  r.run("matmul_nt", [&](Tape<double>& t) { return weighted(t, t.matmul_nt(a, bt), 0.2); }, {{"a", a}, {"b", bt}});
  r.run("add", [&](Tape<double>& t) { return weighted(t, t.add(a, c), 0.3); }, {{"a", a}, {"c", c}});
  r.run("mul", [&](Tape<double>& t) { return weighted(t, t.mul(a, c), 0.4); }, {{"a", a}, {"c", c}});
  r.run("add_bias", [&](Tape<double>& t) { return weighted(t, t.add_bias(a, bias), 0.5); },
        {{"a", a}, {"bias", bias}});
  r.run("scale", [&](Tape<double>& t) { return weighted(t, t.scale(a, -0.7), 0.6); }, {{"a", a}});
  r.run("relu", [&](Tape<double>& t) { return weighted(t, t.relu(kinked), 0.7); }, {{"x", kinked}});
  r.run("sum", [&](Tape<double>& t) { return t.sum(t.mul(a, a)); }, {{"a", a}});
  r.run("mean", [&](Tape<double>& t) { return t.mean(t.mul(a, c)); }, {{"a", a}, {"c", c}});
  r.run("layer_norm", [&](Tape<double>& t) { return weighted(t, t.layer_norm(a, gain, bias, 1e-5), 0.8); },
        {{"a", a}, {"gain", gain}, {"bias", bias}});
  r.run("gather_rows",
        [&](Tape<double>& t) {
          const std::vector<std::int64_t> ids{static_cast<std::int64_t>(m - 1), 0, static_cast<std::int64_t>(m - 1)};
          return weighted(t, t.gather_rows(a, ids), 0.9);
        },
        {{"a", a}});
  r.run("concat_last_dim",
        [&](Tape<double>& t) { return weighted(t, t.concat_last_dim(std::vector<Tensor<double>>{a, c}), 1.0); },
        {{"a", a}, {"c", c}});
  r.run("slice_last_dim",
        [&](Tape<double>& t) {
          return weighted(t, t.slice_last_dim(t.concat_last_dim(std::vector<Tensor<double>>{a, c}), k / 2, k + 1), 1.1);
        },
        {{"a", a}, {"c", c}});
  r.run("concat_rows", [&](Tape<double>& t) { return weighted(t, t.concat_rows(std::vector<Tensor<double>>{a, c}), 1.2); },
        {{"a", a}, {"c", c}});
  r.run("slice_rows",
        [&](Tape<double>& t) {
          return weighted(t, t.slice_rows(t.concat_rows(std::vector<Tensor<double>>{a, c}), m / 2, m + 1), 1.3);
        },
        {{"a", a}, {"c", c}});
  r.run("reshape", [&](Tape<double>& t) { return weighted(t, t.reshape(t.reshape(a, {m * k}), {k, m}), 1.4); },
        {{"a", a}});
  r.run("masked_softmax",
        [&](Tape<double>& t) {
          std::vector<double> mask(m * n, 0.0);
          for (std::size_t i = 1; i < m; i += 2) mask[i * n + n - 1] = kNegInf;
          return weighted(t, t.masked_softmax(t.matmul(a, b), mask), 1.5);
        },
        {{"a", a}, {"b", b}});
  for (auto form : {ContrastiveForm::kNegLogRatio, ContrastiveForm::kRatio}) {
    for (bool unit : {true, false}) {
      r.run(std::string("info_nce_rows/") + (form == ContrastiveForm::kRatio ? "ratio" : "neg_log_ratio") +
                (unit ? "+unit" : ""),
            [&](Tape<double>& t) {
              std::vector<double> mask(m * n, 0.0);
              std::vector<std::size_t> targets(m);
              for (std::size_t i = 0; i < m; ++i) {
                targets[i] = i % n;
                mask[i * n + (i + 1) % n] = kNegInf;
              }
              auto rows = t.info_nce_rows(t.matmul(a, b), mask, targets, unit, form);
              return weighted(t, rows, 1.6);
            },
            {{"a", a}, {"b", b}});
    }
  }
}

void block_check(std::mt19937_64& rng, std::uint64_t seed, Runner& r) {
  const std::size_t L = 4, d = 8, buckets = 8;
  ParamStore<float> f;
  numerics::ParamInit init(seed);
  hct::declare_block_params(f, "blk", d, 12, init);
  auto ps = f.cast<double>();
  std::uniform_real_distribution<double> jitter(-0.3, 0.3);
  for (const auto& [name, t] : ps) {
    auto v = t;
    for (auto& x : v.data_mut()) x += jitter(rng);  // move LN gains/biases off their init
  }
  auto x = uniform(rng, {L, d});
  auto table = uniform(rng, {buckets, 1});
  const std::vector<std::int64_t> idx{0, 0, 1, 1}, ts{0, 0, 30, 30};
  auto bucket_ids = hct::time_gap_buckets(idx, ts, buckets);
  auto mask = hct::build_token_mask<double>(idx);
  std::vector<NamedInput> inputs{{"x", x}, {"time_gap", table}};
  for (const auto& [name, t] : ps) inputs.emplace_back(name, t);
  r.run("hct_block",
        [&](Tape<double>& t) {
          auto P = hct::time_gap_bias(t, table, bucket_ids, L);
          auto y = hct::causal_block(t, x, std::span<const double>(mask), P, ps, "blk", {2, false, 1e-5f});
          return weighted(t, y, 2.0);
        },
        inputs);
}

void model_check(std::mt19937_64& rng, std::uint64_t seed, Runner& r) {
  const auto schema = toy_schema();
  const auto items = toy_items(8);
  htfl::Tokenizer tokenizer(schema, htfl::fit_codebook(schema, items));
  auto catalog = tokenizer.tokenize(items, htfl::OovPolicy::kStrict);
  const auto config = toy_model_config();
  HeterRecModel model(tokenizer, catalog, config, lmp::LmpConfig{});
  auto params = model.init_params(seed).cast<double>();
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (const char* name : {"token_level.time_gap", "item_level.time_gap"}) {
    if (!params.contains(name)) continue;
    auto t = params.get(name);
    for (auto& v : t.data_mut()) v = u(rng);
  }
  // Three users, lengths 3..5, distinct random items, random gaps.
  std::vector<UserSequence> batch;
  for (int j = 0; j < 3; ++j) {
    UserSequence s;
    s.user_id = "u" + std::to_string(j);
    std::vector<std::int64_t> pool{0, 1, 2, 3, 4, 5, 6, 7};
    std::shuffle(pool.begin(), pool.end(), rng);
    const std::size_t len = 3 + rng() % 3;
    std::int64_t ts = static_cast<std::int64_t>(rng() % 50);
    for (std::size_t i = 0; i < len; ++i) {
      s.items.push_back(pool[i]);
      s.timestamps.push_back(ts);
      ts += static_cast<std::int64_t>(rng() % 200);
    }
    batch.push_back(std::move(s));
  }
  std::vector<NamedInput> inputs;
  for (const auto& [name, t] : params) inputs.emplace_back(name, t);
  r.run("two_tower_loss", [&](Tape<double>& t) { return model.batch_loss(t, params, batch).total; }, inputs);
}

}  // namespace

SuiteResult gradient_suite(std::uint64_t seed, const std::string& corrupt_op) {
  SuiteResult out;
  out.seed = seed;
  Runner runner(corrupt_op, out);
  std::mt19937_64 rng(seed);
  primitive_checks(rng, runner);
  block_check(rng, seed, runner);
  model_check(rng, seed, runner);
  return out;
}

}  // namespace heterrec::diagnostics
