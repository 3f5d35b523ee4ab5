#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>

#include "heterrec/data/synthetic.hpp"
#include "heterrec/errors.hpp"
#include "heterrec/train/studies.hpp"
#include "heterrec/train/trainer.hpp"

using namespace heterrec;
using namespace heterrec::train;
namespace fs = std::filesystem;

namespace {

data::SyntheticSpec small_spec(std::size_t users = 100) {
  data::SyntheticSpec s;
  s.num_items = 60;
  s.num_users = users;
  s.categories = 4;
  s.brands = 3;
  s.min_length = 3;
  s.max_length = 8;
  s.seed = 11;
  return s;
}

std::unique_ptr<PreparedData> small_data(std::size_t users = 100) {
  auto gen = data::generate_synthetic(small_spec(users));
  auto ds = data::build_dataset(gen.items, gen.interactions);
  return std::make_unique<PreparedData>(std::move(ds), gen.schema);
}

TrainConfig small_config() {
  TrainConfig c;
  c.batch_size = 8;
  c.epochs = 2;
  c.learning_rate = 3e-3;
  c.model.item_dim = 16;
  c.model.token_ffn_hidden = 16;
  c.model.item_ffn_hidden = 16;
  c.model.token_layers = 1;
  c.model.item_layers = 1;
  c.model.time_buckets = 16;
  c.cutoffs = {5, 10};
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("heterrec_train_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<UserSequence> first_users(const PreparedData& d, std::size_t n) {
  const auto& t = d.split().train;
  return {t.begin(), t.begin() + static_cast<std::ptrdiff_t>(n)};
}

}  // namespace

TEST(EpochBatches, EveryUserExactlyOncePerEpoch) {
  auto batches = epoch_batches(103, 10, 5, 0);
  std::multiset<std::size_t> seen;
  for (const auto& b : batches) {
    std::set<std::size_t> distinct(b.begin(), b.end());
    EXPECT_EQ(distinct.size(), b.size());
    seen.insert(b.begin(), b.end());
  }
  EXPECT_EQ(seen.size(), 103u);
  for (std::size_t u = 0; u < 103; ++u) EXPECT_EQ(seen.count(u), 1u);
}

TEST(EpochBatches, TrailingSingleUserJoinsPreviousBatch) {
  auto batches = epoch_batches(21, 10, 5, 0);
  ASSERT_EQ(batches.size(), 2u);
  EXPECT_EQ(batches[1].size(), 11u);
}

TEST(EpochBatches, DeterministicPerEpochAndDistinctAcrossEpochs) {
  EXPECT_EQ(epoch_batches(50, 8, 3, 1), epoch_batches(50, 8, 3, 1));
  EXPECT_NE(epoch_batches(50, 8, 3, 1), epoch_batches(50, 8, 3, 2));
  EXPECT_NE(epoch_batches(50, 8, 3, 1), epoch_batches(50, 8, 4, 1));
}

TEST(AssembleBatch, TwoUserToySetUsesBoth) {
  std::vector<UserSequence> users{{"a", {0, 1}, {0, 1}}, {"b", {2, 3, 4}, {0, 1, 2}}};
  auto batch = assemble_batch(users, 2, 1);
  ASSERT_EQ(batch.size(), 2u);
  EXPECT_NE(batch[0].user_id, batch[1].user_id);
}

TEST(AssembleBatch, SingleInteractionUsersAreExcluded) {
  std::vector<UserSequence> users{{"a", {0}, {0}}, {"b", {2, 3}, {0, 1}}, {"c", {1, 2}, {0, 1}}};
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    for (const auto& u : assemble_batch(users, 2, seed)) EXPECT_NE(u.user_id, "a");
  }
  EXPECT_THROW(assemble_batch(users, 3, 0), DataError);
}

TEST(AssembleBatch, SameSeedSameBatch) {
  std::vector<UserSequence> users;
  for (int i = 0; i < 20; ++i) users.push_back({"u" + std::to_string(i), {i % 5, (i + 1) % 5}, {0, 1}});
  auto a = assemble_batch(users, 6, 9), b = assemble_batch(users, 6, 9);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(a[i].user_id, b[i].user_id);
}

TEST(TrainConfig, AblationFlagsShapeEffectiveConfigs) {
  TrainConfig c;
  c.ablation.lmp_off = true;
  EXPECT_FALSE(c.effective_lmp().gated);
  EXPECT_EQ(c.effective_lmp().margin, 0.0);
  EXPECT_FALSE(c.effective_lmp().token_gated);
  c.ablation = {};
  c.ablation.tlmp_off = true;
  EXPECT_FALSE(c.effective_lmp().token_level);
  c.ablation = {};
  c.ablation.htfl_off = true;
  c.ablation.mfk_off = true;
  EXPECT_TRUE(c.effective_model().htfl_off);
  EXPECT_TRUE(c.effective_model().mfk_off);
  c.scaling = std::pair<std::size_t, std::size_t>{3, 4};
  EXPECT_EQ(c.effective_model().token_layers, 3u);
  EXPECT_EQ(c.effective_model().item_layers, 4u);
}

TEST(TrainConfig, JsonRoundTripAndStrictKeys) {
  TrainConfig c = small_config();
  c.ablation.tlmp_off = true;
  c.scaling = std::pair<std::size_t, std::size_t>{2, 3};
  auto back = TrainConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  auto j = c.to_json();
  j["batchsize"] = 4;
  EXPECT_THROW(TrainConfig::from_json(j), ConfigError);
  EXPECT_THROW(TrainConfig::from_json({{"batch_size", 1}}), ConfigError);
}

TEST(Adam, FirstStepMovesByLearningRateTimesSign) {
  numerics::ParamStore<float> ps;
  ps.add("w", {3}, {1.0f, 1.0f, 1.0f});
  auto w = ps.get("w");
  auto g = w.grad_mut();
  g[0] = 2.0f;
  g[1] = -0.5f;
  g[2] = 0.0f;
  Adam adam(0.1, 0.9, 0.999, 1e-8);
  adam.step(ps);
  // m_hat = g, v_hat = g^2, so the update is lr * g / (|g| + eps).
  EXPECT_NEAR(w.at(0), 0.9, 1e-6);
  EXPECT_NEAR(w.at(1), 1.1, 1e-6);
  EXPECT_FLOAT_EQ(w.at(2), 1.0f);
  EXPECT_EQ(adam.steps(), 1u);
}

TEST(Adam, SecondStepMatchesHandComputation) {
  numerics::ParamStore<float> ps;
  ps.add("w", {1}, {0.0f});
  auto w = ps.get("w");
  Adam adam(0.01, 0.9, 0.999, 1e-8);
  w.grad_mut()[0] = 1.0f;
  adam.step(ps);
  w.grad_mut()[0] = 3.0f;
  adam.step(ps);
  const double m = 0.9 * 0.1 + 0.1 * 3.0, v = 0.999 * 0.001 + 0.001 * 9.0;
  const double mh = m / (1 - 0.81), vh = v / (1 - 0.999 * 0.999);
  EXPECT_NEAR(w.at(0), -0.01 - 0.01 * mh / (std::sqrt(vh) + 1e-8), 1e-6);
}

TEST(Trainer, OneStepUpdatesEveryHeadParameterWithGradient) {
  auto data = small_data();
  Trainer t(*data, small_config());
  auto batch = first_users(*data, 8);
  t.compute_gradients(batch);
  std::map<std::string, std::vector<float>> before;
  std::set<std::string> with_grad;
  for (const auto& [name, p] : t.params()) {
    before[name] = {p.data().begin(), p.data().end()};
    if (p.has_grad() && std::any_of(p.grad().begin(), p.grad().end(), [](float g) { return g != 0.0f; }))
      with_grad.insert(name);
  }
  t.train_step(batch);
  std::size_t heads = 0;
  for (const auto& [name, p] : t.params()) {
    if (name.rfind("lmp.", 0) != 0 || !with_grad.count(name)) continue;
    ++heads;
    EXPECT_NE(std::vector<float>(p.data().begin(), p.data().end()), before[name]) << name;
  }
  EXPECT_GT(heads, 0u);
}

TEST(Trainer, LossDropsOverFiftySteps) {
  auto data = small_data(100);
  Trainer t(*data, small_config());
  auto probe = first_users(*data, 16);
  auto probe_loss = [&] {
    numerics::Tape<float> tape(false);
    return static_cast<double>(t.model().batch_loss(tape, t.params(), probe).total.item());
  };
  const double first = probe_loss();
  std::size_t steps = 0;
  for (std::size_t epoch = 0; steps < 50; ++epoch) {
    for (const auto& idx : epoch_batches(data->split().train.size(), 8, 42, epoch)) {
      std::vector<UserSequence> batch;
      for (auto i : idx) batch.push_back(data->split().train[i]);
      t.train_step(batch);
      if (++steps == 50) break;
    }
  }
  EXPECT_LT(probe_loss(), first);
}

TEST(Trainer, MicroBatchAccumulationMatchesFullBatch) {
  auto data = small_data();
  auto batch = first_users(*data, 9);
  auto cfg = small_config();
  Trainer full(*data, cfg);
  cfg.micro_batches = 3;
  Trainer chunked(*data, cfg);
  const double l1 = full.compute_gradients(batch), l3 = chunked.compute_gradients(batch);
  EXPECT_NEAR(l1, l3, 1e-5 * std::abs(l1));
  for (const auto& [name, p] : full.params()) {
    const auto& q = chunked.params().get(name);
    ASSERT_EQ(p.has_grad(), q.has_grad()) << name;
    if (!p.has_grad()) continue;
    for (std::size_t i = 0; i < p.numel(); ++i) {
      EXPECT_NEAR(p.grad()[i], q.grad()[i], 1e-5 * std::max(1.0f, std::abs(p.grad()[i]))) << name << "[" << i << "]";
    }
  }
  full.train_step(batch);
  chunked.train_step(batch);
  for (const auto& [name, p] : full.params()) {
    const auto& q = chunked.params().get(name);
    for (std::size_t i = 0; i < p.numel(); ++i) EXPECT_NEAR(p.at(i), q.at(i), 1e-5) << name;
  }
}

TEST(Trainer, NonFiniteLossReportsLogitExtrema) {
  auto data = small_data();
  Trainer t(*data, small_config());
  auto w = t.params().get("lmp.item.step1.w");
  w.data_mut()[0] = std::numeric_limits<float>::quiet_NaN();
  try {
    t.train_step(first_users(*data, 4));
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("logits in"), std::string::npos);
  }
}

TEST(Trainer, TwoRunsGiveByteIdenticalCheckpoints) {
  auto data = small_data();
  auto dir = scratch("determinism");
  for (int run = 0; run < 2; ++run) {
    Trainer t(*data, small_config());
    t.train_epoch();
    fs::create_directories(dir / std::to_string(run));
    t.save(dir / std::to_string(run) / "state.json");
  }
  EXPECT_EQ(slurp(dir / "0" / "state.json"), slurp(dir / "1" / "state.json"));
  EXPECT_EQ(slurp(dir / "0" / "state.bin"), slurp(dir / "1" / "state.bin"));
  EXPECT_FALSE(slurp(dir / "0" / "state.bin").empty());
}

TEST(Trainer, ResumedRunReproducesUninterruptedRun) {
  auto data = small_data();
  auto cfg = small_config();
  auto dir = scratch("resume");
  ExperimentOptions straight;
  straight.out_dir = dir / "straight";
  run_experiment(cfg, *data, straight);

  ExperimentOptions first;
  first.out_dir = dir / "part";
  first.stop_after_epochs = 1;
  run_experiment(cfg, *data, first);
  ExperimentOptions second;
  second.out_dir = dir / "resumed";
  second.resume = dir / "part" / "checkpoint.json";
  run_experiment(cfg, *data, second);

  EXPECT_EQ(slurp(dir / "straight" / "report.json"), slurp(dir / "resumed" / "report.json"));
  EXPECT_EQ(slurp(dir / "straight" / "checkpoint.bin"), slurp(dir / "resumed" / "checkpoint.bin"));
  EXPECT_EQ(slurp(dir / "straight" / "checkpoint.json"), slurp(dir / "resumed" / "checkpoint.json"));
  EXPECT_TRUE(fs::exists(dir / "straight" / "timing.json"));
}

TEST(Experiment, ReportEchoesConfigAndAblations) {
  auto data = small_data();
  auto cfg = small_config();
  cfg.epochs = 1;
  cfg.ablation.tlmp_off = true;
  cfg.ablation.mfk_off = true;
  auto report = run_experiment(cfg, *data);
  EXPECT_EQ(report.at("config"), cfg.to_json());
  EXPECT_FALSE(report.at("token_level_terms").get<bool>());
  EXPECT_TRUE(report.at("effective_model").at("mfk_off").get<bool>());
  ASSERT_EQ(report.at("epochs").size(), 1u);
  EXPECT_TRUE(std::isfinite(report.at("epochs")[0].at("mean_loss").get<double>()));
  EXPECT_FALSE(report.at("final").is_null());
  EXPECT_TRUE(report.at("popularity").contains("recall"));
}

TEST(Experiment, EveryAblationVariantTrains) {
  auto data = small_data(40);
  auto cfg = small_config();
  cfg.epochs = 1;
  for (const auto& v : ablation_variants()) {
    auto report = run_experiment(with_variant(cfg, v), *data);
    EXPECT_TRUE(std::isfinite(report.at("epochs")[0].at("mean_loss").get<double>())) << v;
  }
  EXPECT_THROW(with_variant(cfg, "no_such_variant"), ConfigError);
}

TEST(Experiment, HtflOffWithGradientAccumulation) {
  auto data = small_data(40);
  auto cfg = small_config();
  cfg.ablation.htfl_off = true;
  Trainer a(*data, cfg);
  cfg.micro_batches = 4;
  Trainer b(*data, cfg);
  auto batch = first_users(*data, 8);
  EXPECT_NEAR(a.compute_gradients(batch), b.compute_gradients(batch), 1e-4);
}
