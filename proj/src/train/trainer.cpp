#include "heterrec/train/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "heterrec/data/synthetic.hpp"
#include "heterrec/errors.hpp"

namespace heterrec::train {

using numerics::ParamStore;
using numerics::Tape;
using numerics::Tensor;

namespace {

htfl::QuantileCodebook codebook_or_fit(const std::optional<htfl::QuantileCodebook>& cb,
                                       const htfl::FeatureSchema& schema, const data::Dataset& ds) {
  return cb ? *cb : htfl::fit_codebook(schema, ds.items);
}

std::uint64_t epoch_seed(std::uint64_t seed, std::size_t epoch) {
  return seed ^ (0x9E3779B97F4A7C15ull * (static_cast<std::uint64_t>(epoch) + 1));
}

}  // namespace

PreparedData::PreparedData(data::Dataset dataset, htfl::FeatureSchema schema,
                           std::optional<htfl::QuantileCodebook> codebook)
    : dataset_(std::move(dataset)),
      tokenizer_(schema, codebook_or_fit(codebook, schema, dataset_)),
      catalog_(tokenizer_.tokenize(dataset_.items, htfl::OovPolicy::kStrict)),
      split_(data::leave_one_out(dataset_)) {}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t num_users, std::size_t batch_size,
                                                    std::uint64_t seed, std::size_t epoch) {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  std::vector<std::size_t> order(num_users);
  std::iota(order.begin(), order.end(), std::size_t{0});
  data::PortableRng rng(epoch_seed(seed, epoch));
  rng.shuffle(order.begin(), order.end());
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t s = 0; s < num_users; s += batch_size) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(s),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(num_users, s + batch_size)));
  }
  if (out.size() > 1 && out.back().size() == 1) {
    out[out.size() - 2].push_back(out.back()[0]);
    out.pop_back();
  }
  return out;
}

std::vector<UserSequence> assemble_batch(std::span<const UserSequence> users, std::size_t batch_size,
                                         std::uint64_t seed) {
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < users.size(); ++i) {
    if (users[i].items.size() >= 2) eligible.push_back(i);
  }
  if (eligible.size() < batch_size) {
    throw DataError("need " + std::to_string(batch_size) + " users with >= 2 interactions, have " +
                    std::to_string(eligible.size()));
  }
  data::PortableRng rng(seed);
  rng.shuffle(eligible.begin(), eligible.end());
  std::vector<UserSequence> out;
  for (std::size_t i = 0; i < batch_size; ++i) out.push_back(users[eligible[i]]);
  return out;
}

nlohmann::json EpochRecord::to_json() const {
  nlohmann::json j{{"epoch", epoch}, {"steps", steps}, {"mean_loss", mean_loss}};
  j["metrics"] = metrics ? metrics->to_json() : nlohmann::json(nullptr);
  return j;
}

Trainer::Trainer(const PreparedData& data, TrainConfig config)
    : data_(data),
      config_(std::move(config)),
      model_(data.tokenizer(), data.catalog(), config_.effective_model(), config_.effective_lmp()),
      params_(model_.init_params(config_.seed)),
      adam_(config_.learning_rate, config_.beta1, config_.beta2, config_.epsilon) {
  config_.validate();
}

void Trainer::check_finite(double loss, const BatchLoss<float>& parts) const {
  if (std::isfinite(loss)) return;
  std::ostringstream msg;
  msg << "non-finite training loss " << loss << "; item-level logits in [" << parts.item.logit_min << ", "
      << parts.item.logit_max << "]";
  for (std::size_t s = 0; s < parts.token.size(); ++s) {
    msg << "; token " << data_.tokenizer().schema().at(s).name << " logits in [" << parts.token[s].logit_min << ", "
        << parts.token[s].logit_max << "]";
  }
  throw NumericError(msg.str());
}

double Trainer::compute_gradients(std::span<const UserSequence> batch) {
  params_.zero_grads();
  if (config_.micro_batches <= 1) {
    Tape<float> tape;
    auto loss = model_.batch_loss(tape, params_, batch);
    const double value = loss.total.item();
    check_finite(value, loss);
    tape.backward(loss.total);
    return value;
  }

  // 1) tower outputs without a graph
  BatchStates<float> frozen;
  {
    Tape<float> tape(false);
    frozen = model_.batch_states(tape, params_, batch);
  }
  // 2) loss on leaf copies of the outputs: gradients for the heads and for
  //    every tower output
  auto leaf = [](const Tensor<float>& t) { return Tensor<float>(t.shape(), {t.data().begin(), t.data().end()}, true); };
  BatchStates<float> leaves = frozen;
  leaves.user = leaf(frozen.user);
  leaves.item = leaf(frozen.item);
  for (auto& t : leaves.type_states) t = leaf(t);
  for (auto& t : leaves.item_tokens) t = leaf(t);
  double value = 0.0;
  {
    Tape<float> tape;
    auto loss = model_.loss_from_states(tape, params_, leaves);
    value = loss.total.item();
    check_finite(value, loss);
    tape.backward(loss.total);
  }
  auto seed_grad = [](const Tensor<float>& t, std::size_t row0, std::size_t rows) {
    const std::size_t d = t.cols();
    std::vector<float> g(rows * d, 0.0f);
    if (t.has_grad()) std::copy_n(t.grad().begin() + static_cast<std::ptrdiff_t>(row0 * d), rows * d, g.begin());
    return Tensor<float>({rows, d}, std::move(g));
  };

  // 3) user towers chunk by chunk, back-propagating the cached output gradients
  const std::size_t n = batch.size();
  const std::size_t chunks = std::min(config_.micro_batches, n);
  std::size_t row = 0;
  for (std::size_t c = 0; c < chunks; ++c) {
    const std::size_t b = n * c / chunks, e = n * (c + 1) / chunks;
    if (b == e) continue;
    Tape<float> tape;
    auto part = model_.batch_states(tape, params_, batch.subspan(b, e - b), false);
    const std::size_t rows = part.user.rows();
    auto surrogate = tape.sum(tape.mul(part.user, seed_grad(leaves.user, row, rows)));
    for (std::size_t s = 0; s < part.type_states.size(); ++s) {
      surrogate = tape.add(surrogate, tape.sum(tape.mul(part.type_states[s], seed_grad(leaves.type_states[s], row, rows))));
    }
    tape.backward(surrogate);
    row += rows;
  }
  // 4) item tower over the distinct targets
  {
    Tape<float> tape;
    htfl::HtflEncoder<float> encoder(params_, data_.tokenizer(), data_.catalog(), model_.model_config());
    hct::ItemTower<float> tower(params_, encoder);
    auto items = tower.forward(tape, frozen.unique_items);
    const std::size_t rows = items.item.rows();
    auto surrogate = tape.sum(tape.mul(items.item, seed_grad(leaves.item, 0, rows)));
    for (std::size_t s = 0; s < leaves.item_tokens.size(); ++s) {
      surrogate = tape.add(surrogate, tape.sum(tape.mul(items.tokens[s], seed_grad(leaves.item_tokens[s], 0, rows))));
    }
    tape.backward(surrogate);
  }
  return value;
}

double Trainer::train_step(std::span<const UserSequence> batch) {
  const double loss = compute_gradients(batch);
  adam_.step(params_);
  return loss;
}

EpochRecord Trainer::train_epoch() {
  const auto& users = data_.split().train;
  if (users.size() < 2) throw DataError("need at least 2 training users with >= 2 interactions");
  const std::size_t epoch = history_.size();
  EpochRecord rec;
  rec.epoch = epoch + 1;
  double total = 0.0;
  std::vector<UserSequence> batch;
  for (const auto& idx : epoch_batches(users.size(), config_.batch_size, config_.seed, epoch)) {
    batch.clear();
    for (auto i : idx) batch.push_back(users[i]);
    total += train_step(batch);
    ++rec.steps;
  }
  rec.mean_loss = rec.steps ? total / static_cast<double>(rec.steps) : 0.0;
  const bool last = rec.epoch == config_.epochs;
  if (last || (config_.eval_every > 0 && rec.epoch % config_.eval_every == 0)) rec.metrics = evaluate();
  history_.push_back(rec);
  return rec;
}

eval::MetricsReport Trainer::evaluate() const {
  const auto& split = data_.split();
  std::size_t n = split.eval_history.size();
  if (config_.eval_users > 0) n = std::min(n, config_.eval_users);
  std::span<const UserSequence> hist(split.eval_history.data(), n);
  std::span<const std::int64_t> truth(split.eval_truth.data(), n);
  const auto users = model_.user_embeddings(params_, hist);
  const auto items = model_.item_embeddings(params_);
  return eval::evaluate_embeddings(users, items, model_.model_config().item_dim, truth, config_.cutoffs);
}

void Trainer::save(const std::filesystem::path& manifest) const {
  std::vector<numerics::CheckpointEntry> entries;
  for (const auto& [name, t] : params_) entries.push_back({name, t.shape(), {t.data().begin(), t.data().end()}});
  for (auto& e : adam_.state_entries(params_)) entries.push_back(std::move(e));
  nlohmann::json history = nlohmann::json::array();
  for (const auto& h : history_) history.push_back(h.to_json());
  nlohmann::json meta{{"kind", "heterrec-train-state"},
                      {"adam_step", adam_.steps()},
                      {"epochs_completed", history_.size()},
                      {"config", config_.to_json()},
                      {"history", history}};
  numerics::write_checkpoint(manifest, std::move(entries), meta);
}

void Trainer::load(const std::filesystem::path& manifest) {
  auto ckpt = numerics::read_checkpoint(manifest);
  if (ckpt.meta.value("kind", "") != "heterrec-train-state") throw DataError(manifest.string() + " is not a training checkpoint");
  for (const auto& [name, t] : params_) {
    const auto& e = ckpt.at(name);
    if (e.shape != t.shape()) throw DataError("checkpoint tensor " + name + " has shape " + numerics::shape_str(e.shape));
    auto dst = t;
    std::copy(e.values.begin(), e.values.end(), dst.data_mut().begin());
  }
  adam_.load_state(ckpt, params_, ckpt.meta.at("adam_step").get<std::size_t>());
  history_.clear();
  for (const auto& h : ckpt.meta.at("history")) {
    EpochRecord r;
    r.epoch = h.at("epoch").get<std::size_t>();
    r.steps = h.at("steps").get<std::size_t>();
    r.mean_loss = h.at("mean_loss").get<double>();
    if (!h.at("metrics").is_null()) {
      const auto& m = h.at("metrics");
      eval::MetricsReport rep;
      rep.cutoffs = m.at("cutoffs").get<std::vector<std::size_t>>();
      for (auto c : rep.cutoffs) {
        rep.recall[c] = m.at("recall").at(std::to_string(c)).get<double>();
        rep.ndcg[c] = m.at("ndcg").at(std::to_string(c)).get<double>();
      }
      rep.users_evaluated = m.at("users_evaluated").get<std::size_t>();
      rep.catalog_size = m.at("catalog_size").get<std::size_t>();
      r.metrics = rep;
    }
    history_.push_back(r);
  }
}

nlohmann::json run_experiment(const TrainConfig& config, const PreparedData& data, const ExperimentOptions& options) {
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  Trainer trainer(data, config);
  if (options.resume) trainer.load(*options.resume);

  const auto& split = data.split();
  std::vector<std::int64_t> train_items;
  for (const auto& u : split.train) train_items.insert(train_items.end(), u.items.begin(), u.items.end());
  std::size_t n_eval = split.eval_history.size();
  if (config.eval_users > 0) n_eval = std::min(n_eval, config.eval_users);
  auto popularity = eval::popularity_baseline(train_items, data.catalog().num_items(),
                                              std::span<const std::int64_t>(split.eval_truth.data(), n_eval),
                                              config.cutoffs);

  std::vector<double> epoch_seconds;
  const std::size_t stop = std::min(config.epochs, options.stop_after_epochs.value_or(config.epochs));
  while (trainer.epochs_completed() < stop) {
    const auto t0 = clock::now();
    auto rec = trainer.train_epoch();
    epoch_seconds.push_back(std::chrono::duration<double>(clock::now() - t0).count());
    if (options.verbose) {
      std::cerr << "epoch " << rec.epoch << " loss " << rec.mean_loss;
      if (rec.metrics) std::cerr << " recall@" << config.cutoffs[0] << " " << rec.metrics->recall.at(config.cutoffs[0]);
      std::cerr << " (" << epoch_seconds.back() << " s)\n";
    }
  }

  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& h : trainer.history()) epochs.push_back(h.to_json());
  nlohmann::json report{{"format", "heterrec-report"},
                        {"version", 1},
                        {"config", config.to_json()},
                        {"effective_model", trainer.model().model_config().to_json()},
                        {"effective_lmp", trainer.model().lmp_config().to_json()},
                        {"token_level_terms", trainer.model().token_level_active()},
                        {"dataset", data.dataset().summary()},
                        {"train_users", split.train.size()},
                        {"parameters", trainer.params().scalar_count()},
                        {"popularity", popularity.to_json()},
                        {"epochs", epochs},
                        {"epochs_completed", trainer.epochs_completed()}};
  report["final"] = (!trainer.history().empty() && trainer.history().back().metrics)
                        ? trainer.history().back().metrics->to_json()
                        : nlohmann::json(nullptr);

  if (options.out_dir) {
    std::filesystem::create_directories(*options.out_dir);
    trainer.save(*options.out_dir / "checkpoint.json");
    std::ofstream(*options.out_dir / "report.json", std::ios::binary) << report.dump(2) << '\n';
    nlohmann::json timing{{"wall_clock_seconds", std::chrono::duration<double>(clock::now() - start).count()},
                          {"epoch_seconds", epoch_seconds}};
    std::ofstream(*options.out_dir / "timing.json", std::ios::binary) << timing.dump(2) << '\n';
  }
  return report;
}

}  // namespace heterrec::train
