#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "heterrec/data/dataset.hpp"
#include "heterrec/eval/metrics.hpp"
#include "heterrec/htfl/codebook.hpp"
#include "heterrec/model.hpp"
#include "heterrec/train/adam.hpp"
#include "heterrec/train/train_config.hpp"

namespace heterrec::train {

// Dataset plus everything derived from it once: codebook, tokenized catalog
// and the leave-one-out split. Pinned in memory because models refer into it.
class PreparedData {
 public:
  PreparedData(data::Dataset dataset, htfl::FeatureSchema schema,
               std::optional<htfl::QuantileCodebook> codebook = std::nullopt);
  PreparedData(const PreparedData&) = delete;
  PreparedData& operator=(const PreparedData&) = delete;

  const data::Dataset& dataset() const { return dataset_; }
  const htfl::Tokenizer& tokenizer() const { return tokenizer_; }
  const htfl::TokenizedCatalog& catalog() const { return catalog_; }
  const data::Split& split() const { return split_; }

 private:
  data::Dataset dataset_;
  htfl::Tokenizer tokenizer_;
  htfl::TokenizedCatalog catalog_;
  data::Split split_;
};

// Per-epoch permutation of user indices cut into batches of `batch_size`
// distinct users; a trailing single user joins the previous batch.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t num_users, std::size_t batch_size,
                                                    std::uint64_t seed, std::size_t epoch);

// B distinct users drawn deterministically from `users` (DataError if too few).
std::vector<UserSequence> assemble_batch(std::span<const UserSequence> users, std::size_t batch_size,
                                         std::uint64_t seed);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  std::size_t steps = 0;
  double mean_loss = 0.0;
  std::optional<eval::MetricsReport> metrics;

  nlohmann::json to_json() const;
};

class Trainer {
 public:
  Trainer(const PreparedData& data, TrainConfig config);

  const HeterRecModel& model() const { return model_; }
  const TrainConfig& config() const { return config_; }
  numerics::ParamStore<float>& params() { return params_; }
  const numerics::ParamStore<float>& params() const { return params_; }
  const Adam& optimizer() const { return adam_; }
  std::size_t epochs_completed() const { return history_.size(); }
  const std::vector<EpochRecord>& history() const { return history_; }

  // Zeroes and fills parameter gradients for one batch; returns the loss.
  // With micro_batches > 1 the towers run chunk by chunk against the
  // full-batch loss gradient, so the result matches the single pass.
  double compute_gradients(std::span<const UserSequence> batch);
  // compute_gradients followed by one optimizer update.
  double train_step(std::span<const UserSequence> batch);
  EpochRecord train_epoch();
  eval::MetricsReport evaluate() const;

  void save(const std::filesystem::path& manifest) const;
  void load(const std::filesystem::path& manifest);

 private:
  void check_finite(double loss, const BatchLoss<float>& parts) const;

  const PreparedData& data_;
  TrainConfig config_;
  HeterRecModel model_;
  numerics::ParamStore<float> params_;
  Adam adam_;
  std::vector<EpochRecord> history_;
};

struct ExperimentOptions {
  std::optional<std::filesystem::path> out_dir;   // report.json, timing.json, checkpoint.{json,bin}
  std::optional<std::filesystem::path> resume;    // checkpoint manifest to continue from
  std::optional<std::size_t> stop_after_epochs;   // halt early (used to test resumption)
  bool verbose = false;
};

// Trains, evaluates on the held-out items and returns the JSON report.
// Wall-clock time goes to timing.json so the report itself is reproducible.
nlohmann::json run_experiment(const TrainConfig& config, const PreparedData& data,
                              const ExperimentOptions& options = {});

}  // namespace heterrec::train
