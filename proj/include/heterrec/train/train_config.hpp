#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "heterrec/lmp/lmp_loss.hpp"
#include "heterrec/model_config.hpp"
#include "json.hpp"

namespace heterrec::train {

struct AblationFlags {
  bool htfl_off = false;
  bool mfk_off = false;
  bool hct_off = false;
  bool lmp_off = false;   // plain per-step InfoNCE: no gate, no margin
  bool tlmp_off = false;  // no token-level terms

  nlohmann::json to_json() const;
  static AblationFlags from_json(const nlohmann::json& j);
};

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  std::size_t micro_batches = 1;  // gradient accumulation chunks per batch
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 42;

  AblationFlags ablation;
  std::optional<std::pair<std::size_t, std::size_t>> scaling;  // (N1, N2) override
  ModelConfig model;
  lmp::LmpConfig lmp;

  std::vector<std::size_t> cutoffs{5, 10, 50};
  std::size_t eval_every = 1;   // epochs between evaluations; 0 = final epoch only
  std::size_t eval_users = 0;   // 0 = every held-out user

  // Model/LMP configs with ablation flags and the scaling pair applied.
  ModelConfig effective_model() const;
  lmp::LmpConfig effective_lmp() const;

  void validate() const;
  static TrainConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

TrainConfig load_train_config(const std::string& path);

}  // namespace heterrec::train
