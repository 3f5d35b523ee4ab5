#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "heterrec/numerics/init.hpp"
#include "heterrec/numerics/param_store.hpp"
#include "heterrec/numerics/tape.hpp"
#include "json.hpp"

namespace heterrec::lmp {

struct LmpConfig {
  std::size_t steps = 3;        // N_step
  double temperature = 1.0;     // tau
  double margin = 1.0;          // lambda_m
  bool gated = true;            // false: plain per-step InfoNCE (the MTP fallback)
  bool token_level = true;      // token-level auxiliary terms
  double token_margin = 1.0;
  bool token_gated = true;
  numerics::ContrastiveForm form = numerics::ContrastiveForm::kNegLogRatio;

  void validate() const;
  static LmpConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

// Prefix of the step-i head (1-based) for a level: "lmp.item" or "lmp.token.<feature>".
std::string head_prefix(const std::string& level, std::size_t step);

// Linear head per step: <level>.step<i>.{w,b}, [d, d] and [d].
void declare_head_params(numerics::ParamStore<float>& store, const std::string& level, std::size_t width,
                         std::size_t steps, numerics::ParamInit& init);

// e^{a} > e^{b} + margin, evaluated stably (a, b already divided by tau).
bool step_gate(double a, double b, double margin);

// Head applied to one user row, dotted with one item row, unscaled.
double step_logit(const numerics::ParamStore<double>& params, const std::string& level, std::size_t step,
                  std::span<const double> user_row, std::span<const double> item_row);

template <typename T>
struct LevelLoss {
  numerics::Tensor<T> total;                 // sum over steps
  std::vector<numerics::Tensor<T>> steps;    // per step, mean over active terms
  std::vector<std::size_t> valid;            // (j,t) pairs with a positive
  std::vector<std::size_t> active;           // valid and gated on
  double logit_min = 0.0, logit_max = 0.0;   // over all scaled logits, for diagnostics
};

// Contrastive loss for one level over a batch of B sequences.
//
// `user` stacks every sequence's input-position states ([sum T_j, d]);
// `target` stacks the matching next items: row r of sequence j is the item
// that follows input position r. lengths[j] = T_j. For step i, position t of
// sequence j predicts target row t+i-1 of j; negatives are the other
// sequences' targets at the same offset. All sequences must be distinct users.
template <typename T>
LevelLoss<T> level_loss(numerics::Tape<T>& tape, const numerics::ParamStore<T>& params, const std::string& level,
                        const numerics::Tensor<T>& user, const numerics::Tensor<T>& target,
                        std::span<const std::size_t> lengths, std::size_t steps, double temperature, double margin,
                        bool gated, numerics::ContrastiveForm form);

}  // namespace heterrec::lmp
