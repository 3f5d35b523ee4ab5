#pragma once

#include <map>
#include <string>
#include <vector>

#include "heterrec/numerics/checkpoint.hpp"
#include "heterrec/numerics/param_store.hpp"

namespace heterrec::train {

// Adaptive moment estimation with bias correction. Moments are kept per
// parameter name; arithmetic runs in double, storage in float.
class Adam {
 public:
  Adam(double lr, double beta1, double beta2, double eps) : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  // Applies one update from the current gradients (missing gradient = 0).
  void step(numerics::ParamStore<float>& params);
  std::size_t steps() const { return t_; }

  // "adam.m.<name>" / "adam.v.<name>" entries for the checkpoint blob.
  std::vector<numerics::CheckpointEntry> state_entries(const numerics::ParamStore<float>& params) const;
  void load_state(const numerics::Checkpoint& ckpt, const numerics::ParamStore<float>& params, std::size_t steps);

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::map<std::string, std::vector<float>> m_, v_;
};

}  // namespace heterrec::train
