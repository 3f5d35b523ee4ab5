#include "heterrec/train/adam.hpp"

#include <cmath>

#include "heterrec/errors.hpp"

namespace heterrec::train {

void Adam::step(numerics::ParamStore<float>& params) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (const auto& [name, tensor] : params) {
    auto p = tensor;  // shares storage
    auto& m = m_[name];
    auto& v = v_[name];
    if (m.empty()) {
      m.assign(p.numel(), 0.0f);
      v.assign(p.numel(), 0.0f);
    }
    auto values = p.data_mut();
    auto grad = p.grad();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grad.empty() ? 0.0 : static_cast<double>(grad[i]);
      const double mi = beta1_ * m[i] + (1.0 - beta1_) * g;
      const double vi = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      values[i] = static_cast<float>(values[i] - lr_ * (mi / c1) / (std::sqrt(vi / c2) + eps_));
    }
  }
}

std::vector<numerics::CheckpointEntry> Adam::state_entries(const numerics::ParamStore<float>& params) const {
  std::vector<numerics::CheckpointEntry> out;
  for (const auto& [name, tensor] : params) {
    auto mit = m_.find(name);
    std::vector<float> m = mit == m_.end() ? std::vector<float>(tensor.numel(), 0.0f) : mit->second;
    std::vector<float> v = mit == m_.end() ? std::vector<float>(tensor.numel(), 0.0f) : v_.at(name);
    out.push_back({"adam.m." + name, tensor.shape(), std::move(m)});
    out.push_back({"adam.v." + name, tensor.shape(), std::move(v)});
  }
  return out;
}

void Adam::load_state(const numerics::Checkpoint& ckpt, const numerics::ParamStore<float>& params,
                      std::size_t steps) {
  m_.clear();
  v_.clear();
  for (const auto& [name, tensor] : params) {
    const auto& m = ckpt.at("adam.m." + name);
    const auto& v = ckpt.at("adam.v." + name);
    if (m.shape != tensor.shape() || v.shape != tensor.shape()) {
      throw DataError("optimizer state for " + name + " has the wrong shape");
    }
    m_[name] = m.values;
    v_[name] = v.values;
  }
  t_ = steps;
}

}  // namespace heterrec::train
