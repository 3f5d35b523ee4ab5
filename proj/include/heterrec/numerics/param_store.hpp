#pragma once

#include <map>
#include <string>
#include <vector>

#include "heterrec/numerics/tensor.hpp"

namespace heterrec::numerics {

// Learnable tensors keyed by dotted path (e.g. "token_blocks.0.attn.wq").
// Iteration order is lexicographic by name, which fixes the checkpoint layout.
template <typename T>
class ParamStore {
 public:
  using Map = std::map<std::string, Tensor<T>>;

  const Tensor<T>& add(const std::string& name, Shape shape, std::vector<T> values) {
    auto [it, inserted] = params_.emplace(name, Tensor<T>(std::move(shape), std::move(values), true));
    if (!inserted) throw ContractError("duplicate parameter name: " + name);
    return it->second;
  }

  const Tensor<T>& get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ContractError("unknown parameter: " + name);
    return it->second;
  }

  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  typename Map::const_iterator begin() const { return params_.begin(); }
  typename Map::const_iterator end() const { return params_.end(); }
  std::size_t size() const { return params_.size(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : params_) n += t.numel();
    return n;
  }

  void zero_grads() {
    for (auto& [_, t] : params_) t.zero_grad();
  }

  // Deep copy with values converted to U; used for the 64-bit gradient checks.
  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& [name, t] : params_) {
      std::vector<U> values(t.data().begin(), t.data().end());
      out.add(name, t.shape(), std::move(values));
    }
    return out;
  }

 private:
  Map params_;
};

}  // namespace heterrec::numerics
