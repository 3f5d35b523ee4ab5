#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "heterrec/numerics/tensor.hpp"

namespace heterrec::numerics {

// How info_nce_rows turns a row of logits into a per-row value.
enum class ContrastiveForm {
  kNegLogRatio,  // -log(e^{pos} / (1 + sum e^{l}))
  kRatio,        // the ratio itself
};

// Define-by-run computation tape. Every op computes its forward value
// immediately and, when any input requires a gradient and recording is on,
// appends a backward rule. backward() replays the rules in reverse order.
//
// Gradient contract: leaf tensors accumulate across backward() calls until
// the caller zeroes them; intermediate results are reset at the start of each
// backward() pass, so calling backward twice adds the leaf gradients twice.
template <typename T>
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }
  std::size_t size() const { return records_.size(); }
  void clear() { records_.clear(); }

  // Scale the output gradient seen by every backward rule of op `name` by 1.5.
  // Fault injection for negative-control gradient checks.
  void corrupt_backward(std::string name) { corrupt_op_ = std::move(name); }

  void backward(const Tensor<T>& loss);

  // [m,k] x [k,n]; leading dims of `a` are folded into m.
  Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
  // [m,k] x [n,k]^T -> [m,n]
  Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b);

  Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
  Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
  // Row-broadcast add of a [d] vector to a [..., d] tensor.
  Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias);
  Tensor<T> scale(const Tensor<T>& x, T factor);
  Tensor<T> relu(const Tensor<T>& x);

  // Softmax over the last dim of logits + mask, where mask holds 0 or -inf.
  // Masked entries come out exactly 0 and receive exactly 0 gradient.
  Tensor<T> masked_softmax(const Tensor<T>& logits, std::span<const T> mask);

  Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps);

  // Row lookup. Backward scatter-adds into the table.
  Tensor<T> gather_rows(const Tensor<T>& table, std::span<const std::int64_t> ids);

  Tensor<T> concat_last_dim(std::span<const Tensor<T>> parts);
  Tensor<T> slice_last_dim(const Tensor<T>& x, std::size_t begin, std::size_t end);
  Tensor<T> concat_rows(std::span<const Tensor<T>> parts);
  Tensor<T> slice_rows(const Tensor<T>& x, std::size_t begin, std::size_t end);
  Tensor<T> reshape(const Tensor<T>& x, Shape shape);

  Tensor<T> sum(const Tensor<T>& x);
  Tensor<T> mean(const Tensor<T>& x);

  // Per-row contrastive value over the admissible entries of each row
  // (mask 0 = admissible, -inf = excluded). `targets[r]` is the positive
  // column of row r; `unit_term` adds a constant zero logit to every row.
  Tensor<T> info_nce_rows(const Tensor<T>& logits, std::span<const T> mask,
                          std::span<const std::size_t> targets, bool unit_term,
                          ContrastiveForm form);

 private:
  struct Record {
    const char* op;
    std::shared_ptr<TensorNode<T>> output;
    std::function<void()> backward;
  };

  bool tracks(std::initializer_list<const Tensor<T>*> inputs) const;
  void record(const char* op, const Tensor<T>& output, std::function<void()> backward);

  bool recording_;
  std::string corrupt_op_;
  std::vector<Record> records_;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace heterrec::numerics
