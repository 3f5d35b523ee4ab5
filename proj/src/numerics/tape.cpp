#include "heterrec/numerics/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace heterrec::numerics {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

template <typename T>
using NodePtr = std::shared_ptr<TensorNode<T>>;

template <typename T>
std::span<T> grad_of(const NodePtr<T>& node) {
  if (node->grad.empty()) node->grad.assign(node->data.size(), T(0));
  return node->grad;
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " differ");
  }
}

Shape with_last(const Shape& s, std::size_t last) {
  Shape out = s;
  out.back() = last;
  return out;
}

}  // namespace

template <typename T>
bool Tape<T>::tracks(std::initializer_list<const Tensor<T>*> inputs) const {
  if (!recording_) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor<T>* t) { return t->requires_grad(); });
}

template <typename T>
void Tape<T>::record(const char* op, const Tensor<T>& output, std::function<void()> backward) {
  records_.push_back(Record{op, output.node(), std::move(backward)});
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) throw ContractError("backward() on a loss that does not require grad");
  for (auto& rec : records_) rec.output->grad.assign(rec.output->data.size(), T(0));
  grad_of(loss.node())[0] += T(1);
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    if (!corrupt_op_.empty() && corrupt_op_ == it->op) {
      auto g = std::span<T>(it->output->grad);
      std::vector<T> saved(g.begin(), g.end());
      for (auto& v : g) v *= T(1.5);
      it->backward();
      std::copy(saved.begin(), saved.end(), g.begin());
    } else {
      it->backward();
    }
  }
}

template <typename T>
Tensor<T> Tape<T>::matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (b.ndim() != 2 || a.cols() != b.shape()[0]) {
    throw DimensionError("matmul: inner extents differ for " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<T> c(m * n, T(0));
  auto A = a.data();
  auto B = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = A[i * k + p];
      const T* brow = B.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  const bool track = tracks({&a, &b});
  Tensor<T> out(with_last(a.shape(), n), std::move(c), track);
  if (track) {
    record("matmul", out, [an = a.node(), bn = b.node(), on = out.node(), m, k, n] {
      const auto& dC = on->grad;
      if (an->requires_grad) {
        auto dA = grad_of(an);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            T acc = T(0);
            const T* brow = bn->data.data() + p * n;
            const T* grow = dC.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
            dA[i * k + p] += acc;
          }
        }
      }
      if (bn->requires_grad) {
        auto dB = grad_of(bn);
        for (std::size_t i = 0; i < m; ++i) {
          const T* grow = dC.data() + i * n;
          for (std::size_t p = 0; p < k; ++p) {
            const T av = an->data[i * k + p];
            T* drow = dB.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) drow[j] += av * grow[j];
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> Tape<T>::matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  if (b.ndim() != 2 || a.cols() != b.cols()) {
    throw DimensionError("matmul_nt: inner extents differ for " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()) + "^T");
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  std::vector<T> c(m * n);
  auto A = a.data();
  auto B = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = A.data() + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const T* brow = B.data() + j * k;
      T acc = T(0);
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] = acc;
    }
  }
  const bool track = tracks({&a, &b});
  Tensor<T> out(with_last(a.shape(), n), std::move(c), track);
  if (track) {
    record("matmul_nt", out, [an = a.node(), bn = b.node(), on = out.node(), m, k, n] {
      const auto& dC = on->grad;
      if (an->requires_grad) {
        auto dA = grad_of(an);
        for (std::size_t i = 0; i < m; ++i) {
          T* drow = dA.data() + i * k;
          for (std::size_t j = 0; j < n; ++j) {
            const T g = dC[i * n + j];
            const T* brow = bn->data.data() + j * k;
            for (std::size_t p = 0; p < k; ++p) drow[p] += g * brow[p];
          }
        }
      }
      if (bn->requires_grad) {
        auto dB = grad_of(bn);
        for (std::size_t i = 0; i < m; ++i) {
          const T* arow = an->data.data() + i * k;
          for (std::size_t j = 0; j < n; ++j) {
            const T g = dC[i * n + j];
            T* drow = dB.data() + j * k;
            for (std::size_t p = 0; p < k; ++p) drow[p] += g * arow[p];
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> Tape<T>::add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> c(a.numel());
  auto A = a.data();
  auto B = b.data();
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = A[i] + B[i];
  const bool track = tracks({&a, &b});
  Tensor<T> out(a.shape(), std::move(c), track);
  if (track) {
    record("add", out, [an = a.node(), bn = b.node(), on = out.node()] {
      for (const auto& in : {an, bn}) {
        if (!in->requires_grad) continue;
        auto d = grad_of(in);
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += on->grad[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> Tape<T>::mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  std::vector<T> c(a.numel());
  auto A = a.data();
  auto B = b.data();
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = A[i] * B[i];
  const bool track = tracks({&a, &b});
  Tensor<T> out(a.shape(), std::move(c), track);
  if (track) {
    record("mul", out, [an = a.node(), bn = b.node(), on = out.node()] {
      if (an->requires_grad) {
        auto d = grad_of(an);
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += on->grad[i] * bn->data[i];
      }
      if (bn->requires_grad) {
        auto d = grad_of(bn);
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += on->grad[i] * an->data[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> Tape<T>::add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  if (bias.numel() != x.cols()) {
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " does not fit last dim of " +
                         shape_str(x.shape()));
  }
  const std::size_t rows = x.rows(), d = x.cols();
  std::vector<T> c(x.numel());
  auto X = x.data();
  auto Bv = bias.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < d; ++j) c[r * d + j] = X[r * d + j] + Bv[j];
  }
  const bool track = tracks({&x, &bias});
  Tensor<T> out(x.shape(), std::move(c), track);
  if (track) {
    record("add_bias", out, [xn = x.node(), bn = bias.node(), on = out.node(), rows, d] {
      if (xn->requires_grad) {
        auto dx = grad_of(xn);
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += on->grad[i];
      }
      if (bn->requires_grad) {
        auto db = grad_of(bn);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < d; ++j) db[j] += on->grad[r * d + j];
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> Tape<T>::scale(const Tensor<T>& x, T factor) {
  std::vector<T> c(x.numel());
  auto X = x.data();
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = X[i] * factor;
  const bool track = tracks({&x});
  Tensor<T> out(x.shape(), std::move(c), track);
  if (track) {
    record("scale", out, [xn = x.node(), on = out.node(), factor] {
      auto dx = grad_of(xn);
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += on->grad[i] * factor;
    });
  }
  return out;
}

template <typename T>
Tensor<T> Tape<T>::relu(const Tensor<T>& x) {
  std::vector<T> c(x.numel());
  auto X = x.data();
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = X[i] > T(0) ? X[i] : T(0);
  const bool track = tracks({&x});
  Tensor<T> out(x.shape(), std::move(c), track);
  if (track) {
    record("relu", out, [xn = x.node(), on = out.node()] {
      auto dx = grad_of(xn);
      for (std::size_t i = 0; i < dx.size(); ++i) {
        if (xn->data[i] > T(0)) dx[i] += on->grad[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> Tape<T>::masked_softmax(const Tensor<T>& logits, std::span<const T> mask) {
  if (mask.size() != logits.numel()) {
    throw DimensionError("masked_softmax: mask has " + std::to_string(mask.size()) +
                         " entries for logits " + shape_str(logits.shape()));
  }
  const std::size_t rows = logits.rows(), n = logits.cols();
  auto L = logits.data();
  std::vector<T> y(logits.numel(), T(0));
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t base = r * n;
    double mx = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t j = 0; j < n; ++j) {
      if (std::isinf(mask[base + j]) && mask[base + j] < 0) continue;
      any = true;
      mx = std::max(mx, static_cast<double>(L[base + j]) + static_cast<double>(mask[base + j]));
    }
    if (!any) throw InvalidMaskError("masked_softmax: row " + std::to_string(r) + " is fully masked");
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (std::isinf(mask[base + j]) && mask[base + j] < 0) continue;
      const double e = std::exp(static_cast<double>(L[base + j]) + mask[base + j] - mx);
      y[base + j] = static_cast<T>(e);
      total += e;
    }
    for (std::size_t j = 0; j < n; ++j) y[base + j] = static_cast<T>(y[base + j] / total);
  }
  const bool track = tracks({&logits});
  Tensor<T> out(logits.shape(), std::move(y), track);
  if (track) {
    record("masked_softmax", out, [ln = logits.node(), on = out.node(), rows, n] {
      auto dx = grad_of(ln);
      const auto& Y = on->data;
      const auto& G = on->grad;
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t base = r * n;
        T dot = T(0);
        for (std::size_t j = 0; j < n; ++j) dot += Y[base + j] * G[base + j];
        for (std::size_t j = 0; j < n; ++j) dx[base + j] += Y[base + j] * (G[base + j] - dot);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> Tape<T>::layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                              T eps) {
  const std::size_t d = x.cols(), rows = x.rows();
  if (gain.numel() != d || bias.numel() != d) {
    throw DimensionError("layer_norm: gain " + shape_str(gain.shape()) + " / bias " +
                         shape_str(bias.shape()) + " do not fit " + shape_str(x.shape()));
  }
  auto X = x.data();
  auto G = gain.data();
  auto Bv = bias.data();
  std::vector<T> y(x.numel());
  std::vector<T> xhat(x.numel());
  std::vector<T> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t base = r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += X[base + j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = X[base + j] - mu;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + static_cast<double>(eps));
    inv_std[r] = static_cast<T>(is);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[base + j] = static_cast<T>((X[base + j] - mu) * is);
      y[base + j] = G[j] * xhat[base + j] + Bv[j];
    }
  }
  const bool track = tracks({&x, &gain, &bias});
  Tensor<T> out(x.shape(), std::move(y), track);
  if (track) {
    record("layer_norm", out,
           [xn = x.node(), gn = gain.node(), bn = bias.node(), on = out.node(), xhat = std::move(xhat),
            inv_std = std::move(inv_std), rows, d] {
             const auto& dY = on->grad;
             if (gn->requires_grad) {
               auto dg = grad_of(gn);
               for (std::size_t i = 0; i < dY.size(); ++i) dg[i % d] += dY[i] * xhat[i];
             }
             if (bn->requires_grad) {
               auto db = grad_of(bn);
               for (std::size_t i = 0; i < dY.size(); ++i) db[i % d] += dY[i];
             }
             if (xn->requires_grad) {
               auto dx = grad_of(xn);
               for (std::size_t r = 0; r < rows; ++r) {
                 const std::size_t base = r * d;
                 double m1 = 0.0, m2 = 0.0;
                 for (std::size_t j = 0; j < d; ++j) {
                   const double dxh = static_cast<double>(dY[base + j]) * gn->data[j];
                   m1 += dxh;
                   m2 += dxh * xhat[base + j];
                 }
                 m1 /= static_cast<double>(d);
                 m2 /= static_cast<double>(d);
                 for (std::size_t j = 0; j < d; ++j) {
                   const double dxh = static_cast<double>(dY[base + j]) * gn->data[j];
                   dx[base + j] += static_cast<T>(inv_std[r] * (dxh - m1 - xhat[base + j] * m2));
                 }
               }
             }
           });
  }
  return out;
}

template <typename T>
Tensor<T> Tape<T>::gather_rows(const Tensor<T>& table, std::span<const std::int64_t> ids) {
  const std::size_t V = table.rows(), d = table.cols();
  if (ids.empty()) throw ContractError("gather_rows: empty id list");
  std::vector<T> y(ids.size() * d);
  auto Tb = table.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= V) {
      throw IndexError("gather_rows: id " + std::to_string(ids[i]) + " out of range for table with " +
                       std::to_string(V) + " rows");
    }
    std::copy_n(Tb.data() + static_cast<std::size_t>(ids[i]) * d, d, y.data() + i * d);
  }
  const bool track = tracks({&table});
  Tensor<T> out(Shape{ids.size(), d}, std::move(y), track);
  if (track) {
    record("gather_rows", out,
           [tn = table.node(), on = out.node(), ids = std::vector<std::int64_t>(ids.begin(), ids.end()), d] {
             auto dt = grad_of(tn);
             for (std::size_t i = 0; i < ids.size(); ++i) {
               T* dst = dt.data() + static_cast<std::size_t>(ids[i]) * d;
               const T* src = on->grad.data() + i * d;
               for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
             }
           });
  }
  return out;
}

template <typename T>
Tensor<T> Tape<T>::concat_last_dim(std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw ContractError("concat_last_dim: no inputs");
  const std::size_t rows = parts[0].rows();
  std::size_t total = 0;
  bool track = false;
  for (const auto& p : parts) {
    if (p.rows() != rows) {
      throw DimensionError("concat_last_dim: " + shape_str(p.shape()) + " vs " +
                           shape_str(parts[0].shape()));
    }
    total += p.cols();
    track = track || (recording_ && p.requires_grad());
  }
  std::vector<T> y(rows * total);
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.cols();
    auto P = p.data();
    for (std::size_t r = 0; r < rows; ++r) std::copy_n(P.data() + r * w, w, y.data() + r * total + off);
    off += w;
  }
  Tensor<T> out(with_last(parts[0].shape(), total), std::move(y), track);
  if (track) {
    std::vector<NodePtr<T>> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    record("concat_last_dim", out, [nodes = std::move(nodes), on = out.node(), rows, total] {
      std::size_t off2 = 0;
      for (const auto& n : nodes) {
        const std::size_t w = n->shape.back();
        if (n->requires_grad) {
          auto d = grad_of(n);
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < w; ++j) d[r * w + j] += on->grad[r * total + off2 + j];
          }
        }
        off2 += w;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> Tape<T>::slice_last_dim(const Tensor<T>& x, std::size_t begin, std::size_t end) {
  const std::size_t d = x.cols(), rows = x.rows();
  if (begin >= end || end > d) {
    throw DimensionError("slice_last_dim: [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") invalid for " + shape_str(x.shape()));
  }
  const std::size_t w = end - begin;
  std::vector<T> y(rows * w);
  auto X = x.data();
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(X.data() + r * d + begin, w, y.data() + r * w);
  const bool track = tracks({&x});
  Tensor<T> out(with_last(x.shape(), w), std::move(y), track);
  if (track) {
    record("slice_last_dim", out, [xn = x.node(), on = out.node(), rows, d, w, begin] {
      auto dx = grad_of(xn);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < w; ++j) dx[r * d + begin + j] += on->grad[r * w + j];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> Tape<T>::concat_rows(std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  const std::size_t d = parts[0].cols();
  std::size_t rows = 0;
  bool track = false;
  for (const auto& p : parts) {
    if (p.cols() != d) {
      throw DimensionError("concat_rows: " + shape_str(p.shape()) + " vs " + shape_str(parts[0].shape()));
    }
    rows += p.rows();
    track = track || (recording_ && p.requires_grad());
  }
  std::vector<T> y;
  y.reserve(rows * d);
  for (const auto& p : parts) y.insert(y.end(), p.data().begin(), p.data().end());
  Tensor<T> out(Shape{rows, d}, std::move(y), track);
  if (track) {
    std::vector<NodePtr<T>> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    record("concat_rows", out, [nodes = std::move(nodes), on = out.node()] {
      std::size_t off = 0;
      for (const auto& n : nodes) {
        const std::size_t len = n->data.size();
        if (n->requires_grad) {
          auto d = grad_of(n);
          for (std::size_t i = 0; i < len; ++i) d[i] += on->grad[off + i];
        }
        off += len;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> Tape<T>::slice_rows(const Tensor<T>& x, std::size_t begin, std::size_t end) {
  const std::size_t d = x.cols();
  if (begin >= end || end > x.rows()) {
    throw DimensionError("slice_rows: [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") invalid for " + shape_str(x.shape()));
  }
  auto X = x.data();
  std::vector<T> y(X.begin() + static_cast<std::ptrdiff_t>(begin * d),
                   X.begin() + static_cast<std::ptrdiff_t>(end * d));
  const bool track = tracks({&x});
  Tensor<T> out(Shape{end - begin, d}, std::move(y), track);
  if (track) {
    record("slice_rows", out, [xn = x.node(), on = out.node(), off = begin * d] {
      auto dx = grad_of(xn);
      for (std::size_t i = 0; i < on->grad.size(); ++i) dx[off + i] += on->grad[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> Tape<T>::reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<T> y(x.data().begin(), x.data().end());
  const bool track = tracks({&x});
  Tensor<T> out(std::move(shape), std::move(y), track);
  if (track) {
    record("reshape", out, [xn = x.node(), on = out.node()] {
      auto dx = grad_of(xn);
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += on->grad[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> Tape<T>::sum(const Tensor<T>& x) {
  T acc = T(0);
  for (T v : x.data()) acc += v;
  const bool track = tracks({&x});
  Tensor<T> out(Shape{1}, std::vector<T>{acc}, track);
  if (track) {
    record("sum", out, [xn = x.node(), on = out.node()] {
      auto dx = grad_of(xn);
      for (auto& v : dx) v += on->grad[0];
    });
  }
  return out;
}

template <typename T>
Tensor<T> Tape<T>::mean(const Tensor<T>& x) {
  T acc = T(0);
  for (T v : x.data()) acc += v;
  const T inv = T(1) / static_cast<T>(x.numel());
  const bool track = tracks({&x});
  Tensor<T> out(Shape{1}, std::vector<T>{acc * inv}, track);
  if (track) {
    record("mean", out, [xn = x.node(), on = out.node(), inv] {
      auto dx = grad_of(xn);
      for (auto& v : dx) v += on->grad[0] * inv;
    });
  }
  return out;
}

template <typename T>
Tensor<T> Tape<T>::info_nce_rows(const Tensor<T>& logits, std::span<const T> mask,
                                 std::span<const std::size_t> targets, bool unit_term,
                                 ContrastiveForm form) {
  const std::size_t rows = logits.rows(), n = logits.cols();
  if (mask.size() != logits.numel() || targets.size() != rows) {
    throw DimensionError("info_nce_rows: mask/targets do not fit logits " + shape_str(logits.shape()));
  }
  auto L = logits.data();
  auto admissible = [&](std::size_t i) { return !(std::isinf(mask[i]) && mask[i] < 0); };
  std::vector<double> lse(rows);
  std::vector<T> y(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t base = r * n;
    if (targets[r] >= n || !admissible(base + targets[r])) {
      throw ContractError("info_nce_rows: target column of row " + std::to_string(r) + " is not admissible");
    }
    double mx = unit_term ? 0.0 : -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (admissible(base + j)) mx = std::max(mx, static_cast<double>(L[base + j]));
    }
    double total = unit_term ? std::exp(-mx) : 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (admissible(base + j)) total += std::exp(static_cast<double>(L[base + j]) - mx);
    }
    lse[r] = mx + std::log(total);
    const double pos = L[base + targets[r]];
    y[r] = static_cast<T>(form == ContrastiveForm::kNegLogRatio ? lse[r] - pos : std::exp(pos - lse[r]));
  }
  const bool track = tracks({&logits});
  Tensor<T> out(Shape{rows}, std::move(y), track);
  if (track) {
    record("info_nce_rows", out,
           [ln = logits.node(), on = out.node(), mask = std::vector<T>(mask.begin(), mask.end()),
            tg = std::vector<std::size_t>(targets.begin(), targets.end()), lse = std::move(lse), rows, n,
            form] {
             auto dx = grad_of(ln);
             for (std::size_t r = 0; r < rows; ++r) {
               const std::size_t base = r * n;
               const double g = on->grad[r];
               if (g == 0.0) continue;
               const double ratio = std::exp(static_cast<double>(ln->data[base + tg[r]]) - lse[r]);
               // d(-log ratio)/dl = p - onehot ; d(ratio)/dl = ratio * (onehot - p)
               const double coef = form == ContrastiveForm::kNegLogRatio ? g : -g * ratio;
               for (std::size_t j = 0; j < n; ++j) {
                 if (std::isinf(mask[base + j]) && mask[base + j] < 0) continue;
                 const double p = std::exp(static_cast<double>(ln->data[base + j]) - lse[r]);
                 const double onehot = j == tg[r] ? 1.0 : 0.0;
                 dx[base + j] += static_cast<T>(coef * (p - onehot));
               }
             }
           });
  }
  return out;
}

template class Tape<float>;
template class Tape<double>;

}  // namespace heterrec::numerics
