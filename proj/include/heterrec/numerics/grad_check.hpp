#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "heterrec/numerics/tape.hpp"

namespace heterrec::numerics {

struct GradCheckOptions {
  double step = 1e-5;
  double tol = 1e-3;
  // Relative errors are measured against max(|analytic|, |numeric|, floor).
  double floor = 1e-2;
  std::string corrupt_op;  // see Tape::corrupt_backward
};

struct GradCheckEntry {
  std::string name;
  std::size_t elements = 0;
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  bool passed = false;
};

using NamedInput = std::pair<std::string, Tensor<double>>;
using GraphFn = std::function<Tensor<double>(Tape<double>&)>;

// Compares tape gradients of a scalar-valued graph against central finite
// differences, evaluated in double precision. `graph` must read the input
// tensors it was built around; they are perturbed in place and restored.
GradCheckReport grad_check(const GraphFn& graph, const std::vector<NamedInput>& inputs,
                           const GradCheckOptions& options = {});

}  // namespace heterrec::numerics
