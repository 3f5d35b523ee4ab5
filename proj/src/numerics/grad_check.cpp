#include "heterrec/numerics/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace heterrec::numerics {

GradCheckReport grad_check(const GraphFn& graph, const std::vector<NamedInput>& inputs,
                           const GradCheckOptions& options) {
  for (const auto& [name, t] : inputs) {
    if (!t.requires_grad()) throw ContractError("grad_check: input " + name + " does not require grad");
    const_cast<Tensor<double>&>(t).zero_grad();
  }
  {
    Tape<double> tape;
    if (!options.corrupt_op.empty()) tape.corrupt_backward(options.corrupt_op);
    auto out = graph(tape);
    if (out.numel() != 1) {
      throw ContractError("grad_check: graph output must be scalar, got " + shape_str(out.shape()));
    }
    tape.backward(out);
  }

  auto evaluate = [&] {
    Tape<double> tape(false);
    return graph(tape).item();
  };

  GradCheckReport report;
  for (const auto& [name, tensor] : inputs) {
    auto t = tensor;
    GradCheckEntry entry{name, t.numel(), 0.0};
    std::vector<double> analytic(t.numel(), 0.0);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
    auto values = t.data_mut();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double orig = values[i];
      values[i] = orig + options.step;
      const double up = evaluate();
      values[i] = orig - options.step;
      const double down = evaluate();
      values[i] = orig;
      const double numeric = (up - down) / (2.0 * options.step);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), options.floor});
      entry.max_rel_error = std::max(entry.max_rel_error, std::abs(analytic[i] - numeric) / denom);
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.entries.push_back(std::move(entry));
  }
  report.passed = report.max_rel_error <= options.tol;
  return report;
}

}  // namespace heterrec::numerics
