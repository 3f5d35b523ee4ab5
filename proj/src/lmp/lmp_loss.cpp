#include "heterrec/lmp/lmp_loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "heterrec/errors.hpp"
#include "heterrec/json_util.hpp"

namespace heterrec::lmp {

using numerics::ParamInit;
using numerics::ParamStore;
using numerics::Tape;
using numerics::Tensor;

void LmpConfig::validate() const {
  if (steps < 1) throw ConfigError("lmp: steps must be >= 1");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw ConfigError("lmp: temperature must be > 0");
  if (!(margin >= 0.0) || !(token_margin >= 0.0)) throw ConfigError("lmp: margins must be >= 0");
}

LmpConfig LmpConfig::from_json(const nlohmann::json& j) {
  require_known_keys(j, {"steps", "temperature", "margin", "gated", "token_level", "token_margin", "token_gated", "form"},
                     "lmp");
  LmpConfig c;
  read_opt(j, "steps", c.steps, "lmp");
  read_opt(j, "temperature", c.temperature, "lmp");
  read_opt(j, "margin", c.margin, "lmp");
  read_opt(j, "gated", c.gated, "lmp");
  read_opt(j, "token_level", c.token_level, "lmp");
  read_opt(j, "token_margin", c.token_margin, "lmp");
  read_opt(j, "token_gated", c.token_gated, "lmp");
  std::string form = "neg_log_ratio";
  read_opt(j, "form", form, "lmp");
  if (form == "neg_log_ratio") {
    c.form = numerics::ContrastiveForm::kNegLogRatio;
  } else if (form == "ratio") {
    c.form = numerics::ContrastiveForm::kRatio;
  } else {
    throw ConfigError("lmp: form must be 'neg_log_ratio' or 'ratio'");
  }
  c.validate();
  return c;
}

nlohmann::json LmpConfig::to_json() const {
  return {{"steps", steps},
          {"temperature", temperature},
          {"margin", margin},
          {"gated", gated},
          {"token_level", token_level},
          {"token_margin", token_margin},
          {"token_gated", token_gated},
          {"form", form == numerics::ContrastiveForm::kRatio ? "ratio" : "neg_log_ratio"}};
}

std::string head_prefix(const std::string& level, std::size_t step) { return level + ".step" + std::to_string(step); }

void declare_head_params(ParamStore<float>& store, const std::string& level, std::size_t width, std::size_t steps,
                         ParamInit& init) {
  for (std::size_t i = 1; i <= steps; ++i) {
    store.add(head_prefix(level, i) + ".w", {width, width}, init.xavier(width, width));
    store.add(head_prefix(level, i) + ".b", {width}, ParamInit::constant(width, 0.0f));
  }
}

bool step_gate(double a, double b, double margin) {
  if (margin <= 0.0) return a > b;
  // log(e^b + margin) without overflow
  const double lm = std::log(margin);
  const double hi = std::max(b, lm);
  return a > hi + std::log1p(std::exp(std::min(b, lm) - hi));
}

double step_logit(const ParamStore<double>& params, const std::string& level, std::size_t step,
                  std::span<const double> user_row, std::span<const double> item_row) {
  const auto& w = params.get(head_prefix(level, step) + ".w");
  const auto& b = params.get(head_prefix(level, step) + ".b");
  const std::size_t d = b.numel();
  if (user_row.size() != d || item_row.size() != d) throw DimensionError("step_logit: width mismatch");
  double out = 0.0;
  for (std::size_t c = 0; c < d; ++c) {
    double h = b.at(c);
    for (std::size_t r = 0; r < d; ++r) h += user_row[r] * w.at(r, c);
    out += h * item_row[c];
  }
  return out;
}

template <typename T>
LevelLoss<T> level_loss(Tape<T>& tape, const ParamStore<T>& params, const std::string& level, const Tensor<T>& user,
                        const Tensor<T>& target, std::span<const std::size_t> lengths, std::size_t steps,
                        double temperature, double margin, bool gated, numerics::ContrastiveForm form) {
  if (!(temperature > 0.0)) throw ConfigError("lmp: temperature must be > 0");
  const std::size_t B = lengths.size();
  std::vector<std::size_t> offset(B + 1, 0);
  for (std::size_t j = 0; j < B; ++j) offset[j + 1] = offset[j] + lengths[j];
  if (user.rows() != offset[B] || target.rows() != offset[B] || user.cols() != target.cols()) {
    throw DimensionError("level_loss: user " + numerics::shape_str(user.shape()) + " / target " +
                         numerics::shape_str(target.shape()) + " do not match sequence lengths");
  }
  const std::size_t max_len = B ? *std::max_element(lengths.begin(), lengths.end()) : 0;
  const T inv_tau = static_cast<T>(1.0 / temperature);

  LevelLoss<T> out;
  out.logit_min = std::numeric_limits<double>::infinity();
  out.logit_max = -std::numeric_limits<double>::infinity();
  std::vector<Tensor<T>> projected;  // step heads applied to every user row
  // positive logits of the previous step, indexed by global user row
  std::vector<double> prev_pos, pos(offset[B]);

  for (std::size_t i = 1; i <= steps; ++i) {
    const std::string p = head_prefix(level, i);
    auto h = tape.add_bias(tape.matmul(user, params.get(p + ".w")), params.get(p + ".b"));

    Tensor<T> step_sum;
    std::size_t valid = 0, active = 0;
    std::vector<Tensor<T>> terms;
    std::vector<std::vector<T>> weights;
    for (std::size_t t = 0; t + i <= max_len; ++t) {
      // users with a target at offset t+i-1 supply both rows and columns
      std::vector<std::int64_t> rows, cols;
      for (std::size_t j = 0; j < B; ++j) {
        if (t + i <= lengths[j]) {
          rows.push_back(static_cast<std::int64_t>(offset[j] + t));
          cols.push_back(static_cast<std::int64_t>(offset[j] + t + i - 1));
        }
      }
      if (rows.empty()) continue;
      const std::size_t R = rows.size();
      auto logits = tape.scale(tape.matmul_nt(tape.gather_rows(h, rows), tape.gather_rows(target, cols)), inv_tau);
      for (T v : logits.data()) {
        out.logit_min = std::min(out.logit_min, static_cast<double>(v));
        out.logit_max = std::max(out.logit_max, static_cast<double>(v));
      }
      std::vector<std::size_t> tgt(R);
      std::iota(tgt.begin(), tgt.end(), std::size_t{0});
      std::vector<T> mask(R * R, T(0));
      auto per_row = tape.info_nce_rows(logits, std::span<const T>(mask), tgt, true, form);

      std::vector<T> w(R, T(1));
      for (std::size_t r = 0; r < R; ++r) {
        const double a_now = static_cast<double>(logits.at(r, r));
        pos[static_cast<std::size_t>(rows[r])] = a_now;
        if (gated && i > 1) {
          const double a_prev = prev_pos[static_cast<std::size_t>(rows[r])];
          if (!step_gate(a_prev, a_now, margin)) w[r] = T(0);
        }
        ++valid;
        if (w[r] != T(0)) ++active;
      }
      terms.push_back(per_row);
      weights.push_back(std::move(w));
    }
    const T norm = T(1) / static_cast<T>(std::max<std::size_t>(1, active));
    for (std::size_t n = 0; n < terms.size(); ++n) {
      for (auto& w : weights[n]) w *= norm;
      const std::size_t R = weights[n].size();
      auto contrib = tape.sum(tape.mul(terms[n], Tensor<T>({R}, std::move(weights[n]))));
      step_sum = step_sum.defined() ? tape.add(step_sum, contrib) : contrib;
    }
    if (!step_sum.defined()) step_sum = Tensor<T>::scalar(T(0));
    out.steps.push_back(step_sum);
    out.valid.push_back(valid);
    out.active.push_back(active);
    out.total = out.total.defined() ? tape.add(out.total, step_sum) : step_sum;
    prev_pos = pos;
  }
  return out;
}

template LevelLoss<float> level_loss<float>(Tape<float>&, const ParamStore<float>&, const std::string&,
                                            const Tensor<float>&, const Tensor<float>&, std::span<const std::size_t>,
                                            std::size_t, double, double, bool, numerics::ContrastiveForm);
template LevelLoss<double> level_loss<double>(Tape<double>&, const ParamStore<double>&, const std::string&,
                                              const Tensor<double>&, const Tensor<double>&,
                                              std::span<const std::size_t>, std::size_t, double, double, bool,
                                              numerics::ContrastiveForm);

}  // namespace heterrec::lmp
