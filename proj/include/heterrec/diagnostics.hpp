#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "heterrec/htfl/item_record.hpp"
#include "heterrec/htfl/schema.hpp"
#include "heterrec/model_config.hpp"

namespace heterrec::diagnostics {

// A three-feature toy catalog (categorical, numerical, multimodal, d_f = 8)
// small enough for exhaustive finite-difference checks.
htfl::FeatureSchema toy_schema();
std::vector<htfl::ItemRecord> toy_items(std::size_t n = 8);
ModelConfig toy_model_config();

struct CheckResult {
  std::string name;
  double max_rel_error = 0.0;
  bool passed = false;
};

struct SuiteResult {
  std::uint64_t seed = 0;
  std::vector<CheckResult> checks;

  bool passed() const;
  double max_rel_error() const;
};

// Finite-difference checks of every tape primitive, one attention block with
// the time-gap bias, and the complete two-tower loss on the toy catalog.
// `corrupt_op` names a primitive whose backward rule is deliberately broken.
SuiteResult gradient_suite(std::uint64_t seed, const std::string& corrupt_op = "");

}  // namespace heterrec::diagnostics
