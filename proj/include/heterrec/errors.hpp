#pragma once

#include <stdexcept>
#include <string>

namespace heterrec {

// Shape disagreement between operands.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Lookup id outside of a table or vocabulary.
struct IndexError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

// A caller broke an operation's precondition (non-scalar loss, negative gap, ...).
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

// Softmax row with no admissible entry.
struct InvalidMaskError : std::domain_error {
  using std::domain_error::domain_error;
};

// Malformed or inconsistent input data. The CLI maps this to exit code 1.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid configuration. The CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Training produced NaN/Inf.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace heterrec
