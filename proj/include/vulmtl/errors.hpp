#pragma once

#include <stdexcept>
#include <string>

namespace vulmtl {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape disagreement between operands.
struct DimensionError : Error {
  using Error::Error;
};

// Out-of-range index (class label, row selector, ...).
struct IndexError : Error {
  using Error::Error;
};

// API misuse: calling an operation outside its contract.
struct ContractError : Error {
  using Error::Error;
};

// Structurally valid input on which the operation is undefined
// (empty source, fully masked loss, ...).
struct DegenerateInputError : Error {
  using Error::Error;
};

// Non-finite values where finite ones are required.
struct NumericError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

struct ValidationError : Error {
  using Error::Error;
};

}  // namespace vulmtl
