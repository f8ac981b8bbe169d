#pragma once

#include <stdexcept>
#include <string>

namespace dcqa {

// All library failures derive from Error so callers can map them
// onto coarse exit categories (config / data / runtime).
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid argument values (bad sizes, out-of-range counts, empty text).
struct ArgumentError : Error {
  using Error::Error;
};

// Tensor dimensions that do not line up.
struct ShapeError : Error {
  using Error::Error;
};

// A softmax/pooling input with no unmasked position.
struct DegenerateInputError : Error {
  using Error::Error;
};

// Sequence or clue length beyond the backend limit.
struct CapacityError : Error {
  using Error::Error;
};

// Malformed record in a dataset file; carries the 1-based line number.
struct ParseError : Error {
  ParseError(const std::string& what, long line_number)
      : Error(what + " (line " + std::to_string(line_number) + ")"), line(line_number) {}
  long line = 0;
};

// Record that parses but violates the dataset schema (e.g. choice count).
struct SchemaError : Error {
  using Error::Error;
};

// Answer label that cannot be mapped to a choice index.
struct LabelError : Error {
  using Error::Error;
};

// Invalid experiment configuration (flag combinations, missing fields).
struct ConfigError : Error {
  using Error::Error;
};

// Filesystem read/write failures.
struct IoError : Error {
  using Error::Error;
};

}  // namespace dcqa
