#pragma once

#include <stdexcept>
#include <string>

namespace sdeq {

// Bad caller input: invariant violations, unknown ids, domain errors.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed files; the message carries file:line:column.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A demand cannot be routed or the capacity region cannot hold it.
class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Iteration budget exhausted without meeting tolerances.
class NonConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sdeq
