#pragma once

#include <stdexcept>
#include <string>

namespace ntp {

/// Arithmetic left the finite range somewhere inside a recorded or plain
/// evaluation. Carries enough context to locate the offending operation.
class poisoned_value_error : public std::runtime_error {
public:
  poisoned_value_error(std::string what, long node, std::string where)
      : std::runtime_error(std::move(what)), node_index(node), location(std::move(where)) {}

  long node_index;       // tape node, or -1 when not tape-recorded
  std::string location;  // e.g. "layer 2, order 3"
};

/// Exact integer arithmetic would wrap around 64 bits.
class overflow_error : public std::runtime_error {
public:
  explicit overflow_error(const std::string& what) : std::runtime_error(what) {}
};

/// A request exceeds a hard resource bound (nested-dual depth, memory budget).
class resource_error : public std::runtime_error {
public:
  explicit resource_error(const std::string& what) : std::runtime_error(what) {}
};

/// Checkpoint or config bytes that cannot be parsed. `offset` is the byte
/// position where parsing gave up (-1 if not applicable).
class parse_error : public std::runtime_error {
public:
  parse_error(const std::string& what, long at = -1) : std::runtime_error(what), offset(at) {}

  long offset;
};

/// Raised by the training loop when a step cannot continue (non-finite
/// gradient, rejected line search with no fallback).
class training_abort : public std::runtime_error {
public:
  explicit training_abort(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace ntp
