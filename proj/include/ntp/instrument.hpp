#pragma once

#include <cstdint>

namespace ntp::instrument {

/// Thread-local counters backing the memory and work measurements.
///
/// `stack_buffers`/`stack_reals` count derivative-stack allocations (the
/// dominant working set of the n-TP forward pass). `prim_ops` accumulates
/// primitive floating-point operations of forward_ntp when `track_ops` is
/// enabled; timing paths leave it off.
struct Counters {
  std::uint64_t stack_buffers = 0;
  std::uint64_t stack_reals = 0;
  std::uint64_t prim_ops = 0;
  bool track_ops = false;

  void reset() {
    stack_buffers = 0;
    stack_reals = 0;
    prim_ops = 0;
  }
};

inline Counters& counters() {
  thread_local Counters c;
  return c;
}

/// Resets the thread's counters on entry and (optionally) enables op
/// tracking for the enclosed scope.
class Scope {
public:
  explicit Scope(bool track_ops = false) {
    saved_ = counters();
    counters().reset();
    counters().track_ops = track_ops;
  }
  ~Scope() { counters() = saved_; }

  Scope(const Scope&) = delete;
  Scope& operator=(const Scope&) = delete;

  std::uint64_t stack_buffers() const { return counters().stack_buffers; }
  std::uint64_t stack_reals() const { return counters().stack_reals; }
  std::uint64_t prim_ops() const { return counters().prim_ops; }

private:
  Counters saved_;
};

}  // namespace ntp::instrument
