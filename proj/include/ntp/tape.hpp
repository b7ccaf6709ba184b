#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ntp/activation.hpp"
#include "ntp/errors.hpp"
#include "ntp/nested_dual.hpp"

namespace ntp {

class Tape;

/// Scalar recorded on a tape. Carries its value so recorded code can be
/// shared with the plain-double path via templates. A Var with idx -1 is an
/// untracked constant: it participates in values but not in gradients.
struct Var {
  double v = 0.0;
  std::int32_t idx = -1;
};

inline double scalar_value(const Var& s) { return s.v; }

/// Append-only record of scalar primitives with local partials. One tape is
/// confined to a single loss evaluation on a single thread; independent
/// tapes may run concurrently.
class Tape {
public:
  struct Node {
    std::int32_t a = -1;  // parent indices, -1 when absent (leaf)
    std::int32_t b = -1;
    double pa = 0.0;  // d(value)/d(parent)
    double pb = 0.0;
  };

  Tape() { activate(); }
  ~Tape() {
    if (current_ptr() == this) current_ptr() = nullptr;
  }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Makes this tape the recording target for Var arithmetic on this thread.
  void activate() { current_ptr() = this; }

  static Tape& current() {
    Tape* t = current_ptr();
    if (!t) throw std::logic_error("Var arithmetic with no active Tape");
    return *t;
  }

  /// Drops all nodes but keeps capacity, so repeated evaluations reuse the
  /// same allocation.
  void clear() {
    nodes_.clear();
    values_.clear();
    leaf_count_ = 0;
    counted_nodes_ = 0;
    counted_leaves_ = 0;
  }

  /// Dry-run mode: follow the exact recording path but store nothing, only
  /// count. Used to size a computation before committing memory to it.
  void set_count_only(bool on) { count_only_ = on; }
  bool count_only() const { return count_only_; }
  std::uint64_t counted_nodes() const { return count_only_ ? counted_nodes_ : nodes_.size(); }

  std::size_t size() const { return nodes_.size(); }
  std::size_t leaf_count() const { return count_only_ ? counted_leaves_ : leaf_count_; }
  /// Number of recorded primitive operations (nodes minus leaves).
  std::size_t op_count() const {
    return count_only_ ? static_cast<std::size_t>(counted_nodes_ - counted_leaves_)
                       : nodes_.size() - leaf_count_;
  }

  /// Bytes a node occupies across recording and one reverse sweep.
  static constexpr std::size_t bytes_per_node() { return sizeof(Node) + 2 * sizeof(double); }

  Var leaf(double v) {
    if (count_only_) {
      ++counted_nodes_;
      ++counted_leaves_;
      return Var{v, -1};
    }
    nodes_.push_back(Node{});
    values_.push_back(v);
    ++leaf_count_;
    return Var{v, static_cast<std::int32_t>(nodes_.size() - 1)};
  }

  Var unary(double v, const Var& x, double px, const char* what) {
    check_finite(v, what);
    if (count_only_) {
      ++counted_nodes_;
      return Var{v, -1};
    }
    nodes_.push_back(Node{x.idx, -1, px, 0.0});
    values_.push_back(v);
    return Var{v, static_cast<std::int32_t>(nodes_.size() - 1)};
  }

  Var binary(double v, const Var& x, double px, const Var& y, double py, const char* what) {
    check_finite(v, what);
    if (count_only_) {
      ++counted_nodes_;
      return Var{v, -1};
    }
    nodes_.push_back(Node{x.idx, y.idx, px, py});
    values_.push_back(v);
    return Var{v, static_cast<std::int32_t>(nodes_.size() - 1)};
  }

  /// Reverse sweep from `out` with the given seed. Returns the adjoint of
  /// every node; index with Var::idx. Leaves that never fed `out` keep 0.
  std::vector<double> backward(const Var& out, double seed = 1.0) const {
    if (count_only_) throw std::logic_error("backward on a count-only tape");
    std::vector<double> adj(nodes_.size(), 0.0);
    if (out.idx < 0) return adj;
    adj[static_cast<std::size_t>(out.idx)] = seed;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      const double a = adj[i];
      if (a == 0.0) continue;
      const Node& n = nodes_[i];
      if (n.a >= 0) adj[static_cast<std::size_t>(n.a)] += n.pa * a;
      if (n.b >= 0) adj[static_cast<std::size_t>(n.b)] += n.pb * a;
    }
    return adj;
  }

  double value_of(std::int32_t idx) const { return values_[static_cast<std::size_t>(idx)]; }

private:
  static Tape*& current_ptr() {
    thread_local Tape* t = nullptr;
    return t;
  }

  void check_finite(double v, const char* what) const {
    if (!std::isfinite(v))
      throw poisoned_value_error(std::string("non-finite value in '") + what + "'",
                                 static_cast<long>(nodes_.size()), what);
  }

  std::vector<Node> nodes_;
  std::vector<double> values_;
  std::size_t leaf_count_ = 0;
  bool count_only_ = false;
  std::uint64_t counted_nodes_ = 0;
  std::uint64_t counted_leaves_ = 0;
};

// -- recorded arithmetic ------------------------------------------------------

inline Var operator+(const Var& x, const Var& y) {
  return Tape::current().binary(x.v + y.v, x, 1.0, y, 1.0, "add");
}
inline Var operator-(const Var& x, const Var& y) {
  return Tape::current().binary(x.v - y.v, x, 1.0, y, -1.0, "sub");
}
inline Var operator*(const Var& x, const Var& y) {
  return Tape::current().binary(x.v * y.v, x, y.v, y, x.v, "mul");
}
inline Var operator/(const Var& x, const Var& y) {
  if (y.v == 0.0)
    throw poisoned_value_error("division by zero", static_cast<long>(Tape::current().size()), "div");
  const double v = x.v / y.v;
  return Tape::current().binary(v, x, 1.0 / y.v, y, -v / y.v, "div");
}
inline Var operator-(const Var& x) { return Tape::current().unary(-x.v, x, -1.0, "neg"); }

inline Var operator+(const Var& x, double c) { return Tape::current().unary(x.v + c, x, 1.0, "add"); }
inline Var operator+(double c, const Var& x) { return x + c; }
inline Var operator-(const Var& x, double c) { return Tape::current().unary(x.v - c, x, 1.0, "sub"); }
inline Var operator-(double c, const Var& x) { return Tape::current().unary(c - x.v, x, -1.0, "sub"); }
inline Var operator*(const Var& x, double c) { return Tape::current().unary(x.v * c, x, c, "mul"); }
inline Var operator*(double c, const Var& x) { return x * c; }
inline Var operator/(const Var& x, double c) { return Tape::current().unary(x.v / c, x, 1.0 / c, "div"); }

inline Var tanh(const Var& x) {
  const double t = std::tanh(x.v);
  return Tape::current().unary(t, x, 1.0 - t * t, "tanh");
}

inline Var logistic(const Var& x) {
  const double s = logistic(x.v);
  return Tape::current().unary(s, x, s * (1.0 - s), "logistic");
}

inline Var operator/(double c, const Var& x) {
  if (x.v == 0.0)
    throw poisoned_value_error("division by zero", static_cast<long>(Tape::current().size()), "div");
  const double v = c / x.v;
  return Tape::current().unary(v, x, -v / x.v, "div");
}

inline Var pow_int(const Var& x, int k) {
  if (k == 0) return Tape::current().leaf(1.0);
  Var r = x;
  for (int i = 1; i < k; ++i) r = r * x;
  return r;
}

/// Activation stack recorded on the tape: entry k has value sigma^(k)(a) and
/// local partial sigma^(k+1)(a), taken from one double stack of order n+1.
inline void act_stack(ActivationKind kind, const Var& a, int n, std::vector<Var>& out) {
  if (kind != ActivationKind::Tanh) throw std::invalid_argument("unknown activation kind");
  thread_local std::vector<double> s;
  detail::tanh_stack_raw(a.v, n + 1, s);
  out.resize(static_cast<std::size_t>(n) + 1);
  Tape& tape = Tape::current();
  for (int k = 0; k <= n; ++k)
    out[static_cast<std::size_t>(k)] =
        tape.unary(s[static_cast<std::size_t>(k)], a, s[static_cast<std::size_t>(k) + 1], "act");
}

/// Clears `tape`, records `f` on it and returns the scalar result. `f`
/// takes Tape& and returns the output Var, which is also stored in `out`
/// for a later backward call.
template <class F>
double tape_forward_record(Tape& tape, F&& f, Var& out) {
  tape.clear();
  tape.activate();
  out = f(tape);
  return out.v;
}

/// Free-function form of Tape::backward.
inline std::vector<double> tape_backward(const Tape& tape, const Var& out, double seed = 1.0) {
  return tape.backward(out, seed);
}

}  // namespace ntp
