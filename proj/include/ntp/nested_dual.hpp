#pragma once

#include <cmath>
#include <string>
#include <type_traits>
#include <vector>

#include "ntp/activation.hpp"
#include "ntp/errors.hpp"

namespace ntp {

/// Deepest nesting the dual engine will instantiate. Object size doubles per
/// level (a Dual<12> holds 4096 scalars), so this is a memory bound as much
/// as a compile-time one.
inline constexpr int kMaxNestedDepth = 12;

/// First-order dual numbers nested N deep over a base scalar B (double, or a
/// tape Var when the computation must also be reverse-differentiated).
/// Arithmetic carries exact input-derivatives through analytic primitives;
/// the coefficient of the full epsilon product is the N-th derivative. Cost
/// grows geometrically with N, which is the point: this is the exponential
/// baseline and exactness oracle, not a fast path.
template <int N, class B = double>
struct Dual {
  Dual<N - 1, B> a;  // primal
  Dual<N - 1, B> b;  // tangent
};

template <class B>
struct Dual<0, B> {
  B v{};
};

// -- construction -----------------------------------------------------------

template <int N, class B>
Dual<N, B> dual_constant(double c);

template <class T>
struct is_dual : std::false_type {};
template <int N, class B>
struct is_dual<Dual<N, B>> : std::true_type {};

namespace detail {

template <class B>
struct base_maker {
  static B constant(double c) { return B{c}; }
};
template <int N, class B>
struct base_maker<Dual<N, B>> {
  static Dual<N, B> constant(double c) { return dual_constant<N, B>(c); }
};

}  // namespace detail

template <int N, class B = double>
Dual<N, B> dual_constant(double c) {
  if constexpr (N == 0) return Dual<0, B>{detail::base_maker<B>::constant(c)};
  else return Dual<N, B>{dual_constant<N - 1, B>(c), dual_constant<N - 1, B>(0.0)};
}

/// Seed for d/dx: every nesting level carries tangent 1 on its primal chain.
template <int N, class B = double>
Dual<N, B> dual_variable(B x) {
  if constexpr (N == 0) return Dual<0, B>{x};
  else return Dual<N, B>{dual_variable<N - 1, B>(x), dual_constant<N - 1, B>(1.0)};
}

// -- arithmetic --------------------------------------------------------------

template <class B> Dual<0, B> operator+(const Dual<0, B>& x, const Dual<0, B>& y) { return {x.v + y.v}; }
template <class B> Dual<0, B> operator-(const Dual<0, B>& x, const Dual<0, B>& y) { return {x.v - y.v}; }
template <class B> Dual<0, B> operator*(const Dual<0, B>& x, const Dual<0, B>& y) { return {x.v * y.v}; }
template <class B> Dual<0, B> operator/(const Dual<0, B>& x, const Dual<0, B>& y) { return {x.v / y.v}; }
template <class B> Dual<0, B> operator-(const Dual<0, B>& x) { return {-x.v}; }

template <int N, class B>
Dual<N, B> operator+(const Dual<N, B>& x, const Dual<N, B>& y) {
  return {x.a + y.a, x.b + y.b};
}
template <int N, class B>
Dual<N, B> operator-(const Dual<N, B>& x, const Dual<N, B>& y) {
  return {x.a - y.a, x.b - y.b};
}
template <int N, class B>
Dual<N, B> operator-(const Dual<N, B>& x) {
  return {-x.a, -x.b};
}
template <int N, class B>
Dual<N, B> operator*(const Dual<N, B>& x, const Dual<N, B>& y) {
  return {x.a * y.a, x.a * y.b + x.b * y.a};
}
template <int N, class B>
Dual<N, B> operator/(const Dual<N, B>& x, const Dual<N, B>& y) {
  const auto q = x.a / y.a;
  return {q, (x.b - q * y.b) / y.a};
}

// Mixing with double constants touches only the components it has to, so the
// baseline is not padded with dead zero-arithmetic.
template <class B> Dual<0, B> operator+(const Dual<0, B>& x, double c) { return {x.v + c}; }
template <class B> Dual<0, B> operator-(const Dual<0, B>& x, double c) { return {x.v - c}; }
template <class B> Dual<0, B> operator*(const Dual<0, B>& x, double c) { return {x.v * c}; }
template <class B> Dual<0, B> operator/(const Dual<0, B>& x, double c) { return {x.v / c}; }
template <class B> Dual<0, B> operator-(double c, const Dual<0, B>& x) { return {c - x.v}; }

template <int N, class B>
Dual<N, B> operator+(const Dual<N, B>& x, double c) {
  return {x.a + c, x.b};
}
template <int N, class B>
Dual<N, B> operator-(const Dual<N, B>& x, double c) {
  return {x.a - c, x.b};
}
template <int N, class B>
Dual<N, B> operator-(double c, const Dual<N, B>& x) {
  return {c - x.a, -x.b};
}
template <int N, class B>
Dual<N, B> operator*(const Dual<N, B>& x, double c) {
  return {x.a * c, x.b * c};
}
template <int N, class B>
Dual<N, B> operator/(const Dual<N, B>& x, double c) {
  return {x.a / c, x.b / c};
}
template <int N, class B>
Dual<N, B> operator+(double c, const Dual<N, B>& x) {
  return x + c;
}
template <int N, class B>
Dual<N, B> operator*(double c, const Dual<N, B>& x) {
  return x * c;
}

// Mixing with base-scalar values (e.g. tape Vars holding parameters). A
// parameter is constant in x, so only the 2^N components scale; a full dual
// product would triple the work for nothing.
template <class B>
  requires(!std::is_same_v<B, double>)
Dual<0, B> operator*(const Dual<0, B>& x, const B& c) {
  return {x.v * c};
}
template <int N, class B>
  requires(!std::is_same_v<B, double>)
Dual<N, B> operator*(const Dual<N, B>& x, const B& c) {
  return {x.a * c, x.b * c};
}
template <int N, class B>
  requires(!std::is_same_v<B, double>)
Dual<N, B> operator*(const B& c, const Dual<N, B>& x) {
  return x * c;
}
template <class B>
  requires(!std::is_same_v<B, double>)
Dual<0, B> operator+(const Dual<0, B>& x, const B& c) {
  return {x.v + c};
}
template <int N, class B>
  requires(!std::is_same_v<B, double>)
Dual<N, B> operator+(const Dual<N, B>& x, const B& c) {
  return {x.a + c, x.b};
}
template <int N, class B>
  requires(!std::is_same_v<B, double>)
Dual<N, B> operator+(const B& c, const Dual<N, B>& x) {
  return x + c;
}

// -- analytic primitives ------------------------------------------------------

template <class B>
Dual<0, B> tanh(const Dual<0, B>& x) {
  using std::tanh;
  return {tanh(x.v)};
}

template <int N, class B>
Dual<N, B> tanh(const Dual<N, B>& x) {
  const Dual<N - 1, B> t = tanh(x.a);
  return {t, x.b * (1.0 - t * t)};
}

/// Logistic squash with a saturation guard so the result stays strictly
/// inside (0, 1) even when exp underflows.
inline double logistic(double x) {
  const double s = 1.0 / (1.0 + std::exp(-x));
  const double eps = 1e-12;
  return s < eps ? eps : (s > 1.0 - eps ? 1.0 - eps : s);
}

template <class B>
Dual<0, B> logistic(const Dual<0, B>& x) {
  return {logistic(x.v)};
}

template <int N, class B>
Dual<N, B> logistic(const Dual<N, B>& x) {
  const Dual<N - 1, B> s = logistic(x.a);
  return {s, x.b * (s * (1.0 - s))};
}

template <int N, class B>
Dual<N, B> pow_int(const Dual<N, B>& x, int k) {
  Dual<N, B> r = dual_constant<N, B>(1.0);
  for (int i = 0; i < k; ++i) r = r * x;
  return r;
}
inline double pow_int(double x, int k) {
  double r = 1.0;
  for (int i = 0; i < k; ++i) r *= x;
  return r;
}

// -- extraction ---------------------------------------------------------------

/// Plain double payload of any scalar type used by the generic evaluation
/// paths (double itself, tape Var, nested duals).
inline double scalar_value(double s) { return s; }

template <class B>
B dual_value(const Dual<0, B>& x) {
  return x.v;
}
template <int N, class B>
B dual_value(const Dual<N, B>& x) {
  return dual_value(x.a);
}

/// Coefficient of the product of the k outermost epsilons: the k-th
/// derivative when x was seeded by dual_variable.
template <class B>
B dual_derivative(const Dual<0, B>& x, int k) {
  return k == 0 ? x.v : B{};
}
template <int N, class B>
B dual_derivative(const Dual<N, B>& x, int k) {
  return k > 0 ? dual_derivative(x.b, k - 1) : dual_value(x.a);
}

template <int N, class B>
double scalar_value(const Dual<N, B>& x) {
  return scalar_value(dual_value(x));
}

/// Activation stacks on first-order duals (used when the n-TP forward runs
/// on directional-derivative scalars). One double stack of order n+1 feeds
/// value and tangent of every entry.
inline void act_stack(ActivationKind kind, const Dual<1, double>& a, int n,
                      std::vector<Dual<1, double>>& out) {
  if (kind != ActivationKind::Tanh) throw std::invalid_argument("unknown activation kind");
  thread_local std::vector<double> s;
  detail::tanh_stack_raw(a.a.v, n + 1, s);
  out.resize(static_cast<std::size_t>(n) + 1);
  for (int k = 0; k <= n; ++k)
    out[static_cast<std::size_t>(k)] =
        Dual<1, double>{Dual<0, double>{s[static_cast<std::size_t>(k)]},
                        Dual<0, double>{a.b.v * s[static_cast<std::size_t>(k) + 1]}};
}

inline void act_stack(ActivationKind kind, double a, int n, std::vector<double>& out) {
  if (kind != ActivationKind::Tanh) throw std::invalid_argument("unknown activation kind");
  detail::tanh_stack_raw(a, n, out);
}

namespace detail {

template <class F, int N>
double nested_eval(F&& f, double x) {
  return dual_derivative(f(dual_variable<N>(x)), N);
}

template <class F, int N>
void nested_eval_stack(F&& f, double x, std::vector<double>& out) {
  const auto r = f(dual_variable<N>(x));
  out.resize(static_cast<std::size_t>(N) + 1);
  for (int k = 0; k <= N; ++k) out[static_cast<std::size_t>(k)] = dual_derivative(r, k);
}

inline void check_nested_order(int n) {
  if (n < 0) throw std::invalid_argument("nested derivative: negative order");
  if (n > kMaxNestedDepth)
    throw resource_error("nested dual depth limit (" + std::to_string(kMaxNestedDepth) +
                         ") exceeded: order " + std::to_string(n));
}

}  // namespace detail

/// d^n f / dx^n at x by n-fold dual nesting. Exact for analytic closures
/// built from the primitives above; cost grows roughly 2^n..3^n.
template <class F>
double nested_derivative(F&& f, double x, int n) {
  detail::check_nested_order(n);
  switch (n) {
    case 0: return dual_value(f(dual_variable<0>(x)));
    case 1: return detail::nested_eval<F, 1>(std::forward<F>(f), x);
    case 2: return detail::nested_eval<F, 2>(std::forward<F>(f), x);
    case 3: return detail::nested_eval<F, 3>(std::forward<F>(f), x);
    case 4: return detail::nested_eval<F, 4>(std::forward<F>(f), x);
    case 5: return detail::nested_eval<F, 5>(std::forward<F>(f), x);
    case 6: return detail::nested_eval<F, 6>(std::forward<F>(f), x);
    case 7: return detail::nested_eval<F, 7>(std::forward<F>(f), x);
    case 8: return detail::nested_eval<F, 8>(std::forward<F>(f), x);
    case 9: return detail::nested_eval<F, 9>(std::forward<F>(f), x);
    case 10: return detail::nested_eval<F, 10>(std::forward<F>(f), x);
    case 11: return detail::nested_eval<F, 11>(std::forward<F>(f), x);
    case 12: return detail::nested_eval<F, 12>(std::forward<F>(f), x);
  }
  return 0.0;  // unreachable
}

/// All derivatives 0..n of f at x from a single depth-n evaluation.
template <class F>
std::vector<double> nested_derivative_stack(F&& f, double x, int n) {
  detail::check_nested_order(n);
  std::vector<double> out;
  switch (n) {
    case 0: out = {dual_value(f(dual_variable<0>(x)))}; break;
    case 1: detail::nested_eval_stack<F, 1>(std::forward<F>(f), x, out); break;
    case 2: detail::nested_eval_stack<F, 2>(std::forward<F>(f), x, out); break;
    case 3: detail::nested_eval_stack<F, 3>(std::forward<F>(f), x, out); break;
    case 4: detail::nested_eval_stack<F, 4>(std::forward<F>(f), x, out); break;
    case 5: detail::nested_eval_stack<F, 5>(std::forward<F>(f), x, out); break;
    case 6: detail::nested_eval_stack<F, 6>(std::forward<F>(f), x, out); break;
    case 7: detail::nested_eval_stack<F, 7>(std::forward<F>(f), x, out); break;
    case 8: detail::nested_eval_stack<F, 8>(std::forward<F>(f), x, out); break;
    case 9: detail::nested_eval_stack<F, 9>(std::forward<F>(f), x, out); break;
    case 10: detail::nested_eval_stack<F, 10>(std::forward<F>(f), x, out); break;
    case 11: detail::nested_eval_stack<F, 11>(std::forward<F>(f), x, out); break;
    case 12: detail::nested_eval_stack<F, 12>(std::forward<F>(f), x, out); break;
  }
  return out;
}

}  // namespace ntp
