#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "ntp/partitions.hpp"

namespace ntp {

/// Smooth, parameter-free activations. Only tanh for now; adding a variant
/// means supplying exact derivative stacks up to kMaxOrder.
enum class ActivationKind : int { Tanh = 0 };

namespace detail {

// Internal stacks go two orders past the public cap: recording a stack on
// the tape needs sigma^(k+1) partials, and first-order duals one more.
inline constexpr int kMaxStackOrder = kMaxOrder + 2;

/// Coefficients of P_k with P_0(t) = t, P_{k+1}(t) = P_k'(t) * (1 - t^2),
/// so that tanh^(k)(a) = P_k(tanh a). Coefficients are integers that stay
/// below 2^53 through order 18, hence exact in double.
inline const std::vector<std::vector<double>>& tanh_polynomials() {
  static const std::vector<std::vector<double>> table = [] {
    std::vector<std::vector<double>> polys;
    polys.push_back({0.0, 1.0});  // P_0(t) = t
    for (int k = 0; k < kMaxStackOrder; ++k) {
      const auto& p = polys.back();
      // d = P_k'
      std::vector<double> d(p.size() > 1 ? p.size() - 1 : 1, 0.0);
      for (std::size_t i = 1; i < p.size(); ++i) d[i - 1] = static_cast<double>(i) * p[i];
      // next = d * (1 - t^2)
      std::vector<double> next(d.size() + 2, 0.0);
      for (std::size_t i = 0; i < d.size(); ++i) {
        next[i] += d[i];
        next[i + 2] -= d[i];
      }
      polys.push_back(std::move(next));
    }
    return polys;
  }();
  return table;
}

/// Compensated Horner (error-free transformations). The P_k coefficients
/// alternate in sign and grow like tangent numbers, so near |t| = 1 a plain
/// Horner cancels down to ~1e-11 of the stack scale; carrying the rounding
/// residual keeps the result at a few ulps instead.
inline double eval_poly(const std::vector<double>& c, double t) {
  if (c.empty()) return 0.0;
  double s = c.back();
  double comp = 0.0;
  for (std::size_t i = c.size() - 1; i-- > 0;) {
    const double p = s * t;
    const double pe = std::fma(s, t, -p);
    const double z = p + c[i];
    const double zt = z - p;
    const double se = (p - (z - zt)) + (c[i] - zt);
    s = z;
    comp = comp * t + (pe + se);
  }
  return s + comp;
}

/// out[k] = tanh^(k)(a) for k = 0..n. No range check beyond the table size.
inline void tanh_stack_raw(double a, int n, std::vector<double>& out) {
  const auto& polys = tanh_polynomials();
  if (n < 0 || n >= static_cast<int>(polys.size()))
    throw std::invalid_argument("tanh stack order out of table range");
  const double t = std::tanh(a);
  out.resize(static_cast<std::size_t>(n) + 1);
  out[0] = t;
  for (int k = 1; k <= n; ++k) out[static_cast<std::size_t>(k)] = eval_poly(polys[static_cast<std::size_t>(k)], t);
}

}  // namespace detail

/// sigma, sigma', ..., sigma^(n) at `a`. Element k is the exact k-th
/// derivative up to 64-bit rounding.
inline std::vector<double> activation_stack(ActivationKind kind, double a, int n) {
  if (n < 0 || n > kMaxOrder)
    throw std::invalid_argument("activation_stack: order must be in [0, " +
                                std::to_string(kMaxOrder) + "]");
  switch (kind) {
    case ActivationKind::Tanh: {
      std::vector<double> out;
      detail::tanh_stack_raw(a, n, out);
      return out;
    }
  }
  throw std::invalid_argument("unknown activation kind");
}

inline const char* activation_name(ActivationKind kind) {
  switch (kind) {
    case ActivationKind::Tanh: return "tanh";
  }
  return "?";
}

}  // namespace ntp
