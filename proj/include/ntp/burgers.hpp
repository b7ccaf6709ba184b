#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "ntp/errors.hpp"
#include "ntp/network.hpp"

namespace ntp::burgers {

/// Bracket for the trainable exponent of profile k: the k-th smooth profile
/// sits at 1/(2k), and (1/(2k+1), min(1, 1/(2k-1))) contains it and no other
/// smooth value.
inline std::pair<double, double> lambda_range(int k) {
  if (k < 1) throw std::invalid_argument("profile index must be >= 1");
  const double lo = 1.0 / (2.0 * k + 1.0);
  const double hi = (k == 1) ? 1.0 : 1.0 / (2.0 * k - 1.0);
  return {lo, hi};
}

inline double lambda_true(int k) { return 1.0 / (2.0 * k); }

/// Constrained exponent: logistic squash of the raw trainable into (lo, hi).
template <class S>
S lambda_value(const S& raw, double lo, double hi) {
  return lo + (hi - lo) * logistic(raw);
}

/// The inverse problem for one profile: residual collocation grid, origin
/// smoothness points, and the raw trainable exponent.
struct SelfSimilarProblem {
  int profile_k = 1;
  double lambda_raw = 0.0;
  std::pair<double, double> range{1.0 / 3.0, 1.0};
  std::vector<double> collocation_points;  // sorted, in [-x_max, x_max]
  std::vector<double> origin_points;       // clustered near 0
  double x_max = 2.0;

  double lambda() const { return lambda_value(lambda_raw, range.first, range.second); }
  double lambda_error() const { return std::abs(lambda() - lambda_true(profile_k)); }
  /// Network derivative order the smoothness condition needs: 2k+1.
  int origin_order() const { return 2 * profile_k + 1; }
};

inline std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> xs(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    xs[static_cast<std::size_t>(i)] = (n == 1) ? a : a + (b - a) * static_cast<double>(i) / (n - 1);
  return xs;
}

inline SelfSimilarProblem make_problem(int k, double x_max = 2.0, int n_colloc = 256,
                                       int n_origin = 33, double origin_halfwidth = 0.1) {
  SelfSimilarProblem p;
  p.profile_k = k;
  p.range = lambda_range(k);
  p.x_max = x_max;
  p.collocation_points = linspace(-x_max, x_max, n_colloc);
  p.origin_points = linspace(-origin_halfwidth, origin_halfwidth, n_origin);
  return p;
}

// -- residual -----------------------------------------------------------------

/// R = -lambda*U + ((1+lambda)*X + U) * U'
template <class S>
S residual(const S& u, const S& du, double x, const S& lambda) {
  return (lambda * x + (x + u)) * du - lambda * u;
}

inline double residual(const DerivativeStack<double>& st, int b, double x, double lambda) {
  return residual(st.output(0, b), st.output(1, b), x, lambda);
}

namespace detail {

inline double binom(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

}  // namespace detail

/// m-th x-derivative of the residual by the general Leibniz rule:
///   d^m R = -lambda U^(m) + ((1+lambda)X + U) U^(m+1)
///           + m ((1+lambda) + U') U^(m)
///           + sum_{i=2..m} C(m,i) U^(i) U^(m-i+1)
/// `u` must hold derivatives 0..m+1 at the point.
template <class S>
S residual_x_derivatives(const std::vector<S>& u, const S& lambda, double x, int m) {
  if (static_cast<int>(u.size()) < m + 2)
    throw std::invalid_argument("residual_x_derivatives: stack order too low for m=" + std::to_string(m));
  if (m == 0) return residual(u[0], u[1], x, lambda);
  const auto& um = u[static_cast<std::size_t>(m)];
  const auto& um1 = u[static_cast<std::size_t>(m) + 1];
  S r = (lambda * x + (x + u[0])) * um1 - lambda * um;
  r = r + static_cast<double>(m) * ((lambda + u[1]) * um + um);  // m((1+l)+U')U^(m), split to reuse S ops
  for (int i = 2; i <= m; ++i) {
    const double c = detail::binom(m, i);
    S t = u[static_cast<std::size_t>(i)] * u[static_cast<std::size_t>(m - i) + 1];
    if (c != 1.0) t = t * c;
    r = r + t;
  }
  return r;
}

/// Stack accessor convenience for the double path.
inline double residual_x_derivatives(const DerivativeStack<double>& st, double lambda, double x, int m,
                                     int b) {
  std::vector<double> u(static_cast<std::size_t>(m) + 2);
  for (int i = 0; i <= m + 1; ++i) u[static_cast<std::size_t>(i)] = st.output(i, b);
  return residual_x_derivatives(u, lambda, x, m);
}

// -- exact solution -------------------------------------------------------------

/// X(U) = -U - C U^{2k+1}, the implicit form of the k-th smooth profile.
/// Powers by repeated multiplication keep odd symmetry bitwise exact.
inline double profile_x_of_u(int k, double C, double u) {
  return -u - C * pow_int(u, 2 * k + 1);
}

/// dX/dU; strictly <= -1, so X(U) is globally invertible.
inline double profile_dx_du(int k, double C, double u) {
  return -1.0 - C * (2.0 * k + 1.0) * pow_int(u, 2 * k);
}

/// U' (X) on the true profile via implicit differentiation: 1 / X'(U).
inline double profile_du_dx(int k, double C, double u) { return 1.0 / profile_dx_du(k, C, u); }

/// Solves X(U) = x for U (monotone; bisection bracket then Newton polish).
inline double profile_u_of_x(int k, double C, double x) {
  double lo = -(std::abs(x) + 1.0), hi = std::abs(x) + 1.0;  // X(lo) > x > X(hi)
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (profile_x_of_u(k, C, mid) > x) lo = mid;
    else hi = mid;
  }
  double u = 0.5 * (lo + hi);
  for (int it = 0; it < 8; ++it) u -= (profile_x_of_u(k, C, u) - x) / profile_dx_du(k, C, u);
  return u;
}

/// Sampled true profile: pairs (X(U), U) over a U-grid.
struct TrueProfile {
  int k = 1;
  double C = 1.0;
  std::vector<std::pair<double, double>> samples;  // (X, U)
};

inline TrueProfile true_profile_sample(int k, double C, const std::vector<double>& u_grid) {
  if (k < 1) throw std::invalid_argument("profile index must be >= 1");
  if (C <= 0.0) throw std::invalid_argument("profile constant must be positive");
  TrueProfile tp;
  tp.k = k;
  tp.C = C;
  tp.samples.reserve(u_grid.size());
  for (double u : u_grid) tp.samples.emplace_back(profile_x_of_u(k, C, u), u);
  return tp;
}

/// Derivatives U, U', ..., U^(m) of the true profile at a given X, obtained
/// by reverting the Taylor series of the polynomial X(U) about U0 = U(X).
/// X'(U) never enters the unit disk around zero, so the reversion is stable
/// at every order used here.
inline std::vector<double> true_profile_stack(int k, double C, double x, int m) {
  const int q = 2 * k + 1;
  const double u0 = profile_u_of_x(k, C, x);
  // xc[i] = X^{(i)}(u0) / i!  for i = 1..m  (Taylor coefficients, no constant)
  std::vector<double> xc(static_cast<std::size_t>(m) + 1, 0.0);
  for (int i = 1; i <= m; ++i) {
    double c = 0.0;
    if (i == 1) c = -1.0 - C * q * pow_int(u0, q - 1);
    else if (i <= q)
      c = -C * detail::binom(q, i) * pow_int(u0, q - i);
    xc[static_cast<std::size_t>(i)] = c;
  }
  // Revert: find uc with X-series(uc-series) = z. Triangular in the order.
  std::vector<double> uc(static_cast<std::size_t>(m) + 1, 0.0);
  for (int j = 1; j <= m; ++j) {
    // composition coefficient of z^j with uc[j] still zero
    std::vector<double> pw(static_cast<std::size_t>(m) + 1, 0.0);
    pw[0] = 1.0;  // uc^0
    double comp_j = 0.0;
    for (int i = 1; i <= j; ++i) {
      // pw <- pw * uc (truncated at order j)
      std::vector<double> nx(static_cast<std::size_t>(m) + 1, 0.0);
      for (int a = 0; a <= j; ++a)
        for (int b2 = 1; a + b2 <= j; ++b2) nx[static_cast<std::size_t>(a + b2)] += pw[static_cast<std::size_t>(a)] * uc[static_cast<std::size_t>(b2)];
      pw = nx;
      comp_j += xc[static_cast<std::size_t>(i)] * pw[static_cast<std::size_t>(j)];
    }
    const double target = (j == 1) ? 1.0 : 0.0;
    uc[static_cast<std::size_t>(j)] = (target - comp_j) / xc[1];
  }
  std::vector<double> out(static_cast<std::size_t>(m) + 1);
  out[0] = u0;
  double fact = 1.0;
  for (int j = 1; j <= m; ++j) {
    fact *= j;
    out[static_cast<std::size_t>(j)] = uc[static_cast<std::size_t>(j)] * fact;
  }
  return out;
}

// -- loss -----------------------------------------------------------------------

/// Weights and sizes of the composite training loss.
struct LossConfig {
  int sobolev_order = 1;             // m in the Sobolev sum
  std::vector<double> q = {1.0, 1.0};  // Q_0..Q_m
  int origin_order = 3;              // n* = 2k+1
  double origin_weight = 1.0;
  double bc_weight = 10.0;
  double anchor_weight = 10.0;  // Dirichlet anchors at +-x_max pinning the C=1 representative
  int n_colloc = 256;
  int n_origin = 33;
};

inline LossConfig default_loss_config(int k) {
  LossConfig c;
  c.origin_order = 2 * k + 1;
  return c;
}

/// Loss component values (unweighted means), reported per epoch.
struct LossBreakdown {
  std::vector<double> sobolev;  // mean |d^j R|^2, j = 0..m
  double origin = 0.0;          // mean |d^{n*-1} R|^2 near 0
  double bc = 0.0;              // |U(0)|^2 + |U'(0)+1|^2
  double anchor = 0.0;          // boundary Dirichlet mismatch
  double total = 0.0;
};

/// Composite loss over the problem's grids, evaluated through a single
/// batched n-TP sweep at order n*+1. Points are ordered collocation, origin,
/// 0, +x_max, -x_max; reductions run in ascending index order so repeated
/// evaluations are bit-identical.
template <class S>
S total_loss(const DenseNet& net, const ParamSet<S>& params, const S& lambda_raw,
             const SelfSimilarProblem& problem, const LossConfig& config, const FaaTable& table,
             LossBreakdown* breakdown = nullptr, std::vector<S>* component_vars = nullptr) {
  if (config.origin_order != problem.origin_order())
    throw std::invalid_argument("loss config origin order must be 2k+1 for profile k");
  if (static_cast<int>(config.q.size()) != config.sobolev_order + 1)
    throw std::invalid_argument("need one Q weight per Sobolev order");
  const int nstar = config.origin_order;
  const int order = nstar + 1;
  if (config.sobolev_order + 1 > order)
    throw std::invalid_argument("sobolev order exceeds available stack orders");

  const S lambda = lambda_value(lambda_raw, problem.range.first, problem.range.second);

  std::vector<double> xs = problem.collocation_points;
  xs.insert(xs.end(), problem.origin_points.begin(), problem.origin_points.end());
  const std::size_t at_zero = xs.size();
  xs.push_back(0.0);
  xs.push_back(problem.x_max);
  xs.push_back(-problem.x_max);
  const std::size_t nc = problem.collocation_points.size();
  const std::size_t no = problem.origin_points.size();

  const auto st = forward_ntp(net, params, xs, order, table);

  std::vector<S> u(static_cast<std::size_t>(order) + 1);
  auto point_stack = [&](std::size_t b) {
    for (int i = 0; i <= order; ++i) u[static_cast<std::size_t>(i)] = st.output(i, static_cast<int>(b));
  };

  // Sobolev terms over the collocation grid.
  std::vector<S> sob;
  for (int j = 0; j <= config.sobolev_order; ++j) {
    S acc{};
    bool first = true;
    for (std::size_t b = 0; b < nc; ++b) {
      point_stack(b);
      S r = residual_x_derivatives(u, lambda, xs[b], j);
      S r2 = r * r;
      acc = first ? r2 : acc + r2;
      first = false;
    }
    sob.push_back(acc / static_cast<double>(nc));
  }

  // Origin smoothness: residual derivative of order n*-1 near zero.
  S origin{};
  {
    bool first = true;
    for (std::size_t b = nc; b < nc + no; ++b) {
      point_stack(b);
      S r = residual_x_derivatives(u, lambda, xs[b], nstar - 1);
      S r2 = r * r;
      origin = first ? r2 : origin + r2;
      first = false;
    }
    origin = origin / static_cast<double>(no);
  }

  // Normalization at the origin: U(0) = 0, U'(0) = -1.
  S bc{};
  {
    const S& u0 = st.output(0, static_cast<int>(at_zero));
    const S& du0 = st.output(1, static_cast<int>(at_zero));
    S s1 = u0 * u0;
    S d = du0 + 1.0;
    bc = s1 + d * d;
  }

  // Boundary anchors from the C=1 implicit solution. Slope normalization
  // alone leaves the one-parameter family a*U(X/a) (and the degenerate
  // U = -X) unpenalized; pinning the boundary removes that flat direction.
  S anchor{};
  {
    const double up = profile_u_of_x(problem.profile_k, 1.0, problem.x_max);
    const double un = profile_u_of_x(problem.profile_k, 1.0, -problem.x_max);
    S dp = st.output(0, static_cast<int>(at_zero) + 1) - up;
    S dn = st.output(0, static_cast<int>(at_zero) + 2) - un;
    anchor = dp * dp + dn * dn;
  }

  S total{};
  {
    bool first = true;
    for (int j = 0; j <= config.sobolev_order; ++j) {
      S t = sob[static_cast<std::size_t>(j)] * config.q[static_cast<std::size_t>(j)];
      total = first ? t : total + t;
      first = false;
    }
    total = total + origin * config.origin_weight;
    total = total + bc * config.bc_weight;
    total = total + anchor * config.anchor_weight;
  }

  if (breakdown) {
    breakdown->sobolev.clear();
    for (auto& s : sob) breakdown->sobolev.push_back(scalar_value(s));
    breakdown->origin = scalar_value(origin);
    breakdown->bc = scalar_value(bc);
    breakdown->anchor = scalar_value(anchor);
    breakdown->total = scalar_value(total);
  }
  if (component_vars) {
    component_vars->clear();
    for (auto& s : sob) component_vars->push_back(s);
    component_vars->push_back(origin);
    component_vars->push_back(bc);
    component_vars->push_back(anchor);
  }
  if (!std::isfinite(scalar_value(total))) {
    std::string comp = "total";
    if (breakdown) {
      if (!std::isfinite(breakdown->bc)) comp = "bc";
      else if (!std::isfinite(breakdown->origin)) comp = "origin";
      else if (!std::isfinite(breakdown->anchor)) comp = "anchor";
      else
        for (std::size_t j = 0; j < breakdown->sobolev.size(); ++j)
          if (!std::isfinite(breakdown->sobolev[j])) comp = "sobolev" + std::to_string(j);
    }
    throw poisoned_value_error("non-finite loss in component " + comp, -1, comp);
  }
  return total;
}

/// Double-path convenience: evaluates the loss and returns the breakdown.
inline LossBreakdown evaluate_loss(const DenseNet& net, const SelfSimilarProblem& problem,
                                   const LossConfig& config, const FaaTable& table) {
  LossBreakdown bd;
  total_loss<double>(net, value_params(net), problem.lambda_raw, problem, config, table, &bd);
  return bd;
}

}  // namespace ntp::burgers
