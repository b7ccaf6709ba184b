#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "ntp/errors.hpp"

namespace ntp::optim {

struct EvalCounts {
  std::uint64_t forwards = 0;
  std::uint64_t backwards = 0;

  EvalCounts operator-(const EvalCounts& o) const { return {forwards - o.forwards, backwards - o.backwards}; }
};

/// Objective driven by the optimizers. Implementations bump the counters:
/// value_and_grad is one forward plus one backward; value_and_dir is a
/// forward-only directional evaluation when the objective supports it.
class LossFunction {
public:
  virtual ~LossFunction() = default;

  virtual double value_and_grad(const std::vector<double>& x, std::vector<double>& grad) = 0;

  /// Value and directional derivative along d. The default routes through
  /// the full gradient; objectives with a cheap forward-mode path override.
  virtual std::pair<double, double> value_and_dir(const std::vector<double>& x,
                                                  const std::vector<double>& d) {
    std::vector<double> g;
    const double f = value_and_grad(x, g);
    double dd = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) dd += g[i] * d[i];
    return {f, dd};
  }

  const EvalCounts& counts() const { return counts_; }

protected:
  EvalCounts counts_;
};

// -- Adam -----------------------------------------------------------------------

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<double> m;  // first moments
  std::vector<double> v;  // second moments
};

/// Standard bias-corrected Adam update, in place.
inline void adam_step(AdamState& state, std::vector<double>& x, const std::vector<double>& g) {
  if (g.size() != x.size()) throw std::invalid_argument("adam_step: gradient size mismatch");
  if (state.m.empty()) {
    state.m.assign(x.size(), 0.0);
    state.v.assign(x.size(), 0.0);
  }
  if (state.m.size() != x.size()) throw std::invalid_argument("adam_step: state size mismatch");
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!std::isfinite(g[i]))
      throw training_abort("non-finite gradient at component " + std::to_string(i));
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < x.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g[i] * g[i];
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    x[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
  }
}

// -- L-BFGS -----------------------------------------------------------------------

struct LbfgsState {
  int window = 20;
  double c1 = 1e-4;  // sufficient decrease
  double c2 = 0.9;   // curvature
  int max_linesearch = 30;

  struct Pair {
    std::vector<double> s, y;
    double rho;
  };
  std::deque<Pair> history;

  // Cached objective state at the current iterate; filled on first step.
  bool primed = false;
  double f = 0.0;
  std::vector<double> g;
  std::uint64_t iterations = 0;
};

struct LbfgsResult {
  bool accepted = false;
  bool wolfe = false;       // both strong conditions held (vs. best-point fallback)
  double f = 0.0;           // objective at the new iterate
  double step = 0.0;        // accepted step length
  int ls_evals = 0;         // directional evaluations spent in the line search
  EvalCounts used;          // counter deltas for this call
  std::string note;
};

namespace detail {

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// Two-loop recursion; with an empty history this is exactly -g.
inline std::vector<double> lbfgs_direction(const LbfgsState& st, const std::vector<double>& g) {
  std::vector<double> q = g;
  std::vector<double> alpha(st.history.size());
  for (std::size_t i = st.history.size(); i-- > 0;) {
    const auto& p = st.history[i];
    alpha[i] = p.rho * dot(p.s, q);
    for (std::size_t j = 0; j < q.size(); ++j) q[j] -= alpha[i] * p.y[j];
  }
  if (!st.history.empty()) {
    const auto& last = st.history.back();
    const double gamma = dot(last.s, last.y) / dot(last.y, last.y);
    for (auto& qi : q) qi *= gamma;
  }
  for (std::size_t i = 0; i < st.history.size(); ++i) {
    const auto& p = st.history[i];
    const double beta = p.rho * dot(p.y, q);
    for (std::size_t j = 0; j < q.size(); ++j) q[j] += p.s[j] * (alpha[i] - beta);
  }
  for (auto& qi : q) qi = -qi;
  return q;
}

}  // namespace detail

/// One quasi-Newton step with a strong-Wolfe line search (directional
/// derivatives come from forward-only evaluations, so the whole search costs
/// a single backward pass per iteration -- the one at the accepted point).
inline LbfgsResult lbfgs_step(LbfgsState& state, LossFunction& loss, std::vector<double>& x) {
  LbfgsResult out;
  const EvalCounts before = loss.counts();

  if (!state.primed) {
    state.f = loss.value_and_grad(x, state.g);
    state.primed = true;
  }
  ++state.iterations;

  std::vector<double> d = detail::lbfgs_direction(state, state.g);
  double dphi0 = detail::dot(state.g, d);
  if (!(dphi0 < 0.0)) {  // not a descent direction: drop history, retry with -g
    state.history.clear();
    d = detail::lbfgs_direction(state, state.g);
    dphi0 = detail::dot(state.g, d);
    if (!(dphi0 < 0.0)) {
      out.note = "zero gradient";
      out.f = state.f;
      out.used = loss.counts() - before;
      return out;
    }
  }

  const double phi0 = state.f;
  const double c1 = state.c1, c2 = state.c2;

  auto trial_point = [&](double a) {
    std::vector<double> xt(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) xt[i] = x[i] + a * d[i];
    return xt;
  };
  auto eval = [&](double a) {
    ++out.ls_evals;
    return loss.value_and_dir(trial_point(a), d);
  };

  // Bracketing phase (Nocedal & Wright 3.5), then bisection zoom (3.6).
  double alpha = 0.0;
  bool found = false;
  double best_alpha = 0.0, best_phi = phi0;

  double a_prev = 0.0, phi_prev = phi0, dphi_prev = dphi0;
  double a_cur = 1.0;
  if (state.iterations == 1) {
    double g1 = 0.0;
    for (double gi : state.g) g1 += std::abs(gi);
    if (g1 > 1.0) a_cur = 1.0 / g1;
  }
  const double a_max = 1e8;

  double lo = 0.0, hi = 0.0, phi_lo = 0.0, dphi_lo = 0.0;
  bool zooming = false;
  int remaining = state.max_linesearch;

  while (remaining-- > 0) {
    auto [phi_a, dphi_a] = eval(a_cur);
    if (std::isfinite(phi_a) && phi_a < best_phi) {
      best_phi = phi_a;
      best_alpha = a_cur;
    }
    if (!std::isfinite(phi_a)) {  // overshot into bad territory: back off hard
      a_cur = 0.5 * (a_prev + a_cur);
      continue;
    }
    if (phi_a > phi0 + c1 * a_cur * dphi0 || (out.ls_evals > 1 && phi_a >= phi_prev)) {
      lo = a_prev;
      phi_lo = phi_prev;
      dphi_lo = dphi_prev;
      hi = a_cur;
      zooming = true;
      break;
    }
    if (std::abs(dphi_a) <= -c2 * dphi0) {
      alpha = a_cur;
      found = true;
      break;
    }
    if (dphi_a >= 0.0) {
      lo = a_cur;
      phi_lo = phi_a;
      dphi_lo = dphi_a;
      hi = a_prev;
      zooming = true;
      break;
    }
    a_prev = a_cur;
    phi_prev = phi_a;
    dphi_prev = dphi_a;
    a_cur = std::min(2.0 * a_cur, a_max);
    if (a_cur >= a_max) break;
  }

  if (zooming) {
    while (remaining-- > 0) {
      const double a_mid = 0.5 * (lo + hi);
      auto [phi_m, dphi_m] = eval(a_mid);
      if (std::isfinite(phi_m) && phi_m < best_phi) {
        best_phi = phi_m;
        best_alpha = a_mid;
      }
      if (!std::isfinite(phi_m) || phi_m > phi0 + c1 * a_mid * dphi0 || phi_m >= phi_lo) {
        hi = a_mid;
      } else {
        if (std::abs(dphi_m) <= -c2 * dphi0) {
          alpha = a_mid;
          found = true;
          break;
        }
        if (dphi_m * (hi - lo) >= 0.0) hi = lo;
        lo = a_mid;
        phi_lo = phi_m;
        dphi_lo = dphi_m;
      }
      if (std::abs(hi - lo) < 1e-16 * std::max(1.0, std::abs(lo))) break;
    }
  }
  (void)dphi_lo;

  if (!found) {
    if (best_alpha > 0.0 && best_phi < phi0) {
      alpha = best_alpha;  // best bracketed point: decrease without full Wolfe
    } else {
      out.note = "line search found no finite decrease";
      out.f = state.f;
      out.used = loss.counts() - before;
      return out;
    }
  }

  // Commit: one full gradient at the accepted point, record the pair.
  std::vector<double> x_new = trial_point(alpha);
  std::vector<double> g_new;
  const double f_new = loss.value_and_grad(x_new, g_new);

  std::vector<double> s(x.size()), yv(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    s[i] = x_new[i] - x[i];
    yv[i] = g_new[i] - state.g[i];
  }
  const double sy = detail::dot(s, yv);
  if (sy > 0.0 && state.window > 0) {
    state.history.push_back(LbfgsState::Pair{std::move(s), std::move(yv), 1.0 / sy});
    while (static_cast<int>(state.history.size()) > state.window) state.history.pop_front();
  }

  x = std::move(x_new);
  state.f = f_new;
  state.g = std::move(g_new);

  out.accepted = true;
  out.wolfe = found;
  out.f = f_new;
  out.step = alpha;
  out.used = loss.counts() - before;
  return out;
}

}  // namespace ntp::optim
