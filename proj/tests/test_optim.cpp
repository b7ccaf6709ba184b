#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "ntp/optim.hpp"
#include "ntp/schedule.hpp"

using namespace ntp;
using namespace ntp::optim;

namespace {

/// f(x) = sum d_i (x_i - a_i)^2 with a native directional evaluation, so
/// line-search trials cost no backward passes.
class Quadratic : public LossFunction {
public:
  Quadratic(std::vector<double> a, std::vector<double> d) : a_(std::move(a)), d_(std::move(d)) {}

  double value_and_grad(const std::vector<double>& x, std::vector<double>& grad) override {
    ++counts_.forwards;
    ++counts_.backwards;
    grad.resize(x.size());
    double f = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double e = x[i] - a_[i];
      f += d_[i] * e * e;
      grad[i] = 2.0 * d_[i] * e;
    }
    return f;
  }

  std::pair<double, double> value_and_dir(const std::vector<double>& x,
                                          const std::vector<double>& dir) override {
    ++counts_.forwards;
    double f = 0.0, dd = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double e = x[i] - a_[i];
      f += d_[i] * e * e;
      dd += 2.0 * d_[i] * e * dir[i];
    }
    return {f, dd};
  }

private:
  std::vector<double> a_, d_;
};

class Rosenbrock : public LossFunction {
public:
  double value_and_grad(const std::vector<double>& x, std::vector<double>& grad) override {
    ++counts_.forwards;
    ++counts_.backwards;
    grad.assign(2, 0.0);
    const double a = 1.0, b = 100.0;
    const double t1 = a - x[0], t2 = x[1] - x[0] * x[0];
    grad[0] = -2.0 * t1 - 4.0 * b * x[0] * t2;
    grad[1] = 2.0 * b * t2;
    return t1 * t1 + b * t2 * t2;
  }

  std::pair<double, double> value_and_dir(const std::vector<double>& x,
                                          const std::vector<double>& d) override {
    ++counts_.forwards;
    const double a = 1.0, b = 100.0;
    const double t1 = a - x[0], t2 = x[1] - x[0] * x[0];
    const double g0 = -2.0 * t1 - 4.0 * b * x[0] * t2;
    const double g1 = 2.0 * b * t2;
    return {t1 * t1 + b * t2 * t2, g0 * d[0] + g1 * d[1]};
  }
};

}  // namespace

TEST_CASE("adam_step basics") {
  SECTION("zero gradient leaves parameters unchanged") {
    AdamState st;
    std::vector<double> x = {1.0, -2.0, 0.5};
    const auto before = x;
    adam_step(st, x, {0.0, 0.0, 0.0});
    CHECK(x == before);
  }
  SECTION("1-D quadratic converges: lr 0.1, 500 steps") {
    AdamState st;
    st.lr = 0.1;
    std::vector<double> x = {3.0};
    for (int i = 0; i < 500; ++i) adam_step(st, x, {2.0 * x[0]});
    CHECK(std::abs(x[0]) < 1e-3);
  }
  SECTION("deterministic: identical state and inputs give identical updates") {
    AdamState s1, s2;
    std::vector<double> x1 = {0.3, -0.7}, x2 = {0.3, -0.7};
    for (int i = 0; i < 10; ++i) {
      const std::vector<double> g = {0.1 * i, -0.2};
      adam_step(s1, x1, g);
      adam_step(s2, x2, g);
    }
    CHECK(x1 == x2);
  }
  SECTION("non-finite gradients abort with attribution") {
    AdamState st;
    std::vector<double> x = {1.0, 1.0};
    try {
      adam_step(st, x, {0.0, std::numeric_limits<double>::quiet_NaN()});
      FAIL("expected training_abort");
    } catch (const training_abort& e) {
      CHECK(std::string(e.what()).find("component 1") != std::string::npos);
    }
  }
  SECTION("size mismatches are rejected") {
    AdamState st;
    std::vector<double> x = {1.0};
    CHECK_THROWS_AS(adam_step(st, x, {1.0, 2.0}), std::invalid_argument);
  }
}

TEST_CASE("lbfgs on a 2-D quadratic bowl") {
  Quadratic loss({1.0, -2.0}, {3.0, 0.5});
  LbfgsState st;
  std::vector<double> x = {10.0, 10.0};
  lbfgs_prime(st, loss, x);
  double f = st.f;
  int iters = 0;
  for (; iters < 10; ++iters) {
    const auto r = lbfgs_step(st, loss, x);
    REQUIRE(r.accepted);
    CHECK(r.f <= f + 1e-15);  // descent property
    f = r.f;
    if (f < 1e-10) break;
  }
  CHECK(f < 1e-10);
  CHECK(iters < 10);
}

TEST_CASE("lbfgs reaches the Rosenbrock minimum from (-1.2, 1)") {
  Rosenbrock loss;
  LbfgsState st;
  std::vector<double> x = {-1.2, 1.0};
  lbfgs_prime(st, loss, x);
  double f = st.f;
  bool reached = false;
  for (int i = 0; i < 200; ++i) {
    const auto r = lbfgs_step(st, loss, x);
    if (!r.accepted) break;
    CHECK(r.f <= f + 1e-12);  // accepted steps never increase the loss
    f = r.f;
    if (f < 1e-8) {
      reached = true;
      break;
    }
  }
  CHECK(reached);
  CHECK(std::abs(x[0] - 1.0) < 1e-3);
  CHECK(std::abs(x[1] - 1.0) < 1e-3);
}

TEST_CASE("window 0 reduces to line-searched gradient descent") {
  Quadratic loss({0.0, 0.0, 0.0}, {1.0, 2.0, 3.0});
  LbfgsState st;
  st.window = 0;
  std::vector<double> x = {1.0, 1.0, 1.0};
  lbfgs_prime(st, loss, x);
  const auto g0 = st.g;
  const auto x0 = x;
  const auto r = lbfgs_step(st, loss, x);
  REQUIRE(r.accepted);
  // the step must be exactly -alpha * g
  for (std::size_t i = 0; i < x.size(); ++i)
    CHECK(std::abs((x[i] - x0[i]) + r.step * g0[i]) <= 1e-14 * std::max(1.0, std::abs(g0[i])));
  CHECK(st.history.empty());
}

TEST_CASE("evaluation accounting: many forwards, one backward per iteration") {
  Rosenbrock loss;
  LbfgsState st;
  std::vector<double> x = {-1.2, 1.0};
  lbfgs_prime(st, loss, x);
  for (int i = 0; i < 25; ++i) {
    const auto r = lbfgs_step(st, loss, x);
    if (!r.accepted) break;
    CHECK(r.used.backwards == 1);
    CHECK(r.used.forwards >= 2);  // at least one trial plus the commit gradient
    CHECK(r.ls_evals >= 1);
  }
}

TEST_CASE("zero-epoch schedule reports the initial loss only") {
  const FaaTable table(4);
  auto net = init({1, 6, 1}, ActivationKind::Tanh, 12);
  auto problem = burgers::make_problem(1, 2.0, 16, 5, 0.1);
  const auto loss = burgers::default_loss_config(1);
  ScheduleConfig sched;
  sched.adam_epochs = 0;
  sched.lbfgs_epochs = 0;
  const auto before = flatten_params(net);
  const auto rep = run_schedule(net, problem, loss, sched, table);
  CHECK(rep.adam_epochs_run == 0);
  CHECK(rep.lbfgs_epochs_run == 0);
  CHECK(rep.initial_loss > 0.0);
  CHECK(rep.final_loss == rep.initial_loss);
  CHECK(flatten_params(net) == before);
}

TEST_CASE("curvature-violating pairs are skipped") {
  // A concave region forces s.y <= 0; the pair must not enter the history.
  class Concave : public LossFunction {
  public:
    double value_and_grad(const std::vector<double>& x, std::vector<double>& g) override {
      ++counts_.forwards;
      ++counts_.backwards;
      g = {x[0] < 1.0 ? -1.0 : 1.0};   // V-shaped-ish with a kink
      return std::abs(x[0] - 1.0);
    }
  };
  Concave loss;
  LbfgsState st;
  std::vector<double> x = {0.0};
  lbfgs_prime(st, loss, x);
  const auto r = lbfgs_step(st, loss, x);
  if (r.accepted) CHECK(st.history.size() <= 1);
}
