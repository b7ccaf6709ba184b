#pragma once

#include <chrono>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "ntp/burgers.hpp"
#include "ntp/network.hpp"
#include "ntp/optim.hpp"
#include "ntp/tape.hpp"

namespace ntp::optim {

/// Composite PINN objective over [net parameters..., lambda_raw]. Full
/// gradients come from one reverse sweep of the recorded n-TP forward;
/// directional derivatives for the line search run on first-order duals and
/// never touch the tape.
class PinnLoss : public LossFunction {
public:
  PinnLoss(const DenseNet& net, const burgers::SelfSimilarProblem& problem,
           const burgers::LossConfig& config, const FaaTable& table)
      : net_(net), problem_(problem), config_(config), table_(table) {}

  std::size_t dim() const { return net_.param_count() + 1; }

  std::vector<double> initial_point() const {
    auto x = flatten_params(net_);
    x.push_back(problem_.lambda_raw);
    return x;
  }

  double value_and_grad(const std::vector<double>& x, std::vector<double>& grad) override {
    check_dim(x);
    tape_.clear();
    tape_.activate();
    std::vector<Var> leaves;
    leaves.reserve(dim());
    auto params = build_params<Var>(net_, [&](std::size_t k) {
      Var v = tape_.leaf(x[k]);
      leaves.push_back(v);
      return v;
    });
    const Var lraw = tape_.leaf(x.back());
    leaves.push_back(lraw);

    const Var loss =
        burgers::total_loss<Var>(net_, params, lraw, problem_, config_, table_, &last_breakdown_);
    const auto adj = tape_.backward(loss, 1.0);
    grad.resize(dim());
    for (std::size_t i = 0; i < leaves.size(); ++i) grad[i] = adj[static_cast<std::size_t>(leaves[i].idx)];
    last_lambda_grad_ = grad.back();
    ++counts_.forwards;
    ++counts_.backwards;
    return loss.v;
  }

  std::pair<double, double> value_and_dir(const std::vector<double>& x,
                                          const std::vector<double>& d) override {
    check_dim(x);
    using D = Dual<1, double>;
    auto params = build_params<D>(net_, [&](std::size_t k) {
      return D{Dual<0, double>{x[k]}, Dual<0, double>{d[k]}};
    });
    const D lraw{Dual<0, double>{x.back()}, Dual<0, double>{d.back()}};
    const D loss = burgers::total_loss<D>(net_, params, lraw, problem_, config_, table_);
    ++counts_.forwards;
    return {loss.a.v, loss.b.v};
  }

  /// Gradient norm of each unweighted loss component (diagnostic; one tape,
  /// one extra reverse sweep per component). Counted separately from the
  /// optimizer-driven evaluations.
  std::vector<double> component_grad_norms(const std::vector<double>& x) {
    check_dim(x);
    tape_.clear();
    tape_.activate();
    std::vector<Var> leaves;
    auto params = build_params<Var>(net_, [&](std::size_t k) {
      Var v = tape_.leaf(x[k]);
      leaves.push_back(v);
      return v;
    });
    const Var lraw = tape_.leaf(x.back());
    leaves.push_back(lraw);
    std::vector<Var> comps;
    burgers::total_loss<Var>(net_, params, lraw, problem_, config_, table_, nullptr, &comps);
    std::vector<double> norms;
    for (const auto& c : comps) {
      const auto adj = tape_.backward(c, 1.0);
      double s = 0.0;
      for (const auto& l : leaves) {
        const double gi = adj[static_cast<std::size_t>(l.idx)];
        s += gi * gi;
      }
      norms.push_back(std::sqrt(s));
      ++diagnostic_backwards_;
    }
    return norms;
  }

  const burgers::LossBreakdown& last_breakdown() const { return last_breakdown_; }
  double last_lambda_grad() const { return last_lambda_grad_; }
  std::uint64_t diagnostic_backwards() const { return diagnostic_backwards_; }

private:
  void check_dim(const std::vector<double>& x) const {
    if (x.size() != dim()) throw std::invalid_argument("PinnLoss: trainable vector size mismatch");
  }

  const DenseNet& net_;
  const burgers::SelfSimilarProblem& problem_;
  const burgers::LossConfig& config_;
  const FaaTable& table_;
  Tape tape_;
  burgers::LossBreakdown last_breakdown_;
  double last_lambda_grad_ = 0.0;
  std::uint64_t diagnostic_backwards_ = 0;
};

/// Primes the L-BFGS state with the objective at x, outside any iteration
/// accounting.
inline void lbfgs_prime(LbfgsState& state, LossFunction& loss, const std::vector<double>& x) {
  state.f = loss.value_and_grad(x, state.g);
  state.primed = true;
}

struct ScheduleConfig {
  int adam_epochs = 2000;
  int lbfgs_epochs = 3000;
  double adam_lr = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int lbfgs_window = 20;
  double lbfgs_c1 = 1e-4;
  double lbfgs_c2 = 0.9;
  int lbfgs_max_linesearch = 30;
  bool component_grad_norms = false;
  int metrics_every = 1;        // CSV row cadence
  std::string out_dir;          // empty: no CSV / checkpoints written
};

struct TrainingReport {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double final_lambda = 0.0;
  double final_lambda_raw = 0.0;
  double lambda_error = 0.0;
  int adam_epochs_run = 0;
  int lbfgs_epochs_run = 0;
  EvalCounts adam_counts;
  EvalCounts lbfgs_counts;
  double lbfgs_forwards_per_iter = 0.0;
  double lbfgs_backwards_per_iter = 0.0;
  double wall_seconds = 0.0;
  std::string stop_reason = "completed";
  std::string metrics_csv;
  std::string checkpoint_adam;
  std::string checkpoint_final;
};

/// Two-phase training: Adam epochs then L-BFGS epochs, one full-batch
/// loss/gradient evaluation per epoch in the Adam phase and one quasi-Newton
/// step per epoch in the L-BFGS phase. Metrics are appended (and flushed)
/// every row; checkpoints land at the phase boundary and the end.
inline TrainingReport run_schedule(DenseNet& net, burgers::SelfSimilarProblem& problem,
                                   const burgers::LossConfig& loss_config,
                                   const ScheduleConfig& sched, const FaaTable& table) {
  using clock = std::chrono::steady_clock;
  const auto t_start = clock::now();

  PinnLoss loss(net, problem, loss_config, table);
  std::vector<double> x = loss.initial_point();
  TrainingReport report;

  std::ofstream csv;
  if (!sched.out_dir.empty()) {
    report.metrics_csv = sched.out_dir + "/metrics.csv";
    csv.open(report.metrics_csv);
    if (!csv) throw std::runtime_error("cannot open " + report.metrics_csv);
    csv << "epoch,phase,loss";
    for (int j = 0; j <= loss_config.sobolev_order; ++j) csv << ",sobolev" << j;
    csv << ",origin,bc,anchor,lambda,lambda_grad";
    if (sched.component_grad_norms) {
      for (int j = 0; j <= loss_config.sobolev_order; ++j) csv << ",gnorm_sobolev" << j;
      csv << ",gnorm_origin,gnorm_bc,gnorm_anchor";
    }
    csv << ",wall_time_ms\n";
    csv.precision(17);
  }

  auto commit_params = [&]() {
    std::vector<double> p(x.begin(), x.end() - 1);
    unflatten_params(net, p);
    problem.lambda_raw = x.back();
  };

  auto write_row = [&](long epoch, const char* phase, double f, double lgrad) {
    if (!csv.is_open()) return;
    if (sched.metrics_every > 1 && epoch % sched.metrics_every != 0 && epoch != 0) return;
    const auto& bd = loss.last_breakdown();
    const double lam =
        burgers::lambda_value(x.back(), problem.range.first, problem.range.second);
    csv << epoch << ',' << phase << ',' << f;
    for (double s : bd.sobolev) csv << ',' << s;
    csv << ',' << bd.origin << ',' << bd.bc << ',' << bd.anchor << ',' << lam << ',' << lgrad;
    if (sched.component_grad_norms)
      for (double gn : loss.component_grad_norms(x)) csv << ',' << gn;
    const double ms =
        std::chrono::duration<double, std::milli>(clock::now() - t_start).count();
    csv << ',' << ms << '\n';
    csv.flush();
  };

  auto save_ckpt = [&](const std::string& name) -> std::string {
    if (sched.out_dir.empty()) return "";
    commit_params();
    const std::string path = sched.out_dir + "/" + name;
    save_checkpoint(net, path);
    return path;
  };

  // Initial loss (epoch 0 row).
  std::vector<double> g;
  report.initial_loss = loss.value_and_grad(x, g);
  write_row(0, "init", report.initial_loss, loss.last_lambda_grad());
  double f_cur = report.initial_loss;

  try {
    // Phase 1: Adam.
    AdamState adam;
    adam.lr = sched.adam_lr;
    adam.beta1 = sched.adam_beta1;
    adam.beta2 = sched.adam_beta2;
    adam.eps = sched.adam_eps;
    const EvalCounts adam_before = loss.counts();
    for (int e = 1; e <= sched.adam_epochs; ++e) {
      f_cur = loss.value_and_grad(x, g);
      adam_step(adam, x, g);
      ++report.adam_epochs_run;
      write_row(e, "adam", f_cur, loss.last_lambda_grad());
    }
    report.adam_counts = loss.counts() - adam_before;
    report.checkpoint_adam = save_ckpt("ckpt_adam.ntpk");

    // Phase 2: L-BFGS.
    LbfgsState lb;
    lb.window = sched.lbfgs_window;
    lb.c1 = sched.lbfgs_c1;
    lb.c2 = sched.lbfgs_c2;
    lb.max_linesearch = sched.lbfgs_max_linesearch;
    if (sched.lbfgs_epochs > 0) lbfgs_prime(lb, loss, x);
    const EvalCounts lbfgs_before = loss.counts();
    for (int e = 1; e <= sched.lbfgs_epochs; ++e) {
      const auto res = lbfgs_step(lb, loss, x);
      if (!res.accepted) {
        report.stop_reason = "lbfgs step rejected: " + res.note;
        break;
      }
      f_cur = res.f;
      ++report.lbfgs_epochs_run;
      write_row(sched.adam_epochs + e, "lbfgs", f_cur, loss.last_lambda_grad());
    }
    report.lbfgs_counts = loss.counts() - lbfgs_before;
    if (report.lbfgs_epochs_run > 0) {
      report.lbfgs_forwards_per_iter =
          static_cast<double>(report.lbfgs_counts.forwards) / report.lbfgs_epochs_run;
      report.lbfgs_backwards_per_iter =
          static_cast<double>(report.lbfgs_counts.backwards) / report.lbfgs_epochs_run;
    }
  } catch (const training_abort&) {
    report.checkpoint_final = save_ckpt("ckpt_final.ntpk");
    if (csv.is_open()) csv.flush();
    throw;
  }

  commit_params();
  report.checkpoint_final = save_ckpt("ckpt_final.ntpk");
  report.final_loss = f_cur;
  report.final_lambda_raw = problem.lambda_raw;
  report.final_lambda = problem.lambda();
  report.lambda_error = problem.lambda_error();
  report.wall_seconds = std::chrono::duration<double>(clock::now() - t_start).count();
  return report;
}

}  // namespace ntp::optim
