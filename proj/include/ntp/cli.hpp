#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ntp/bench.hpp"
#include "ntp/burgers.hpp"
#include "ntp/config.hpp"
#include "ntp/network.hpp"
#include "ntp/partitions.hpp"
#include "ntp/schedule.hpp"

namespace ntp::cli {

inline constexpr const char* kVersion = "0.1.0";

namespace detail {

inline void write_manifest(const std::string& out_dir, const std::string& command,
                           const std::string& config_text, std::uint64_t seed,
                           const std::vector<std::string>& outputs) {
  nlohmann::json j;
  j["tool"] = "ntp";
  j["version"] = kVersion;
  j["command"] = command;
  j["config_fnv1a"] = fnv1a(config_text);
  j["seed"] = seed;
  j["compiler"] = __VERSION__;
  j["outputs"] = outputs;
  std::ofstream f(out_dir + "/manifest.json");
  f << j.dump(2) << "\n";
}

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory: " + dir);
}

struct TrainSetup {
  DenseNet net;
  burgers::SelfSimilarProblem problem;
  burgers::LossConfig loss;
  optim::ScheduleConfig sched;
  std::uint64_t seed = 1;
};

inline TrainSetup train_setup_from_config(const KeyValueConfig& kv) {
  TrainSetup s;
  const int k = static_cast<int>(kv.get_int("profile_k", 1));
  const double x_max = kv.get_double("x_max", 2.0);
  const int n_colloc = static_cast<int>(kv.get_int("n_colloc", 256));
  const int n_origin = static_cast<int>(kv.get_int("n_origin", 33));
  const double origin_halfwidth = kv.get_double("origin_halfwidth", 0.1);
  s.problem = burgers::make_problem(k, x_max, n_colloc, n_origin, origin_halfwidth);
  s.problem.lambda_raw = kv.get_double("lambda_raw_init", 0.0);

  s.seed = static_cast<std::uint64_t>(kv.get_int("seed", 1));
  const int hidden_layers = static_cast<int>(kv.get_int("hidden_layers", 3));
  const int hidden_width = static_cast<int>(kv.get_int("hidden_width", 24));
  std::vector<int> widths(static_cast<std::size_t>(hidden_layers) + 2, hidden_width);
  widths.front() = 1;
  widths.back() = 1;
  s.net = init(widths, ActivationKind::Tanh, s.seed);

  s.loss = burgers::default_loss_config(k);
  s.loss.sobolev_order = static_cast<int>(kv.get_int("sobolev_order", 1));
  s.loss.q.clear();
  for (int j = 0; j <= s.loss.sobolev_order; ++j)
    s.loss.q.push_back(kv.get_double("q" + std::to_string(j), 1.0));
  s.loss.origin_weight = kv.get_double("origin_weight", 1.0);
  s.loss.bc_weight = kv.get_double("bc_weight", 10.0);
  s.loss.anchor_weight = kv.get_double("anchor_weight", 10.0);
  s.loss.n_colloc = n_colloc;
  s.loss.n_origin = n_origin;

  s.sched.adam_epochs = static_cast<int>(kv.get_int("adam_epochs", 2000));
  s.sched.lbfgs_epochs = static_cast<int>(kv.get_int("lbfgs_epochs", 3000));
  s.sched.adam_lr = kv.get_double("adam_lr", 1e-3);
  s.sched.adam_beta1 = kv.get_double("adam_beta1", 0.9);
  s.sched.adam_beta2 = kv.get_double("adam_beta2", 0.999);
  s.sched.adam_eps = kv.get_double("adam_eps", 1e-8);
  s.sched.lbfgs_window = static_cast<int>(kv.get_int("lbfgs_window", 20));
  s.sched.lbfgs_c1 = kv.get_double("lbfgs_c1", 1e-4);
  s.sched.lbfgs_c2 = kv.get_double("lbfgs_c2", 0.9);
  s.sched.lbfgs_max_linesearch = static_cast<int>(kv.get_int("lbfgs_max_linesearch", 30));
  s.sched.component_grad_norms = kv.get_int("component_grad_norms", 0) != 0;
  s.sched.metrics_every = static_cast<int>(kv.get_int("metrics_every", 1));
  return s;
}

inline int cmd_bench(const std::string& config_path, const std::string& out_dir, bool quiet) {
  const auto kv = KeyValueConfig::load(config_path);
  const auto config = bench::BenchConfig::from_config(kv);
  config.validate();
  ensure_dir(out_dir);
  const auto records = bench::run_bench(config, quiet ? nullptr : &std::cerr);
  {
    std::ofstream f(out_dir + "/bench.csv");
    bench::write_bench_csv(f, records);
  }
  nlohmann::json scaling;
  for (const auto& method : config.methods) {
    for (auto [field, name] : {std::pair{bench::TimeField::Total, "total"},
                               std::pair{bench::TimeField::Forward, "forward"}}) {
      try {
        const auto d = bench::fit_scaling(records, method, field);
        nlohmann::json jd;
        jd["classification"] = d.classification;
        jd["points"] = d.points;
        jd["exponential"] = {{"slope", d.exponential.slope},
                             {"intercept", d.exponential.intercept},
                             {"r2", d.exponential.r2}};
        jd["quasilinear"] = {{"slope", d.quasilinear.slope},
                             {"intercept", d.quasilinear.intercept},
                             {"r2", d.quasilinear.r2}};
        scaling[method][name] = jd;
      } catch (const std::invalid_argument& e) {
        scaling[method][name] = {{"unavailable", e.what()}};
      }
    }
  }
  {
    std::ofstream f(out_dir + "/scaling.json");
    f << scaling.dump(2) << "\n";
  }
  write_manifest(out_dir, "bench", kv.raw(), config.seed,
                 {"bench.csv", "scaling.json"});
  return 0;
}

inline int cmd_train(const std::string& config_path, const std::string& out_dir, bool quiet) {
  const auto kv = KeyValueConfig::load(config_path);
  auto setup = train_setup_from_config(kv);
  ensure_dir(out_dir);
  setup.sched.out_dir = out_dir;
  const FaaTable table(setup.problem.origin_order() + 1);
  const auto report = optim::run_schedule(setup.net, setup.problem, setup.loss, setup.sched, table);
  if (!quiet)
    std::cerr << "final loss " << report.final_loss << ", lambda " << report.final_lambda
              << " (err " << report.lambda_error << "), " << report.wall_seconds << " s\n";
  nlohmann::json j;
  j["initial_loss"] = report.initial_loss;
  j["final_loss"] = report.final_loss;
  j["final_lambda"] = report.final_lambda;
  j["final_lambda_raw"] = report.final_lambda_raw;
  j["lambda_error"] = report.lambda_error;
  j["lambda_true"] = burgers::lambda_true(setup.problem.profile_k);
  j["adam_epochs_run"] = report.adam_epochs_run;
  j["lbfgs_epochs_run"] = report.lbfgs_epochs_run;
  j["adam_forwards"] = report.adam_counts.forwards;
  j["adam_backwards"] = report.adam_counts.backwards;
  j["lbfgs_forwards"] = report.lbfgs_counts.forwards;
  j["lbfgs_backwards"] = report.lbfgs_counts.backwards;
  j["lbfgs_forwards_per_iter"] = report.lbfgs_forwards_per_iter;
  j["lbfgs_backwards_per_iter"] = report.lbfgs_backwards_per_iter;
  j["wall_seconds"] = report.wall_seconds;
  j["stop_reason"] = report.stop_reason;
  {
    std::ofstream f(out_dir + "/summary.json");
    f << j.dump(2) << "\n";
  }
  write_manifest(out_dir, "train", kv.raw(), setup.seed,
                 {"metrics.csv", "summary.json", "ckpt_adam.ntpk", "ckpt_final.ntpk"});
  return 0;
}

inline int cmd_eval(const std::string& checkpoint, int profile_k, const std::string& out_dir,
                    double x_max, int points) {
  const DenseNet net = load_checkpoint(checkpoint);
  ensure_dir(out_dir);
  const int nstar = 2 * profile_k + 1;
  const FaaTable table(nstar);
  const auto xs = burgers::linspace(-x_max, x_max, points);
  const auto st = forward_ntp(net, xs, nstar, table);
  std::ofstream f(out_dir + "/profile.csv");
  f << "x";
  for (int k = 0; k <= nstar; ++k) f << ",u" << k << "_learned,u" << k << "_true";
  f << "\n";
  f.precision(17);
  for (std::size_t b = 0; b < xs.size(); ++b) {
    const auto truth = burgers::true_profile_stack(profile_k, 1.0, xs[b], nstar);
    f << xs[b];
    for (int k = 0; k <= nstar; ++k)
      f << ',' << st.output(k, static_cast<int>(b)) << ',' << truth[static_cast<std::size_t>(k)];
    f << "\n";
  }
  write_manifest(out_dir, "eval", checkpoint, net.seed, {"profile.csv"});
  return 0;
}

inline int cmd_partitions(int n, bool full_table) {
  const FaaTable table(n);
  if (full_table) {
    table.dump_csv(std::cout);
    return 0;
  }
  for (const auto& e : table.order(n))
    std::cout << n << ',' << e.partition.to_string() << ',' << e.coefficient << "\n";
  return 0;
}

}  // namespace detail

/// Entry point shared by the binary and the tests. Exit codes: 0 success,
/// 1 user error, 2 internal error.
inline int run(int argc, const char* const* argv) {
  CLI::App app{"n-TP: quasilinear higher-order derivatives of dense networks, "
               "with a self-similar Burgers PINN trainer and benchmark harness"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  std::string config_path, out_dir = "out", checkpoint;
  int profile_k = 1, n = 4, points = 256;
  double x_max = 2.0;
  bool quiet = false, full_table = false;

  auto* b = app.add_subcommand("bench", "run the scaling benchmark grid");
  b->add_option("--config", config_path, "key=value config file")->required();
  b->add_option("--out", out_dir, "output directory");
  b->add_flag("--quiet", quiet, "suppress progress output");

  auto* t = app.add_subcommand("train", "train a self-similar Burgers profile");
  t->add_option("--config", config_path, "key=value config file")->required();
  t->add_option("--out", out_dir, "output directory");
  t->add_flag("--quiet", quiet, "suppress progress output");

  auto* e = app.add_subcommand("eval", "compare a checkpoint against the exact profile");
  e->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  e->add_option("--profile", profile_k, "profile index k")->required();
  e->add_option("--out", out_dir, "output directory");
  e->add_option("--x-max", x_max, "evaluation half-domain");
  e->add_option("--points", points, "evaluation grid size");

  auto* p = app.add_subcommand("partitions", "dump Bell-coefficient table rows");
  p->add_option("--n", n, "partition order")->required();
  p->add_flag("--table", full_table, "dump all orders up to n, with header");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    return app.exit(err) == 0 ? 0 : 1;
  }

  try {
    if (b->parsed()) return detail::cmd_bench(config_path, out_dir, quiet);
    if (t->parsed()) return detail::cmd_train(config_path, out_dir, quiet);
    if (e->parsed()) return detail::cmd_eval(checkpoint, profile_k, out_dir, x_max, points);
    if (p->parsed()) return detail::cmd_partitions(n, full_table);
    std::cerr << "no subcommand\n";
    return 1;
  } catch (const parse_error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  } catch (const std::exception& err) {
    std::cerr << "internal error: " << err.what() << "\n";
    return 2;
  }
}

}  // namespace ntp::cli
