// Acceptance suite: one test case per criterion, each printing a PASS/FAIL
// line with its headline numbers so a full run reads as a checklist.

#include <catch2/catch_amalgamated.hpp>

#include <chrono>
#include <cmath>
#include <iostream>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "ntp/bench.hpp"
#include "ntp/cli.hpp"
#include "ntp/burgers.hpp"
#include "ntp/instrument.hpp"
#include "ntp/network.hpp"
#include "ntp/partitions.hpp"
#include "ntp/schedule.hpp"

using namespace ntp;

namespace {

using clock_type = std::chrono::steady_clock;

struct Timer {
  clock_type::time_point t0 = clock_type::now();
  double seconds() const { return std::chrono::duration<double>(clock_type::now() - t0).count(); }
};

void report(int criterion, const std::string& name, bool pass, const std::string& detail) {
  std::cout << "ACCEPTANCE " << criterion << " (" << name << "): " << (pass ? "PASS" : "FAIL")
            << " -- " << detail << std::endl;
}

std::string sci(double v, int digits = 3) {
  std::ostringstream os;
  os.precision(digits);
  os << std::scientific << v;
  return os.str();
}

std::string fixed3(double v) {
  std::ostringstream os;
  os.precision(3);
  os << std::fixed << v;
  return os.str();
}


// Independent set-partition counter (places each element into an existing or
// a new block).
long bell_count(int element, int n, std::vector<std::vector<int>>& blocks) {
  if (element == n) return 1;
  long total = 0;
  for (auto& blk : blocks) {
    blk.push_back(element);
    total += bell_count(element + 1, n, blocks);
    blk.pop_back();
  }
  blocks.push_back({element});
  total += bell_count(element + 1, n, blocks);
  blocks.pop_back();
  return total;
}

// Independent partition enumerator (descending part lists).
void count_parts(int remaining, int max_part, long& count) {
  if (remaining == 0) {
    ++count;
    return;
  }
  for (int part = std::min(remaining, max_part); part >= 1; --part)
    count_parts(remaining - part, part, count);
}

}  // namespace

TEST_CASE("criterion 1: oracle exactness on random nets", "[c1]") {
  Timer timer;
  const FaaTable table(6);
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> xdist(-2.0, 2.0);

  double worst_oracle = 0.0, worst_fd = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto net =
        init({1, 24, 24, 24, 1}, ActivationKind::Tanh, 5000 + static_cast<std::uint64_t>(trial));
    const double x = xdist(rng);
    const auto st = forward_ntp(net, {x}, 6, table);
    const auto oracle = nested_derivative_stack([&](auto u) { return forward_scalar(net, u); }, x, 6);
    double scale = 1.0;
    for (double v : oracle) scale = std::max(scale, std::abs(v));
    for (int k = 1; k <= 6; ++k) {
      const double a = st.output(k, 0), b = oracle[static_cast<std::size_t>(k)];
      worst_oracle = std::max(worst_oracle, std::abs(a - b) / scale);
    }
    const double h = 1e-4;
    for (int k = 1; k <= 3; ++k) {
      const double fp = (k == 1) ? forward(net, {x + h})[0]
                                 : forward_ntp(net, {x + h}, k - 1, table).output(k - 1, 0);
      const double fm = (k == 1) ? forward(net, {x - h})[0]
                                 : forward_ntp(net, {x - h}, k - 1, table).output(k - 1, 0);
      const double fd = (fp - fm) / (2 * h);
      const double rel = std::abs(st.output(k, 0) - fd) /
                         std::max({std::abs(st.output(k, 0)), std::abs(fd), 1e-30});
      worst_fd = std::max(worst_fd, rel);
    }
  }
  const double secs = timer.seconds();
  const bool pass = worst_oracle <= 1e-9 && worst_fd <= 1e-5 && secs < 60.0;
  report(1, "oracle exactness", pass,
         "worst nested-dual rel " + sci(worst_oracle) + ", worst FD rel " + sci(worst_fd) +
             ", " + fixed3(secs) + " s");
  CHECK(worst_oracle <= 1e-9);
  CHECK(worst_fd <= 1e-5);
  CHECK(secs < 60.0);
}

TEST_CASE("criterion 2: combinatorics identities", "[c2]") {
  Timer timer;
  bool counts_ok = true;
  for (int n = 1; n <= 12; ++n) {
    long brute = 0;
    count_parts(n, n, brute);
    if (partition_count(n) != brute ||
        static_cast<long>(enumerate_partitions(n).size()) != brute)
      counts_ok = false;
  }
  const long bell_expected[] = {0, 1, 2, 5, 15, 52, 203, 877, 4140};
  bool bell_ok = true;
  for (int n = 1; n <= 8; ++n) {
    long long sum = 0;
    for (const auto& p : enumerate_partitions(n)) sum += faa_coefficient(p);
    std::vector<std::vector<int>> blocks;
    const long brute = bell_count(0, n, blocks);
    if (sum != bell_expected[n] || brute != bell_expected[n]) bell_ok = false;
  }
  const double secs = timer.seconds();
  const bool pass = counts_ok && bell_ok;
  report(2, "combinatorics identities", pass,
         std::string("p(n) vs enumeration ") + (counts_ok ? "ok" : "MISMATCH") +
             ", Bell sums B_1..B_8 " + (bell_ok ? "ok" : "MISMATCH") + ", " + fixed3(secs) +
             " s");
  CHECK(counts_ok);
  CHECK(bell_ok);
}

TEST_CASE("criterion 3: scaling reproduction on the paper-shape config", "[c3]") {
  Timer timer;
  bench::BenchConfig config;
  config.depths = {3};
  config.widths = {24};
  config.batch_sizes = {256};
  config.orders = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};  // baseline capped at 9
  config.trials = 100;
  config.warmup = 3;
  config.seed = 7;
  config.memory_budget_mb = 4096.0;

  const auto records = bench::run_bench(config, &std::cerr);

  // (a) classification with R^2 threshold on the better model
  const auto base_fit = bench::fit_scaling(records, "nested_baseline", bench::TimeField::Total);
  const auto ntp_fit = bench::fit_scaling(records, "ntp", bench::TimeField::Total);
  const bool fit_ok = base_fit.classification == "exponential" && base_fit.exponential.r2 >= 0.95 &&
                      ntp_fit.classification == "quasilinear" && ntp_fit.quasilinear.r2 >= 0.95;

  // (b) forward-time ratio nondecreasing for n >= 3 and >= 5 at n = 9
  auto fwd = [&](const std::string& method, int n) {
    for (const auto& r : records)
      if (r.method == method && r.n == n) return r.mean_forward_s;
    return std::numeric_limits<double>::quiet_NaN();
  };
  bool ratio_monotone = true;
  double prev = 0.0;
  for (int n = 3; n <= 9; ++n) {
    const double ratio = fwd("nested_baseline", n) / fwd("ntp", n);
    if (n > 3 && ratio < prev) ratio_monotone = false;
    prev = ratio;
  }
  const double ratio9 = fwd("nested_baseline", 9) / fwd("ntp", 9);
  const bool ratio_ok = ratio_monotone && ratio9 >= 5.0;

  // (c) the baseline must hit the memory budget somewhere ntp completes
  bool oom_seen = false;
  for (const auto& r : records) {
    if (r.method != "nested_baseline" || r.status.rfind("oom", 0) != 0) continue;
    for (const auto& q : records)
      if (q.method == "ntp" && q.n == r.n && q.status == "ok") oom_seen = true;
  }

  const double secs = timer.seconds();
  const bool pass = fit_ok && ratio_ok && oom_seen && secs <= 1800.0;
  report(3, "scaling reproduction", pass,
         "baseline=" + base_fit.classification + " (r2 " + fixed3(base_fit.exponential.r2) +
             "), ntp=" + ntp_fit.classification + " (r2 " + fixed3(ntp_fit.quasilinear.r2) +
             "), fwd ratio@9 " + fixed3(ratio9) + (ratio_monotone ? ", monotone" : ", NOT monotone") +
             (oom_seen ? ", oom cliff seen" : ", NO oom cliff") + ", " + fixed3(secs) + " s");
  CHECK(base_fit.classification == "exponential");
  CHECK(base_fit.exponential.r2 >= 0.95);
  CHECK(ntp_fit.classification == "quasilinear");
  CHECK(ntp_fit.quasilinear.r2 >= 0.95);
  CHECK(ratio_monotone);
  CHECK(ratio9 >= 5.0);
  CHECK(oom_seen);
  CHECK(secs <= 1800.0);
}

TEST_CASE("criterion 4: memory witness", "[c4]") {
  Timer timer;
  const FaaTable table(10);
  bool ok = true;
  for (const auto& widths : {std::vector<int>{1, 24, 24, 24, 1}, std::vector<int>{1, 48, 1}}) {
    const auto net = init(widths, ActivationKind::Tanh, 11);
    const int B = 32;
    const std::vector<double> xs(static_cast<std::size_t>(B), 0.25);
    for (int n = 1; n <= 10; ++n) {
      instrument::Scope scope;
      const auto st = forward_ntp(net, xs, n, table);
      (void)st;
      if (scope.stack_buffers() != static_cast<std::uint64_t>(n) + 1) ok = false;
      if (scope.stack_reals() != (static_cast<std::uint64_t>(n) + 1) *
                                     static_cast<std::uint64_t>(net.max_width()) *
                                     static_cast<std::uint64_t>(B))
        ok = false;
    }
  }
  const double secs = timer.seconds();
  report(4, "memory witness", ok,
         "buffers == n+1 and reals == (n+1)*maxW*B for n=1..10, " + fixed3(secs) + " s");
  CHECK(ok);
}

namespace {

// The k=1 desk-scale run goes through the documented pipeline: `train` with a
// config file, then `eval` against the exact profile, reading results back
// from summary.json and profile.csv.
struct BurgersRun {
  nlohmann::json summary;
  double profile_max_err = 0.0;
  double wall_seconds = 0.0;
  bool ran = false;
  bool ok = false;
};

BurgersRun& burgers_run() {
  static BurgersRun run;
  if (!run.ran) {
    run.ran = true;
    Timer timer;
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "ntp_acceptance_burgers";
    fs::remove_all(dir);
    fs::create_directories(dir);
    {
      std::ofstream cfg(dir / "train.cfg");
      cfg << "profile_k = 1\nx_max = 2.0\nn_colloc = 256\nn_origin = 33\n"
             "hidden_layers = 3\nhidden_width = 24\nseed = 3\n"
             "adam_epochs = 2000\nlbfgs_epochs = 3000\nmetrics_every = 10\n";
    }
    const std::string cfg = (dir / "train.cfg").string();
    const std::string out_train = (dir / "train").string();
    const std::string out_eval = (dir / "eval").string();
    {
      const char* argv[] = {"ntp_cli", "train", "--config", cfg.c_str(), "--out",
                            out_train.c_str(), "--quiet"};
      if (cli::run(7, argv) != 0) return run;
    }
    const std::string ckpt = out_train + "/ckpt_final.ntpk";
    {
      const char* argv[] = {"ntp_cli",  "eval", "--checkpoint", ckpt.c_str(), "--profile", "1",
                            "--out",    out_eval.c_str(), "--points", "256"};
      if (cli::run(10, argv) != 0) return run;
    }
    {
      std::ifstream f(out_train + "/summary.json");
      f >> run.summary;
    }
    // max |U_learned - U_true| over the profile CSV's order-0 columns
    std::ifstream prof(out_eval + "/profile.csv");
    std::string line;
    std::getline(prof, line);  // header
    while (std::getline(prof, line)) {
      std::istringstream row(line);
      std::string tok;
      std::getline(row, tok, ',');  // x
      std::getline(row, tok, ',');
      const double learned = std::stod(tok);
      std::getline(row, tok, ',');
      const double truth = std::stod(tok);
      run.profile_max_err = std::max(run.profile_max_err, std::abs(learned - truth));
    }
    run.wall_seconds = timer.seconds();
    run.ok = true;
  }
  return run;
}

}  // namespace

TEST_CASE("criterion 5: Burgers profile k=1 at desk scale", "[c5]") {
  const auto& run = burgers_run();
  REQUIRE(run.ok);
  const double lam_err = run.summary["lambda_error"].get<double>();
  const double prof_err = run.profile_max_err;
  const bool pass = lam_err <= 5e-2 && prof_err <= 1e-2 && run.wall_seconds <= 1800.0;
  report(5, "Burgers profile k=1", pass,
         "lambda " + fixed3(run.summary["final_lambda"].get<double>()) + " (err " + sci(lam_err) +
             "), max profile err " + sci(prof_err) + ", " + fixed3(run.wall_seconds) + " s");
  CHECK(lam_err <= 5e-2);
  CHECK(prof_err <= 1e-2);
  CHECK(run.wall_seconds <= 1800.0);
}

TEST_CASE("criterion 6: L-BFGS forward dominance", "[c6]") {
  const auto& run = burgers_run();
  REQUIRE(run.ok);
  const double fwd = run.summary["lbfgs_forwards_per_iter"].get<double>();
  const double bwd = run.summary["lbfgs_backwards_per_iter"].get<double>();
  const int iters = run.summary["lbfgs_epochs_run"].get<int>();
  const bool pass = iters > 0 && fwd > 1.0 && bwd == 1.0;
  report(6, "L-BFGS forward dominance", pass,
         "mean forwards/iter " + fixed3(fwd) + ", mean backwards/iter " + fixed3(bwd) + " over " +
             std::to_string(iters) + " iterations");
  CHECK(iters > 0);
  CHECK(fwd > 1.0);
  CHECK(bwd == 1.0);
}

TEST_CASE("criterion 7: true-profile residual", "[c7]") {
  Timer timer;
  double worst = 0.0;
  for (int k : {1, 2}) {
    const auto grid = burgers::linspace(-2.0, 2.0, 101);
    const auto tp = burgers::true_profile_sample(k, 1.0, grid);
    const double lam = burgers::lambda_true(k);
    for (const auto& [x, u] : tp.samples) {
      const double du = burgers::profile_du_dx(k, 1.0, u);
      worst = std::max(worst, std::abs(burgers::residual(u, du, x, lam)));
    }
  }
  const double secs = timer.seconds();
  const bool pass = worst <= 1e-10;
  report(7, "true-profile residual", pass,
         "max |R| " + sci(worst) + " over k in {1,2}, " + fixed3(secs) + " s");
  CHECK(worst <= 1e-10);
}
