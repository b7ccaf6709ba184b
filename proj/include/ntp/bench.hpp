#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "ntp/config.hpp"
#include "ntp/network.hpp"
#include "ntp/nested_dual.hpp"
#include "ntp/partitions.hpp"
#include "ntp/tape.hpp"

namespace ntp::bench {

/// Experiment grid. `orders` applies to both methods; baseline cells that
/// cannot fit their gradient tape under the memory budget become OOM rows
/// instead of running.
struct BenchConfig {
  std::vector<int> depths = {2, 3, 4, 6};          // hidden layers
  std::vector<int> widths = {16, 24, 48, 96};      // neurons per hidden layer
  std::vector<int> batch_sizes = {64, 128, 256, 512, 1024};
  std::vector<int> orders = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  int trials = 100;
  int warmup = 3;
  std::vector<std::string> methods = {"ntp", "nested_baseline"};
  std::uint64_t seed = 42;
  double memory_budget_mb = 4096.0;
  // The baseline grid stops here even when `orders` goes further: past nine
  // derivatives its forward alone is minutes per cell and the gradient tape
  // is far beyond any desk budget, so there is no measurement to publish.
  int baseline_max_order = 9;

  void validate() const {
    if (depths.empty() || widths.empty() || batch_sizes.empty() || orders.empty() || methods.empty())
      throw std::invalid_argument("empty experiment grid");
    if (trials < 1) throw std::invalid_argument("trials must be >= 1");
    for (int n : orders)
      if (n < 1 || n > kMaxOrder) throw std::invalid_argument("derivative orders must be in [1, 16]");
    for (const auto& m : methods)
      if (m != "ntp" && m != "nested_baseline")
        throw std::invalid_argument("unknown method: " + m);
  }

  static BenchConfig from_config(const KeyValueConfig& kv) {
    BenchConfig c;
    auto ints = [&](const char* key, std::vector<int> def) {
      std::vector<long long> d(def.begin(), def.end());
      auto got = kv.get_int_list(key, d);
      return std::vector<int>(got.begin(), got.end());
    };
    c.depths = ints("depths", c.depths);
    c.widths = ints("widths", c.widths);
    c.batch_sizes = ints("batch_sizes", c.batch_sizes);
    c.orders = ints("orders", c.orders);
    c.trials = static_cast<int>(kv.get_int("trials", c.trials));
    c.warmup = static_cast<int>(kv.get_int("warmup", c.warmup));
    c.methods = kv.get_string_list("methods", c.methods);
    c.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<long long>(c.seed)));
    c.memory_budget_mb = kv.get_double("memory_budget_mb", c.memory_budget_mb);
    c.baseline_max_order = static_cast<int>(kv.get_int("baseline_max_order", c.baseline_max_order));
    return c;
  }
};

/// One grid cell's measurements. Times are means over `trials` runs;
/// `forward` is derivative-stack production, `backward` the full
/// gradient-of-loss pass (tape re-execution plus reverse sweep), `total`
/// includes the loss evaluated between the two timed regions.
struct BenchRecord {
  std::string method;
  int depth = 0;
  int width = 0;
  int batch = 0;
  int n = 0;
  double mean_forward_s = std::numeric_limits<double>::quiet_NaN();
  double mean_backward_s = std::numeric_limits<double>::quiet_NaN();
  double mean_total_s = std::numeric_limits<double>::quiet_NaN();
  int trials = 0;
  std::string status = "ok";  // ok | oom | oom_backward
};

namespace detail {

/// Scalar-generic single-point forward with caller-typed parameters; the
/// baseline runs this on nested duals (double base for timing, Var base when
/// the gradient tape is recorded).
template <class SV, class SP>
SV forward_mixed(const DenseNet& net, const ParamSet<SP>& params, const SV& x) {
  const int L = net.layer_count();
  std::vector<SV> cur{x}, next;
  for (int l = 0; l < L; ++l) {
    const int in = net.widths[static_cast<std::size_t>(l)];
    const int wout = net.widths[static_cast<std::size_t>(l) + 1];
    const auto& W = params.W[static_cast<std::size_t>(l)];
    const auto& B = params.b[static_cast<std::size_t>(l)];
    next.clear();
    for (int r = 0; r < wout; ++r) {
      SV acc = cur[0] * W[static_cast<std::size_t>(r) * static_cast<std::size_t>(in)];
      for (int c = 1; c < in; ++c)
        acc = acc + cur[static_cast<std::size_t>(c)] *
                        W[static_cast<std::size_t>(r) * static_cast<std::size_t>(in) + static_cast<std::size_t>(c)];
      acc = acc + B[static_cast<std::size_t>(r)];
      next.push_back((l + 1 < L) ? tanh(acc) : acc);
    }
    std::swap(cur, next);
  }
  return cur[0];
}

template <int N>
double baseline_forward_point(const DenseNet& net, const ParamSet<double>& p, double x) {
  const auto r = forward_mixed(net, p, dual_variable<N, double>(x));
  return dual_derivative(r, N);
}

template <int N>
Var baseline_point_var(const DenseNet& net, const ParamSet<Var>& p, double x) {
  const auto r = forward_mixed(net, p, dual_variable<N, Var>(Var{x, -1}));
  return dual_derivative(r, N);
}

inline double baseline_forward_dispatch(const DenseNet& net, const ParamSet<double>& p, double x,
                                        int n) {
  switch (n) {
    case 1: return baseline_forward_point<1>(net, p, x);
    case 2: return baseline_forward_point<2>(net, p, x);
    case 3: return baseline_forward_point<3>(net, p, x);
    case 4: return baseline_forward_point<4>(net, p, x);
    case 5: return baseline_forward_point<5>(net, p, x);
    case 6: return baseline_forward_point<6>(net, p, x);
    case 7: return baseline_forward_point<7>(net, p, x);
    case 8: return baseline_forward_point<8>(net, p, x);
    case 9: return baseline_forward_point<9>(net, p, x);
    case 10: return baseline_forward_point<10>(net, p, x);
    case 11: return baseline_forward_point<11>(net, p, x);
    case 12: return baseline_forward_point<12>(net, p, x);
  }
  throw resource_error("nested baseline depth limit exceeded: order " + std::to_string(n));
}

inline Var baseline_var_dispatch(const DenseNet& net, const ParamSet<Var>& p, double x, int n) {
  switch (n) {
    case 1: return baseline_point_var<1>(net, p, x);
    case 2: return baseline_point_var<2>(net, p, x);
    case 3: return baseline_point_var<3>(net, p, x);
    case 4: return baseline_point_var<4>(net, p, x);
    case 5: return baseline_point_var<5>(net, p, x);
    case 6: return baseline_point_var<6>(net, p, x);
    case 7: return baseline_point_var<7>(net, p, x);
    case 8: return baseline_point_var<8>(net, p, x);
    case 9: return baseline_point_var<9>(net, p, x);
    case 10: return baseline_point_var<10>(net, p, x);
    case 11: return baseline_point_var<11>(net, p, x);
    case 12: return baseline_point_var<12>(net, p, x);
  }
  throw resource_error("nested baseline depth limit exceeded: order " + std::to_string(n));
}

}  // namespace detail

/// Exact node count the baseline's gradient tape would need for one cell:
/// a one-point dry run (the op structure is point-independent) scaled to the
/// batch, plus the mean-square loss tail.
inline std::uint64_t estimate_baseline_tape_nodes(const DenseNet& net, int batch, int n) {
  if (n > kMaxNestedDepth) return std::numeric_limits<std::uint64_t>::max();
  Tape t;
  t.set_count_only(true);
  t.activate();
  const auto flat = flatten_params(net);
  auto params = build_params<Var>(net, [&](std::size_t k) { return t.leaf(flat[k]); });
  const std::uint64_t after_leaves = t.counted_nodes();
  (void)detail::baseline_var_dispatch(net, params, 0.5, n);
  const std::uint64_t per_point = t.counted_nodes() - after_leaves;
  return after_leaves + per_point * static_cast<std::uint64_t>(batch) +
         2ull * static_cast<std::uint64_t>(batch) + 2ull;
}

inline double tape_bytes(std::uint64_t nodes) {
  return static_cast<double>(nodes) * static_cast<double>(Tape::bytes_per_node());
}

/// Runs the full grid in a globally shuffled order. Per cell: warmup runs
/// excluded, monotonic clock, forward and backward timed separately with the
/// loss computed between the timed regions, allocations reused across
/// trials. Baseline cells whose gradient tape would exceed the memory budget
/// are recorded as OOM rows rather than attempted.
inline std::vector<BenchRecord> run_bench(const BenchConfig& config, std::ostream* progress = nullptr) {
  config.validate();
  using clock = std::chrono::steady_clock;

  struct Cell {
    std::string method;
    int depth, width, batch, n;
    std::uint64_t stable_index;
  };
  std::vector<Cell> cells;
  std::uint64_t idx = 0;
  for (const auto& m : config.methods)
    for (int d : config.depths)
      for (int w : config.widths)
        for (int b : config.batch_sizes)
          for (int n : config.orders) {
            if (m == "nested_baseline" && n > config.baseline_max_order) continue;
            cells.push_back(Cell{m, d, w, b, n, idx++});
          }
  if (cells.empty()) throw std::invalid_argument("empty experiment grid");

  std::mt19937_64 shuffle_rng(config.seed);
  std::shuffle(cells.begin(), cells.end(), shuffle_rng);

  const double budget_bytes = config.memory_budget_mb * 1024.0 * 1024.0;
  const int max_order = *std::max_element(config.orders.begin(), config.orders.end());
  const FaaTable table(max_order);

  std::vector<BenchRecord> records;
  records.reserve(cells.size());
  Tape tape;  // reused across every cell and trial

  for (const auto& cell : cells) {
    BenchRecord rec;
    rec.method = cell.method;
    rec.depth = cell.depth;
    rec.width = cell.width;
    rec.batch = cell.batch;
    rec.n = cell.n;
    rec.trials = config.trials;

    std::vector<int> widths(static_cast<std::size_t>(cell.depth) + 2, cell.width);
    widths.front() = 1;
    widths.back() = 1;
    const DenseNet net = init(widths, ActivationKind::Tanh, config.seed);
    std::mt19937_64 xs_rng(config.seed + 0x9e3779b97f4a7c15ull * (cell.stable_index + 1));
    std::uniform_real_distribution<double> xdist(-2.0, 2.0);
    std::vector<double> xs(static_cast<std::size_t>(cell.batch));
    for (auto& x : xs) x = xdist(xs_rng);

    if (progress) (*progress) << cell.method << " d=" << cell.depth << " w=" << cell.width
                              << " b=" << cell.batch << " n=" << cell.n << std::flush;

    const auto flat = flatten_params(net);
    double fwd_sum = 0.0, bwd_sum = 0.0, total_sum = 0.0;

    if (cell.method == "ntp") {
      for (int trial = -config.warmup; trial < config.trials; ++trial) {
        const auto t0 = clock::now();
        const auto st = forward_ntp(net, xs, cell.n, table);
        const auto t1 = clock::now();
        double loss = 0.0;
        for (int b = 0; b < cell.batch; ++b) {
          const double y = st.output(cell.n, b);
          loss += y * y;
        }
        loss /= cell.batch;
        (void)loss;
        const auto t2 = clock::now();
        tape.clear();
        tape.activate();
        auto params = build_params<Var>(net, [&](std::size_t k) { return tape.leaf(flat[k]); });
        const auto stv = forward_ntp<Var>(net, params, xs, cell.n, table);
        Var vloss{};
        for (int b = 0; b < cell.batch; ++b) {
          const Var y = stv.output(cell.n, b);
          const Var y2 = y * y;
          vloss = (b == 0) ? y2 : vloss + y2;
        }
        vloss = vloss / static_cast<double>(cell.batch);
        const auto adj = tape.backward(vloss, 1.0);
        (void)adj;
        const auto t3 = clock::now();
        if (trial >= 0) {
          fwd_sum += std::chrono::duration<double>(t1 - t0).count();
          bwd_sum += std::chrono::duration<double>(t3 - t2).count();
          total_sum += std::chrono::duration<double>(t3 - t0).count();
        }
      }
      rec.mean_forward_s = fwd_sum / config.trials;
      rec.mean_backward_s = bwd_sum / config.trials;
      rec.mean_total_s = total_sum / config.trials;
    } else {  // nested_baseline
      if (cell.n > kMaxNestedDepth) {
        rec.status = "oom";  // the depth cap is itself a memory bound
        rec.trials = 0;
        records.push_back(rec);
        if (progress) (*progress) << "  -> oom (depth)\n";
        continue;
      }
      const std::uint64_t est_nodes = estimate_baseline_tape_nodes(net, cell.batch, cell.n);
      const bool backward_fits = tape_bytes(est_nodes) <= budget_bytes;
      const auto vparams = value_params(net);

      for (int trial = -config.warmup; trial < config.trials; ++trial) {
        const auto t0 = clock::now();
        std::vector<double> yn(static_cast<std::size_t>(cell.batch));
        for (int b = 0; b < cell.batch; ++b)
          yn[static_cast<std::size_t>(b)] =
              detail::baseline_forward_dispatch(net, vparams, xs[static_cast<std::size_t>(b)], cell.n);
        const auto t1 = clock::now();
        double loss = 0.0;
        for (int b = 0; b < cell.batch; ++b) loss += yn[static_cast<std::size_t>(b)] * yn[static_cast<std::size_t>(b)];
        loss /= cell.batch;
        (void)loss;
        const auto t2 = clock::now();
        if (backward_fits) {
          tape.clear();
          tape.activate();
          auto params = build_params<Var>(net, [&](std::size_t k) { return tape.leaf(flat[k]); });
          Var vloss{};
          for (int b = 0; b < cell.batch; ++b) {
            const Var y = detail::baseline_var_dispatch(net, params, xs[static_cast<std::size_t>(b)], cell.n);
            const Var y2 = y * y;
            vloss = (b == 0) ? y2 : vloss + y2;
          }
          vloss = vloss / static_cast<double>(cell.batch);
          const auto adj = tape.backward(vloss, 1.0);
          (void)adj;
        }
        const auto t3 = clock::now();
        if (trial >= 0) {
          fwd_sum += std::chrono::duration<double>(t1 - t0).count();
          bwd_sum += std::chrono::duration<double>(t3 - t2).count();
          total_sum += std::chrono::duration<double>(t3 - t0).count();
        }
      }
      rec.mean_forward_s = fwd_sum / config.trials;
      if (backward_fits) {
        rec.mean_backward_s = bwd_sum / config.trials;
        rec.mean_total_s = total_sum / config.trials;
      } else {
        rec.status = "oom_backward";
      }
    }
    if (progress) (*progress) << "  fwd=" << rec.mean_forward_s << " status=" << rec.status << "\n";
    records.push_back(rec);
  }

  // Restore the grid's stable order for output (shuffling is an execution
  // mitigation, not a presentation choice).
  std::sort(records.begin(), records.end(), [](const BenchRecord& a, const BenchRecord& b) {
    return std::tie(a.method, a.depth, a.width, a.batch, a.n) <
           std::tie(b.method, b.depth, b.width, b.batch, b.n);
  });
  return records;
}

inline void write_bench_csv(std::ostream& os, const std::vector<BenchRecord>& records) {
  os << "method,depth,width,batch,n,status,trials,mean_forward_s,mean_backward_s,mean_total_s\n";
  os.precision(9);
  for (const auto& r : records) {
    os << r.method << ',' << r.depth << ',' << r.width << ',' << r.batch << ',' << r.n << ','
       << r.status << ',' << r.trials << ',';
    auto put = [&](double v) {
      if (std::isfinite(v)) os << v;
    };
    put(r.mean_forward_s);
    os << ',';
    put(r.mean_backward_s);
    os << ',';
    put(r.mean_total_s);
    os << '\n';
  }
}

// -- scaling fits ----------------------------------------------------------------

enum class TimeField { Total, Forward, Backward };

struct ScalingFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

struct ScalingDiagnostics {
  ScalingFit exponential;   // log t ~ n
  ScalingFit quasilinear;   // log t ~ log(n p(n))
  std::string classification;
  int points = 0;
};

namespace detail {

inline ScalingFit ols(const std::vector<double>& xs, const std::vector<double>& ys) {
  const double n = static_cast<double>(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  ScalingFit f;
  const double denom = n * sxx - sx * sx;
  f.slope = (n * sxy - sx * sy) / denom;
  f.intercept = (sy - f.slope * sx) / n;
  double ss_res = 0, ss_tot = 0;
  const double mean_y = sy / n;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double e = ys[i] - (f.intercept + f.slope * xs[i]);
    ss_res += e * e;
    ss_tot += (ys[i] - mean_y) * (ys[i] - mean_y);
  }
  f.r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
  return f;
}

}  // namespace detail

/// Regresses log(time) against n (exponential model) and against
/// log(n p(n)) (quasilinear model) over the method's completed cells;
/// classification goes to the better-fitting model.
inline ScalingDiagnostics fit_scaling(const std::vector<BenchRecord>& records,
                                      const std::string& method,
                                      TimeField field = TimeField::Total) {
  // Mean time per distinct n (grids may repeat n across shapes).
  std::vector<double> sum(kMaxOrder + 1, 0.0);
  std::vector<int> cnt(kMaxOrder + 1, 0);
  for (const auto& r : records) {
    if (r.method != method) continue;
    const double t = field == TimeField::Total ? r.mean_total_s
                     : field == TimeField::Forward ? r.mean_forward_s
                                                   : r.mean_backward_s;
    if (!std::isfinite(t) || t <= 0.0) continue;
    sum[static_cast<std::size_t>(r.n)] += t;
    cnt[static_cast<std::size_t>(r.n)] += 1;
  }
  std::vector<double> ns, logt;
  for (int n = 1; n <= kMaxOrder; ++n)
    if (cnt[static_cast<std::size_t>(n)] > 0) {
      ns.push_back(static_cast<double>(n));
      logt.push_back(std::log(sum[static_cast<std::size_t>(n)] / cnt[static_cast<std::size_t>(n)]));
    }
  if (ns.size() < 4)
    throw std::invalid_argument("fit_scaling: need at least 4 distinct derivative orders");

  ScalingDiagnostics d;
  d.points = static_cast<int>(ns.size());
  d.exponential = detail::ols(ns, logt);
  std::vector<double> lognp(ns.size());
  for (std::size_t i = 0; i < ns.size(); ++i) {
    const int n = static_cast<int>(ns[i]);
    lognp[i] = std::log(static_cast<double>(n) * static_cast<double>(partition_count(n)));
  }
  d.quasilinear = detail::ols(lognp, logt);
  d.classification = d.exponential.r2 > d.quasilinear.r2 ? "exponential" : "quasilinear";
  return d;
}

}  // namespace ntp::bench
