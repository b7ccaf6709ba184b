#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "ntp/activation.hpp"
#include "ntp/errors.hpp"
#include "ntp/instrument.hpp"
#include "ntp/nested_dual.hpp"
#include "ntp/partitions.hpp"

namespace ntp {

/// Dense feed-forward network, scalar in, scalar out. Hidden layers use the
/// activation; the output layer is affine. Parameters are plain doubles;
/// evaluation templates copy them into whatever scalar type the caller
/// differentiates with.
struct DenseNet {
  std::vector<int> widths;  // [1, h_1, ..., h_L, 1]
  ActivationKind activation = ActivationKind::Tanh;
  std::uint64_t seed = 0;
  std::vector<std::vector<double>> weights;  // per affine map, row-major [out][in]
  std::vector<std::vector<double>> biases;

  int layer_count() const { return static_cast<int>(widths.size()) - 1; }

  int max_width() const {
    int m = 1;
    for (std::size_t i = 1; i < widths.size(); ++i) m = std::max(m, widths[i]);
    return m;
  }

  std::size_t param_count() const {
    std::size_t m = 0;
    for (int l = 0; l < layer_count(); ++l)
      m += static_cast<std::size_t>(widths[static_cast<std::size_t>(l)]) *
               static_cast<std::size_t>(widths[static_cast<std::size_t>(l) + 1]) +
           static_cast<std::size_t>(widths[static_cast<std::size_t>(l) + 1]);
    return m;
  }
};

inline std::size_t param_count(const DenseNet& net) { return net.param_count(); }

/// Xavier/Glorot-uniform weights, zero biases, fully determined by the seed.
inline DenseNet init(std::vector<int> widths, ActivationKind activation, std::uint64_t seed) {
  if (widths.size() < 2) throw std::invalid_argument("init: need at least input and output width");
  if (widths.front() != 1 || widths.back() != 1)
    throw std::invalid_argument("init: input and output dimension are fixed at 1");
  for (int w : widths)
    if (w < 1) throw std::invalid_argument("init: widths must be positive");

  DenseNet net;
  net.widths = std::move(widths);
  net.activation = activation;
  net.seed = seed;
  std::mt19937_64 rng(seed);
  for (int l = 0; l < net.layer_count(); ++l) {
    const int in = net.widths[static_cast<std::size_t>(l)];
    const int out = net.widths[static_cast<std::size_t>(l) + 1];
    const double limit = std::sqrt(6.0 / (in + out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    std::vector<double> w(static_cast<std::size_t>(in) * static_cast<std::size_t>(out));
    for (double& x : w) x = dist(rng);
    net.weights.push_back(std::move(w));
    net.biases.emplace_back(static_cast<std::size_t>(out), 0.0);
  }
  return net;
}

// -- parameter views ----------------------------------------------------------

/// Network parameters materialized in the scalar type an evaluation
/// differentiates with.
template <class S>
struct ParamSet {
  std::vector<std::vector<S>> W;
  std::vector<std::vector<S>> b;
};

inline ParamSet<double> value_params(const DenseNet& net) {
  return ParamSet<double>{net.weights, net.biases};
}

/// Canonical flat order: per layer, weights row-major then biases.
inline std::vector<double> flatten_params(const DenseNet& net) {
  std::vector<double> flat;
  flat.reserve(net.param_count());
  for (int l = 0; l < net.layer_count(); ++l) {
    flat.insert(flat.end(), net.weights[static_cast<std::size_t>(l)].begin(),
                net.weights[static_cast<std::size_t>(l)].end());
    flat.insert(flat.end(), net.biases[static_cast<std::size_t>(l)].begin(),
                net.biases[static_cast<std::size_t>(l)].end());
  }
  return flat;
}

inline void unflatten_params(DenseNet& net, const std::vector<double>& flat) {
  if (flat.size() < net.param_count()) throw std::invalid_argument("unflatten: flat vector too short");
  std::size_t k = 0;
  for (int l = 0; l < net.layer_count(); ++l) {
    for (double& w : net.weights[static_cast<std::size_t>(l)]) w = flat[k++];
    for (double& b : net.biases[static_cast<std::size_t>(l)]) b = flat[k++];
  }
}

/// Parameters built elementwise via `make(flat_index) -> S`, following the
/// canonical flat order. Used to create tape leaves or directional duals.
template <class S, class Make>
ParamSet<S> build_params(const DenseNet& net, Make&& make) {
  ParamSet<S> p;
  std::size_t k = 0;
  for (int l = 0; l < net.layer_count(); ++l) {
    std::vector<S> w, b;
    w.reserve(net.weights[static_cast<std::size_t>(l)].size());
    b.reserve(net.biases[static_cast<std::size_t>(l)].size());
    for (std::size_t i = 0; i < net.weights[static_cast<std::size_t>(l)].size(); ++i) w.push_back(make(k++));
    for (std::size_t i = 0; i < net.biases[static_cast<std::size_t>(l)].size(); ++i) b.push_back(make(k++));
    p.W.push_back(std::move(w));
    p.b.push_back(std::move(b));
  }
  return p;
}

// -- plain forward ------------------------------------------------------------

namespace detail {

inline void check_layer_finite(double v, int layer, int order) {
  if (!std::isfinite(v))
    throw poisoned_value_error("non-finite activation at layer " + std::to_string(layer) +
                                   ", order " + std::to_string(order),
                               -1, "layer " + std::to_string(layer) + ", order " + std::to_string(order));
}

}  // namespace detail

/// Standard MLP evaluation, one output per input. The affine accumulation
/// runs bias-first then ascending input index; forward_ntp uses the same
/// order so its order-0 row is bitwise identical.
inline std::vector<double> forward(const DenseNet& net, const std::vector<double>& xs) {
  const int L = net.layer_count();
  std::vector<double> cur, next;
  std::vector<double> out(xs.size());
  for (std::size_t bi = 0; bi < xs.size(); ++bi) {
    cur.assign(1, xs[bi]);
    for (int l = 0; l < L; ++l) {
      const int in = net.widths[static_cast<std::size_t>(l)];
      const int wout = net.widths[static_cast<std::size_t>(l) + 1];
      const auto& W = net.weights[static_cast<std::size_t>(l)];
      const auto& B = net.biases[static_cast<std::size_t>(l)];
      next.assign(static_cast<std::size_t>(wout), 0.0);
      for (int r = 0; r < wout; ++r) {
        double acc = B[static_cast<std::size_t>(r)];
        for (int c = 0; c < in; ++c)
          acc += W[static_cast<std::size_t>(r) * static_cast<std::size_t>(in) + static_cast<std::size_t>(c)] *
                 cur[static_cast<std::size_t>(c)];
        detail::check_layer_finite(acc, l + 1, 0);
        next[static_cast<std::size_t>(r)] = (l + 1 < L) ? std::tanh(acc) : acc;
      }
      std::swap(cur, next);
    }
    out[bi] = cur[0];
  }
  return out;
}

/// Scalar-generic single-point forward with the network's own double
/// parameters. This is the closure handed to the nested-dual engine, so it
/// must stay independent of the n-TP path.
template <class S>
S forward_scalar(const DenseNet& net, const S& x) {
  const int L = net.layer_count();
  std::vector<S> cur{x}, next;
  for (int l = 0; l < L; ++l) {
    const int in = net.widths[static_cast<std::size_t>(l)];
    const int wout = net.widths[static_cast<std::size_t>(l) + 1];
    const auto& W = net.weights[static_cast<std::size_t>(l)];
    const auto& B = net.biases[static_cast<std::size_t>(l)];
    next.clear();
    for (int r = 0; r < wout; ++r) {
      S acc = cur[0] * W[static_cast<std::size_t>(r) * static_cast<std::size_t>(in)];
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

// -- derivative stacks ---------------------------------------------------------

/// The (n+1) per-order activation buffers carried through the n-TP forward
/// pass: entry k holds the k-th x-derivative of the current layer values for
/// the whole batch. Exactly these buffers are allocated, which is the
/// witness for the O(nM) memory claim.
template <class S>
struct DerivativeStack {
  int order = 0;
  int batch = 0;
  int width = 0;  // stride: the widest layer this stack must hold

  std::vector<std::vector<S>> y;

  DerivativeStack(int n, int max_width, int batch_size)
      : order(n), batch(batch_size), width(max_width) {
    y.resize(static_cast<std::size_t>(n) + 1);
    for (auto& buf : y) buf.assign(static_cast<std::size_t>(max_width) * static_cast<std::size_t>(batch_size), S{});
    auto& c = instrument::counters();
    c.stack_buffers += static_cast<std::uint64_t>(n) + 1;
    c.stack_reals += (static_cast<std::uint64_t>(n) + 1) * static_cast<std::uint64_t>(max_width) *
                     static_cast<std::uint64_t>(batch_size);
  }

  S& at(int k, int j, int b) {
    return y[static_cast<std::size_t>(k)][static_cast<std::size_t>(b) * static_cast<std::size_t>(width) +
                                          static_cast<std::size_t>(j)];
  }
  const S& at(int k, int j, int b) const {
    return y[static_cast<std::size_t>(k)][static_cast<std::size_t>(b) * static_cast<std::size_t>(width) +
                                          static_cast<std::size_t>(j)];
  }

  /// Final network output derivative of order k at batch point b.
  const S& output(int k, int b) const { return at(k, 0, b); }
};

/// n-TP forward pass: all derivative orders 0..n in one sweep.
///
/// Seeding: y_0 = W1 x + b1, y_1 = W1 * 1, y_k = 0 for k >= 2. Each further
/// layer applies the activation through the Bell-coefficient sum (orders
/// updated n down to 1, which keeps the lower-order inputs intact until
/// consumed), then the affine map with bias added to order 0 only.
template <class S>
DerivativeStack<S> forward_ntp(const DenseNet& net, const ParamSet<S>& params,
                               const std::vector<double>& xs, int n, const FaaTable& table) {
  if (n < 1) throw std::invalid_argument("forward_ntp: order must be >= 1");
  if (n > table.max_order()) throw std::invalid_argument("forward_ntp: order exceeds Faa table");
  const int L = net.layer_count();
  const int B = static_cast<int>(xs.size());
  DerivativeStack<S> st(n, net.max_width(), B);

  auto& counters = instrument::counters();
  const bool count = counters.track_ops;

  // Seed from the first affine map.
  {
    const int wout = net.widths[1];
    const auto& W = params.W[0];
    const auto& bias = params.b[0];
    for (int b = 0; b < B; ++b) {
      for (int r = 0; r < wout; ++r) {
        S a0 = bias[static_cast<std::size_t>(r)] + W[static_cast<std::size_t>(r)] * xs[static_cast<std::size_t>(b)];
        st.at(0, r, b) = a0;
        st.at(1, r, b) = W[static_cast<std::size_t>(r)];
        for (int k = 2; k <= n; ++k) st.at(k, r, b) = S{};
      }
      detail::check_layer_finite(scalar_value(st.at(0, 0, b)), 1, 0);
    }
    if (count) counters.prim_ops += static_cast<std::uint64_t>(B) * static_cast<std::uint64_t>(wout) * 2;
  }

  std::vector<S> sigma;                         // activation stack scratch, n+1 entries
  std::vector<S> row(static_cast<std::size_t>(net.max_width()));  // affine scratch, one layer row

  for (int l = 1; l < L; ++l) {
    const int in = net.widths[static_cast<std::size_t>(l)];
    const int wout = net.widths[static_cast<std::size_t>(l) + 1];
    const auto& W = params.W[static_cast<std::size_t>(l)];
    const auto& bias = params.b[static_cast<std::size_t>(l)];

    // Activation derivatives through Faa di Bruno, per neuron, in place.
    for (int b = 0; b < B; ++b) {
      for (int j = 0; j < in; ++j) {
        act_stack(net.activation, st.at(0, j, b), n, sigma);
        for (int i = n; i >= 1; --i) {
          S z{};
          bool first = true;
          for (const auto& e : table.order(i)) {
            S t = sigma[static_cast<std::size_t>(e.block_count)];
            if (e.coefficient != 1) t = t * static_cast<double>(e.coefficient);
            for (int m = 1; m <= i; ++m) {
              const int pm = e.partition.counts[static_cast<std::size_t>(m - 1)];
              for (int rep = 0; rep < pm; ++rep) t = t * st.at(m, j, b);
            }
            z = first ? t : z + t;
            first = false;
          }
          st.at(i, j, b) = z;
        }
        st.at(0, j, b) = sigma[0];
      }
    }
    if (count) {
      std::uint64_t per_neuron = 0;
      for (int k = 1; k <= n; ++k) per_neuron += 2 * static_cast<std::uint64_t>(k);  // Horner
      per_neuron += 1;  // tanh
      for (int i = 1; i <= n; ++i) {
        for (const auto& e : table.order(i)) {
          per_neuron += (e.coefficient != 1 ? 1 : 0) + static_cast<std::uint64_t>(e.block_count) + 1;
        }
      }
      counters.prim_ops += static_cast<std::uint64_t>(B) * static_cast<std::uint64_t>(in) * per_neuron;
    }

    // Affine map for every order; bias only enters order 0.
    for (int b = 0; b < B; ++b) {
      for (int i = 0; i <= n; ++i) {
        for (int r = 0; r < wout; ++r) {
          S acc;
          if (i == 0) {
            acc = bias[static_cast<std::size_t>(r)];
            for (int c = 0; c < in; ++c)
              acc = acc + W[static_cast<std::size_t>(r) * static_cast<std::size_t>(in) + static_cast<std::size_t>(c)] *
                              st.at(0, c, b);
          } else {
            acc = W[static_cast<std::size_t>(r) * static_cast<std::size_t>(in)] * st.at(i, 0, b);
            for (int c = 1; c < in; ++c)
              acc = acc + W[static_cast<std::size_t>(r) * static_cast<std::size_t>(in) + static_cast<std::size_t>(c)] *
                              st.at(i, c, b);
          }
          row[static_cast<std::size_t>(r)] = acc;
        }
        for (int r = 0; r < wout; ++r) st.at(i, r, b) = row[static_cast<std::size_t>(r)];
      }
      detail::check_layer_finite(scalar_value(st.at(0, 0, b)), l + 1, 0);
    }
    if (count)
      counters.prim_ops += static_cast<std::uint64_t>(B) * (static_cast<std::uint64_t>(n) + 1) *
                           static_cast<std::uint64_t>(wout) * static_cast<std::uint64_t>(in) * 2;
  }

  // Output width is 1; make sure every order is finite.
  for (int b = 0; b < B; ++b)
    for (int k = 0; k <= n; ++k) detail::check_layer_finite(scalar_value(st.output(k, b)), L, k);
  return st;
}

/// Double-path convenience overload.
inline DerivativeStack<double> forward_ntp(const DenseNet& net, const std::vector<double>& xs, int n,
                                           const FaaTable& table) {
  return forward_ntp<double>(net, value_params(net), xs, n, table);
}

// -- checkpoints ---------------------------------------------------------------

inline constexpr char kCheckpointMagic[8] = {'N', 'T', 'P', 'C', 'K', 'P', 'T', '1'};

namespace detail {

template <class T>
void put_le(std::vector<std::uint8_t>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

template <class T>
T get_le(const std::vector<std::uint8_t>& in, std::size_t& at) {
  if (at + sizeof(T) > in.size())
    throw parse_error("checkpoint truncated", static_cast<long>(at));
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(in[at + i]) << (8 * i);
  at += sizeof(T);
  return v;
}

}  // namespace detail

/// Checkpoint bytes: magic, widths, activation tag, seed, raw little-endian
/// 64-bit parameters in canonical flat order.
inline std::vector<std::uint8_t> serialize(const DenseNet& net) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kCheckpointMagic, kCheckpointMagic + 8);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(net.widths.size()));
  for (int w : net.widths) detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(w));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(net.activation));
  detail::put_le<std::uint64_t>(out, net.seed);
  const auto flat = flatten_params(net);
  detail::put_le<std::uint64_t>(out, flat.size());
  for (double d : flat) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    detail::put_le<std::uint64_t>(out, bits);
  }
  return out;
}

inline DenseNet deserialize(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0)
    throw parse_error("bad checkpoint magic", 0);
  std::size_t at = 8;
  const auto nw = detail::get_le<std::uint32_t>(bytes, at);
  if (nw < 2 || nw > 64) throw parse_error("implausible width count", static_cast<long>(at));
  std::vector<int> widths;
  for (std::uint32_t i = 0; i < nw; ++i) {
    const auto w = detail::get_le<std::uint32_t>(bytes, at);
    if (w < 1 || w > 1u << 20) throw parse_error("implausible width", static_cast<long>(at));
    widths.push_back(static_cast<int>(w));
  }
  const auto act = detail::get_le<std::uint32_t>(bytes, at);
  if (act != 0) throw parse_error("unknown activation tag", static_cast<long>(at));
  const auto seed = detail::get_le<std::uint64_t>(bytes, at);

  DenseNet net = init(widths, static_cast<ActivationKind>(act), seed);
  const auto np = detail::get_le<std::uint64_t>(bytes, at);
  if (np != net.param_count()) throw parse_error("parameter count mismatch", static_cast<long>(at));
  std::vector<double> flat(np);
  for (auto& d : flat) {
    const auto bits = detail::get_le<std::uint64_t>(bytes, at);
    std::memcpy(&d, &bits, 8);
    if (!std::isfinite(d)) throw parse_error("non-finite parameter", static_cast<long>(at - 8));
  }
  unflatten_params(net, flat);
  return net;
}

inline void save_checkpoint(const DenseNet& net, const std::string& path) {
  const auto bytes = serialize(net);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline DenseNet load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

/// CSV export of a double derivative stack: columns x, y0..yn.
inline void write_stack_csv(std::ostream& os, const std::vector<double>& xs,
                            const DerivativeStack<double>& st) {
  os << "x";
  for (int k = 0; k <= st.order; ++k) os << ",y" << k;
  os << '\n';
  os.precision(17);
  for (int b = 0; b < st.batch; ++b) {
    os << xs[static_cast<std::size_t>(b)];
    for (int k = 0; k <= st.order; ++k) os << ',' << st.output(k, b);
    os << '\n';
  }
}

}  // namespace ntp
