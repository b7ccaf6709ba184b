#pragma once

#include <algorithm>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "ntp/errors.hpp"

namespace ntp {

/// Hard cap on derivative order. 16 keeps every Bell-polynomial coefficient
/// exactly representable in 64-bit integers (checked at construction).
inline constexpr int kMaxOrder = 16;

/// An integer partition of `order`, stored as multiplicities: counts[j-1] is
/// the number of parts equal to j, so sum_j j*counts[j-1] == order. The
/// vector always has length `order` (trailing zeros kept for index
/// stability).
struct PartitionVector {
  std::vector<int> counts;
  int order = 0;

  /// |p| = total number of parts.
  int block_count() const {
    int s = 0;
    for (int c : counts) s += c;
    return s;
  }

  /// Weighted sum sum_j j*p_j; equals `order` for a valid partition.
  int weight() const {
    int s = 0;
    for (std::size_t j = 0; j < counts.size(); ++j) s += static_cast<int>(j + 1) * counts[j];
    return s;
  }

  bool operator==(const PartitionVector& other) const {
    return order == other.order && counts == other.counts;
  }

  /// "2-1-0" style rendering used by the CSV dump.
  std::string to_string() const {
    std::string s;
    for (std::size_t j = 0; j < counts.size(); ++j) {
      if (j) s.push_back('-');
      s += std::to_string(counts[j]);
    }
    return s;
  }
};

namespace detail {

inline void check_order(int n) {
  if (n < 1 || n > kMaxOrder)
    throw std::invalid_argument("partition order must be in [1, " + std::to_string(kMaxOrder) +
                                "], got " + std::to_string(n));
}

inline std::int64_t checked_mul(std::int64_t a, std::int64_t b) {
  std::int64_t r;
  if (__builtin_mul_overflow(a, b, &r))
    throw overflow_error("64-bit overflow in Bell-polynomial coefficient");
  return r;
}

inline std::int64_t factorial_i64(int n) {
  std::int64_t f = 1;
  for (int i = 2; i <= n; ++i) f = checked_mul(f, i);
  return f;
}

// Recursive descent over parts in decreasing size.
inline void emit_partitions(int remaining, int max_part, std::vector<int>& counts, int order,
                            std::vector<PartitionVector>& out) {
  if (remaining == 0) {
    out.push_back(PartitionVector{counts, order});
    return;
  }
  for (int part = std::min(remaining, max_part); part >= 1; --part) {
    ++counts[part - 1];
    emit_partitions(remaining - part, part, counts, order, out);
    --counts[part - 1];
  }
}

}  // namespace detail

/// All partitions of n, each appearing exactly once, ordered by
/// lexicographically decreasing multiplicity vector. For n = 3 this is
/// (3,0,0), (1,1,0), (0,0,1).
inline std::vector<PartitionVector> enumerate_partitions(int n) {
  detail::check_order(n);
  std::vector<PartitionVector> out;
  std::vector<int> counts(static_cast<std::size_t>(n), 0);
  detail::emit_partitions(n, n, counts, n, out);
  std::sort(out.begin(), out.end(), [](const PartitionVector& a, const PartitionVector& b) {
    return a.counts > b.counts;  // descending lexicographic
  });
  return out;
}

/// Bell-polynomial coefficient n! / (prod_j p_j! * (j!)^{p_j}).
/// Exact; throws ntp::overflow_error instead of wrapping.
inline std::int64_t faa_coefficient(const PartitionVector& p) {
  const int n = p.order;
  detail::check_order(n);
  if (p.weight() != n) throw std::invalid_argument("partition counts do not sum to order");
  std::int64_t denom = 1;
  for (std::size_t j = 0; j < p.counts.size(); ++j) {
    const int pj = p.counts[j];
    if (pj < 0) throw std::invalid_argument("negative multiplicity in partition");
    denom = detail::checked_mul(denom, detail::factorial_i64(pj));
    const std::int64_t jfact = detail::factorial_i64(static_cast<int>(j + 1));
    for (int r = 0; r < pj; ++r) denom = detail::checked_mul(denom, jfact);
  }
  const std::int64_t num = detail::factorial_i64(n);
  // The coefficient is a positive integer, so the division is exact.
  return num / denom;
}

/// Number of integer partitions of n. p(0) == 1 by convention.
inline std::int64_t partition_count(int n) {
  if (n < 0 || n > kMaxOrder)
    throw std::invalid_argument("partition_count: n out of range [0, " +
                                std::to_string(kMaxOrder) + "]");
  if (n == 0) return 1;
  // Euler's pentagonal recurrence would do; at n <= 16 the two-variable
  // table is just as quick and easier to audit.
  std::vector<std::vector<std::int64_t>> t(static_cast<std::size_t>(n + 1),
                                           std::vector<std::int64_t>(static_cast<std::size_t>(n + 1), 0));
  for (int k = 0; k <= n; ++k) t[0][static_cast<std::size_t>(k)] = 1;
  for (int m = 1; m <= n; ++m)
    for (int k = 1; k <= n; ++k) {
      std::int64_t v = t[static_cast<std::size_t>(m)][static_cast<std::size_t>(k - 1)];
      if (m >= k) v += t[static_cast<std::size_t>(m - k)][static_cast<std::size_t>(k)];
      t[static_cast<std::size_t>(m)][static_cast<std::size_t>(k)] = v;
    }
  return t[static_cast<std::size_t>(n)][static_cast<std::size_t>(n)];
}

/// Precomputed partitions and coefficients for every order <= max_order.
/// Immutable after construction; concurrent reads are safe.
class FaaTable {
public:
  struct Entry {
    PartitionVector partition;
    std::int64_t coefficient;
    int block_count;  // |p|, cached for the inner loop
  };

  explicit FaaTable(int max_order) : max_order_(max_order) {
    detail::check_order(max_order);
    entries_.resize(static_cast<std::size_t>(max_order) + 1);
    for (int m = 1; m <= max_order; ++m) {
      for (const auto& p : enumerate_partitions(m))
        entries_[static_cast<std::size_t>(m)].push_back(Entry{p, faa_coefficient(p), p.block_count()});
    }
  }

  int max_order() const { return max_order_; }

  const std::vector<Entry>& order(int m) const {
    if (m < 1 || m > max_order_) throw std::invalid_argument("FaaTable: order out of range");
    return entries_[static_cast<std::size_t>(m)];
  }

  /// Debug dump: order, counts (dash-separated), coefficient.
  void dump_csv(std::ostream& os) const {
    os << "order,counts,coefficient\n";
    for (int m = 1; m <= max_order_; ++m)
      for (const auto& e : entries_[static_cast<std::size_t>(m)])
        os << m << ',' << e.partition.to_string() << ',' << e.coefficient << '\n';
  }

private:
  int max_order_;
  std::vector<std::vector<Entry>> entries_;
};

inline FaaTable build_faa_table(int max_order) { return FaaTable(max_order); }

}  // namespace ntp
