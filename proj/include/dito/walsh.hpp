#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "dito/error.hpp"

namespace dito {

/// Finest dyadic level at which a double in [0, 1) is still resolved.
inline constexpr int kMaxDyadicLevel = 52;

/// Rademacher function tau_n: +1 when floor(2^n x) is even, -1 otherwise.
inline int rademacher(int n, double x) {
  if (n < 1) fail(Errc::InvalidArgument, "rademacher level must be >= 1");
  if (n > kMaxDyadicLevel) fail(Errc::ResolutionExceeded, "rademacher level " + std::to_string(n) + " > 52");
  if (!(x >= 0.0 && x < 1.0)) fail(Errc::InvalidArgument, "rademacher argument outside [0, 1)");
  const auto block = static_cast<std::uint64_t>(std::ldexp(x, n));
  return (block & 1U) == 0 ? 1 : -1;
}

/// A Walsh function named by the set of Rademacher levels it multiplies.
class WalshIndex {
 public:
  WalshIndex() = default;
  WalshIndex(std::initializer_list<int> factors) : factors_(factors) { normalize(); }
  explicit WalshIndex(std::vector<int> factors) : factors_(std::move(factors)) { normalize(); }

  std::span<const int> factors() const { return factors_; }
  std::size_t cardinality() const { return factors_.size(); }
  bool is_constant() const { return factors_.empty(); }
  bool is_odd() const { return factors_.size() % 2 == 1; }
  int max_factor() const { return factors_.empty() ? 0 : factors_.back(); }

  /// Pointwise product of two Walsh functions.
  WalshIndex operator*(const WalshIndex& other) const {
    std::vector<int> out;
    std::set_symmetric_difference(factors_.begin(), factors_.end(), other.factors_.begin(), other.factors_.end(),
                                  std::back_inserter(out));
    return WalshIndex(std::move(out));
  }

  /// Bit mask over dyadic block indices at `resolution`: level n maps to bit (resolution - n).
  std::uint64_t block_mask(int resolution) const {
    std::uint64_t mask = 0;
    for (int n : factors_) mask |= std::uint64_t{1} << (resolution - n);
    return mask;
  }

  std::string to_string() const {
    std::string s = "{";
    for (std::size_t i = 0; i < factors_.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(factors_[i]);
    }
    return s + "}";
  }

  friend bool operator==(const WalshIndex&, const WalshIndex&) = default;
  friend auto operator<=>(const WalshIndex&, const WalshIndex&) = default;

 private:
  void normalize() {
    std::sort(factors_.begin(), factors_.end());
    if (std::adjacent_find(factors_.begin(), factors_.end()) != factors_.end()) {
      fail(Errc::InvalidArgument, "Walsh index factors must be distinct");
    }
    if (!factors_.empty() && factors_.front() < 1) fail(Errc::InvalidArgument, "Walsh factors must be positive");
  }

  std::vector<int> factors_;
};

inline int walsh_eval(const WalshIndex& index, double x) {
  int value = 1;
  for (int n : index.factors()) value *= rademacher(n, x);
  return value;
}

/// Value of a Walsh function on dyadic block `block` of width 2^-resolution.
inline int walsh_on_block(std::uint64_t mask, std::uint64_t block) {
  return (std::popcount(block & mask) & 1) == 0 ? 1 : -1;
}

inline double dyadic_midpoint(std::uint64_t block, int resolution) {
  return std::ldexp(static_cast<double>(block) + 0.5, -resolution);
}

/// Smallest dyadic resolution at which every listed index is constant on blocks.
inline int dyadic_resolution(std::span<const WalshIndex> indices) {
  int m = 1;
  for (const auto& idx : indices) m = std::max(m, idx.max_factor());
  if (m > kMaxDyadicLevel) fail(Errc::ResolutionExceeded, "Walsh level above 52");
  return m;
}

/// Driver vector H = (H_1, ..., H_n) of odd-cardinality Walsh functions.
///
/// The first nine entries are tau_1, tau_2, tau_3, tau_1 tau_2 tau_3, tau_4, tau_5,
/// tau_1 tau_2 tau_4, tau_1 tau_2 tau_5, tau_1 ... tau_5. After that the
/// remaining odd subsets follow ordered by (max factor, cardinality, lexicographic).
inline std::vector<WalshIndex> walsh_driver_vector(std::size_t n) {
  if (n == 0) fail(Errc::InvalidArgument, "walsh_driver_vector needs n >= 1");
  const std::vector<WalshIndex> prefix = {{1}, {2}, {3}, {1, 2, 3}, {4}, {5}, {1, 2, 4}, {1, 2, 5}, {1, 2, 3, 4, 5}};
  std::vector<WalshIndex> out;
  out.reserve(n);
  for (const auto& idx : prefix) {
    if (out.size() == n) return out;
    out.push_back(idx);
  }
  const std::set<WalshIndex> used(prefix.begin(), prefix.end());
  for (int top = 1; out.size() < n; ++top) {
    if (top > kMaxDyadicLevel) fail(Errc::ResolutionExceeded, "driver vector exhausts level 52");
    // Subsets of {1..top-1} with even size, joined with {top}, grouped by size then lex.
    const int below = top - 1;
    for (int size = 0; size <= below && out.size() < n; size += 2) {
      std::vector<int> pick(static_cast<std::size_t>(size));
      for (int i = 0; i < size; ++i) pick[static_cast<std::size_t>(i)] = i + 1;
      while (true) {
        std::vector<int> factors = pick;
        factors.push_back(top);
        WalshIndex idx(std::move(factors));
        if (!used.contains(idx)) {
          out.push_back(std::move(idx));
          if (out.size() == n) return out;
        }
        // Next combination of `size` elements from {1..below} in lexicographic order.
        int i = size - 1;
        while (i >= 0 && pick[static_cast<std::size_t>(i)] == below - size + i + 1) --i;
        if (i < 0) break;
        ++pick[static_cast<std::size_t>(i)];
        for (int j = i + 1; j < size; ++j) pick[static_cast<std::size_t>(j)] = pick[static_cast<std::size_t>(j - 1)] + 1;
      }
    }
  }
  return out;
}

/// In-place unnormalised fast Walsh–Hadamard transform (natural ordering).
inline void fwht(std::span<double> values) {
  const std::size_t n = values.size();
  if (n == 0 || !std::has_single_bit(n)) fail(Errc::InvalidArgument, "fwht length must be a power of two");
  for (std::size_t h = 1; h < n; h *= 2) {
    for (std::size_t i = 0; i < n; i += 2 * h) {
      for (std::size_t j = i; j < i + h; ++j) {
        const double a = values[j];
        const double b = values[j + h];
        values[j] = a + b;
        values[j + h] = a - b;
      }
    }
  }
}

/// Exact L^2([0,1)) Gram matrix (row-major) of Walsh functions by dyadic block summation.
inline std::vector<double> walsh_gram(std::span<const WalshIndex> indices) {
  const int m = dyadic_resolution(indices);
  if (m > 30) fail(Errc::ResolutionExceeded, "dyadic block summation limited to level 30");
  const std::size_t k = indices.size();
  const std::uint64_t blocks = std::uint64_t{1} << m;
  std::vector<std::uint64_t> masks(k);
  for (std::size_t i = 0; i < k; ++i) masks[i] = indices[i].block_mask(m);
  std::vector<double> gram(k * k, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i; j < k; ++j) {
      std::int64_t sum = 0;
      for (std::uint64_t b = 0; b < blocks; ++b) sum += walsh_on_block(masks[i] ^ masks[j], b);
      gram[i * k + j] = gram[j * k + i] = std::ldexp(static_cast<double>(sum), -m);
    }
  }
  return gram;
}

}  // namespace dito
