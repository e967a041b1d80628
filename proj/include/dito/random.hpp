#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <boost/random/sobol.hpp>

#include "dito/error.hpp"

namespace dito {

/// SplitMix64 finaliser; used to derive independent per-path seeds.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Per-path pseudo-random uniform stream on [0, 1) with 53-bit resolution.
class UniformStream {
 public:
  UniformStream(std::uint64_t seed, std::uint64_t path) : engine_(mix_seed(seed, path)) {}

  double operator()() { return static_cast<double>(engine_() >> 11) * 0x1p-53; }

 private:
  std::mt19937_64 engine_;
};

enum class LowDiscrepancyKind { Sobol, Halton };

inline const char* to_string(LowDiscrepancyKind kind) { return kind == LowDiscrepancyKind::Sobol ? "sobol" : "halton"; }

/// `count` points of a randomised low-discrepancy sequence in [0, 1)^dim, row-major.
///
/// Sobol points get a random linear scramble and a digital shift per coordinate;
/// Halton points get a random Cranley–Patterson rotation. Either way each
/// point is marginally uniform, so estimators stay unbiased.
inline std::vector<double> randomized_points(LowDiscrepancyKind kind, std::size_t count, std::size_t dim,
                                             std::uint64_t seed) {
  if (dim == 0) fail(Errc::InvalidArgument, "low-discrepancy dimension must be positive");
  std::vector<double> points(count * dim);
  std::mt19937_64 shifts(mix_seed(seed, 0xD1B54A32D192ED03ULL));
  if (kind == LowDiscrepancyKind::Sobol) {
    if (dim > boost::random::detail::qrng_tables::sobol::max_dimension) {
      fail(Errc::InvalidArgument, "Sobol dimension above " + std::to_string(boost::random::detail::qrng_tables::sobol::max_dimension));
    }
    // per coordinate: a random unit lower-triangular binary matrix (digit r
    // picks up a random subset of the more significant digits) and a shift
    std::vector<std::array<std::uint64_t, 53>> rows(dim);
    std::vector<std::uint64_t> mask(dim);
    for (std::size_t d = 0; d < dim; ++d) {
      for (int r = 0; r < 53; ++r) {
        const int bit = 63 - r;
        const std::uint64_t higher = r == 0 ? 0 : ~std::uint64_t{0} << (bit + 1);
        rows[d][static_cast<std::size_t>(r)] = (std::uint64_t{1} << bit) | (shifts() & higher);
      }
      mask[d] = shifts();
    }
    // boost starts at index 1; the origin comes first so every 2^m prefix is a full net
    boost::random::sobol_engine<std::uint64_t, 64> engine(dim);
    for (std::size_t i = 0; i < count; ++i) {
      for (std::size_t d = 0; d < dim; ++d) {
        const std::uint64_t raw = i == 0 ? 0 : engine();
        std::uint64_t bits = 0;
        for (int r = 0; r < 53; ++r) {
          bits = (bits << 1) | static_cast<std::uint64_t>(std::popcount(rows[d][static_cast<std::size_t>(r)] & raw) & 1);
        }
        bits ^= mask[d] >> 11;
        points[i * dim + d] = static_cast<double>(bits) * 0x1p-53;
      }
    }
    return points;
  }
  std::vector<std::uint64_t> primes;
  for (std::uint64_t p = 2; primes.size() < dim; ++p) {
    bool prime = true;
    for (std::uint64_t q : primes) {
      if (q * q > p) break;
      if (p % q == 0) {
        prime = false;
        break;
      }
    }
    if (prime) primes.push_back(p);
  }
  std::vector<double> rotation(dim);
  for (auto& r : rotation) r = static_cast<double>(shifts() >> 11) * 0x1p-53;
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t d = 0; d < dim; ++d) {
      const std::uint64_t base = primes[d];
      double inv = 1.0 / static_cast<double>(base);
      double value = 0.0;
      for (std::uint64_t k = i + 1; k > 0; k /= base) {
        value += static_cast<double>(k % base) * inv;
        inv /= static_cast<double>(base);
      }
      double u = value + rotation[d];
      if (u >= 1.0) u -= 1.0;
      points[i * dim + d] = u;
    }
  }
  return points;
}

/// Pairwise summation in a fixed order, so sums do not depend on thread count.
inline double pairwise_sum(const double* data, std::size_t n) {
  if (n <= 16) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += data[i];
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum(data, half) + pairwise_sum(data + half, n - half);
}

}  // namespace dito
