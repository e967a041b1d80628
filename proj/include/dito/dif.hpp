#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dito/basis.hpp"
#include "dito/error.hpp"
#include "dito/law.hpp"
#include "dito/scheme.hpp"
#include "dito/walsh.hpp"

namespace dito {

/// f(t, x) on time and state.
using SpaceTimeFunction = std::function<double(double t, std::span<const double> x)>;

/// One higher-order term: a basis multi-index (tensor mode), a basis index
/// (weak finite mode) or the Rademacher factors of a Walsh function.
struct CorrectionTerm {
  std::vector<int> index;
  double coefficient;
};

/// The three term groups of a one-step increment f(t_{k+1}, X_{k+1}) - f(t_k, X_k):
/// martingale coefficients multiplying the driver increments, a drift coefficient
/// multiplying dt, and correction terms in higher basis functions.
struct ChaosDecomposition {
  enum class Mode {
    Tensor,      ///< independent coordinates xi^j, increments W^j = xi^j
    WeakFinite,  ///< single finite xi, increments H_j(xi) sqrt(dt)
    Walsh,       ///< single uniform xi, increments H_j(xi) sqrt(dt), Walsh H_j
    WeakPoints,  ///< finite driver points y, increments y_j sqrt(dt)
  };

  struct Parts {
    double martingale = 0.0;
    double drift = 0.0;
    double correction = 0.0;

    double total() const { return martingale + drift + correction; }
  };

  Mode mode = Mode::Tensor;
  std::vector<double> martingale_coeffs;
  double drift_coeff = 0.0;
  std::vector<CorrectionTerm> corrections;
  double dt = 1.0;

  std::vector<OrthonormalSystem> bases;  // Tensor: one per coordinate; WeakFinite: one
  std::vector<WalshIndex> drivers;       // Walsh only
  int resolution = 0;                    // Walsh only
  std::vector<std::vector<double>> points;      // WeakPoints: driver value per atom
  std::vector<std::vector<double>> complement;  // WeakPoints: correction function values per atom

  /// Evaluates the term groups at a realised innovation: the vector xi (Tensor),
  /// the single scalar xi (WeakFinite), the uniform (Walsh) or the atom index (WeakPoints).
  Parts parts(std::span<const double> realized) const {
    Parts p;
    p.drift = drift_coeff * dt;
    switch (mode) {
      case Mode::Tensor:
        if (realized.size() != bases.size()) fail(Errc::DimensionMismatch, "realised innovation dimension");
        for (std::size_t j = 0; j < martingale_coeffs.size(); ++j) p.martingale += martingale_coeffs[j] * realized[j];
        for (const auto& term : corrections) {
          double product = term.coefficient;
          for (std::size_t j = 0; j < bases.size(); ++j) {
            product *= bases[j](static_cast<std::size_t>(term.index[j]), realized[j]);
          }
          p.correction += product;
        }
        break;
      case Mode::WeakFinite: {
        const double xi = realized[0];
        const double root = std::sqrt(dt);
        for (std::size_t j = 0; j < martingale_coeffs.size(); ++j) {
          p.martingale += martingale_coeffs[j] * bases[0](j + 1, xi) * root;
        }
        for (const auto& term : corrections) {
          p.correction += term.coefficient * bases[0](static_cast<std::size_t>(term.index[0]), xi);
        }
        break;
      }
      case Mode::Walsh: {
        const double u = realized[0];
        const double root = std::sqrt(dt);
        for (std::size_t j = 0; j < martingale_coeffs.size(); ++j) {
          p.martingale += martingale_coeffs[j] * walsh_eval(drivers[j], u) * root;
        }
        for (const auto& term : corrections) p.correction += term.coefficient * walsh_eval(WalshIndex(term.index), u);
        break;
      }
      case Mode::WeakPoints: {
        const auto atom = static_cast<std::size_t>(realized[0]);
        if (atom >= points.size()) fail(Errc::InvalidArgument, "atom index out of range");
        const double root = std::sqrt(dt);
        for (std::size_t j = 0; j < martingale_coeffs.size(); ++j) {
          p.martingale += martingale_coeffs[j] * points[atom][j] * root;
        }
        for (const auto& term : corrections) {
          p.correction += term.coefficient * complement[static_cast<std::size_t>(term.index[0])][atom];
        }
        break;
      }
    }
    return p;
  }
};

namespace detail {

inline void check_truncation(std::size_t truncation) {
  if (truncation < 2) fail(Errc::TruncationTooSmall, "truncation must be at least 2");
}

inline void check_centred(const IncrementLaw& law) {
  if (law.kind() == IncrementLaw::Kind::LebesgueUnit) {
    fail(Errc::InvalidArgument, "tensor decomposition needs centred increment laws");
  }
  if (std::abs(law.mean()) > 1e-12) fail(Errc::InvalidArgument, "increment law must have mean 0");
}

/// Tensor-product decomposition of g(x) = f(t + dt, X + F(X, dt, x)).
inline ChaosDecomposition tensor_decompose(const SpaceTimeFunction& f, const StatePoint& state,
                                           const SchemeField& field, std::span<const IncrementLaw> laws,
                                           std::span<const OrthonormalSystem> bases, std::size_t truncation,
                                           double dt) {
  check_truncation(truncation);
  const std::size_t n = state.state.size();
  if (laws.size() != n || bases.size() != n || field.dimension() != n) {
    fail(Errc::DimensionMismatch, "state, laws, bases and field dimensions must agree");
  }
  if (!(dt > 0.0)) fail(Errc::InvalidArgument, "dt must be positive");
  std::vector<QuadratureRule> rules;
  double total_nodes = 1.0;
  for (std::size_t j = 0; j < n; ++j) {
    check_centred(laws[j]);
    if (!(bases[j].law() == laws[j])) fail(Errc::InvalidArgument, "basis built over a different law");
    rules.push_back(laws[j].rule());
    total_nodes *= static_cast<double>(rules.back().size());
  }
  if (total_nodes > 1e7) fail(Errc::ExplosionGuard, "tensor quadrature exceeds 1e7 nodes");

  // Correction multi-indices: l_j < size_j, 2 <= |l| < truncation, ordered by degree then lex.
  std::vector<std::vector<int>> multi;
  {
    std::vector<int> l(n, 0);
    while (true) {
      const int degree = std::accumulate(l.begin(), l.end(), 0);
      if (degree >= 2 && static_cast<std::size_t>(degree) < truncation) multi.push_back(l);
      std::size_t j = n;
      while (j-- > 0) {
        if (static_cast<std::size_t>(++l[j]) < bases[j].size()) break;
        l[j] = 0;
      }
      if (j == static_cast<std::size_t>(-1)) break;
    }
    std::stable_sort(multi.begin(), multi.end(), [](const auto& a, const auto& b) {
      return std::accumulate(a.begin(), a.end(), 0) < std::accumulate(b.begin(), b.end(), 0);
    });
  }

  // basis values per coordinate and node
  std::vector<std::vector<std::vector<double>>> table(n);
  for (std::size_t j = 0; j < n; ++j) {
    table[j].resize(rules[j].size());
    for (std::size_t q = 0; q < rules[j].size(); ++q) {
      table[j][q].resize(bases[j].size());
      for (std::size_t l = 0; l < bases[j].size(); ++l) table[j][q][l] = bases[j](l, rules[j].nodes[q]);
    }
  }

  ChaosDecomposition d;
  d.mode = ChaosDecomposition::Mode::Tensor;
  d.dt = dt;
  d.bases.assign(bases.begin(), bases.end());
  std::vector<double> first(n, 0.0);
  std::vector<double> coeff(multi.size(), 0.0);
  double mean = 0.0;

  std::vector<std::size_t> q(n, 0);
  std::vector<double> x(n);
  State next(n);
  while (true) {
    double weight = 1.0;
    for (std::size_t j = 0; j < n; ++j) {
      x[j] = rules[j].nodes[q[j]];
      weight *= rules[j].weights[q[j]];
    }
    field.increment(state.state, dt, x, next);
    for (std::size_t i = 0; i < n; ++i) next[i] += state.state[i];
    const double g = f(state.time + dt, next);
    mean += weight * g;
    for (std::size_t j = 0; j < n; ++j) first[j] += weight * g * x[j];
    for (std::size_t m = 0; m < multi.size(); ++m) {
      double h = weight * g;
      for (std::size_t j = 0; j < n; ++j) h *= table[j][q[j]][static_cast<std::size_t>(multi[m][j])];
      coeff[m] += h;
    }
    std::size_t j = n;
    while (j-- > 0) {
      if (++q[j] < rules[j].size()) break;
      q[j] = 0;
    }
    if (j == static_cast<std::size_t>(-1)) break;
  }

  d.martingale_coeffs.resize(n);
  for (std::size_t j = 0; j < n; ++j) d.martingale_coeffs[j] = first[j] / laws[j].moment(2);
  d.drift_coeff = (mean - f(state.time, state.state)) / dt;
  for (std::size_t m = 0; m < multi.size(); ++m) d.corrections.push_back({multi[m], coeff[m]});
  return d;
}

}  // namespace detail

/// Smallest truncation for which the tensor correction set is exhaustive.
inline std::size_t full_truncation(std::span<const OrthonormalSystem> bases) {
  std::size_t total = 1;
  for (const auto& b : bases) total += b.size() - 1;
  return std::max<std::size_t>(total, 2);
}

/// One-step decomposition of f(W + xi) - f(W) for a scalar random walk.
///
/// martingale = E[f(W + xi) xi] / E[xi^2], drift = E[f(W + xi) - f(W)] / dt,
/// corrections = E[f(W + xi) H_l(xi)] for 2 <= l < truncation. All integrals
/// are conditioned on the current position W.
inline ChaosDecomposition decompose_walk_1d(const std::function<double(double)>& f, const StatePoint& state,
                                            const IncrementLaw& law, const OrthonormalSystem& basis,
                                            std::size_t truncation, double dt = 1.0) {
  detail::check_truncation(truncation);
  if (truncation > basis.size()) fail(Errc::InvalidArgument, "truncation exceeds the basis size");
  if (state.state.size() != 1) fail(Errc::DimensionMismatch, "decompose_walk_1d needs a scalar state");
  const SpaceTimeFunction g = [&f](double, std::span<const double> x) { return f(x[0]); };
  const std::vector<IncrementLaw> laws{law};
  const std::vector<OrthonormalSystem> bases{basis};
  return detail::tensor_decompose(g, state, SchemeField::random_walk(1), laws, bases, truncation, dt);
}

/// Tensor-product decomposition of f(t_{k+1}, W + xi) - f(t_k, W) for independent coordinates.
inline ChaosDecomposition decompose_multidim(const SpaceTimeFunction& f, const StatePoint& state,
                                             std::span<const IncrementLaw> laws,
                                             std::span<const OrthonormalSystem> bases, std::size_t truncation,
                                             double dt = 1.0) {
  return detail::tensor_decompose(f, state, SchemeField::random_walk(state.state.size()), laws, bases, truncation,
                                  dt);
}

/// Decomposition of f(t_{k+1}, X + F(X, dt, xi)) - f(t_k, X) for a stochastic difference equation.
inline ChaosDecomposition decompose_scheme(const SpaceTimeFunction& f, const StatePoint& state,
                                           const SchemeField& field, std::span<const IncrementLaw> laws,
                                           std::span<const OrthonormalSystem> bases, std::size_t truncation,
                                           double dt) {
  return detail::tensor_decompose(f, state, field, laws, bases, truncation, dt);
}

/// Weak-scheme decomposition with drivers H_1..H_n of a single finite innovation xi,
/// increments W^j = H_j(xi) sqrt(dt); corrections are H_{n+1}, ..., H_{size-1}.
inline ChaosDecomposition decompose_weak_scheme(const SpaceTimeFunction& f, const StatePoint& state,
                                                const SchemeField& field, const OrthonormalSystem& basis,
                                                std::size_t drivers, double dt) {
  const auto& law = basis.law();
  if (!law.is_finite()) fail(Errc::InvalidArgument, "finite weak scheme needs a finitely supported law");
  if (drivers == 0 || drivers + 1 > basis.size()) fail(Errc::CountExceedsSupport, "driver count exceeds basis");
  if (field.dimension() != drivers || state.state.size() != drivers) {
    fail(Errc::DimensionMismatch, "weak scheme needs one driver per state coordinate");
  }
  if (!(dt > 0.0)) fail(Errc::InvalidArgument, "dt must be positive");
  ChaosDecomposition d;
  d.mode = ChaosDecomposition::Mode::WeakFinite;
  d.dt = dt;
  d.bases = {basis};
  d.martingale_coeffs.assign(drivers, 0.0);
  std::vector<double> higher(basis.size() - drivers - 1, 0.0);
  double mean = 0.0;
  std::vector<double> y(drivers);
  State next(drivers);
  for (const auto& atom : law.atoms()) {
    for (std::size_t j = 0; j < drivers; ++j) y[j] = basis(j + 1, atom.point);
    field.increment(state.state, dt, y, next);
    for (std::size_t i = 0; i < drivers; ++i) next[i] += state.state[i];
    const double g = atom.weight * f(state.time + dt, next);
    mean += g;
    for (std::size_t j = 0; j < drivers; ++j) d.martingale_coeffs[j] += g * y[j];
    for (std::size_t l = 0; l < higher.size(); ++l) higher[l] += g * basis(drivers + 1 + l, atom.point);
  }
  for (double& a : d.martingale_coeffs) a /= std::sqrt(dt);
  d.drift_coeff = (mean - f(state.time, state.state)) / dt;
  for (std::size_t l = 0; l < higher.size(); ++l) {
    d.corrections.push_back({{static_cast<int>(drivers + 1 + l)}, higher[l]});
  }
  return d;
}

/// Every non-constant Walsh index at `resolution` that is not a driver, in block-mask order.
inline std::vector<WalshIndex> walsh_complement(std::span<const WalshIndex> drivers, int resolution) {
  if (resolution > 24) fail(Errc::ResolutionExceeded, "exhaustive Walsh set limited to level 24");
  const std::set<WalshIndex> taken(drivers.begin(), drivers.end());
  std::vector<WalshIndex> out;
  for (std::uint64_t mask = 1; mask < (std::uint64_t{1} << resolution); ++mask) {
    std::vector<int> factors;
    for (int level = 1; level <= resolution; ++level) {
      if (mask & (std::uint64_t{1} << (resolution - level))) factors.push_back(level);
    }
    WalshIndex idx(std::move(factors));
    if (!taken.contains(idx)) out.push_back(std::move(idx));
  }
  return out;
}

/// Weak-scheme decomposition with Walsh drivers and a uniform innovation on [0, 1).
///
/// All integrals are exact dyadic block sums at the smallest level covering
/// every driver and correction index; one fast Walsh–Hadamard transform yields
/// every coefficient.
inline ChaosDecomposition decompose_weak_scheme(const SpaceTimeFunction& f, const StatePoint& state,
                                                const SchemeField& field, std::span<const WalshIndex> drivers,
                                                std::span<const WalshIndex> correction_indices, double dt) {
  if (drivers.empty()) fail(Errc::InvalidArgument, "need at least one driver");
  if (field.dimension() != drivers.size() || state.state.size() != drivers.size()) {
    fail(Errc::DimensionMismatch, "weak scheme needs one driver per state coordinate");
  }
  if (!(dt > 0.0)) fail(Errc::InvalidArgument, "dt must be positive");
  std::set<WalshIndex> seen;
  for (const auto& idx : drivers) {
    if (idx.is_constant()) fail(Errc::OverlappingIndices, "the constant function cannot be a driver");
    if (!seen.insert(idx).second) fail(Errc::OverlappingIndices, "repeated driver " + idx.to_string());
  }
  for (const auto& idx : correction_indices) {
    if (idx.is_constant() || !seen.insert(idx).second) {
      fail(Errc::OverlappingIndices, "correction index " + idx.to_string() + " overlaps drivers or constant");
    }
  }
  std::vector<WalshIndex> all(drivers.begin(), drivers.end());
  all.insert(all.end(), correction_indices.begin(), correction_indices.end());
  const int m = dyadic_resolution(all);
  if (m > 24) fail(Errc::ResolutionExceeded, "dyadic block summation limited to level 24");

  const std::size_t n = drivers.size();
  const std::uint64_t blocks = std::uint64_t{1} << m;
  std::vector<std::uint64_t> masks(n);
  for (std::size_t j = 0; j < n; ++j) masks[j] = drivers[j].block_mask(m);
  std::vector<double> transform(blocks);
  std::vector<double> y(n);
  State next(n);
  for (std::uint64_t b = 0; b < blocks; ++b) {
    for (std::size_t j = 0; j < n; ++j) y[j] = walsh_on_block(masks[j], b);
    field.increment(state.state, dt, y, next);
    for (std::size_t i = 0; i < n; ++i) next[i] += state.state[i];
    transform[b] = f(state.time + dt, next);
  }
  fwht(transform);
  const double inv_blocks = std::ldexp(1.0, -m);

  ChaosDecomposition d;
  d.mode = ChaosDecomposition::Mode::Walsh;
  d.dt = dt;
  d.resolution = m;
  d.drivers.assign(drivers.begin(), drivers.end());
  d.martingale_coeffs.resize(n);
  for (std::size_t j = 0; j < n; ++j) d.martingale_coeffs[j] = transform[masks[j]] * inv_blocks / std::sqrt(dt);
  d.drift_coeff = (transform[0] * inv_blocks - f(state.time, state.state)) / dt;
  for (const auto& idx : correction_indices) {
    const auto factors = idx.factors();
    d.corrections.push_back({std::vector<int>(factors.begin(), factors.end()), transform[idx.block_mask(m)] * inv_blocks});
  }
  return d;
}

/// Weak-scheme decomposition for a driver given by finitely many points y with
/// mean 0 and covariance I. Corrections use an orthonormal basis of the
/// functions on the atoms orthogonal to 1, y_1, ..., y_n; there are
/// G - n - 1 of them, none when G = n + 1.
inline ChaosDecomposition decompose_weak_scheme(const SpaceTimeFunction& f, const StatePoint& state,
                                                const SchemeField& field, const DriverLaw& driver, double dt) {
  if (driver.kind() != DriverLaw::Kind::FinitePoints) fail(Errc::InvalidArgument, "driver must be given by points");
  const std::size_t n = driver.dimension();
  const auto pts = driver.points();
  const auto prob = driver.point_probabilities();
  const std::size_t g = pts.size();
  if (field.dimension() != n || state.state.size() != n) {
    fail(Errc::DimensionMismatch, "weak scheme needs one driver per state coordinate");
  }
  if (!(dt > 0.0)) fail(Errc::InvalidArgument, "dt must be positive");
  if (g < n + 1) fail(Errc::CountExceedsSupport, "fewer atoms than drivers plus one");
  Eigen::MatrixXd b(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(n + 1));
  for (std::size_t i = 0; i < g; ++i) {
    const double r = std::sqrt(prob[i]);
    b(static_cast<Eigen::Index>(i), 0) = r;
    for (std::size_t j = 0; j < n; ++j) b(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j + 1)) = r * pts[i][j];
  }
  const Eigen::MatrixXd gram = b.transpose() * b;
  if (!gram.isApprox(Eigen::MatrixXd::Identity(gram.rows(), gram.cols()), 1e-10)) {
    fail(Errc::DegenerateMoments, "driver points need mean 0 and identity covariance");
  }
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(b).householderQ();

  ChaosDecomposition d;
  d.mode = ChaosDecomposition::Mode::WeakPoints;
  d.dt = dt;
  d.points.assign(pts.begin(), pts.end());
  d.martingale_coeffs.assign(n, 0.0);
  d.complement.assign(g - n - 1, std::vector<double>(g));
  for (std::size_t l = 0; l + n + 1 < g; ++l) {
    for (std::size_t i = 0; i < g; ++i) {
      d.complement[l][i] = q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(n + 1 + l)) / std::sqrt(prob[i]);
    }
  }
  std::vector<double> higher(g - n - 1, 0.0);
  double mean = 0.0;
  State next(n);
  for (std::size_t i = 0; i < g; ++i) {
    field.increment(state.state, dt, pts[i], next);
    for (std::size_t c = 0; c < n; ++c) next[c] += state.state[c];
    const double v = prob[i] * f(state.time + dt, next);
    mean += v;
    for (std::size_t j = 0; j < n; ++j) d.martingale_coeffs[j] += v * pts[i][j];
    for (std::size_t l = 0; l < higher.size(); ++l) higher[l] += v * d.complement[l][i];
  }
  for (double& a : d.martingale_coeffs) a /= std::sqrt(dt);
  d.drift_coeff = (mean - f(state.time, state.state)) / dt;
  for (std::size_t l = 0; l < higher.size(); ++l) d.corrections.push_back({{static_cast<int>(l)}, higher[l]});
  return d;
}

/// L^2 norm of the correction part. Zero exactly when the drivers together
/// with the constant span every contingency of one step.
inline double spanning_defect(const ChaosDecomposition& d) {
  double s = 0.0;
  for (const auto& term : d.corrections) s += term.coefficient * term.coefficient;
  return std::sqrt(s);
}

}  // namespace dito
