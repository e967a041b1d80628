#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "dito/basis.hpp"
#include "dito/error.hpp"
#include "dito/io.hpp"
#include "dito/law.hpp"
#include "dito/random.hpp"
#include "dito/walsh.hpp"

namespace dito {

using State = std::vector<double>;
using VectorField = std::function<void(std::span<const double> x, std::span<double> out)>;
/// Writes an n x n matrix in row-major order.
using MatrixField = std::function<void(std::span<const double> x, std::span<double> out)>;
using UpdateMap =
    std::function<void(std::span<const double> x, double dt, std::span<const double> y, std::span<double> out)>;

/// sigma_i(x) = vol_i x_i and mu_i(x) = drift_i x_i: diagonal geometric Brownian coefficients.
struct GeometricCoefficients {
  std::vector<double> vol;
  std::vector<double> drift;
};

/// The update map F(x, dt, y) of X_{k+1} = X_k + F(X_k, dt, y_{k+1}).
class SchemeField {
 public:
  enum class Kind { General, EulerMaruyama };

  static SchemeField general(std::size_t dim, UpdateMap update) {
    SchemeField f(Kind::General, dim);
    f.update_ = std::move(update);
    return f;
  }

  /// F(x, dt, y) = sigma(x) y sqrt(dt) + mu(x) dt with a full n x n sigma.
  static SchemeField euler_maruyama(std::size_t dim, MatrixField sigma, VectorField mu) {
    SchemeField f(Kind::EulerMaruyama, dim);
    f.sigma_ = std::move(sigma);
    f.mu_ = std::move(mu);
    return f;
  }

  /// Euler–Maruyama with diagonal sigma given by its diagonal.
  static SchemeField euler_maruyama_diagonal(std::size_t dim, VectorField sigma_diagonal, VectorField mu) {
    SchemeField f(Kind::EulerMaruyama, dim);
    f.sigma_ = std::move(sigma_diagonal);
    f.mu_ = std::move(mu);
    f.diagonal_ = true;
    return f;
  }

  static SchemeField constant_coefficients(std::size_t dim, double sigma, double mu) {
    return euler_maruyama_diagonal(
        dim, [sigma](std::span<const double>, std::span<double> out) { std::fill(out.begin(), out.end(), sigma); },
        [mu](std::span<const double>, std::span<double> out) { std::fill(out.begin(), out.end(), mu); });
  }

  static SchemeField geometric(GeometricCoefficients coefficients) {
    if (coefficients.vol.size() != coefficients.drift.size() || coefficients.vol.empty()) {
      fail(Errc::DimensionMismatch, "geometric coefficients need matching non-empty vol and drift");
    }
    const std::size_t dim = coefficients.vol.size();
    auto vol = coefficients.vol;
    auto drift = coefficients.drift;
    SchemeField f = euler_maruyama_diagonal(
        dim,
        [vol](std::span<const double> x, std::span<double> out) {
          for (std::size_t i = 0; i < out.size(); ++i) out[i] = vol[i] * x[i];
        },
        [drift](std::span<const double> x, std::span<double> out) {
          for (std::size_t i = 0; i < out.size(); ++i) out[i] = drift[i] * x[i];
        });
    f.geometric_ = std::move(coefficients);
    return f;
  }

  /// F(x, dt, y) = y: the state is the random walk itself.
  static SchemeField random_walk(std::size_t dim) {
    return general(dim, [](std::span<const double>, double, std::span<const double> y, std::span<double> out) {
      std::copy(y.begin(), y.end(), out.begin());
    });
  }

  /// F identically zero.
  static SchemeField frozen(std::size_t dim) {
    return general(dim, [](std::span<const double>, double, std::span<const double>, std::span<double> out) {
      std::fill(out.begin(), out.end(), 0.0);
    });
  }

  std::size_t dimension() const { return dim_; }
  Kind kind() const { return kind_; }
  bool is_diagonal() const { return diagonal_; }
  const std::optional<GeometricCoefficients>& geometric_coefficients() const { return geometric_; }

  /// out = F(x, dt, y).
  void increment(std::span<const double> x, double dt, std::span<const double> y, std::span<double> out) const {
    if (kind_ == Kind::General) {
      update_(x, dt, y, out);
      return;
    }
    thread_local std::vector<double> sigma;
    thread_local std::vector<double> mu;
    mu.resize(dim_);
    mu_(x, mu);
    const double root = std::sqrt(dt);
    if (diagonal_) {
      sigma.resize(dim_);
      sigma_(x, sigma);
      for (std::size_t i = 0; i < dim_; ++i) out[i] = sigma[i] * y[i] * root + mu[i] * dt;
      return;
    }
    sigma.resize(dim_ * dim_);
    sigma_(x, sigma);
    for (std::size_t i = 0; i < dim_; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < dim_; ++j) s += sigma[i * dim_ + j] * y[j];
      out[i] = s * root + mu[i] * dt;
    }
  }

  /// x + F(x, dt, y).
  State step(std::span<const double> x, double dt, std::span<const double> y) const {
    State out(dim_);
    increment(x, dt, y, out);
    for (std::size_t i = 0; i < dim_; ++i) out[i] += x[i];
    return out;
  }

  /// Full row-major diffusion matrix; Euler–Maruyama fields only.
  std::vector<double> sigma_matrix(std::span<const double> x) const {
    require_em();
    std::vector<double> out(dim_ * dim_, 0.0);
    if (diagonal_) {
      std::vector<double> d(dim_);
      sigma_(x, d);
      for (std::size_t i = 0; i < dim_; ++i) out[i * dim_ + i] = d[i];
    } else {
      sigma_(x, out);
    }
    return out;
  }

  std::vector<double> mu_vector(std::span<const double> x) const {
    require_em();
    std::vector<double> out(dim_);
    mu_(x, out);
    return out;
  }

 private:
  SchemeField(Kind kind, std::size_t dim) : kind_(kind), dim_(dim) {
    if (dim == 0) fail(Errc::InvalidArgument, "scheme dimension must be positive");
  }

  void require_em() const {
    if (kind_ != Kind::EulerMaruyama) fail(Errc::InvalidArgument, "field is not Euler–Maruyama");
  }

  Kind kind_;
  std::size_t dim_;
  UpdateMap update_;
  VectorField sigma_;
  VectorField mu_;
  bool diagonal_ = false;
  std::optional<GeometricCoefficients> geometric_;
};

/// One enumerable driver outcome: the increment vector y and its probability.
struct DriverOutcome {
  std::vector<double> y;
  double probability;
};

/// Law of the per-step driver vector y in R^n.
///
/// FiniteIID: independent finite laws per coordinate. FinitePoints: a joint
/// finite law on R^n (e.g. y = H(xi) for a finite xi). GaussianIID: independent
/// centred normals. WalshUniform: y_j = H_j(xi) for Walsh drivers H_j and a
/// single xi uniform on [0, 1) shared by all coordinates of the step.
class DriverLaw {
 public:
  enum class Kind { FiniteIID, FinitePoints, GaussianIID, WalshUniform };

  static DriverLaw finite_iid(std::vector<IncrementLaw> laws) {
    if (laws.empty()) fail(Errc::InvalidArgument, "driver needs at least one coordinate");
    for (const auto& law : laws) {
      if (!law.is_finite()) fail(Errc::InvalidArgument, "finite_iid needs finitely supported laws");
    }
    DriverLaw d(Kind::FiniteIID, laws.size());
    d.laws_ = std::move(laws);
    return d;
  }

  static DriverLaw finite_iid(const IncrementLaw& law, std::size_t n) {
    return finite_iid(std::vector<IncrementLaw>(n, law));
  }

  static DriverLaw finite_points(std::vector<std::vector<double>> points, std::vector<double> probabilities) {
    if (points.empty() || points.size() != probabilities.size()) {
      fail(Errc::InvalidArgument, "finite_points needs matching points and probabilities");
    }
    const std::size_t n = points.front().size();
    double total = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (points[i].size() != n || n == 0) fail(Errc::DimensionMismatch, "finite_points dimensions differ");
      if (!(probabilities[i] > 0.0)) fail(Errc::InvalidArgument, "finite_points probabilities must be positive");
      total += probabilities[i];
    }
    if (std::abs(total - 1.0) > 1e-12) fail(Errc::InvalidArgument, "finite_points probabilities must sum to 1");
    DriverLaw d(Kind::FinitePoints, n);
    d.points_ = std::move(points);
    d.probabilities_ = std::move(probabilities);
    return d;
  }

  /// y = (H_1(xi), ..., H_n(xi)) with xi distributed by the basis' finite law.
  static DriverLaw from_basis(const OrthonormalSystem& basis, std::size_t n) {
    const auto& law = basis.law();
    if (!law.is_finite()) fail(Errc::InvalidArgument, "from_basis needs a finitely supported law");
    if (n + 1 > basis.size()) fail(Errc::CountExceedsSupport, "from_basis: not enough basis functions");
    std::vector<std::vector<double>> points;
    std::vector<double> probabilities;
    for (const auto& atom : law.atoms()) {
      std::vector<double> y(n);
      for (std::size_t j = 0; j < n; ++j) y[j] = basis(j + 1, atom.point);
      points.push_back(std::move(y));
      probabilities.push_back(atom.weight);
    }
    return finite_points(std::move(points), std::move(probabilities));
  }

  static DriverLaw gaussian_iid(std::size_t n, double variance = 1.0) {
    DriverLaw d(Kind::GaussianIID, n);
    d.laws_.assign(n, IncrementLaw::gaussian(variance));
    return d;
  }

  /// `resolution` 0 selects the minimal level covering every driver.
  static DriverLaw walsh(std::vector<WalshIndex> drivers, int resolution = 0) {
    if (drivers.empty()) fail(Errc::InvalidArgument, "walsh driver needs at least one index");
    const int minimal = dyadic_resolution(drivers);
    if (resolution == 0) resolution = minimal;
    if (resolution < minimal) fail(Errc::InvalidArgument, "walsh resolution below the largest driver level");
    if (resolution > kMaxDyadicLevel) fail(Errc::ResolutionExceeded, "walsh resolution above 52");
    DriverLaw d(Kind::WalshUniform, drivers.size());
    d.resolution_ = resolution;
    for (const auto& idx : drivers) d.masks_.push_back(idx.block_mask(resolution));
    d.drivers_ = std::move(drivers);
    return d;
  }

  Kind kind() const { return kind_; }
  std::size_t dimension() const { return dim_; }
  int resolution() const { return resolution_; }
  std::span<const WalshIndex> walsh_drivers() const { return drivers_; }
  std::span<const IncrementLaw> coordinate_laws() const { return laws_; }
  std::span<const std::vector<double>> points() const { return points_; }
  std::span<const double> point_probabilities() const { return probabilities_; }

  std::size_t uniforms_per_step() const {
    return (kind_ == Kind::FiniteIID || kind_ == Kind::GaussianIID) ? dim_ : 1;
  }

  /// Maps uniforms_per_step() variates in [0, 1) to a driver vector.
  void map(std::span<const double> u, std::span<double> y) const {
    switch (kind_) {
      case Kind::FiniteIID:
      case Kind::GaussianIID:
        for (std::size_t j = 0; j < dim_; ++j) y[j] = laws_[j].sample(u[j]);
        return;
      case Kind::FinitePoints: {
        double cumulative = 0.0;
        std::size_t pick = points_.size() - 1;
        for (std::size_t i = 0; i < points_.size(); ++i) {
          cumulative += probabilities_[i];
          if (u[0] < cumulative) {
            pick = i;
            break;
          }
        }
        std::copy(points_[pick].begin(), points_[pick].end(), y.begin());
        return;
      }
      case Kind::WalshUniform: {
        const auto block = static_cast<std::uint64_t>(std::ldexp(u[0], resolution_));
        for (std::size_t j = 0; j < dim_; ++j) y[j] = walsh_on_block(masks_[j], block);
        return;
      }
    }
  }

  bool enumerable() const { return kind_ != Kind::GaussianIID; }

  /// Number of outcomes per step (saturates at SIZE_MAX); 0 if not enumerable.
  std::size_t outcome_count() const {
    switch (kind_) {
      case Kind::FiniteIID: {
        std::size_t count = 1;
        for (const auto& law : laws_) {
          if (count > SIZE_MAX / law.support_size()) return SIZE_MAX;
          count *= law.support_size();
        }
        return count;
      }
      case Kind::FinitePoints:
        return points_.size();
      case Kind::WalshUniform:
        return resolution_ >= 63 ? SIZE_MAX : std::size_t{1} << resolution_;
      case Kind::GaussianIID:
        return 0;
    }
    return 0;
  }

  /// Every outcome with its exact probability; Walsh outcomes are the dyadic blocks.
  std::vector<DriverOutcome> outcomes(std::size_t limit = 1u << 24) const {
    if (!enumerable()) fail(Errc::InvalidArgument, "Gaussian driver is not enumerable");
    const std::size_t count = outcome_count();
    if (count > limit) fail(Errc::ExplosionGuard, "driver has " + std::to_string(count) + " outcomes per step");
    std::vector<DriverOutcome> out;
    out.reserve(count);
    switch (kind_) {
      case Kind::FiniteIID: {
        std::vector<std::size_t> digit(dim_, 0);
        for (std::size_t c = 0; c < count; ++c) {
          DriverOutcome o{std::vector<double>(dim_), 1.0};
          for (std::size_t j = 0; j < dim_; ++j) {
            const Atom& a = laws_[j].atoms()[digit[j]];
            o.y[j] = a.point;
            o.probability *= a.weight;
          }
          out.push_back(std::move(o));
          for (std::size_t j = dim_; j-- > 0;) {
            if (++digit[j] < laws_[j].support_size()) break;
            digit[j] = 0;
          }
        }
        break;
      }
      case Kind::FinitePoints:
        for (std::size_t i = 0; i < points_.size(); ++i) out.push_back({points_[i], probabilities_[i]});
        break;
      case Kind::WalshUniform: {
        const double p = std::ldexp(1.0, -resolution_);
        for (std::uint64_t b = 0; b < count; ++b) {
          DriverOutcome o{std::vector<double>(dim_), p};
          for (std::size_t j = 0; j < dim_; ++j) o.y[j] = walsh_on_block(masks_[j], b);
          out.push_back(std::move(o));
        }
        break;
      }
      case Kind::GaussianIID:
        break;
    }
    return out;
  }

 private:
  DriverLaw(Kind kind, std::size_t dim) : kind_(kind), dim_(dim) {
    if (dim == 0) fail(Errc::InvalidArgument, "driver dimension must be positive");
  }

  Kind kind_;
  std::size_t dim_;
  std::vector<IncrementLaw> laws_;
  std::vector<std::vector<double>> points_;
  std::vector<double> probabilities_;
  std::vector<WalshIndex> drivers_;
  std::vector<std::uint64_t> masks_;
  int resolution_ = 0;
};

/// Where the per-step uniforms come from.
struct Sampler {
  enum class Kind { PseudoRandom, LowDiscrepancy };
  Kind kind = Kind::PseudoRandom;
  std::uint64_t seed = 0;
  LowDiscrepancyKind sequence = LowDiscrepancyKind::Sobol;
};

struct StatePoint {
  std::size_t time_index = 0;
  double time = 0.0;
  State state;
};

/// A simulated trajectory with the raw driver values used at each step.
struct Path {
  std::vector<double> times;
  std::vector<StatePoint> states;
  std::vector<std::vector<double>> increments;

  std::size_t dimension() const { return states.empty() ? 0 : states.front().state.size(); }
  const State& terminal() const { return states.back().state; }
};

namespace detail {

inline void check_finite(std::span<const double> x, std::size_t step) {
  for (double v : x) {
    if (!std::isfinite(v)) fail(Errc::NonFiniteState, "state became non-finite at step " + std::to_string(step));
  }
}

inline void check_grid(std::size_t steps, double horizon) {
  if (steps == 0) fail(Errc::InvalidArgument, "need at least one step");
  if (!(horizon > 0.0)) fail(Errc::InvalidArgument, "horizon must be positive");
}

inline void check_dimensions(const SchemeField& field, const DriverLaw& driver, std::span<const double> x0) {
  if (field.dimension() != x0.size()) fail(Errc::DimensionMismatch, "initial state and field dimension differ");
  if (driver.dimension() != field.dimension()) {
    fail(Errc::DimensionMismatch, "driver and field dimensions differ");
  }
}

/// Runs the recursion; `uniforms(step, span)` fills each step's variates and
/// `visit(step, y, x_next)` observes each transition.
template <class Uniforms, class Visit>
State run_scheme(const SchemeField& field, const DriverLaw& driver, std::span<const double> x0, std::size_t steps,
                 double dt, Uniforms&& uniforms, Visit&& visit) {
  State x(x0.begin(), x0.end());
  State next(x.size());
  std::vector<double> u(driver.uniforms_per_step());
  std::vector<double> y(driver.dimension());
  for (std::size_t k = 0; k < steps; ++k) {
    uniforms(k, std::span<double>(u));
    driver.map(u, y);
    field.increment(x, dt, y, next);
    for (std::size_t i = 0; i < x.size(); ++i) next[i] += x[i];
    check_finite(next, k + 1);
    visit(k, std::span<const double>(y), std::span<const double>(next));
    x.swap(next);
  }
  return x;
}

}  // namespace detail

/// Simulates path number `path_index` of the stream defined by `sampler` on the grid t_k = kT/N.
inline Path simulate_path(const SchemeField& field, const DriverLaw& driver, const Sampler& sampler,
                          std::span<const double> x0, std::size_t steps, double horizon,
                          std::size_t path_index = 0) {
  detail::check_grid(steps, horizon);
  detail::check_dimensions(field, driver, x0);
  const double dt = horizon / static_cast<double>(steps);
  Path path;
  path.times.reserve(steps + 1);
  path.states.reserve(steps + 1);
  path.times.push_back(0.0);
  path.states.push_back({0, 0.0, State(x0.begin(), x0.end())});
  auto visit = [&](std::size_t k, std::span<const double> y, std::span<const double> next) {
    const double t = static_cast<double>(k + 1) * dt;
    path.times.push_back(t);
    path.states.push_back({k + 1, t, State(next.begin(), next.end())});
    path.increments.emplace_back(y.begin(), y.end());
  };
  if (sampler.kind == Sampler::Kind::PseudoRandom) {
    UniformStream stream(sampler.seed, path_index);
    detail::run_scheme(field, driver, x0, steps, dt,
                       [&](std::size_t, std::span<double> u) {
                         for (double& v : u) v = stream();
                       },
                       visit);
  } else {
    const std::size_t per_step = driver.uniforms_per_step();
    const auto points = randomized_points(sampler.sequence, path_index + 1, steps * per_step, sampler.seed);
    const double* row = points.data() + path_index * steps * per_step;
    detail::run_scheme(field, driver, x0, steps, dt,
                       [&](std::size_t k, std::span<double> u) {
                         for (std::size_t i = 0; i < u.size(); ++i) u[i] = row[k * per_step + i];
                       },
                       visit);
  }
  return path;
}

/// Largest difference between recorded states and a re-application of F to the recorded increments.
inline double replay_defect(const SchemeField& field, const Path& path) {
  double worst = 0.0;
  for (std::size_t k = 0; k + 1 < path.states.size(); ++k) {
    const double dt = path.times[k + 1] - path.times[k];
    const State next = field.step(path.states[k].state, dt, path.increments[k]);
    for (std::size_t i = 0; i < next.size(); ++i) {
      worst = std::max(worst, std::abs(next[i] - path.states[k + 1].state[i]));
    }
  }
  return worst;
}

struct WeightedPath {
  Path path;
  double probability;
};

inline constexpr double kMaxEnumeratedPaths = 1e6;

/// Every path of an enumerable driver with its exact probability.
inline std::vector<WeightedPath> enumerate_paths(const SchemeField& field, const DriverLaw& driver,
                                                 std::span<const double> x0, std::size_t steps, double horizon = 1.0) {
  detail::check_grid(steps, horizon);
  detail::check_dimensions(field, driver, x0);
  if (!driver.enumerable()) fail(Errc::InvalidArgument, "driver is not enumerable");
  const double per_step = static_cast<double>(driver.outcome_count());
  if (std::pow(per_step, static_cast<double>(steps)) > kMaxEnumeratedPaths) {
    fail(Errc::ExplosionGuard, "path tree exceeds 1e6 leaves");
  }
  const auto outcomes = driver.outcomes();
  const double dt = horizon / static_cast<double>(steps);
  std::vector<WeightedPath> out;
  Path current;
  current.times.push_back(0.0);
  current.states.push_back({0, 0.0, State(x0.begin(), x0.end())});
  std::function<void(double)> grow = [&](double probability) {
    const std::size_t k = current.states.size() - 1;
    if (k == steps) {
      out.push_back({current, probability});
      return;
    }
    for (const auto& o : outcomes) {
      State next = field.step(current.states.back().state, dt, o.y);
      detail::check_finite(next, k + 1);
      const double t = static_cast<double>(k + 1) * dt;
      current.times.push_back(t);
      current.states.push_back({k + 1, t, std::move(next)});
      current.increments.push_back(o.y);
      grow(probability * o.probability);
      current.times.pop_back();
      current.states.pop_back();
      current.increments.pop_back();
    }
  };
  grow(1.0);
  return out;
}

/// CSV with header `t,x1,...,xn` and one row per grid point.
inline void write_path_csv(std::ostream& out, const Path& path) {
  out << 't';
  for (std::size_t i = 1; i <= path.dimension(); ++i) out << ",x" << i;
  out << '\n';
  for (const auto& point : path.states) {
    out << format_double(point.time);
    for (double v : point.state) out << ',' << format_double(v);
    out << '\n';
  }
}

}  // namespace dito
