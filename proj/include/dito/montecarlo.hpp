#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>

#include "dito/error.hpp"
#include "dito/fdsolver.hpp"
#include "dito/io.hpp"
#include "dito/random.hpp"
#include "dito/scheme.hpp"

namespace dito {

/// Smooth call profile w * log(1 + exp(z / w)); tends to max(z, 0) as w -> 0.
inline double softplus(double z, double width) {
  const double s = z / width;
  return width * (s > 0.0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s)));
}

inline constexpr std::size_t kMinRandomizations = 8;

struct EstimatorConfig {
  EstimatorConfig(SchemeField field_, DriverLaw driver_, Payoff payoff_, std::vector<double> x0_, std::size_t steps_)
      : field(std::move(field_)),
        driver(std::move(driver_)),
        payoff(std::move(payoff_)),
        x0(std::move(x0_)),
        steps(steps_) {}

  SchemeField field;
  DriverLaw driver;
  Payoff payoff;
  std::vector<double> x0;
  std::size_t steps;
  double horizon = 1.0;
  std::size_t samples = 1 << 14;
  Sampler sampler{};
  /// Independent randomisations for low-discrepancy runs; samples are split evenly.
  std::size_t randomizations = kMinRandomizations;
  std::size_t threads = 1;
};

struct EstimatorRun {
  double estimate = 0.0;
  double standard_error = 0.0;
  double wall_time = 0.0;  ///< seconds
  std::size_t samples = 0;
};

namespace detail {

/// f(X_T) for paths [0, count); `fill(m, row)` supplies the uniforms of path m.
template <class Fill>
std::vector<double> terminal_values(const EstimatorConfig& c, std::size_t count, std::size_t path_offset,
                                    const Fill& fill) {
  const double dt = c.horizon / static_cast<double>(c.steps);
  const std::size_t per_step = c.driver.uniforms_per_step();
  std::vector<double> values(count);
  const std::size_t threads = std::max<std::size_t>(1, std::min(c.threads, count));
  std::vector<std::size_t> failed(threads, SIZE_MAX);
  std::vector<std::string> messages(threads);
  auto work = [&](std::size_t t) {
    std::vector<double> row(c.steps * per_step);
    const std::size_t begin = count * t / threads;
    const std::size_t end = count * (t + 1) / threads;
    for (std::size_t m = begin; m < end; ++m) {
      fill(m, std::span<double>(row));
      try {
        const State x = run_scheme(
            c.field, c.driver, c.x0, c.steps, dt,
            [&](std::size_t k, std::span<double> u) {
              std::copy_n(row.begin() + static_cast<std::ptrdiff_t>(k * per_step), u.size(), u.begin());
            },
            [](std::size_t, std::span<const double>, std::span<const double>) {});
        values[m] = c.payoff(x);
        if (!std::isfinite(values[m])) fail(Errc::NonFiniteState, "payoff is not finite");
      } catch (const Error& e) {
        if (e.code() != Errc::NonFiniteState) throw;
        failed[t] = m;
        messages[t] = e.what();
        return;
      }
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work, t);
    for (auto& th : pool) th.join();
  }
  // report the lowest failing path so the message does not depend on scheduling
  for (std::size_t t = 0; t < threads; ++t) {
    if (failed[t] != SIZE_MAX) {
      fail(Errc::NonFiniteState, messages[t] + " (path " + std::to_string(failed[t] + path_offset) + ")");
    }
  }
  return values;
}

inline std::pair<double, double> mean_and_sd(const std::vector<double>& v) {
  const double mean = pairwise_sum(v.data(), v.size()) / static_cast<double>(v.size());
  if (v.size() < 2) return {mean, 0.0};
  std::vector<double> sq(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) sq[i] = (v[i] - mean) * (v[i] - mean);
  return {mean, std::sqrt(pairwise_sum(sq.data(), sq.size()) / static_cast<double>(v.size() - 1))};
}

}  // namespace detail

/// Monte-Carlo or randomised quasi-Monte-Carlo estimate of E[f(X_T)] for the discrete scheme.
inline EstimatorRun estimate(const EstimatorConfig& c) {
  const auto start = std::chrono::steady_clock::now();
  detail::check_grid(c.steps, c.horizon);
  detail::check_dimensions(c.field, c.driver, c.x0);
  if (c.samples == 0) fail(Errc::InvalidArgument, "sample count M must be at least 1");
  if (c.threads == 0) fail(Errc::InvalidArgument, "thread count must be at least 1");
  EstimatorRun run;
  run.samples = c.samples;
  if (c.sampler.kind == Sampler::Kind::PseudoRandom) {
    const auto values = detail::terminal_values(c, c.samples, 0, [&](std::size_t m, std::span<double> row) {
      UniformStream stream(c.sampler.seed, m);
      for (double& u : row) u = stream();
    });
    const auto [mean, sd] = detail::mean_and_sd(values);
    run.estimate = mean;
    run.standard_error = sd / std::sqrt(static_cast<double>(c.samples));
  } else {
    const std::size_t r = c.randomizations;
    if (r < kMinRandomizations) fail(Errc::InvalidArgument, "low-discrepancy runs need at least 8 randomizations");
    if (c.samples % r != 0) fail(Errc::InvalidArgument, "M must be a multiple of the randomization count");
    const std::size_t per = c.samples / r;
    const std::size_t dim = c.steps * c.driver.uniforms_per_step();
    std::vector<double> means(r);
    for (std::size_t rep = 0; rep < r; ++rep) {
      const auto points = randomized_points(c.sampler.sequence, per, dim, mix_seed(c.sampler.seed, rep));
      const auto values = detail::terminal_values(c, per, rep * per, [&](std::size_t m, std::span<double> row) {
        std::copy_n(points.begin() + static_cast<std::ptrdiff_t>(m * dim), dim, row.begin());
      });
      means[rep] = pairwise_sum(values.data(), values.size()) / static_cast<double>(per);
    }
    const auto [mean, sd] = detail::mean_and_sd(means);
    run.estimate = mean;
    run.standard_error = sd / std::sqrt(static_cast<double>(r));
  }
  run.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return run;
}

/// The M -> exhaustive limit of the estimator: probability-weighted sum over every path.
inline double exhaustive_estimate(const EstimatorConfig& c) {
  double sum = 0.0;
  for (const auto& wp : enumerate_paths(c.field, c.driver, c.x0, c.steps, c.horizon)) {
    sum += wp.probability * c.payoff(wp.path.terminal());
  }
  return sum;
}

struct Reference {
  enum class Kind { Analytic, FineGrid };
  Kind kind = Kind::Analytic;
  double value = 0.0;
  std::size_t fine_steps = 0;

  static Reference analytic(double v) { return {Kind::Analytic, v, 0}; }
  static Reference fine_grid(std::size_t n_ref) { return {Kind::FineGrid, 0.0, n_ref}; }
};

struct OrderPoint {
  std::size_t steps = 0;
  double dt = 0.0;
  double estimate = 0.0;
  double standard_error = 0.0;
  double error = 0.0;
};

struct LogLogFit {
  double slope = 0.0;
  double intercept = 0.0;
  double half_width = 0.0;  ///< 95% Student-t half-width of the slope
  double residual = 0.0;    ///< root-mean-square residual of the linear fit
};

/// Least squares of log(error) on log(dt).
inline LogLogFit fit_log_log(std::span<const double> dts, std::span<const double> errors) {
  const std::size_t n = dts.size();
  if (n < 3 || errors.size() != n) fail(Errc::InvalidArgument, "log-log fit needs at least 3 matching points");
  Eigen::MatrixXd a(static_cast<Eigen::Index>(n), 2);
  Eigen::VectorXd b(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    if (!(dts[i] > 0.0) || !(errors[i] > 0.0)) fail(Errc::InvalidArgument, "log-log fit needs positive data");
    a(static_cast<Eigen::Index>(i), 0) = 1.0;
    a(static_cast<Eigen::Index>(i), 1) = std::log(dts[i]);
    b[static_cast<Eigen::Index>(i)] = std::log(errors[i]);
  }
  const Eigen::Vector2d beta = a.colPivHouseholderQr().solve(b);
  const Eigen::VectorXd res = b - a * beta;
  const double dof = static_cast<double>(n - 2);
  const double s2 = res.squaredNorm() / dof;
  const double sxx = (a.col(1).array() - a.col(1).mean()).square().sum();
  const boost::math::students_t dist(dof);
  LogLogFit fit;
  fit.intercept = beta[0];
  fit.slope = beta[1];
  fit.half_width = boost::math::quantile(boost::math::complement(dist, 0.025)) * std::sqrt(s2 / sxx);
  fit.residual = std::sqrt(res.squaredNorm() / static_cast<double>(n));
  return fit;
}

struct OrderFit {
  enum class Status { Ok, DegenerateFit };
  Status status = Status::Ok;
  std::vector<OrderPoint> points;
  double reference = 0.0;
  double reference_error = 0.0;  ///< standard error of the reference (0 when exact)
  double slope = std::numeric_limits<double>::quiet_NaN();
  double intercept = std::numeric_limits<double>::quiet_NaN();
  double half_width = std::numeric_limits<double>::quiet_NaN();
  double residual = std::numeric_limits<double>::quiet_NaN();
  std::size_t samples = 0;  ///< Monte-Carlo paths per grid point; 0 when all values are exact
  bool exact = false;

  double lower() const { return slope - half_width; }
  double upper() const { return slope + half_width; }
};

inline const char* to_string(OrderFit::Status s) { return s == OrderFit::Status::Ok ? "ok" : "degenerate-fit"; }

struct WeakOrderOptions {
  /// Monte-Carlo noise must stay below this fraction of the smallest error.
  double noise_ratio = 0.2;
  std::size_t max_samples = std::size_t{1} << 24;
  /// Use exact scheme expectations whenever the driver is enumerable and the budget allows.
  bool prefer_exact = true;
};

namespace detail {

struct Value {
  double value;
  double standard_error;
  bool exact;
};

inline Value scheme_value(const EstimatorConfig& c, bool prefer_exact) {
  if (prefer_exact && c.driver.enumerable()) {
    try {
      return {scheme_expectation(c.field, c.driver, c.payoff, c.x0, c.steps, c.horizon), 0.0, true};
    } catch (const Error& e) {
      if (e.code() != Errc::NodeBudgetExceeded && e.code() != Errc::ExplosionGuard) throw;
    }
  }
  const auto run = estimate(c);
  return {run.estimate, run.standard_error, false};
}

}  // namespace detail

/// Fits the weak order p in |E f(X^N_T) - reference| ~ C dt^p over `grid`.
inline OrderFit weak_order(const EstimatorConfig& base, std::span<const std::size_t> grid, const Reference& reference,
                           const WeakOrderOptions& options = {}) {
  if (grid.size() < 4) fail(Errc::InvalidArgument, "N grid needs at least 4 entries");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid[i] == 0 || (i > 0 && grid[i] <= grid[i - 1])) fail(Errc::InvalidArgument, "N grid must increase strictly");
  }
  OrderFit fit;
  if (reference.kind == Reference::Kind::FineGrid) {
    if (reference.fine_steps < 32 * grid.back()) fail(Errc::InvalidArgument, "fine grid must be >= 32x the largest N");
    EstimatorConfig c = base;
    c.steps = reference.fine_steps;
    c.samples = base.samples * 16;
    if (c.sampler.kind == Sampler::Kind::LowDiscrepancy) c.samples -= c.samples % c.randomizations;
    const auto v = detail::scheme_value(c, options.prefer_exact);
    fit.reference = v.value;
    fit.reference_error = v.standard_error;
  } else {
    fit.reference = reference.value;
  }
  EstimatorConfig c = base;
  for (;;) {
    fit.points.clear();
    fit.exact = true;
    double worst_noise = fit.reference_error;
    double smallest_error = std::numeric_limits<double>::infinity();
    for (std::size_t n : grid) {
      c.steps = n;
      const auto v = detail::scheme_value(c, options.prefer_exact);
      fit.exact = fit.exact && v.exact;
      const double dt = c.horizon / static_cast<double>(n);
      fit.points.push_back({n, dt, v.value, v.standard_error, std::abs(v.value - fit.reference)});
      worst_noise = std::max(worst_noise, std::hypot(v.standard_error, fit.reference_error));
      smallest_error = std::min(smallest_error, fit.points.back().error);
    }
    fit.samples = fit.exact ? 0 : c.samples;
    const double floor = 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(fit.reference));
    if (worst_noise == 0.0 && smallest_error <= floor) {
      fit.status = OrderFit::Status::DegenerateFit;
      return fit;
    }
    if (worst_noise <= options.noise_ratio * smallest_error) break;
    if (c.samples * 4 > options.max_samples) {
      fail(Errc::NoiseDominated, "Monte-Carlo noise " + format_double(worst_noise) + " exceeds " +
                                     format_double(options.noise_ratio) + " x smallest error " +
                                     format_double(smallest_error) + " at the sample budget");
    }
    c.samples *= 4;
  }
  std::vector<double> dts, errors;
  for (const auto& p : fit.points) {
    dts.push_back(p.dt);
    errors.push_back(p.error);
  }
  const auto line = fit_log_log(dts, errors);
  fit.slope = line.slope;
  fit.intercept = line.intercept;
  fit.half_width = line.half_width;
  fit.residual = line.residual;
  return fit;
}

/// Rows `N,dt,estimate,stderr,error,logdt,logerror`.
inline void write_order_csv(std::ostream& out, const OrderFit& fit) {
  out << "N,dt,estimate,stderr,error,logdt,logerror\n";
  for (const auto& p : fit.points) {
    out << p.steps << ',' << format_double(p.dt) << ',' << format_double(p.estimate) << ','
        << format_double(p.standard_error) << ',' << format_double(p.error) << ',' << format_double(std::log(p.dt))
        << ',' << format_double(std::log(p.error)) << '\n';
  }
}

inline KeyValues order_summary(const OrderFit& fit) {
  return {{"status", to_string(fit.status)},
          {"slope", format_double(fit.slope)},
          {"half_width", format_double(fit.half_width)},
          {"intercept", format_double(fit.intercept)},
          {"residual", format_double(fit.residual)},
          {"reference", format_double(fit.reference)},
          {"reference_stderr", format_double(fit.reference_error)},
          {"points", std::to_string(fit.points.size())},
          {"samples", std::to_string(fit.samples)},
          {"exact", fit.exact ? "true" : "false"}};
}

// ---------------------------------------------------------------------------
// Three-atom designs in the plane

using ThirdMoments = std::array<double, 8>;  // index 4a + 2b + c

/// E[y_a y_b y_c] for a finite law in R^2.
inline ThirdMoments third_moments(std::span<const std::vector<double>> points, std::span<const double> probabilities) {
  ThirdMoments m{};
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].size() != 2) fail(Errc::DimensionMismatch, "third moments are computed for R^2 designs");
    for (std::size_t a = 0; a < 2; ++a) {
      for (std::size_t b = 0; b < 2; ++b) {
        for (std::size_t c = 0; c < 2; ++c) m[4 * a + 2 * b + c] += probabilities[i] * points[i][a] * points[i][b] * points[i][c];
      }
    }
  }
  return m;
}

/// Max-norm distance to the standard Gaussian's third moments (all zero).
inline double third_moment_mismatch(std::span<const std::vector<double>> points, std::span<const double> probabilities) {
  double worst = 0.0;
  for (double v : third_moments(points, probabilities)) worst = std::max(worst, std::abs(v));
  return worst;
}

struct ThreeAtomDesign {
  std::vector<std::vector<double>> points;
  std::vector<double> probabilities;

  DriverLaw driver() const { return DriverLaw::finite_points(points, probabilities); }
};

/// Equal weights at angles 0, 120 and 240 degrees, radius sqrt(2): mean 0, covariance I.
inline ThreeAtomDesign three_atom_design() {
  ThreeAtomDesign d;
  const double r = std::numbers::sqrt2;
  for (int i = 0; i < 3; ++i) {
    const double angle = 2.0 * std::numbers::pi * i / 3.0;
    d.points.push_back({r * std::cos(angle), r * std::sin(angle)});
    d.probabilities.push_back(1.0 / 3.0);
  }
  return d;
}

/// The general 3-atom law in R^2 with mean 0 and covariance I: for weights p
/// and rotation theta, atom i is row i of V R(theta) divided by sqrt(p_i),
/// where the columns of V span the complement of sqrt(p).
inline ThreeAtomDesign three_atom_family(const std::array<double, 3>& weights, double theta) {
  double total = 0.0;
  for (double w : weights) {
    if (!(w > 0.0)) fail(Errc::InvalidArgument, "design weights must be positive");
    total += w;
  }
  Eigen::Vector3d u;
  for (int i = 0; i < 3; ++i) u[i] = std::sqrt(weights[static_cast<std::size_t>(i)] / total);
  const Eigen::Matrix3d q = Eigen::HouseholderQR<Eigen::Vector3d>(u).householderQ();
  Eigen::Matrix<double, 3, 2> v = q.rightCols<2>();
  Eigen::Matrix2d rot;
  rot << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
  v = v * rot;
  ThreeAtomDesign d;
  for (int i = 0; i < 3; ++i) {
    d.points.push_back({v(i, 0) / u[i], v(i, 1) / u[i]});
    d.probabilities.push_back(u[i] * u[i]);
  }
  return d;
}

struct DesignSearch {
  double min_mismatch = std::numeric_limits<double>::infinity();
  std::array<double, 3> weights{};
  double theta = 0.0;
  std::size_t candidates = 0;
};

/// Grid search over weights (simplex step 1/resolution) and rotations for the
/// smallest third-moment mismatch a 3-atom design can reach.
inline DesignSearch search_three_atom_designs(std::size_t resolution = 40, std::size_t angles = 72) {
  DesignSearch best;
  for (std::size_t i = 1; i < resolution; ++i) {
    for (std::size_t j = 1; i + j < resolution; ++j) {
      const std::array<double, 3> w{static_cast<double>(i), static_cast<double>(j),
                                    static_cast<double>(resolution - i - j)};
      for (std::size_t a = 0; a < angles; ++a) {
        const double theta = 2.0 * std::numbers::pi * static_cast<double>(a) / static_cast<double>(angles);
        const auto d = three_atom_family(w, theta);
        const double m = third_moment_mismatch(d.points, d.probabilities);
        ++best.candidates;
        if (m < best.min_mismatch) {
          best.min_mismatch = m;
          best.weights = {w[0] / static_cast<double>(resolution), w[1] / static_cast<double>(resolution),
                          w[2] / static_cast<double>(resolution)};
          best.theta = theta;
        }
      }
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Rate experiments

struct RateExperiment {
  OrderFit fit;
  double design_mean_error = 0.0;        ///< max |E[y]|
  double design_covariance_error = 0.0;  ///< max |E[y y^T] - I|
  double design_mismatch = 0.0;          ///< third-moment mismatch of the driver
  DesignSearch search;                   ///< filled by the complete-market experiment
};

inline constexpr std::array<std::size_t, 4> kDefaultRateGrid{16, 32, 64, 128};
inline constexpr std::size_t kDefaultFineSteps = 4096;

/// dX = 0.2 X dW + 0.05 X dt driven by +-1 coin flips, smooth call at strike 1.
inline EstimatorConfig moment_matched_config() {
  return EstimatorConfig(SchemeField::geometric({{0.2}, {0.05}}), DriverLaw::finite_iid(IncrementLaw::bernoulli(), 1),
                         [](std::span<const double> x) { return softplus(x[0] - 1.0, 0.2); }, {1.0}, 16);
}

/// Two geometric coordinates (vol 0.2, no drift) driven by the 120-degree
/// 3-atom design, with the smooth product call softplus(x1 x2 - 1, 0.2).
inline EstimatorConfig complete_market_config() {
  return EstimatorConfig(SchemeField::geometric({{0.2, 0.2}, {0.0, 0.0}}), three_atom_design().driver(),
                         [](std::span<const double> x) { return softplus(x[0] * x[1] - 1.0, 0.2); }, {1.0, 1.0}, 16);
}

inline RateExperiment moment_matched_experiment(std::span<const std::size_t> grid = kDefaultRateGrid,
                                                std::size_t fine_steps = kDefaultFineSteps,
                                                const WeakOrderOptions& options = {}) {
  RateExperiment out;
  out.fit = weak_order(moment_matched_config(), grid, Reference::fine_grid(fine_steps), options);
  return out;
}

inline RateExperiment complete_market_experiment(std::size_t n = 2, std::span<const std::size_t> grid = kDefaultRateGrid,
                                                 std::size_t fine_steps = kDefaultFineSteps,
                                                 const WeakOrderOptions& options = {}) {
  if (n != 2) fail(Errc::InvalidArgument, "the complete-market experiment is defined for n = 2");
  RateExperiment out;
  const auto design = three_atom_design();
  for (std::size_t a = 0; a < 2; ++a) {
    double mean = 0.0;
    for (std::size_t i = 0; i < 3; ++i) mean += design.probabilities[i] * design.points[i][a];
    out.design_mean_error = std::max(out.design_mean_error, std::abs(mean));
    for (std::size_t b = 0; b < 2; ++b) {
      double cov = 0.0;
      for (std::size_t i = 0; i < 3; ++i) cov += design.probabilities[i] * design.points[i][a] * design.points[i][b];
      out.design_covariance_error = std::max(out.design_covariance_error, std::abs(cov - (a == b ? 1.0 : 0.0)));
    }
  }
  out.design_mismatch = third_moment_mismatch(design.points, design.probabilities);
  out.search = search_three_atom_designs();
  out.fit = weak_order(complete_market_config(), grid, Reference::fine_grid(fine_steps), options);
  return out;
}

}  // namespace dito
