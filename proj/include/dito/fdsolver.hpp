#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "dito/error.hpp"
#include "dito/io.hpp"
#include "dito/polynomial.hpp"
#include "dito/scheme.hpp"

namespace dito {

using Payoff = std::function<double(std::span<const double>)>;
using SourceTerm = std::function<double(double t, std::span<const double> x)>;

inline constexpr std::size_t kDefaultNodeBudget = 10'000'000;

/// Stored state coordinates (nodes x dimension) allowed in one lattice.
inline constexpr std::size_t kMaxStateEntries = 50'000'000;

/// Mantissa bits kept when merging lattice states (about 12 significant digits).
inline constexpr int kStateKeyBits = 40;

namespace detail {

/// Two independent 64-bit hashes of the rounded coordinates.
using StateKey = std::array<std::uint64_t, 2>;

struct StateKeyHash {
  std::size_t operator()(const StateKey& key) const noexcept { return static_cast<std::size_t>(key[0]); }
};

inline StateKey state_key(std::span<const double> x) {
  StateKey key{0x243F6A8885A308D3ULL, 0x13198A2E03707344ULL};
  for (double v : x) {
    int exponent = 0;
    const double mantissa = std::frexp(v, &exponent);
    const auto rounded = static_cast<std::int64_t>(std::llround(std::ldexp(mantissa, kStateKeyBits)));
    const std::uint64_t word = (static_cast<std::uint64_t>(rounded) << 12) ^
                               static_cast<std::uint64_t>(rounded == 0 ? 0 : exponent + 2048);
    key[0] = mix_seed(key[0], word);
    key[1] = mix_seed(key[1] ^ 0xA4093822299F31D0ULL, word);
  }
  return key;
}

using StateIndex = std::unordered_map<StateKey, std::uint32_t, StateKeyHash>;

}  // namespace detail

struct LatticeOptions {
  std::size_t node_budget = kDefaultNodeBudget;
  /// Keep per-slice state lookup tables (needed for value(k, x) queries).
  bool keep_index = true;
};

/// One time slice of the reachable-state lattice.
struct LatticeSlice {
  std::vector<double> states;           // node-major, dimension values per node
  std::vector<double> values;           // one per node
  std::vector<std::uint32_t> children;  // outcomes per node, empty on the terminal slice
};

/// u^N(t_k, x) on every reachable state, built by backward induction.
struct LatticeSolution {
  std::size_t dimension = 0;
  std::size_t steps = 0;
  double horizon = 1.0;
  std::vector<double> times;
  std::vector<double> probabilities;  // per driver outcome
  std::vector<LatticeSlice> slices;
  std::vector<detail::StateIndex> index;

  double dt() const { return horizon / static_cast<double>(steps); }
  std::size_t outcomes() const { return probabilities.size(); }
  std::size_t nodes(std::size_t k) const { return slices.at(k).values.size(); }

  std::size_t node_count() const {
    std::size_t total = 0;
    for (const auto& s : slices) total += s.values.size();
    return total;
  }

  std::span<const double> state(std::size_t k, std::size_t node) const {
    return std::span<const double>(slices[k].states).subspan(node * dimension, dimension);
  }

  double root_value() const { return slices.front().values.front(); }

  /// Value at a stored state (matched at the merging precision).
  std::optional<double> value(std::size_t k, std::span<const double> x) const {
    if (index.empty()) fail(Errc::InvalidArgument, "lattice built without lookup tables");
    const auto it = index.at(k).find(detail::state_key(x));
    if (it == index[k].end()) return std::nullopt;
    return slices[k].values[it->second];
  }
};

namespace detail {

inline LatticeSolution build_lattice(const SchemeField& field, const DriverLaw& driver, std::span<const double> x0,
                                     std::size_t steps, double horizon, const LatticeOptions& options) {
  check_grid(steps, horizon);
  check_dimensions(field, driver, x0);
  if (!driver.enumerable()) fail(Errc::InvalidArgument, "lattice needs an enumerable driver");
  const auto outcomes = driver.outcomes();
  const std::size_t n = x0.size();
  const std::size_t g = outcomes.size();

  LatticeSolution sol;
  sol.dimension = n;
  sol.steps = steps;
  sol.horizon = horizon;
  sol.probabilities.reserve(g);
  for (const auto& o : outcomes) sol.probabilities.push_back(o.probability);
  sol.slices.resize(steps + 1);
  for (std::size_t k = 0; k <= steps; ++k) sol.times.push_back(horizon * static_cast<double>(k) / static_cast<double>(steps));

  sol.slices[0].states.assign(x0.begin(), x0.end());
  StateIndex current;
  current.emplace(state_key(x0), 0);
  const std::size_t budget = std::min(options.node_budget, kMaxStateEntries / n);
  std::size_t total = 1;
  const double dt = horizon / static_cast<double>(steps);
  State next(n);
  for (std::size_t k = 0; k < steps; ++k) {
    LatticeSlice& from = sol.slices[k];
    LatticeSlice& to = sol.slices[k + 1];
    const std::size_t count = from.states.size() / n;
    from.children.resize(count * g);
    StateIndex upcoming;
    for (std::size_t i = 0; i < count; ++i) {
      const std::span<const double> x(from.states.data() + i * n, n);
      for (std::size_t o = 0; o < g; ++o) {
        field.increment(x, dt, outcomes[o].y, next);
        for (std::size_t c = 0; c < n; ++c) next[c] += x[c];
        check_finite(next, k + 1);
        auto [it, inserted] = upcoming.try_emplace(state_key(next), static_cast<std::uint32_t>(to.states.size() / n));
        if (inserted) {
          if (++total > budget) {
            fail(Errc::NodeBudgetExceeded, "lattice exceeds " + std::to_string(budget) +
                                               " nodes; coarsen the state rounding or reduce N");
          }
          to.states.insert(to.states.end(), next.begin(), next.end());
        }
        from.children[i * g + o] = it->second;
      }
    }
    if (options.keep_index) sol.index.push_back(std::move(current));
    current = std::move(upcoming);
  }
  if (options.keep_index) sol.index.push_back(std::move(current));
  return sol;
}

}  // namespace detail

/// Solves (d^N_t + L^N) u = 0 with u(T) = f: u(t_k, x) = sum_i u(t_{k+1}, x + F(x, dt, y_i)) p_i.
inline LatticeSolution backward_solve(const SchemeField& field, const DriverLaw& driver, const Payoff& f,
                                      std::span<const double> x0, std::size_t steps, double horizon = 1.0,
                                      const LatticeOptions& options = {}) {
  LatticeSolution sol = detail::build_lattice(field, driver, x0, steps, horizon, options);
  const std::size_t n = sol.dimension;
  const std::size_t g = sol.outcomes();
  auto& terminal = sol.slices[steps];
  terminal.values.resize(terminal.states.size() / n);
  for (std::size_t i = 0; i < terminal.values.size(); ++i) terminal.values[i] = f(sol.state(steps, i));
  for (std::size_t k = steps; k-- > 0;) {
    auto& slice = sol.slices[k];
    const auto& later = sol.slices[k + 1].values;
    slice.values.resize(slice.states.size() / n);
    for (std::size_t i = 0; i < slice.values.size(); ++i) {
      double v = 0.0;
      for (std::size_t o = 0; o < g; ++o) v += sol.probabilities[o] * later[slice.children[i * g + o]];
      slice.values[i] = v;
    }
  }
  return sol;
}

/// Discrete Feynman–Kac with a source: v(t_N) = 0 and
/// v(t_k, x) = E[v(t_{k+1}, X_{k+1}) | X_k = x] + dt * Phi(t_k, x),
/// so v(t_k, x) = dt * sum_{l=k}^{N-1} E[Phi(t_l, X_l) | X_k = x].
inline LatticeSolution feynman_kac_source(const SchemeField& field, const DriverLaw& driver, const SourceTerm& source,
                                          std::span<const double> x0, std::size_t steps, double horizon = 1.0,
                                          const LatticeOptions& options = {}) {
  LatticeSolution sol = detail::build_lattice(field, driver, x0, steps, horizon, options);
  const std::size_t n = sol.dimension;
  const std::size_t g = sol.outcomes();
  const double dt = sol.dt();
  sol.slices[steps].values.assign(sol.slices[steps].states.size() / n, 0.0);
  for (std::size_t k = steps; k-- > 0;) {
    auto& slice = sol.slices[k];
    const auto& later = sol.slices[k + 1].values;
    slice.values.resize(slice.states.size() / n);
    for (std::size_t i = 0; i < slice.values.size(); ++i) {
      double v = 0.0;
      for (std::size_t o = 0; o < g; ++o) v += sol.probabilities[o] * later[slice.children[i * g + o]];
      slice.values[i] = v + dt * source(sol.times[k], sol.state(k, i));
    }
  }
  return sol;
}

/// L^N u(x) = N sum_i {u(x + F(x, 1/N, y_i)) - u(x)} p_i over the driver's outcomes.
class DiscreteGenerator {
 public:
  DiscreteGenerator(SchemeField field, DriverLaw driver, std::size_t steps_per_unit)
      : field_(std::move(field)), driver_(std::move(driver)), steps_(steps_per_unit) {
    if (steps_ == 0) fail(Errc::InvalidArgument, "generator needs N >= 1");
    if (driver_.dimension() != field_.dimension()) fail(Errc::DimensionMismatch, "driver and field dimensions differ");
    outcomes_ = driver_.outcomes();
  }

  std::size_t steps_per_unit() const { return steps_; }
  double dt() const { return 1.0 / static_cast<double>(steps_); }
  const SchemeField& field() const { return field_; }
  const DriverLaw& driver() const { return driver_; }

  double apply(const Payoff& u, std::span<const double> x) const {
    const double base = u(x);
    double s = 0.0;
    for (const auto& o : outcomes_) s += o.probability * (u(field_.step(x, dt(), o.y)) - base);
    return static_cast<double>(steps_) * s;
  }

 private:
  SchemeField field_;
  DriverLaw driver_;
  std::size_t steps_;
  std::vector<DriverOutcome> outcomes_;
};

/// |L^N phi(x) - L phi(x)| with L phi = 1/2 sum (sigma sigma^T)_ij d_ij phi + sum mu_i d_i phi.
inline double consistency_defect(const DiscreteGenerator& discrete, const MatrixField& sigma, const VectorField& mu,
                                 const Polynomial& phi, std::span<const double> x) {
  if (phi.degree() > 6) fail(Errc::UnsupportedTestFunction, "test polynomials are limited to total degree 6");
  const std::size_t n = phi.variables();
  if (n != x.size() || n != discrete.field().dimension()) fail(Errc::DimensionMismatch, "test function dimension");
  std::vector<double> s(n * n);
  std::vector<double> drift(n);
  sigma(x, s);
  mu(x, drift);
  double continuous = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Polynomial di = phi.derivative(i);
    continuous += drift[i] * di(x);
    for (std::size_t j = 0; j < n; ++j) {
      double a = 0.0;
      for (std::size_t k = 0; k < n; ++k) a += s[i * n + k] * s[j * n + k];
      if (a != 0.0) continuous += 0.5 * a * di.derivative(j)(x);
    }
  }
  const double approx = discrete.apply([&phi](std::span<const double> y) { return phi(y); }, x);
  return std::abs(approx - continuous);
}

/// Uses the generator's own Euler–Maruyama coefficients as the continuous sigma and mu.
inline double consistency_defect(const DiscreteGenerator& discrete, const Polynomial& phi, std::span<const double> x) {
  const SchemeField& field = discrete.field();
  const std::size_t n = field.dimension();
  return consistency_defect(
      discrete,
      [&field, n](std::span<const double> p, std::span<double> out) {
        const auto m = field.sigma_matrix(p);
        std::copy(m.begin(), m.begin() + static_cast<std::ptrdiff_t>(n * n), out.begin());
      },
      [&field](std::span<const double> p, std::span<double> out) {
        const auto m = field.mu_vector(p);
        std::copy(m.begin(), m.end(), out.begin());
      },
      phi, x);
}

/// Largest |d^N_t u + L^N u - source| over interior nodes, recomputing every
/// child state from F and looking it up by state (not through stored links).
inline double max_equation_residual(const LatticeSolution& sol, const SchemeField& field, const DriverLaw& driver,
                                    const SourceTerm& source = nullptr) {
  const auto outcomes = driver.outcomes();
  const double dt = sol.dt();
  double worst = 0.0;
  for (std::size_t k = 0; k < sol.steps; ++k) {
    for (std::size_t i = 0; i < sol.nodes(k); ++i) {
      const auto x = sol.state(k, i);
      double expectation = 0.0;
      for (const auto& o : outcomes) {
        const auto v = sol.value(k + 1, field.step(x, dt, o.y));
        if (!v) fail(Errc::InvalidArgument, "child state missing from lattice");
        expectation += o.probability * *v;
      }
      // (d^N_t + L^N) u at time t_{k+1} and point x
      double residual = (expectation - sol.slices[k].values[i]) / dt;
      if (source) residual += source(sol.times[k], x);
      worst = std::max(worst, std::abs(residual));
    }
  }
  return worst;
}

/// E[f(X_N)] for a geometric Euler–Maruyama field with a finite driver.
///
/// The one-step factors 1 + drift dt + vol y sqrt(dt) commute, so X_N depends
/// only on how often each outcome occurred; sums over the multinomial count
/// classes instead of the lattice.
inline double exchangeable_expectation(const GeometricCoefficients& coeffs, const DriverLaw& driver, const Payoff& f,
                                       std::span<const double> x0, std::size_t steps, double horizon = 1.0,
                                       std::size_t class_budget = 5 * kDefaultNodeBudget) {
  detail::check_grid(steps, horizon);
  const std::size_t n = x0.size();
  if (coeffs.vol.size() != n || driver.dimension() != n) fail(Errc::DimensionMismatch, "geometric field dimension");
  if (!driver.enumerable()) fail(Errc::InvalidArgument, "driver is not enumerable");
  // merge outcomes with identical y
  std::vector<DriverOutcome> outcomes;
  for (auto& o : driver.outcomes()) {
    auto same = std::find_if(outcomes.begin(), outcomes.end(), [&](const DriverOutcome& p) { return p.y == o.y; });
    if (same != outcomes.end()) {
      same->probability += o.probability;
    } else {
      outcomes.push_back(std::move(o));
    }
  }
  const std::size_t g = outcomes.size();
  double classes = 1.0;  // C(N + g - 1, g - 1)
  for (std::size_t i = 1; i < g; ++i) classes = classes * static_cast<double>(steps + i) / static_cast<double>(i);
  if (classes > static_cast<double>(class_budget)) {
    fail(Errc::NodeBudgetExceeded, "exchangeable summation exceeds the count-class budget");
  }
  const double dt = horizon / static_cast<double>(steps);
  std::vector<std::vector<double>> factor(g, std::vector<double>(n));
  std::vector<double> log_p(g);
  for (std::size_t o = 0; o < g; ++o) {
    log_p[o] = std::log(outcomes[o].probability);
    for (std::size_t i = 0; i < n; ++i) {
      factor[o][i] = 1.0 + coeffs.drift[i] * dt + coeffs.vol[i] * outcomes[o].y[i] * std::sqrt(dt);
    }
  }
  const double log_n_factorial = std::lgamma(static_cast<double>(steps) + 1.0);
  double sum = 0.0;
  double compensation = 0.0;
  std::vector<std::vector<double>> partial(g + 1, std::vector<double>(x0.begin(), x0.end()));
  auto recurse = [&](auto&& self, std::size_t o, std::size_t remaining, double log_weight) -> void {
    if (o + 1 == g) {
      const std::size_t c = remaining;
      auto& x = partial[o + 1];
      for (std::size_t i = 0; i < n; ++i) x[i] = partial[o][i] * std::pow(factor[o][i], static_cast<int>(c));
      const double lw =
          log_weight - std::lgamma(static_cast<double>(c) + 1.0) + static_cast<double>(c) * log_p[o];
      const double term = std::exp(log_n_factorial + lw) * f(x);
      // Neumaier summation
      const double t = sum + term;
      compensation += std::abs(sum) >= std::abs(term) ? (sum - t) + term : (term - t) + sum;
      sum = t;
      return;
    }
    for (std::size_t c = 0; c <= remaining; ++c) {
      auto& x = partial[o + 1];
      for (std::size_t i = 0; i < n; ++i) x[i] = partial[o][i] * std::pow(factor[o][i], static_cast<int>(c));
      self(self, o + 1, remaining - c,
           log_weight - std::lgamma(static_cast<double>(c) + 1.0) + static_cast<double>(c) * log_p[o]);
    }
  };
  recurse(recurse, 0, steps, 0.0);
  return sum + compensation;
}

enum class ExactRoute { Auto, Lattice, Exchangeable };

/// Exact E[f(X_N)] for an enumerable scheme. Auto prefers count-class
/// summation for geometric fields and falls back to the lattice.
inline double scheme_expectation(const SchemeField& field, const DriverLaw& driver, const Payoff& f,
                                 std::span<const double> x0, std::size_t steps, double horizon = 1.0,
                                 ExactRoute route = ExactRoute::Auto, std::size_t node_budget = kDefaultNodeBudget) {
  const bool geometric = field.geometric_coefficients().has_value();
  if (route == ExactRoute::Exchangeable && !geometric) {
    fail(Errc::InvalidArgument, "exchangeable route needs a geometric field");
  }
  if (route != ExactRoute::Lattice && geometric) {
    try {
      return exchangeable_expectation(*field.geometric_coefficients(), driver, f, x0, steps, horizon);
    } catch (const Error& e) {
      if (route == ExactRoute::Exchangeable || e.code() != Errc::NodeBudgetExceeded) throw;
    }
  }
  LatticeOptions options;
  options.node_budget = node_budget;
  options.keep_index = false;
  return backward_solve(field, driver, f, x0, steps, horizon, options).root_value();
}

/// Outcome of comparing a coarse lattice solution against a fine-grid proxy.
struct ErrorBoundReport {
  double max_error = 0.0;          ///< max over coarse nodes of |u^N - u_proxy|
  double max_bound = 0.0;          ///< max accumulated defect bound
  double max_violation = 0.0;      ///< max of (error - bound); <= 0 up to rounding
  double root_error = 0.0;
  double root_bound = 0.0;
  double identity_residual = 0.0;  ///< signed Feynman–Kac identity check
  double max_fit_residual = 0.0;   ///< worst least-squares misfit of the proxy
  std::size_t nodes = 0;

  bool holds(double tolerance = 1e-9) const { return max_violation <= tolerance; }
};

/// Transfers consistency defects of the coarse scheme into an error bound.
///
/// The fine solution on each coarse time slice is fitted by least squares to
/// polynomials of total degree <= `family_degree` (lower on slices with too
/// few states), giving a smooth proxy u~.
/// With d_l(x) = (E[u~(t_{l+1}, X_{l+1}) | X_l = x] - u~(t_l, x)) / dt and
/// e_N = f - u~(T), the discrete Feynman–Kac formula gives
/// u^N - u~ = E[e_N] + dt sum_l E[d_l], hence |u^N - u~| <= E|e_N| + dt sum_l E|d_l|.
inline ErrorBoundReport error_bound_decomposition(const LatticeSolution& fine, const LatticeSolution& coarse,
                                                  int family_degree) {
  if (fine.dimension != coarse.dimension) fail(Errc::GridMismatch, "lattice dimensions differ");
  if (coarse.steps == 0 || fine.steps % coarse.steps != 0) fail(Errc::GridMismatch, "N must divide N_fine");
  if (std::abs(fine.horizon - coarse.horizon) > 1e-14 * std::max(1.0, coarse.horizon)) {
    fail(Errc::GridMismatch, "horizons differ");
  }
  if (family_degree < 0 || family_degree > 12) fail(Errc::InvalidArgument, "family degree outside [0, 12]");
  const std::size_t n = coarse.dimension;
  const std::size_t ratio = fine.steps / coarse.steps;
  const std::size_t steps = coarse.steps;
  const std::size_t g = coarse.outcomes();
  const double dt = coarse.dt();
  std::vector<std::vector<std::vector<int>>> families;  // by degree
  for (int d = 0; d <= family_degree; ++d) families.push_back(monomial_family(n, d));
  const std::size_t terms = families.back().size();

  struct Fit {
    const std::vector<std::vector<int>>* family = nullptr;
    std::vector<double> center, half_width;
    Eigen::VectorXd beta;
  };
  auto evaluate = [&](const Fit& fit, std::span<const double> x) {
    double s = 0.0;
    const auto& family = *fit.family;
    for (std::size_t t = 0; t < family.size(); ++t) {
      double m = fit.beta[static_cast<Eigen::Index>(t)];
      for (std::size_t i = 0; i < n; ++i) m *= std::pow((x[i] - fit.center[i]) / fit.half_width[i], family[t][i]);
      s += m;
    }
    return s;
  };

  ErrorBoundReport report;
  std::vector<Fit> fits(steps + 1);
  for (std::size_t l = 0; l <= steps; ++l) {
    std::vector<double> lo(n, std::numeric_limits<double>::infinity());
    std::vector<double> hi(n, -std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < coarse.nodes(l); ++i) {
      const auto x = coarse.state(l, i);
      for (std::size_t c = 0; c < n; ++c) {
        lo[c] = std::min(lo[c], x[c]);
        hi[c] = std::max(hi[c], x[c]);
      }
    }
    // pad by the largest one-step move of the coarse scheme
    std::vector<double> reach(n, 0.0);
    const std::size_t from = l < steps ? l : l - 1;
    for (std::size_t i = 0; i < coarse.nodes(from); ++i) {
      const auto x = coarse.state(from, i);
      for (std::size_t o = 0; o < g; ++o) {
        const auto y = coarse.state(from + 1, coarse.slices[from].children[i * g + o]);
        for (std::size_t c = 0; c < n; ++c) reach[c] = std::max(reach[c], std::abs(y[c] - x[c]));
      }
    }
    const std::size_t fine_slice = l * ratio;
    std::vector<std::size_t> chosen;
    for (double widen = 1.0; widen < 1e6; widen *= 2.0) {
      chosen.clear();
      for (std::size_t i = 0; i < fine.nodes(fine_slice); ++i) {
        const auto x = fine.state(fine_slice, i);
        bool inside = true;
        for (std::size_t c = 0; c < n && inside; ++c) {
          const double pad = widen * std::max(reach[c], 1e-12);
          inside = x[c] >= lo[c] - pad && x[c] <= hi[c] + pad;
        }
        if (inside) chosen.push_back(i);
      }
      if (chosen.size() >= 3 * terms || chosen.size() == fine.nodes(fine_slice)) break;
    }
    // slices near the root hold fewer states than the full family needs
    std::size_t degree = families.size() - 1;
    while (degree > 0 && families[degree].size() > chosen.size()) --degree;
    Fit& fit = fits[l];
    fit.family = &families[degree];
    const auto& family = *fit.family;
    fit.center.resize(n);
    fit.half_width.resize(n);
    for (std::size_t c = 0; c < n; ++c) {
      double a = std::numeric_limits<double>::infinity();
      double b = -a;
      for (std::size_t i : chosen) {
        a = std::min(a, fine.state(fine_slice, i)[c]);
        b = std::max(b, fine.state(fine_slice, i)[c]);
      }
      fit.center[c] = 0.5 * (a + b);
      fit.half_width[c] = std::max(0.5 * (b - a), 1e-12);
    }
    Eigen::MatrixXd design(static_cast<Eigen::Index>(chosen.size()), static_cast<Eigen::Index>(family.size()));
    Eigen::VectorXd rhs(static_cast<Eigen::Index>(chosen.size()));
    for (std::size_t r = 0; r < chosen.size(); ++r) {
      const auto x = fine.state(fine_slice, chosen[r]);
      for (std::size_t t = 0; t < family.size(); ++t) {
        double m = 1.0;
        for (std::size_t c = 0; c < n; ++c) m *= std::pow((x[c] - fit.center[c]) / fit.half_width[c], family[t][c]);
        design(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(t)) = m;
      }
      rhs[static_cast<Eigen::Index>(r)] = fine.slices[fine_slice].values[chosen[r]];
    }
    fit.beta = design.colPivHouseholderQr().solve(rhs);
    report.max_fit_residual = std::max(report.max_fit_residual, (design * fit.beta - rhs).cwiseAbs().maxCoeff());
  }

  // backward: bound B, signed accumulation S; both start from the terminal misfit
  std::vector<double> bound(coarse.nodes(steps)), signed_sum(coarse.nodes(steps));
  for (std::size_t i = 0; i < bound.size(); ++i) {
    const double e = coarse.slices[steps].values[i] - evaluate(fits[steps], coarse.state(steps, i));
    bound[i] = std::abs(e);
    signed_sum[i] = e;
    report.max_error = std::max(report.max_error, std::abs(e));
    report.max_violation = std::max(report.max_violation, std::abs(e) - bound[i]);
  }
  report.max_bound = *std::max_element(bound.begin(), bound.end());
  report.nodes = bound.size();
  std::vector<double> proxy_later(coarse.nodes(steps));
  for (std::size_t i = 0; i < proxy_later.size(); ++i) proxy_later[i] = evaluate(fits[steps], coarse.state(steps, i));
  for (std::size_t l = steps; l-- > 0;) {
    const auto& slice = coarse.slices[l];
    std::vector<double> b(coarse.nodes(l)), s(coarse.nodes(l)), proxy(coarse.nodes(l));
    for (std::size_t i = 0; i < b.size(); ++i) {
      proxy[i] = evaluate(fits[l], coarse.state(l, i));
      double proxy_mean = 0.0, b_mean = 0.0, s_mean = 0.0;
      for (std::size_t o = 0; o < g; ++o) {
        const std::uint32_t child = slice.children[i * g + o];
        proxy_mean += coarse.probabilities[o] * proxy_later[child];
        b_mean += coarse.probabilities[o] * bound[child];
        s_mean += coarse.probabilities[o] * signed_sum[child];
      }
      const double defect = (proxy_mean - proxy[i]) / dt;
      b[i] = b_mean + dt * std::abs(defect);
      s[i] = s_mean + dt * defect;
      const double error = slice.values[i] - proxy[i];
      report.max_error = std::max(report.max_error, std::abs(error));
      report.max_bound = std::max(report.max_bound, b[i]);
      report.max_violation = std::max(report.max_violation, std::abs(error) - b[i]);
      report.identity_residual = std::max(report.identity_residual, std::abs(error - s[i]));
    }
    report.nodes += b.size();
    bound = std::move(b);
    signed_sum = std::move(s);
    proxy_later = std::move(proxy);
  }
  report.root_error = std::abs(coarse.root_value() - proxy_later.front());
  report.root_bound = bound.front();
  return report;
}

/// CSV rows `t,x1,...,xn,u` for every lattice node.
inline void write_lattice_csv(std::ostream& out, const LatticeSolution& sol) {
  out << 't';
  for (std::size_t i = 1; i <= sol.dimension; ++i) out << ",x" << i;
  out << ",u\n";
  for (std::size_t k = 0; k <= sol.steps; ++k) {
    for (std::size_t i = 0; i < sol.nodes(k); ++i) {
      out << format_double(sol.times[k]);
      for (double v : sol.state(k, i)) out << ',' << format_double(v);
      out << ',' << format_double(sol.slices[k].values[i]) << '\n';
    }
  }
}

}  // namespace dito
