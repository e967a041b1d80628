#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "dito/fdsolver.hpp"
#include "dito/montecarlo.hpp"
#include "oracles.hpp"

using namespace dito;

namespace {

double enumerated(const SchemeField& field, const DriverLaw& driver, const Payoff& f, std::span<const double> x0,
                  std::size_t steps, double horizon = 1.0) {
  // independent of enumerate_paths: walks the outcome tree directly
  std::vector<oracle::Outcome> outcomes;
  for (const auto& o : driver.outcomes()) outcomes.push_back({o.y, o.probability});
  const double dt = horizon / static_cast<double>(steps);
  const oracle::Update step = [&](const std::vector<double>& x, const std::vector<double>& y) {
    return field.step(x, dt, y);
  };
  return oracle::tree_expectation(step, outcomes, std::vector<double>(x0.begin(), x0.end()), steps,
                                  [&](const std::vector<double>& x) { return f(x); });
}

Payoff square = [](std::span<const double> x) { return x[0] * x[0]; };

}  // namespace

TEST(BackwardSolve, WalkSquare) {
  const auto sol = backward_solve(SchemeField::random_walk(1), DriverLaw::finite_iid(IncrementLaw::bernoulli(), 1),
                                  square, std::vector<double>{0.0}, 2);
  EXPECT_DOUBLE_EQ(sol.root_value(), 2.0);
  EXPECT_EQ(sol.nodes(2), 3u);
}

TEST(BackwardSolve, MartingaleKeepsStartValue) {
  const Payoff first = [](std::span<const double> x) { return x[0]; };
  const auto gbm = SchemeField::geometric({{0.3}, {0.0}});
  for (const auto& driver : {DriverLaw::finite_iid(IncrementLaw::bernoulli(), 1),
                             DriverLaw::finite_iid(IncrementLaw::trinomial(), 1), DriverLaw::walsh({{1}}, 2)}) {
    const auto sol = backward_solve(gbm, driver, first, std::vector<double>{1.7}, 6);
    EXPECT_NEAR(sol.root_value(), 1.7, 1e-12);
  }
}

TEST(BackwardSolve, BumpOnTrinomialMatchesEnumeration) {
  const auto field = SchemeField::constant_coefficients(1, 1.0, 0.2);
  const auto driver = DriverLaw::finite_iid(IncrementLaw::trinomial(), 1);
  const Payoff bump = [](std::span<const double> x) { return std::exp(-(x[0] - 0.3) * (x[0] - 0.3) / 0.08); };
  const auto sol = backward_solve(field, driver, bump, std::vector<double>{0.0}, 3);
  EXPECT_NEAR(sol.root_value(), enumerated(field, driver, bump, std::vector<double>{0.0}, 3), 1e-12);
  double via_paths = 0.0;
  for (const auto& wp : enumerate_paths(field, driver, std::vector<double>{0.0}, 3)) {
    via_paths += wp.probability * bump(wp.path.terminal());
  }
  EXPECT_NEAR(sol.root_value(), via_paths, 1e-12);
}

TEST(BackwardSolve, RandomInstancesMatchEnumeration) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>(trial % 2);
    const std::size_t steps = 1 + static_cast<std::size_t>(rng() % 6);
    DriverLaw driver = trial % 3 == 0   ? DriverLaw::finite_iid(IncrementLaw::trinomial(), n)
                       : trial % 3 == 1 ? DriverLaw::finite_iid(IncrementLaw::bernoulli(), n)
                                        : DriverLaw::walsh(walsh_driver_vector(n));
    const double a = 0.3 * u(rng), b = u(rng), c = u(rng);
    const auto field = SchemeField::euler_maruyama_diagonal(
        n,
        [a](std::span<const double> x, std::span<double> out) {
          for (std::size_t i = 0; i < out.size(); ++i) out[i] = 0.5 + a * std::sin(x[i]);
        },
        [b](std::span<const double> x, std::span<double> out) {
          for (std::size_t i = 0; i < out.size(); ++i) out[i] = b * x[i];
        });
    const Payoff f = [c](std::span<const double> x) {
      double s = 0.0;
      for (double v : x) s += std::cos(c + v) + v * v * v;
      return s;
    };
    std::vector<double> x0(n);
    for (auto& v : x0) v = u(rng);
    const auto sol = backward_solve(field, driver, f, x0, steps);
    EXPECT_NEAR(sol.root_value(), enumerated(field, driver, f, x0, steps), 1e-12) << "trial " << trial;
    EXPECT_LE(max_equation_residual(sol, field, driver), 1e-10);
  }
}

TEST(BackwardSolve, TerminalValuesEqualPayoff) {
  const auto field = SchemeField::geometric({{0.2, 0.3}, {0.0, 0.1}});
  const auto driver = DriverLaw::finite_iid(IncrementLaw::trinomial(), 2);
  const Payoff f = [](std::span<const double> x) { return softplus(x[0] * x[1] - 1.0, 0.2); };
  const auto sol = backward_solve(field, driver, f, std::vector<double>{1.0, 1.0}, 5);
  for (std::size_t i = 0; i < sol.nodes(5); ++i) EXPECT_EQ(sol.slices[5].values[i], f(sol.state(5, i)));
  EXPECT_LE(max_equation_residual(sol, field, driver), 1e-10);
  const auto v = sol.value(5, sol.state(5, 3));
  ASSERT_TRUE(v.has_value());
  EXPECT_EQ(*v, sol.slices[5].values[3]);
  EXPECT_FALSE(sol.value(5, std::vector<double>{123.0, 4.0}).has_value());
}

TEST(BackwardSolve, ComparisonPrinciple) {
  const auto field = SchemeField::geometric({{0.4}, {0.05}});
  const auto driver = DriverLaw::finite_iid(IncrementLaw::trinomial(), 1);
  const Payoff g = [](std::span<const double> x) { return softplus(x[0] - 1.0, 0.1); };
  const Payoff f = [&](std::span<const double> x) { return g(x) + 0.01 * std::abs(std::sin(7.0 * x[0])); };
  const auto uf = backward_solve(field, driver, f, std::vector<double>{1.0}, 12);
  const auto ug = backward_solve(field, driver, g, std::vector<double>{1.0}, 12);
  for (std::size_t k = 0; k <= 12; ++k) {
    for (std::size_t i = 0; i < uf.nodes(k); ++i) EXPECT_GE(uf.slices[k].values[i], ug.slices[k].values[i]);
  }
}

TEST(BackwardSolve, NodeBudget) {
  LatticeOptions options;
  options.node_budget = 100;
  try {
    backward_solve(SchemeField::geometric({{0.2, 0.3}, {0.0, 0.0}}), DriverLaw::finite_iid(IncrementLaw::trinomial(), 2),
                   [](std::span<const double> x) { return x[0]; }, std::vector<double>{1.0, 1.0}, 10, 1.0, options);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NodeBudgetExceeded);
  }
  EXPECT_THROW(backward_solve(SchemeField::random_walk(1), DriverLaw::gaussian_iid(1), square,
                              std::vector<double>{0.0}, 2),
               Error);
}

TEST(BackwardSolve, LatticeCsv) {
  const auto sol = backward_solve(SchemeField::random_walk(1), DriverLaw::finite_iid(IncrementLaw::bernoulli(), 1),
                                  square, std::vector<double>{0.0}, 2);
  std::ostringstream out;
  write_lattice_csv(out, sol);
  EXPECT_EQ(out.str(), "t,x1,u\n0,0,2\n0.5,-1,2\n0.5,1,2\n1,-2,4\n1,0,0\n1,2,4\n");
}

TEST(FeynmanKac, ZeroSourceGivesZero) {
  const auto field = SchemeField::constant_coefficients(1, 1.0, 0.0);
  const auto driver = DriverLaw::finite_iid(IncrementLaw::trinomial(), 1);
  const auto sol = feynman_kac_source(field, driver, [](double, std::span<const double>) { return 0.0; },
                                      std::vector<double>{0.5}, 4);
  for (const auto& slice : sol.slices) {
    for (double v : slice.values) EXPECT_EQ(v, 0.0);
  }
}

TEST(FeynmanKac, MatchesTreeSums) {
  std::vector<oracle::Outcome> outcomes;
  const auto driver = DriverLaw::finite_iid(IncrementLaw::trinomial(), 1);
  for (const auto& o : driver.outcomes()) outcomes.push_back({o.y, o.probability});
  const auto field = SchemeField::geometric({{0.3}, {0.0}});
  const std::size_t steps = 5;
  const double horizon = 2.0, dt = horizon / steps;
  const oracle::Update step = [&](const std::vector<double>& x, const std::vector<double>& y) {
    return field.step(x, dt, y);
  };
  const std::vector<std::pair<const char*, SourceTerm>> sources{
      {"constant", [](double, std::span<const double>) { return 1.75; }},
      {"linear", [](double, std::span<const double> x) { return x[0]; }},
      {"time", [](double t, std::span<const double> x) { return t * x[0] * x[0]; }}};
  for (const auto& [name, phi] : sources) {
    const auto sol = feynman_kac_source(field, driver, phi, std::vector<double>{1.2}, steps, horizon);
    for (std::size_t k = 0; k <= steps; ++k) {
      for (std::size_t i = 0; i < sol.nodes(k); ++i) {
        const auto x = sol.state(k, i);
        const double want = oracle::tree_source_sum(step, outcomes, {x[0]}, k, steps, dt,
                                                     [&](double t, const std::vector<double>& y) { return phi(t, y); });
        EXPECT_NEAR(sol.slices[k].values[i], want, 1e-12) << name << " k=" << k;
      }
    }
    EXPECT_LE(max_equation_residual(sol, field, driver, phi), 1e-10) << name;
  }
}

TEST(FeynmanKac, LinearSourceIsProportionalToStart) {
  const auto field = SchemeField::geometric({{0.5}, {0.0}});
  const auto driver = DriverLaw::finite_iid(IncrementLaw::bernoulli(), 1);
  const SourceTerm phi = [](double, std::span<const double> x) { return x[0]; };
  const double a = feynman_kac_source(field, driver, phi, std::vector<double>{1.0}, 6).root_value();
  const double b = feynman_kac_source(field, driver, phi, std::vector<double>{3.0}, 6).root_value();
  EXPECT_NEAR(b, 3.0 * a, 1e-12);
  EXPECT_NEAR(a, 1.0, 1e-12);  // martingale: dt * N * x0
}

TEST(DiscreteGenerator, ConstantsAndLinearity) {
  const DiscreteGenerator gen(SchemeField::geometric({{0.3, 0.2}, {0.1, 0.0}}),
                              DriverLaw::finite_iid(IncrementLaw::trinomial(), 2), 50);
  const std::vector<double> x{1.1, 0.7};
  EXPECT_NEAR(gen.apply([](std::span<const double>) { return 4.2; }, x), 0.0, 1e-12);
  const Payoff u = [](std::span<const double> p) { return std::sin(p[0]) * p[1]; };
  const Payoff v = [](std::span<const double> p) { return p[0] * p[0] * p[0] - p[1]; };
  const Payoff w = [&](std::span<const double> p) { return 2.5 * u(p) - 0.75 * v(p); };
  EXPECT_NEAR(gen.apply(w, x), 2.5 * gen.apply(u, x) - 0.75 * gen.apply(v, x), 1e-11);
}

TEST(ConsistencyDefect, QuadraticIsExact) {
  const auto phi = Polynomial::power(1, 0, 2);
  for (std::size_t n : {1u, 4u, 16u, 100u}) {
    const DiscreteGenerator gen(SchemeField::constant_coefficients(1, 1.0, 0.0),
                                DriverLaw::finite_iid(IncrementLaw::bernoulli(), 1), n);
    for (double x : {-1.0, 0.0, 0.6}) EXPECT_LE(consistency_defect(gen, phi, std::vector<double>{x}), 1e-10);
  }
  const DiscreteGenerator gen(SchemeField::constant_coefficients(1, 1.0, 0.0),
                              DriverLaw::finite_iid(IncrementLaw::bernoulli(), 1), 7);
  EXPECT_LE(consistency_defect(gen, Polynomial::constant(1, 1.0), std::vector<double>{0.3}), 1e-12);
}

TEST(ConsistencyDefect, QuadraticsUnderAnyUnitDriver) {
  // sigma state dependent, mu = 0, general quadratic phi
  Polynomial phi(2);
  phi.add_term({2, 0}, 1.5);
  phi.add_term({1, 1}, -0.7);
  phi.add_term({0, 2}, 0.4);
  phi.add_term({1, 0}, 2.0);
  phi.add_term({0, 0}, 1.0);
  const auto field = SchemeField::euler_maruyama(
      2,
      [](std::span<const double> x, std::span<double> out) {
        out[0] = 1.0 + 0.2 * x[0];
        out[1] = 0.3;
        out[2] = -0.1 * x[1];
        out[3] = 0.8;
      },
      [](std::span<const double>, std::span<double> out) { out[0] = out[1] = 0.0; });
  const std::vector<DriverLaw> drivers{DriverLaw::finite_iid(IncrementLaw::bernoulli(), 2),
                                       three_atom_design().driver(), DriverLaw::walsh(walsh_driver_vector(2)),
                                       DriverLaw::from_basis(gram_schmidt_basis(IncrementLaw::trinomial(), 3), 2)};
  for (const auto& driver : drivers) {
    for (std::size_t n : {1u, 10u, 1000u}) {
      const DiscreteGenerator gen(field, driver, n);
      EXPECT_LE(consistency_defect(gen, phi, std::vector<double>{0.4, -1.2}), 1e-10);
    }
  }
}

TEST(ConsistencyDefect, QuarticMatchesMomentExpansion) {
  const std::vector<double> bernoulli_moments{1.0, 0.0, 1.0, 0.0, 1.0};
  for (double mu : {0.0, 0.5}) {
    const DiscreteGenerator gen(SchemeField::constant_coefficients(1, 1.0, mu),
                                DriverLaw::finite_iid(IncrementLaw::bernoulli(), 1), 100);
    for (double x : {0.0, 0.5, -1.3}) {
      const double continuous = 6.0 * x * x + 4.0 * mu * x * x * x;
      const double want = std::abs(oracle::quartic_generator(x, 1.0, mu, 0.01, bernoulli_moments) - continuous);
      EXPECT_NEAR(consistency_defect(gen, Polynomial::power(1, 0, 4), std::vector<double>{x}), want, 1e-9);
    }
  }
  const DiscreteGenerator gen(SchemeField::constant_coefficients(1, 1.0, 0.0),
                              DriverLaw::finite_iid(IncrementLaw::bernoulli(), 1), 100);
  EXPECT_NEAR(consistency_defect(gen, Polynomial::power(1, 0, 4), std::vector<double>{0.0}), 0.01, 1e-12);
}

TEST(ConsistencyDefect, QuarticSlopeIsOne) {
  std::vector<double> dts, defects;
  for (std::size_t n : {16u, 32u, 64u, 128u}) {
    const DiscreteGenerator gen(SchemeField::geometric({{0.2}, {0.05}}),
                                DriverLaw::finite_iid(IncrementLaw::bernoulli(), 1), n);
    dts.push_back(1.0 / static_cast<double>(n));
    defects.push_back(consistency_defect(gen, Polynomial::power(1, 0, 4), std::vector<double>{1.0}));
  }
  const auto fit = fit_log_log(dts, defects);
  EXPECT_GE(fit.slope, 0.85);
  EXPECT_LE(fit.slope, 1.15);
}

TEST(ConsistencyDefect, Errors) {
  const DiscreteGenerator gen(SchemeField::constant_coefficients(1, 1.0, 0.0),
                              DriverLaw::finite_iid(IncrementLaw::bernoulli(), 1), 10);
  try {
    consistency_defect(gen, Polynomial::power(1, 0, 7), std::vector<double>{0.0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::UnsupportedTestFunction);
  }
  EXPECT_THROW(DiscreteGenerator(SchemeField::random_walk(1), DriverLaw::finite_iid(IncrementLaw::bernoulli(), 1), 0),
               Error);
}

TEST(ErrorBound, QuadraticIsExact) {
  const auto field = SchemeField::constant_coefficients(1, 1.0, 0.0);
  const auto driver = DriverLaw::finite_iid(IncrementLaw::bernoulli(), 1);
  const auto fine = backward_solve(field, driver, square, std::vector<double>{0.0}, 256);
  const auto coarse = backward_solve(field, driver, square, std::vector<double>{0.0}, 16);
  const auto r = error_bound_decomposition(fine, coarse, 2);
  EXPECT_LE(r.max_error, 1e-10);
  EXPECT_LE(r.max_bound, 1e-10);
  EXPECT_TRUE(r.holds());
}

TEST(ErrorBound, QuarticBoundHoldsWithFirstOrderError) {
  const auto field = SchemeField::constant_coefficients(1, 1.0, 0.0);
  const auto driver = DriverLaw::finite_iid(IncrementLaw::bernoulli(), 1);
  const Payoff quartic = [](std::span<const double> x) { return std::pow(x[0], 4); };
  const auto fine = backward_solve(field, driver, quartic, std::vector<double>{0.0}, 1024);
  std::vector<double> dts, errors;
  for (std::size_t n : {8u, 16u, 32u}) {
    const auto coarse = backward_solve(field, driver, quartic, std::vector<double>{0.0}, n);
    const auto r = error_bound_decomposition(fine, coarse, 4);
    EXPECT_TRUE(r.holds()) << "N=" << n << " violation " << r.max_violation;
    EXPECT_LE(r.identity_residual, 1e-9);
    EXPECT_LE(r.max_fit_residual, 1e-8);
    EXPECT_LE(r.root_error, r.root_bound + 1e-12);
    // u^N(0, 0) = 3 - 2 dt exactly for this walk
    EXPECT_NEAR(r.root_error, 2.0 / static_cast<double>(n) - 2.0 / 1024.0, 1e-9);
    dts.push_back(1.0 / static_cast<double>(n));
    errors.push_back(r.max_error);
  }
  const auto fit = fit_log_log(dts, errors);
  EXPECT_NEAR(fit.slope, 1.0, 0.15);
}

TEST(ErrorBound, GridMismatch) {
  const auto field = SchemeField::constant_coefficients(1, 1.0, 0.0);
  const auto driver = DriverLaw::finite_iid(IncrementLaw::bernoulli(), 1);
  const auto fine = backward_solve(field, driver, square, std::vector<double>{0.0}, 30);
  const auto coarse = backward_solve(field, driver, square, std::vector<double>{0.0}, 8);
  auto code = [](auto&& call) {
    try {
      call();
    } catch (const Error& e) {
      return e.code();
    }
    return Errc::ConfigError;
  };
  EXPECT_EQ(code([&] { error_bound_decomposition(fine, coarse, 2); }), Errc::GridMismatch);
  const auto other = backward_solve(field, driver, square, std::vector<double>{0.0}, 8, 2.0);
  const auto fine2 = backward_solve(field, driver, square, std::vector<double>{0.0}, 16);
  EXPECT_EQ(code([&] { error_bound_decomposition(fine2, other, 2); }), Errc::GridMismatch);
  const auto two = backward_solve(SchemeField::random_walk(2), DriverLaw::finite_iid(IncrementLaw::bernoulli(), 2),
                                  square, std::vector<double>{0.0, 0.0}, 16);
  EXPECT_EQ(code([&] { error_bound_decomposition(two, coarse, 2); }), Errc::GridMismatch);
}

TEST(SchemeExpectation, RoutesAgree) {
  const Payoff call = [](std::span<const double> x) { return softplus(x[0] - 1.0, 0.2); };
  const auto field1 = SchemeField::geometric({{0.2}, {0.05}});
  const auto bern = DriverLaw::finite_iid(IncrementLaw::bernoulli(), 1);
  const std::vector<double> one{1.0};
  for (std::size_t n : {1u, 7u, 50u}) {
    const double lattice = scheme_expectation(field1, bern, call, one, n, 1.0, ExactRoute::Lattice);
    const double exch = scheme_expectation(field1, bern, call, one, n, 1.0, ExactRoute::Exchangeable);
    EXPECT_NEAR(exch, lattice, 1e-13);
  }
  const auto cm = complete_market_config();
  for (std::size_t n : {3u, 20u}) {
    const double lattice = scheme_expectation(cm.field, cm.driver, cm.payoff, cm.x0, n, 1.0, ExactRoute::Lattice);
    const double exch = scheme_expectation(cm.field, cm.driver, cm.payoff, cm.x0, n, 1.0, ExactRoute::Exchangeable);
    EXPECT_NEAR(exch, lattice, 1e-13);
    if (n == 3) EXPECT_NEAR(lattice, enumerated(cm.field, cm.driver, cm.payoff, cm.x0, n), 1e-13);
  }
  EXPECT_THROW(scheme_expectation(SchemeField::random_walk(1), bern, call, one, 4, 1.0, ExactRoute::Exchangeable),
               Error);
}

TEST(SchemeExpectation, ExchangeableBudget) {
  const auto cm = complete_market_config();
  try {
    exchangeable_expectation(*cm.field.geometric_coefficients(), cm.driver, cm.payoff, cm.x0, 4096, 1.0, 1000);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NodeBudgetExceeded);
  }
}
