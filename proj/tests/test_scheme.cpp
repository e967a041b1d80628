#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "dito/scheme.hpp"

using namespace dito;

namespace {

Sampler pseudo(std::uint64_t seed) { return {Sampler::Kind::PseudoRandom, seed, LowDiscrepancyKind::Sobol}; }

}  // namespace

TEST(SchemeField, EulerMaruyamaEvaluatesFormula) {
  const auto field = SchemeField::euler_maruyama(
      2,
      [](std::span<const double> x, std::span<double> out) {
        out[0] = x[0];
        out[1] = 0.5;
        out[2] = -0.3;
        out[3] = 2.0;
      },
      [](std::span<const double> x, std::span<double> out) {
        out[0] = 1.0;
        out[1] = x[1];
      });
  const std::vector<double> x{2.0, 3.0}, y{0.7, -1.1};
  const double dt = 0.09;
  const State next = field.step(x, dt, y);
  EXPECT_DOUBLE_EQ(next[0], 2.0 + (2.0 * 0.7 + 0.5 * -1.1) * 0.3 + 1.0 * dt);
  EXPECT_DOUBLE_EQ(next[1], 3.0 + (-0.3 * 0.7 + 2.0 * -1.1) * 0.3 + 3.0 * dt);
  const std::vector<double> zero{0.0, 0.0};
  for (double v : field.step(x, dt, zero)) EXPECT_TRUE(std::isfinite(v));
}

TEST(SchemeField, EulerMaruyamaIsAffineInDriver) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> z;
  const auto field = SchemeField::geometric({{0.3, 0.1, 0.5}, {0.02, -0.1, 0.0}});
  const auto full = SchemeField::euler_maruyama(
      3, [](std::span<const double> x, std::span<double> out) {
        for (std::size_t i = 0; i < 9; ++i) out[i] = std::sin(x[i % 3] + static_cast<double>(i));
      },
      [](std::span<const double> x, std::span<double> out) {
        for (std::size_t i = 0; i < 3; ++i) out[i] = x[i] * x[i];
      });
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x(3), y1(3), y2(3), sum(3), zero(3, 0.0);
    for (std::size_t i = 0; i < 3; ++i) {
      x[i] = z(rng);
      y1[i] = z(rng);
      y2[i] = z(rng);
      sum[i] = y1[i] + y2[i];
    }
    for (const auto* f : {&field, &full}) {
      State a(3), b(3), c(3), d(3);
      f->increment(x, 0.1, sum, a);
      f->increment(x, 0.1, y1, b);
      f->increment(x, 0.1, y2, c);
      f->increment(x, 0.1, zero, d);
      for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(a[i] - b[i] - c[i] + d[i], 0.0, 1e-14);
    }
  }
}

TEST(SimulatePath, PureDriftReachesOne) {
  const auto field = SchemeField::constant_coefficients(1, 0.0, 1.0);
  const auto driver = DriverLaw::finite_iid(IncrementLaw::bernoulli(), 1);
  const std::vector<double> x0{0.0};
  const auto path = simulate_path(field, driver, pseudo(3), x0, 10, 1.0);
  EXPECT_EQ(path.states.size(), 11u);
  EXPECT_DOUBLE_EQ(path.terminal()[0], 1.0);
  for (std::size_t k = 1; k < path.times.size(); ++k) EXPECT_GT(path.times[k], path.times[k - 1]);
}

TEST(SimulatePath, WalshIncrementsShareOneUniform) {
  const auto driver = DriverLaw::walsh(walsh_driver_vector(2));
  EXPECT_EQ(driver.uniforms_per_step(), 1u);
  const auto path = simulate_path(SchemeField::random_walk(2), driver, pseudo(8), std::vector<double>{0.0, 0.0}, 50, 1.0);
  std::set<std::vector<double>> seen;
  for (const auto& y : path.increments) {
    ASSERT_EQ(y.size(), 2u);
    EXPECT_EQ(std::abs(y[0]), 1.0);
    EXPECT_EQ(std::abs(y[1]), 1.0);
    seen.insert(y);
  }
  EXPECT_EQ(seen.size(), 4u);
}

TEST(SimulatePath, ReplayIsBitExact) {
  const std::vector<DriverLaw> drivers{
      DriverLaw::finite_iid(IncrementLaw::trinomial(), 2), DriverLaw::gaussian_iid(2),
      DriverLaw::walsh(walsh_driver_vector(2)),
      DriverLaw::from_basis(gram_schmidt_basis(IncrementLaw::trinomial(), 3), 2)};
  const auto field = SchemeField::geometric({{0.4, 0.2}, {0.1, -0.05}});
  for (const auto& driver : drivers) {
    for (auto kind : {Sampler::Kind::PseudoRandom, Sampler::Kind::LowDiscrepancy}) {
      Sampler s{kind, 17, LowDiscrepancyKind::Sobol};
      const auto path = simulate_path(field, driver, s, std::vector<double>{1.0, 2.0}, 32, 2.0, 5);
      EXPECT_EQ(replay_defect(field, path), 0.0);
      EXPECT_EQ(path.states.size(), 33u);
    }
  }
}

TEST(SimulatePath, SeedDeterminism) {
  const auto field = SchemeField::constant_coefficients(3, 0.5, 0.1);
  const auto driver = DriverLaw::gaussian_iid(3);
  const std::vector<double> x0{0.0, 1.0, 2.0};
  for (auto kind : {Sampler::Kind::PseudoRandom, Sampler::Kind::LowDiscrepancy}) {
    for (auto seq : {LowDiscrepancyKind::Sobol, LowDiscrepancyKind::Halton}) {
      const Sampler s{kind, 99, seq};
      const auto a = simulate_path(field, driver, s, x0, 20, 1.0, 3);
      const auto b = simulate_path(field, driver, s, x0, 20, 1.0, 3);
      for (std::size_t k = 0; k < a.states.size(); ++k) EXPECT_EQ(a.states[k].state, b.states[k].state);
      const Sampler other{kind, 100, seq};
      const auto c = simulate_path(field, driver, other, x0, 20, 1.0, 3);
      EXPECT_NE(a.terminal(), c.terminal());
    }
  }
}

TEST(SimulatePath, Errors) {
  const auto driver = DriverLaw::finite_iid(IncrementLaw::bernoulli(), 1);
  const std::vector<double> x0{1.0};
  EXPECT_THROW(simulate_path(SchemeField::random_walk(1), driver, pseudo(0), x0, 0, 1.0), Error);
  EXPECT_THROW(simulate_path(SchemeField::random_walk(1), driver, pseudo(0), x0, 4, 0.0), Error);
  try {
    simulate_path(SchemeField::random_walk(2), driver, pseudo(0), x0, 4, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::DimensionMismatch);
  }
  const auto blowup = SchemeField::general(1, [](std::span<const double> x, double, std::span<const double>,
                                                 std::span<double> out) { out[0] = x[0] * 1e200; });
  try {
    simulate_path(blowup, driver, pseudo(0), x0, 4, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NonFiniteState);
  }
}

TEST(EnumeratePaths, BernoulliFourSteps) {
  const auto paths = enumerate_paths(SchemeField::constant_coefficients(1, 1.0, 0.0),
                                     DriverLaw::finite_iid(IncrementLaw::bernoulli(), 1), std::vector<double>{0.0}, 4);
  ASSERT_EQ(paths.size(), 16u);
  double second = 0.0;
  for (const auto& p : paths) {
    const double x = p.path.terminal()[0];
    EXPECT_EQ(p.probability, 1.0 / 16.0);
    EXPECT_TRUE(x == -2.0 || x == -1.0 || x == 0.0 || x == 1.0 || x == 2.0) << x;
    second += p.probability * x * x;
  }
  EXPECT_DOUBLE_EQ(second, 1.0);
}

TEST(EnumeratePaths, CountsAndProbabilities) {
  const std::vector<double> x0{0.0};
  const auto two = enumerate_paths(SchemeField::random_walk(1), DriverLaw::finite_iid(IncrementLaw::bernoulli(), 1), x0, 2);
  ASSERT_EQ(two.size(), 4u);
  for (const auto& p : two) EXPECT_EQ(p.probability, 0.25);
  const auto three =
      enumerate_paths(SchemeField::random_walk(1), DriverLaw::finite_iid(IncrementLaw::trinomial(), 1), x0, 3);
  ASSERT_EQ(three.size(), 27u);
  for (const auto& p : three) EXPECT_NEAR(p.probability, 1.0 / 27.0, 1e-16);
  const auto walsh = enumerate_paths(SchemeField::random_walk(1), DriverLaw::walsh({{1}}, 3), x0, 2);
  ASSERT_EQ(walsh.size(), 64u);
  double total = 0.0;
  for (const auto& p : walsh) total += p.probability;
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(EnumeratePaths, ExplosionGuard) {
  try {
    enumerate_paths(SchemeField::random_walk(1), DriverLaw::finite_iid(IncrementLaw::bernoulli(), 1),
                    std::vector<double>{0.0}, 21);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ExplosionGuard);
  }
  EXPECT_THROW(enumerate_paths(SchemeField::random_walk(1), DriverLaw::gaussian_iid(1), std::vector<double>{0.0}, 2),
               Error);
}

TEST(DriverLaw, WalshMomentsAreExact) {
  const auto driver = DriverLaw::walsh(walsh_driver_vector(9));
  const auto outcomes = driver.outcomes();
  const std::size_t n = driver.dimension();
  for (std::size_t i = 0; i < n; ++i) {
    double mean = 0.0;
    for (const auto& o : outcomes) mean += o.probability * o.y[i];
    EXPECT_EQ(mean, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      double m = 0.0;
      for (const auto& o : outcomes) m += o.probability * o.y[i] * o.y[j];
      EXPECT_EQ(m, i == j ? 1.0 : 0.0);
    }
  }
}

TEST(DriverLaw, FinitePointsValidation) {
  EXPECT_THROW(DriverLaw::finite_points({{1.0}, {2.0}}, {0.5, 0.6}), Error);
  EXPECT_THROW(DriverLaw::finite_points({{1.0}, {2.0, 3.0}}, {0.5, 0.5}), Error);
  EXPECT_THROW(DriverLaw::walsh({{3}}, 2), Error);
  const auto d = DriverLaw::from_basis(gram_schmidt_basis(IncrementLaw::trinomial(), 3), 2);
  EXPECT_EQ(d.outcome_count(), 3u);
  for (std::size_t a = 0; a < 2; ++a) {
    double mean = 0.0;
    for (std::size_t i = 0; i < 3; ++i) mean += d.point_probabilities()[i] * d.points()[i][a];
    EXPECT_NEAR(mean, 0.0, 1e-15);
  }
}

TEST(RandomizedPoints, SobolKeepsOneDimensionalStratification) {
  for (std::uint64_t seed : {1ULL, 2ULL, 77ULL}) {
    const std::size_t count = 256, dim = 5;
    const auto pts = randomized_points(LowDiscrepancyKind::Sobol, count, dim, seed);
    for (std::size_t d = 0; d < dim; ++d) {
      std::vector<int> hits(count, 0);
      for (std::size_t i = 0; i < count; ++i) {
        const double u = pts[i * dim + d];
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        ++hits[static_cast<std::size_t>(u * static_cast<double>(count))];
      }
      for (int h : hits) EXPECT_EQ(h, 1);
    }
  }
}

TEST(RandomizedPoints, DeterministicAndSeedDependent) {
  for (auto kind : {LowDiscrepancyKind::Sobol, LowDiscrepancyKind::Halton}) {
    const auto a = randomized_points(kind, 64, 7, 5);
    EXPECT_EQ(a, randomized_points(kind, 64, 7, 5));
    EXPECT_NE(a, randomized_points(kind, 64, 7, 6));
    const double mean = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(a.size());
    EXPECT_NEAR(mean, 0.5, 0.05);
  }
  EXPECT_THROW(randomized_points(LowDiscrepancyKind::Sobol, 4, 0, 1), Error);
  EXPECT_THROW(randomized_points(LowDiscrepancyKind::Sobol, 4, 100000, 1), Error);
}

TEST(PathCsv, HeaderAndPrecision) {
  const auto path = simulate_path(SchemeField::constant_coefficients(2, 0.3, 0.1), DriverLaw::gaussian_iid(2),
                                  pseudo(4), std::vector<double>{1.0 / 3.0, 2.0}, 3, 1.0);
  std::ostringstream out;
  write_path_csv(out, path);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "t,x1,x2");
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    std::istringstream cells(line);
    std::string cell;
    std::vector<double> values;
    while (std::getline(cells, cell, ',')) values.push_back(std::stod(cell));
    ASSERT_EQ(values.size(), 3u);
    EXPECT_EQ(values[0], path.states[rows].time);
    EXPECT_EQ(values[1], path.states[rows].state[0]);
    EXPECT_EQ(values[2], path.states[rows].state[1]);
    ++rows;
  }
  EXPECT_EQ(rows, 4u);
}
