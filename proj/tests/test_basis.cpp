#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "dito/basis.hpp"
#include "dito/quadrature.hpp"
#include "oracles.hpp"

using namespace dito;

namespace {

IncrementLaw random_finite_law(std::mt19937_64& rng, std::size_t atoms) {
  std::uniform_real_distribution<double> point(-2.0, 2.0), weight(0.1, 1.0);
  std::vector<Atom> a;
  double total = 0.0;
  for (std::size_t i = 0; i < atoms; ++i) {
    a.push_back({point(rng), weight(rng)});
    total += a.back().weight;
  }
  double used = 0.0;
  for (std::size_t i = 0; i + 1 < atoms; ++i) {
    a[i].weight /= total;
    used += a[i].weight;
  }
  a.back().weight = 1.0 - used;
  return IncrementLaw::finite(a);
}

void expect_identity(const Eigen::MatrixXd& g, double tol) {
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    for (Eigen::Index j = 0; j < g.cols(); ++j) EXPECT_NEAR(g(i, j), i == j ? 1.0 : 0.0, tol) << i << "," << j;
  }
}

}  // namespace

TEST(IncrementLaw, RejectsBadAtoms) {
  EXPECT_THROW(IncrementLaw::finite({}), Error);
  EXPECT_THROW(IncrementLaw::finite({{0.0, 0.5}, {1.0, 0.4}}), Error);
  EXPECT_THROW(IncrementLaw::finite({{0.0, 0.5}, {0.0, 0.5}}), Error);
  EXPECT_THROW(IncrementLaw::finite({{0.0, 1.5}, {1.0, -0.5}}), Error);
  EXPECT_THROW(IncrementLaw::gaussian(0.0), Error);
}

TEST(IncrementLaw, Moments) {
  EXPECT_DOUBLE_EQ(IncrementLaw::bernoulli().variance(), 1.0);
  EXPECT_NEAR(IncrementLaw::trinomial().variance(), 2.0 / 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(IncrementLaw::gaussian().moment(4), 3.0);
  EXPECT_DOUBLE_EQ(IncrementLaw::gaussian(2.0).moment(4), 12.0);
  EXPECT_DOUBLE_EQ(IncrementLaw::lebesgue_unit().moment(2), 1.0 / 3.0);
}

TEST(IncrementLaw, SamplingIsInverseCdf) {
  const auto law = IncrementLaw::trinomial();
  EXPECT_EQ(law.sample(0.1), -1.0);
  EXPECT_EQ(law.sample(0.5), 0.0);
  EXPECT_EQ(law.sample(0.9), 1.0);
  EXPECT_NEAR(IncrementLaw::gaussian().sample(0.975), 1.959963984540054, 1e-12);
  EXPECT_EQ(IncrementLaw::gaussian().sample(0.5), 0.0);
}

TEST(Quadrature, GaussHermiteReproducesNormalMoments) {
  const auto rule = gauss_hermite(200);
  const auto oracle_moments = oracle::gaussian_moments(21);
  for (int k = 0; k <= 20; ++k) {
    double s = 0.0;
    for (std::size_t q = 0; q < rule.size(); ++q) s += rule.weights[q] * std::pow(rule.nodes[q], k);
    const double want = static_cast<double>(oracle_moments[static_cast<std::size_t>(k)]);
    // odd moments cancel terms of the size of the neighbouring even moment
    const double size = static_cast<double>(oracle_moments[static_cast<std::size_t>(k + k % 2)]);
    EXPECT_NEAR(s, want, 1e-12 * std::max(1.0, size)) << "k=" << k;
  }
}

TEST(Quadrature, GaussLegendreIntegratesPolynomialsOnUnitInterval) {
  const auto rule = gauss_legendre_unit(64);
  for (int k = 0; k < 20; ++k) {
    double s = 0.0;
    for (std::size_t q = 0; q < rule.size(); ++q) s += rule.weights[q] * std::pow(rule.nodes[q], k);
    EXPECT_NEAR(s, 1.0 / (k + 1.0), 1e-14);
  }
}

TEST(GramSchmidt, BernoulliGivesIdentityFunction) {
  const auto b = gram_schmidt_basis(IncrementLaw::bernoulli(), 2);
  for (double x : {-1.0, 1.0}) {
    EXPECT_DOUBLE_EQ(b(0, x), 1.0);
    EXPECT_NEAR(b(1, x), x, 1e-15);
  }
}

TEST(GramSchmidt, GaussianSecondHermite) {
  const auto b = gram_schmidt_basis(IncrementLaw::gaussian(), 3);
  const auto oracle_basis = oracle::moment_gram_schmidt(oracle::gaussian_moments(6), 3);
  for (double x : {-2.5, -1.0, 0.0, 0.3, 1.7}) {
    EXPECT_NEAR(b(2, x), (x * x - 1.0) / std::sqrt(2.0), 1e-12);
    EXPECT_NEAR(b(2, x), oracle::poly_eval(oracle_basis[2], x), 1e-12);
  }
}

TEST(GramSchmidt, GaussianHigherDegreesMatchMomentOracle) {
  const auto b = gram_schmidt_basis(IncrementLaw::gaussian(), 7);
  const auto oracle_basis = oracle::moment_gram_schmidt(oracle::gaussian_moments(14), 7);
  for (std::size_t k = 0; k < 7; ++k) {
    for (double x : {-3.0, -0.7, 0.0, 1.1, 2.4}) EXPECT_NEAR(b(k, x), oracle::poly_eval(oracle_basis[k], x), 1e-10);
  }
  expect_identity(b.gram(7), 1e-10);
}

TEST(GramSchmidt, TrinomialMatchesThreePointOracle) {
  const auto law = IncrementLaw::trinomial();
  const auto b = gram_schmidt_basis(law, 3);
  const auto oracle_basis =
      oracle::moment_gram_schmidt(oracle::finite_moments({{-1.0, 1.0 / 3}, {0.0, 1.0 / 3}, {1.0, 1.0 / 3}}, 4), 3);
  for (double x : {-1.0, 0.0, 1.0}) {
    EXPECT_NEAR(b(1, x), x * std::sqrt(1.5), 1e-14);
    EXPECT_NEAR(b(2, x), oracle::poly_eval(oracle_basis[2], x), 1e-14);
  }
  // H_2 is proportional to x^2 - 2/3
  EXPECT_NEAR(b(2, 1.0) / b(2, 0.0), (1.0 - 2.0 / 3.0) / (-2.0 / 3.0), 1e-14);
}

TEST(GramSchmidt, RandomFiniteLawsAreOrthonormal) {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t atoms = 2 + static_cast<std::size_t>(trial % 5);
    const auto law = random_finite_law(rng, atoms);
    const auto b = gram_schmidt_basis(law, atoms);
    expect_identity(b.gram(atoms), 1e-10);
    std::vector<std::pair<double, double>> pairs;
    for (const auto& a : law.atoms()) pairs.emplace_back(a.point, a.weight);
    const auto oracle_basis = oracle::moment_gram_schmidt(oracle::finite_moments(pairs, 2 * atoms), atoms);
    for (const auto& a : law.atoms()) {
      for (std::size_t k = 0; k < std::min<std::size_t>(atoms, 4); ++k) {
        EXPECT_NEAR(b(k, a.point), oracle::poly_eval(oracle_basis[k], a.point), 1e-8);
      }
    }
  }
}

TEST(GramSchmidt, FirstFunctionIsStandardised) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    auto law = random_finite_law(rng, 4);
    // recentre to mean zero
    std::vector<Atom> atoms(law.atoms().begin(), law.atoms().end());
    const double m = law.mean();
    for (auto& a : atoms) a.point -= m;
    law = IncrementLaw::finite(atoms);
    const auto b = gram_schmidt_basis(law, 2);
    double mean = 0.0, second = 0.0;
    for (const auto& a : law.atoms()) {
      mean += a.weight * b(1, a.point);
      second += a.weight * b(1, a.point) * b(1, a.point);
      EXPECT_NEAR(b(1, a.point), a.point / std::sqrt(law.variance()), 1e-12);
    }
    EXPECT_NEAR(mean, 0.0, 1e-10);
    EXPECT_NEAR(second, 1.0, 1e-10);
  }
}

TEST(GramSchmidt, LebesgueUnitIsShiftedLegendre) {
  const auto b = gram_schmidt_basis(IncrementLaw::lebesgue_unit(), 4);
  expect_identity(b.gram(4), 1e-12);
  // orthonormal shifted Legendre P_1 = sqrt(3)(2x - 1)
  EXPECT_NEAR(b(1, 0.8), std::sqrt(3.0) * 0.6, 1e-12);
}

TEST(GramSchmidt, Errors) {
  EXPECT_THROW(
      {
        try {
          gram_schmidt_basis(IncrementLaw::bernoulli(), 3);
        } catch (const Error& e) {
          EXPECT_EQ(e.code(), Errc::CountExceedsSupport);
          throw;
        }
      },
      Error);
  EXPECT_THROW(gram_schmidt_basis(IncrementLaw::bernoulli(), 0), Error);
  // two atoms almost coincide: the quadratic direction is numerically lost
  const auto near = IncrementLaw::finite({{0.0, 0.25}, {1e-7, 0.25}, {1.0, 0.5}});
  try {
    gram_schmidt_basis(near, 3);
    FAIL() << "expected DegenerateMoments";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::DegenerateMoments);
  }
}
