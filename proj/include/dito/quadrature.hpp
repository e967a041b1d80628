#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "dito/error.hpp"

namespace dito {

/// Nodes and probability weights of a discrete rule; weights sum to 1.
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;

  std::size_t size() const { return nodes.size(); }
};

/// Gauss–Hermite rule for the N(0, 1) law.
///
/// Newton iteration on the orthonormal Hermite recurrence (weight e^{-x^2}),
/// seeded by the Jacobi-matrix eigenvalues. The recurrence is rescaled so
/// large n does not overflow and the tail weights keep relative accuracy.
/// Returned in the probabilists' convention. Exact for polynomials of degree < 2n.
inline QuadratureRule gauss_hermite(std::size_t n) {
  if (n == 0) fail(Errc::InvalidArgument, "gauss_hermite: zero nodes");
  constexpr double kPiQuarter = 0.7511255444649425;  // pi^{-1/4}
  const int nn = static_cast<int>(n);
  std::vector<double> x(n), w(n);
  // Golub-Welsch eigenvalues (weight e^{-x^2}) seed the Newton polish below.
  Eigen::VectorXd off(n > 1 ? n - 1 : 1);
  for (int k = 1; k < nn; ++k) off[k - 1] = std::sqrt(0.5 * k);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> jacobi;
  jacobi.computeFromTridiagonal(Eigen::VectorXd::Zero(nn), off.head(nn - 1), Eigen::EigenvaluesOnly);
  const Eigen::VectorXd guesses = jacobi.eigenvalues();  // ascending
  const int half = (nn + 1) / 2;
  for (int i = 0; i < half; ++i) {
    double z = guesses[nn - 1 - i];
    double pp = 0.0;
    int scale = 0;  // the recurrence values are p * 2^-scale
    for (int iter = 0; iter < 100; ++iter) {
      double p1 = kPiQuarter;
      double p2 = 0.0;
      scale = 0;
      for (int j = 0; j < nn; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = z * std::sqrt(2.0 / (j + 1)) * p2 - std::sqrt(static_cast<double>(j) / (j + 1)) * p3;
        if (std::abs(p1) > 0x1p100) {
          p1 = std::ldexp(p1, -100);
          p2 = std::ldexp(p2, -100);
          scale += 100;
        }
      }
      pp = std::sqrt(2.0 * nn) * p2;
      const double z1 = z;
      z = z1 - p1 / pp;
      if (std::abs(z - z1) <= 1e-15 * std::max(1.0, std::abs(z))) break;
    }
    x[i] = z;
    x[nn - 1 - i] = -z;
    w[i] = std::ldexp(2.0 / (pp * pp), -2 * scale);
    w[nn - 1 - i] = w[i];
  }
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const double inv_sqrt_pi = 1.0 / std::sqrt(std::numbers::pi);
  // Ascending order, probabilists' scaling: x -> sqrt(2) x, w -> w / sqrt(pi).
  for (std::size_t i = 0; i < n; ++i) {
    rule.nodes[i] = std::numbers::sqrt2 * x[n - 1 - i];
    rule.weights[i] = w[n - 1 - i] * inv_sqrt_pi;
  }
  return rule;
}

/// Gauss–Legendre rule for the uniform law on [0, 1].
inline QuadratureRule gauss_legendre_unit(std::size_t n) {
  if (n == 0) fail(Errc::InvalidArgument, "gauss_legendre_unit: zero nodes");
  const int nn = static_cast<int>(n);
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const int half = (nn + 1) / 2;
  for (int i = 0; i < half; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (nn + 0.5));
    double pp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p1 = 1.0;
      double p2 = 0.0;
      for (int j = 0; j < nn; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = ((2.0 * j + 1.0) * z * p2 - j * p3) / (j + 1);
      }
      pp = nn * (z * p1 - p2) / (z * z - 1.0);
      const double z1 = z;
      z = z1 - p1 / pp;
      if (std::abs(z - z1) <= 1e-16) break;
    }
    // Map [-1, 1] -> [0, 1]; weights 2/((1-z^2)pp^2) halved for the unit length.
    const double weight = 1.0 / ((1.0 - z * z) * pp * pp);
    rule.nodes[i] = 0.5 * (1.0 - z);
    rule.nodes[nn - 1 - i] = 0.5 * (1.0 + z);
    rule.weights[i] = weight;
    rule.weights[nn - 1 - i] = weight;
  }
  return rule;
}

}  // namespace dito
