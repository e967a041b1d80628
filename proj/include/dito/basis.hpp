#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dito/error.hpp"
#include "dito/law.hpp"

namespace dito {

/// Orthonormal polynomials H_0 = 1, H_1, ... of L^2(law).
///
/// Stored as three-term recurrence coefficients in the standardised variable
/// z = (x - mean) / sd: b_{k+1} H_{k+1} = (z - a_k) H_k - b_k H_{k-1}.
class OrthonormalSystem {
 public:
  const IncrementLaw& law() const { return law_; }
  std::size_t size() const { return beta_.size(); }
  double center() const { return center_; }
  double scale() const { return scale_; }

  double operator()(std::size_t k, double x) const {
    if (k >= size()) fail(Errc::InvalidArgument, "basis index " + std::to_string(k) + " out of range");
    const double z = (x - center_) / scale_;
    double prev = 0.0;
    double cur = 1.0 / beta_[0];
    for (std::size_t j = 0; j < k; ++j) {
      const double next = ((z - alpha_[j]) * cur - (j > 0 ? beta_[j] * prev : 0.0)) / beta_[j + 1];
      prev = cur;
      cur = next;
    }
    return cur;
  }

  /// <H_i, H_j> under the law's quadrature rule.
  double inner_product(std::size_t i, std::size_t j) const {
    const QuadratureRule rule = law_.rule();
    double s = 0.0;
    for (std::size_t q = 0; q < rule.size(); ++q) s += rule.weights[q] * (*this)(i, rule.nodes[q]) * (*this)(j, rule.nodes[q]);
    return s;
  }

  Eigen::MatrixXd gram(std::size_t count) const {
    if (count > size()) fail(Errc::InvalidArgument, "gram: count exceeds basis size");
    const QuadratureRule rule = law_.rule();
    Eigen::MatrixXd values(rule.size(), count);
    for (std::size_t q = 0; q < rule.size(); ++q) {
      for (std::size_t k = 0; k < count; ++k) values(q, k) = std::sqrt(rule.weights[q]) * (*this)(k, rule.nodes[q]);
    }
    return values.transpose() * values;
  }

 private:
  friend OrthonormalSystem gram_schmidt_basis(const IncrementLaw&, std::size_t);

  OrthonormalSystem(IncrementLaw law, double center, double scale)
      : law_(std::move(law)), center_(center), scale_(scale) {}

  IncrementLaw law_;
  double center_;
  double scale_;
  std::vector<double> alpha_;
  std::vector<double> beta_;  // beta_[0] is the norm of the constant
};

/// Condition estimate of the moment Gram matrix above which a direction is degenerate.
inline constexpr double kDegenerateCondition = 1e12;

/// Orthonormalises {1, x, x^2, ...} in L^2(law) by the Stieltjes procedure on
/// sqrt(weight)-scaled values at the law's quadrature nodes, with full
/// reorthogonalisation (twice) at each degree.
inline OrthonormalSystem gram_schmidt_basis(const IncrementLaw& law, std::size_t count) {
  if (count == 0) fail(Errc::InvalidArgument, "gram_schmidt_basis needs count >= 1");
  if (law.is_finite() && count > law.support_size()) {
    fail(Errc::CountExceedsSupport,
         "count " + std::to_string(count) + " exceeds support size " + std::to_string(law.support_size()));
  }
  if (law.kind() == IncrementLaw::Kind::Gaussian && count > IncrementLaw::kGaussianNodes) {
    fail(Errc::InvalidArgument, "Gaussian basis limited by the quadrature degree");
  }
  const double mean = law.mean();
  const double variance = law.variance();
  const double scale = variance > 0.0 ? std::sqrt(variance) : 1.0;
  OrthonormalSystem system(law, mean, scale);

  const QuadratureRule rule = law.rule();
  const auto q = static_cast<Eigen::Index>(rule.size());
  Eigen::VectorXd sqrt_w(q);
  Eigen::VectorXd z(q);
  for (Eigen::Index i = 0; i < q; ++i) {
    sqrt_w[i] = std::sqrt(rule.weights[static_cast<std::size_t>(i)]);
    z[i] = (rule.nodes[static_cast<std::size_t>(i)] - mean) / scale;
  }

  std::vector<Eigen::VectorXd> directions;  // orthonormal value vectors sqrt(w) H_k
  system.beta_.push_back(sqrt_w.norm());
  directions.push_back(sqrt_w / system.beta_[0]);
  for (std::size_t k = 0; k + 1 < count; ++k) {
    Eigen::VectorXd v = z.cwiseProduct(directions[k]);
    const double original = v.norm();
    const double a = directions[k].dot(v);
    v -= a * directions[k];
    if (k > 0) v -= system.beta_[k] * directions[k - 1];
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& d : directions) v -= d.dot(v) * d;
    }
    const double residual = v.norm();
    const double condition = residual > 0.0 ? (original / residual) * (original / residual) : INFINITY;
    if (!(condition <= kDegenerateCondition)) {
      fail(Errc::DegenerateMoments, "Gram matrix condition estimate " + std::to_string(condition) +
                                        " at degree " + std::to_string(k + 1));
    }
    system.alpha_.push_back(a);
    system.beta_.push_back(residual);
    directions.push_back(v / residual);
  }
  return system;
}

}  // namespace dito
