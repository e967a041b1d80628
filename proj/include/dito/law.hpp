#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <boost/math/special_functions/erf.hpp>

#include "dito/error.hpp"
#include "dito/quadrature.hpp"

namespace dito {

struct Atom {
  double point;
  double weight;
};

/// The law of a single innovation: finitely supported, Lebesgue on [0, 1),
/// or centred Gaussian.
class IncrementLaw {
 public:
  enum class Kind { FiniteSupport, LebesgueUnit, Gaussian };

  static constexpr std::size_t kGaussianNodes = 200;
  static constexpr std::size_t kLegendreNodes = 64;

  /// Weights must be positive and sum to 1 within 1e-12; points must be distinct.
  /// Atoms are stored in ascending order.
  static IncrementLaw finite(std::vector<Atom> atoms) {
    if (atoms.empty()) fail(Errc::InvalidArgument, "finite law needs at least one atom");
    double total = 0.0;
    for (const auto& a : atoms) {
      if (!(a.weight > 0.0) || !std::isfinite(a.point)) {
        fail(Errc::InvalidArgument, "finite law atoms need positive weights and finite points");
      }
      total += a.weight;
    }
    if (std::abs(total - 1.0) > 1e-12) {
      fail(Errc::InvalidArgument, "finite law weights sum to " + std::to_string(total));
    }
    std::sort(atoms.begin(), atoms.end(), [](const Atom& a, const Atom& b) { return a.point < b.point; });
    for (std::size_t i = 1; i < atoms.size(); ++i) {
      if (atoms[i].point == atoms[i - 1].point) {
        fail(Errc::InvalidArgument, "finite law atoms must be pairwise distinct");
      }
    }
    IncrementLaw law(Kind::FiniteSupport);
    law.atoms_ = std::move(atoms);
    return law;
  }

  static IncrementLaw uniform_on(const std::vector<double>& points) {
    std::vector<Atom> atoms;
    atoms.reserve(points.size());
    for (double p : points) atoms.push_back({p, 1.0 / static_cast<double>(points.size())});
    return finite(std::move(atoms));
  }

  static IncrementLaw bernoulli() { return uniform_on({-1.0, 1.0}); }
  static IncrementLaw trinomial() { return uniform_on({-1.0, 0.0, 1.0}); }
  static IncrementLaw lebesgue_unit() { return IncrementLaw(Kind::LebesgueUnit); }

  static IncrementLaw gaussian(double variance = 1.0) {
    if (!(variance > 0.0)) fail(Errc::InvalidArgument, "gaussian variance must be positive");
    IncrementLaw law(Kind::Gaussian);
    law.gaussian_variance_ = variance;
    return law;
  }

  Kind kind() const { return kind_; }
  bool is_finite() const { return kind_ == Kind::FiniteSupport; }
  std::span<const Atom> atoms() const { return atoms_; }

  /// Number of support points; 0 for laws with infinite support.
  std::size_t support_size() const { return is_finite() ? atoms_.size() : 0; }

  double moment(int k) const {
    switch (kind_) {
      case Kind::FiniteSupport: {
        double m = 0.0;
        for (const auto& a : atoms_) m += a.weight * std::pow(a.point, k);
        return m;
      }
      case Kind::LebesgueUnit:
        return 1.0 / (k + 1.0);
      case Kind::Gaussian: {
        if (k % 2 != 0) return 0.0;
        double m = 1.0;
        for (int j = k - 1; j > 0; j -= 2) m *= j;
        return m * std::pow(gaussian_variance_, k / 2);
      }
    }
    return 0.0;
  }

  double mean() const { return moment(1); }

  double variance() const {
    const double m = mean();
    if (is_finite()) {
      double v = 0.0;
      for (const auto& a : atoms_) v += a.weight * (a.point - m) * (a.point - m);
      return v;
    }
    return moment(2) - m * m;
  }

  /// A discrete rule reproducing the law: the atoms themselves for finite laws,
  /// 200-node Gauss–Hermite for Gaussian, 64-node Gauss–Legendre on [0, 1].
  QuadratureRule rule() const {
    switch (kind_) {
      case Kind::FiniteSupport: {
        QuadratureRule r;
        for (const auto& a : atoms_) {
          r.nodes.push_back(a.point);
          r.weights.push_back(a.weight);
        }
        return r;
      }
      case Kind::LebesgueUnit:
        return gauss_legendre_unit(kLegendreNodes);
      case Kind::Gaussian: {
        QuadratureRule r = gauss_hermite(kGaussianNodes);
        const double scale = std::sqrt(gaussian_variance_);
        for (double& x : r.nodes) x *= scale;
        return r;
      }
    }
    return {};
  }

  /// Inverse-CDF sampling from a uniform variate in [0, 1).
  double sample(double u) const {
    switch (kind_) {
      case Kind::FiniteSupport: {
        double cumulative = 0.0;
        for (const auto& a : atoms_) {
          cumulative += a.weight;
          if (u < cumulative) return a.point;
        }
        return atoms_.back().point;
      }
      case Kind::LebesgueUnit:
        return u;
      case Kind::Gaussian:
        return std::sqrt(gaussian_variance_) * inverse_normal_cdf(u);
    }
    return 0.0;
  }

  friend bool operator==(const IncrementLaw& a, const IncrementLaw& b) {
    if (a.kind_ != b.kind_) return false;
    if (a.kind_ == Kind::Gaussian) return a.gaussian_variance_ == b.gaussian_variance_;
    if (a.kind_ == Kind::LebesgueUnit) return true;
    if (a.atoms_.size() != b.atoms_.size()) return false;
    for (std::size_t i = 0; i < a.atoms_.size(); ++i) {
      if (a.atoms_[i].point != b.atoms_[i].point || a.atoms_[i].weight != b.atoms_[i].weight) return false;
    }
    return true;
  }

  static double inverse_normal_cdf(double u) {
    if (u <= 0.0) u = 0x1p-60;
    if (u >= 1.0) u = 1.0 - 0x1p-53;
    return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * u);
  }

 private:
  explicit IncrementLaw(Kind kind) : kind_(kind) {}

  Kind kind_;
  std::vector<Atom> atoms_;
  double gaussian_variance_ = 1.0;
};

}  // namespace dito
