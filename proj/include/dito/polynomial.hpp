#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <span>
#include <vector>

#include "dito/error.hpp"

namespace dito {

/// Multivariate polynomial with exact coefficient-level differentiation.
class Polynomial {
 public:
  using Exponents = std::vector<int>;

  explicit Polynomial(std::size_t variables) : variables_(variables) {}

  static Polynomial monomial(std::size_t variables, Exponents exponents, double coefficient = 1.0) {
    Polynomial p(variables);
    p.add_term(std::move(exponents), coefficient);
    return p;
  }

  static Polynomial constant(std::size_t variables, double value) {
    return monomial(variables, Exponents(variables, 0), value);
  }

  /// Power of a single coordinate, c * x_i^k.
  static Polynomial power(std::size_t variables, std::size_t i, int k, double coefficient = 1.0) {
    Exponents e(variables, 0);
    e.at(i) = k;
    return monomial(variables, std::move(e), coefficient);
  }

  void add_term(Exponents exponents, double coefficient) {
    if (exponents.size() != variables_) fail(Errc::DimensionMismatch, "monomial exponent count");
    for (int e : exponents) {
      if (e < 0) fail(Errc::InvalidArgument, "negative exponent");
    }
    terms_[std::move(exponents)] += coefficient;
  }

  std::size_t variables() const { return variables_; }
  const std::map<Exponents, double>& terms() const { return terms_; }

  int degree() const {
    int d = 0;
    for (const auto& [e, c] : terms_) {
      if (c != 0.0) d = std::max(d, std::accumulate(e.begin(), e.end(), 0));
    }
    return d;
  }

  double operator()(std::span<const double> x) const {
    if (x.size() != variables_) fail(Errc::DimensionMismatch, "polynomial argument dimension");
    double s = 0.0;
    for (const auto& [e, c] : terms_) {
      double term = c;
      for (std::size_t i = 0; i < variables_; ++i) term *= std::pow(x[i], e[i]);
      s += term;
    }
    return s;
  }

  Polynomial derivative(std::size_t i) const {
    Polynomial d(variables_);
    for (const auto& [e, c] : terms_) {
      if (e.at(i) == 0) continue;
      Exponents lowered = e;
      --lowered[i];
      d.add_term(std::move(lowered), c * e[i]);
    }
    return d;
  }

  Polynomial operator+(const Polynomial& other) const {
    Polynomial out = *this;
    for (const auto& [e, c] : other.terms_) out.add_term(e, c);
    return out;
  }

  Polynomial operator*(double scale) const {
    Polynomial out(variables_);
    for (const auto& [e, c] : terms_) out.add_term(e, c * scale);
    return out;
  }

 private:
  std::size_t variables_;
  std::map<Exponents, double> terms_;
};

/// All exponent vectors of total degree <= degree, ordered by degree then lex.
inline std::vector<Polynomial::Exponents> monomial_family(std::size_t variables, int degree) {
  std::vector<Polynomial::Exponents> out;
  for (int total = 0; total <= degree; ++total) {
    Polynomial::Exponents e(variables, 0);
    // compositions of `total` into `variables` parts, lexicographically descending in e[0]
    std::vector<Polynomial::Exponents> level;
    auto recurse = [&](auto&& self, std::size_t i, int remaining) -> void {
      if (i + 1 == variables) {
        e[i] = remaining;
        level.push_back(e);
        return;
      }
      for (int k = remaining; k >= 0; --k) {
        e[i] = k;
        self(self, i + 1, remaining - k);
      }
    };
    recurse(recurse, 0, total);
    out.insert(out.end(), level.begin(), level.end());
  }
  return out;
}

}  // namespace dito
