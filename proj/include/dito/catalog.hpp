#pragma once

#include <cmath>
#include <cstddef>
#include <ostream>
#include <string>
#include <vector>

#include "dito/error.hpp"
#include "dito/fdsolver.hpp"
#include "dito/law.hpp"
#include "dito/montecarlo.hpp"
#include "dito/scheme.hpp"
#include "dito/walsh.hpp"

namespace dito::catalog {

struct Entry {
  const char* id;
  const char* description;
};

inline constexpr Entry kDrivers[] = {
    {"bernoulli", "independent +-1 coin flips, one per coordinate"},
    {"trinomial", "independent uniform {-1, 0, 1}, one per coordinate"},
    {"trinomial-3pt-120deg", "3 equally weighted atoms at 0/120/240 degrees, radius sqrt(2); dimension 2"},
    {"walsh-n", "first n Walsh drivers of one uniform variate on [0, 1)"},
    {"gaussian", "independent standard normals (not enumerable)"},
};

inline constexpr Entry kFields[] = {
    {"em-gbm", "Euler-Maruyama, sigma_i(x) = sigma x_i, mu_i(x) = mu x_i"},
    {"em-identity", "Euler-Maruyama, sigma = sigma I, mu_i = mu"},
    {"em-drift", "pure drift, sigma = 0, mu_i = mu"},
    {"walk", "random walk X_{k+1} = X_k + y (ignores sigma, mu, dt)"},
};

inline constexpr Entry kPayoffs[] = {
    {"identity", "x_1"},
    {"quad", "sum_i x_i^2"},
    {"quartic", "sum_i x_i^4"},
    {"mean-square-100d", "(1/n) sum_i x_i^2"},
    {"smooth-call", "softplus(mean_i x_i - strike, width)"},
    {"smooth-product-call", "softplus(prod_i x_i - strike, width)"},
    {"bump", "exp(-|x - strike|^2 / (2 width^2))"},
};

inline DriverLaw make_driver(const std::string& id, std::size_t dimension) {
  if (dimension == 0) fail(Errc::ConfigError, "dimension must be positive");
  if (id == "bernoulli") return DriverLaw::finite_iid(IncrementLaw::bernoulli(), dimension);
  if (id == "trinomial") return DriverLaw::finite_iid(IncrementLaw::trinomial(), dimension);
  if (id == "trinomial-3pt-120deg") {
    if (dimension != 2) fail(Errc::ConfigError, "driver trinomial-3pt-120deg needs dimension=2");
    return three_atom_design().driver();
  }
  if (id == "walsh-n") return DriverLaw::walsh(walsh_driver_vector(dimension));
  if (id == "gaussian") return DriverLaw::gaussian_iid(dimension);
  fail(Errc::ConfigError, "unknown driver id '" + id + "'");
}

inline SchemeField make_field(const std::string& id, std::size_t dimension, double sigma, double mu) {
  if (id == "em-gbm") {
    return SchemeField::geometric({std::vector<double>(dimension, sigma), std::vector<double>(dimension, mu)});
  }
  if (id == "em-identity") return SchemeField::constant_coefficients(dimension, sigma, mu);
  if (id == "em-drift") return SchemeField::constant_coefficients(dimension, 0.0, mu);
  if (id == "walk") return SchemeField::random_walk(dimension);
  fail(Errc::ConfigError, "unknown field id '" + id + "'");
}

inline Payoff make_payoff(const std::string& id, double strike, double width) {
  if (id == "identity") return [](std::span<const double> x) { return x[0]; };
  if (id == "quad") {
    return [](std::span<const double> x) {
      double s = 0.0;
      for (double v : x) s += v * v;
      return s;
    };
  }
  if (id == "quartic") {
    return [](std::span<const double> x) {
      double s = 0.0;
      for (double v : x) s += v * v * v * v;
      return s;
    };
  }
  if (id == "mean-square-100d") {
    return [](std::span<const double> x) {
      double s = 0.0;
      for (double v : x) s += v * v;
      return s / static_cast<double>(x.size());
    };
  }
  if (!(width > 0.0) && (id == "smooth-call" || id == "smooth-product-call" || id == "bump")) {
    fail(Errc::ConfigError, "width must be positive");
  }
  if (id == "smooth-call") {
    return [strike, width](std::span<const double> x) {
      double s = 0.0;
      for (double v : x) s += v;
      return softplus(s / static_cast<double>(x.size()) - strike, width);
    };
  }
  if (id == "smooth-product-call") {
    return [strike, width](std::span<const double> x) {
      double p = 1.0;
      for (double v : x) p *= v;
      return softplus(p - strike, width);
    };
  }
  if (id == "bump") {
    return [strike, width](std::span<const double> x) {
      double r = 0.0;
      for (double v : x) r += (v - strike) * (v - strike);
      return std::exp(-r / (2.0 * width * width));
    };
  }
  fail(Errc::ConfigError, "unknown payoff id '" + id + "'");
}

/// Stable listing of every built-in id.
inline void list(std::ostream& out) {
  auto section = [&out](const char* title, const auto& entries) {
    out << title << ":\n";
    for (const auto& e : entries) out << "  " << e.id << "  " << e.description << '\n';
  };
  section("drivers", kDrivers);
  section("fields", kFields);
  section("payoffs", kPayoffs);
}

}  // namespace dito::catalog
