// Decompose one step of a coin-flip scheme, price a smooth call on the
// lattice, and check the price against a Monte-Carlo estimate.
#include <cstdio>

#include "dito/dif.hpp"
#include "dito/fdsolver.hpp"
#include "dito/montecarlo.hpp"

using namespace dito;

int main() {
  const auto law = IncrementLaw::bernoulli();
  const auto basis = gram_schmidt_basis(law, 2);
  const auto field = SchemeField::geometric({{0.2}, {0.05}});
  const Payoff call = [](std::span<const double> x) { return softplus(x[0] - 1.0, 0.2); };

  const SpaceTimeFunction f = [&](double, std::span<const double> x) { return call(x); };
  const auto d = decompose_weak_scheme(f, {0, 0.0, {1.0}}, field, basis, 1, 1.0 / 16);
  std::printf("one step from x = 1, dt = 1/16\n");
  std::printf("  martingale coefficient %.12f\n", d.martingale_coeffs[0]);
  std::printf("  drift coefficient      %.12f\n", d.drift_coeff);
  std::printf("  spanning defect        %.3g\n", spanning_defect(d));

  const auto driver = DriverLaw::finite_iid(law, 1);
  const auto sol = backward_solve(field, driver, call, std::vector<double>{1.0}, 64);
  std::printf("lattice price, N = 64:   %.12f (%zu nodes)\n", sol.root_value(), sol.node_count());

  EstimatorConfig c(field, driver, call, {1.0}, 64);
  c.samples = 1 << 16;
  const auto run = estimate(c);
  std::printf("Monte-Carlo, M = 65536:  %.6f +- %.6f\n", run.estimate, run.standard_error);
  return 0;
}
