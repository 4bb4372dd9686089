#include <doctest.h>

#include <cmath>

#include "lorentz/exhaustion.hpp"
#include "oracles/radial_bvp.hpp"

using namespace lorentz;

namespace {

ExhaustionSchedule schedule(std::vector<double> radii, int per_unit, int n_theta) {
  ExhaustionSchedule s;
  s.radii = std::move(radii);
  for (double l : s.radii) s.resolutions.push_back({static_cast<int>(per_unit * l), n_theta});
  s.l_obs = 1.0;
  return s;
}

double max_abs_diff(const ScalarField& a, const ScalarField& b) {
  double d = 0.0;
  for (std::size_t k = 0; k < a.values.size(); ++k) d = std::max(d, std::abs(a.values[k] - b.values[k]));
  return d;
}

}  // namespace

TEST_CASE("hyperbolic exhaustion is constant with zero increments") {
  auto s = schedule({2, 3, 4, 5}, 8, 32);
  s.tol = 1e-300;
  const auto r = run_exhaustion(s, make_hyperbolic(1.0));
  CHECK(r.table.size() >= 2);
  for (std::size_t k = 1; k < r.table.size(); ++k) CHECK(r.table[k].delta == 0.0);
  for (const auto& st : r.steps)
    for (double v : st.field.u.values) CHECK(v == 0.5);
}

TEST_CASE("pinched exhaustion converges toward the large-ball oracle") {
  auto s = schedule({2, 3, 4, 5, 6}, 16, 32);
  s.tol = 1e-12;
  const auto m = make_radial_pinched(1.0, 1.0, 12.0);
  const auto r = run_exhaustion(s, m);
  REQUIRE(r.table.size() == 5);
  for (std::size_t k = 2; k < r.table.size(); ++k) CHECK(r.table[k].delta < r.table[k - 1].delta);
  CHECK(r.table.back().delta <= 1e-4);
  for (std::size_t k = 1; k < r.steps.size(); ++k) CHECK(r.steps[k].warm_started);

  // Interior limit against a shooting solution on a larger ball.
  auto k = [](double x) { return -(1.0 + x * x / (1.0 + x * x)); };
  const double L = 10.0;
  std::vector<double> radii;
  for (int i = 0; i < r.limit.grid.n_r(); ++i) radii.push_back(r.limit.grid.r(i));
  const auto sol = oracle::solve_radial_bvp(k, L, 1.0 / (2.0 * m->c2_of_radius(L)), radii);
  double worst = 0.0;
  for (int i = 0; i < r.limit.grid.n_r(); ++i)
    for (int j = 0; j < r.limit.grid.n_theta(); ++j)
      worst = std::max(worst, std::abs(r.limit(i, j) - sol.u[i]));
  // Discretization error of 16 rings per unit dominates.
  CHECK(worst <= 5e-4);

  // Every iterate obeys the zero-order bounds with constants independent of l.
  for (const auto& st : r.steps) {
    for (double v : st.field.u.values) {
      CHECK(v >= st.boundary_value - 1e-10);
      CHECK(v <= 0.5 + 1e-10);
    }
  }
  double spread = 0.0;
  for (int i = 0; i < r.limit.grid.n_r(); ++i)
    for (int j = 1; j < r.limit.grid.n_theta(); ++j)
      spread = std::max(spread, std::abs(r.limit(i, j) - r.limit(i, 0)));
  CHECK(spread <= 1e-9);
}

TEST_CASE("boundary perturbation leaves the interior limit nearly unchanged") {
  const auto m = make_radial_pinched(1.0, 1.0, 12.0);
  auto s = schedule({2, 3, 4, 5, 6}, 16, 32);
  s.tol = 1e-12;
  const auto base = run_exhaustion(s, m);
  s.boundary_blend = true;
  const auto blended = run_exhaustion(s, m);
  CHECK(blended.steps.front().boundary_value > base.steps.front().boundary_value);
  CHECK(max_abs_diff(base.limit, blended.limit) <= 2.0 * blended.table.back().delta);
}

TEST_CASE("warm start is admissible and matches the new boundary value") {
  const auto m = make_radial_pinched(1.0, 1.0, 12.0);
  auto p = make_dirichlet_problem(m, PolarGrid(32, 32, 2.0));
  const auto f = solve_dirichlet(p);
  const PolarGrid next(48, 32, 3.0);
  const double b_new = exhaustion_boundary_value(*m, 3.0, false);
  const auto start = warm_start(f.u, p.boundary_value, next, b_new);
  CHECK_NOTHROW(ma_operator(start, *m, b_new));
  for (int j = 0; j < next.n_theta(); ++j) CHECK(start(next.n_r() - 1, j) == doctest::Approx(b_new));
}

TEST_CASE("schedule validation") {
  const auto m = make_hyperbolic(1.0);
  auto s = schedule({2, 3}, 8, 16);
  s.l_obs = 1.5;
  CHECK_THROWS_AS(run_exhaustion(s, m), std::invalid_argument);
  s = schedule({3, 2}, 8, 16);
  CHECK_THROWS_AS(run_exhaustion(s, m), std::invalid_argument);
  s = schedule({2, 3}, 8, 16);
  s.resolutions.pop_back();
  CHECK_THROWS_AS(run_exhaustion(s, m), std::invalid_argument);
}

TEST_CASE("convergence table stops once delta reaches the tolerance") {
  auto s = schedule({2, 3, 4, 5, 6}, 12, 16);
  s.tol = 1e-4;
  const auto r = run_exhaustion(s, make_radial_pinched(1.0, 1.0, 12.0));
  CHECK(r.converged);
  CHECK(r.table.back().delta <= 1e-4);
  CHECK(r.table.size() < 5);
}
