#include <doctest.h>

#include <cmath>

#include "lorentz/geodesic.hpp"
#include "lorentz/metric.hpp"

using namespace lorentz;

TEST_CASE("hyperbolic warp matches the closed form") {
  auto m = make_hyperbolic(1.0);
  CHECK(m->f(1.0) == doctest::Approx(1.1752012).epsilon(1e-7));
  for (double r : {0.0, 0.5, 3.0, 7.0}) CHECK(m->curvature(r, 0.3) == -1.0);
  auto m4 = make_hyperbolic(4.0);
  CHECK(m4->f(1e-7) / 1e-7 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(m4->c1() == 4.0);
  CHECK(m4->c2() == 4.0);
  const auto b = m4->bounds();
  CHECK(b.c3 == 0.0);
  CHECK(b.c4 == 0.0);
  CHECK_THROWS_AS(make_hyperbolic(0.0), MetricError);
  CHECK_THROWS_AS(make_hyperbolic(-1.0), MetricError);
}

TEST_CASE("Jacobi integration reproduces sinh and is step-converged") {
  auto m = make_radial_from_curvature([](double) { return -1.0; }, 4.0, 1e-3);
  CHECK(std::abs(m->f(2.0) - std::sinh(2.0)) <= 1e-8);
  CHECK(std::abs(m->f_prime(2.0) - std::cosh(2.0)) <= 1e-8);

  auto k = [](double r) { return -(1.0 + 0.5 * r * r / (1.0 + r * r)); };
  auto a = make_radial_from_curvature(k, 4.0, 1e-3);
  auto b = make_radial_from_curvature(k, 4.0, 5e-4);
  CHECK(std::abs(a->f(2.0) - b->f(2.0)) <= 1e-8);

  auto m4 = make_radial_from_curvature([](double) { return -4.0; }, 2.0, 1e-3);
  CHECK(m4->f(1.0) == doctest::Approx(std::sinh(2.0) / 2.0).epsilon(1e-9));
}

TEST_CASE("nonnegative curvature is rejected with its radius") {
  auto k = [](double r) { return r < 1.5 ? -1.0 : 0.2; };
  try {
    make_radial_from_curvature(k, 3.0);
    FAIL("expected rejection");
  } catch (const MetricError& e) {
    CHECK(std::string(e.what()).find("r=1.5") != std::string::npos);
  }
}

TEST_CASE("Christoffel symbols of warped charts") {
  auto m = make_hyperbolic(1.0);
  const auto c = christoffels_polar(*m, 1.0);
  CHECK(c.theta_r_theta == doctest::Approx(1.3130353).epsilon(1e-7));
  CHECK(c.r_theta_theta == doctest::Approx(-std::sinh(1.0) * std::cosh(1.0)).epsilon(1e-12));
  CHECK_THROWS_AS(christoffels_polar(*m, 0.0), PoleError);

  WarpedPolarMetric flat("flat", [](double) { return -1.0; },
                         {[](double r) { return r; }, [](double) { return 1.0; }}, 5.0);
  const auto cf = christoffels_polar(flat, 2.0);
  CHECK(cf.theta_r_theta == doctest::Approx(0.5));
  CHECK(cf.r_theta_theta == doctest::Approx(-2.0));

  const auto g = christoffel(m->sample(1.0, 0.0));
  CHECK(g.t_rt == doctest::Approx(c.theta_r_theta));
  CHECK(g.r_tt == doctest::Approx(c.r_theta_theta));
  CHECK(g.r_rr == 0.0);
}

TEST_CASE("pinched family satisfies the Jacobi invariant and round trip") {
  auto m = make_radial_pinched();
  for (double r = 0.05; r < 11.9; r += 0.37) {
    CHECK(jacobi_defect(*m, r) <= kJacobiTol);
  }
  // -f''/f recovers K.
  const double h = 1e-3;
  for (double r : {0.5, 1.0, 2.0, 3.0}) {
    const double fpp = (-m->f(r + 2 * h) + 16 * m->f(r + h) - 30 * m->f(r) + 16 * m->f(r - h) -
                        m->f(r - 2 * h)) /
                       (12 * h * h);
    CHECK(std::abs(-fpp / m->f(r) - m->curvature(r, 0.0)) <= 1e-6);
  }
}

TEST_CASE("curvature bounds are certificates") {
  std::vector<MetricPtr> charts{make_hyperbolic(0.25), make_radial_pinched(1.0, 1.0, 8.0),
                                make_poincare(1.0, 0.9), make_poincare_perturbed(0.3, 0.9)};
  for (const auto& m : charts) {
    CAPTURE(m->family());
    CHECK(m->c1() > 0.0);
    CHECK(m->c1() <= m->c2());
    const double R = m->chart_radius();
    double prev = 0.0;
    for (int i = 0; i <= 400; ++i) {
      const double r = R * i / 400.0;
      for (int j = 0; j < 64; ++j) {
        const double k = m->curvature(r, 2 * M_PI * j / 64.0);
        CHECK(k >= -m->c2() - 1e-12);
        CHECK(k <= -m->c1() + 1e-12);
      }
      if (i % 40 == 0) {
        const double c = m->c2_of_radius(r);
        CHECK(c >= prev);
        CHECK(c <= m->c2() + 1e-12);
        prev = c;
      }
    }
  }
  auto p = make_poincare_perturbed(0.3, 0.8);
  CHECK(p->c1() == doctest::Approx(std::exp(-0.6 * 0.8)).epsilon(1e-10));
  CHECK(p->c2() == doctest::Approx(std::exp(0.6 * 0.8)).epsilon(1e-10));
}

namespace {

double warped_fd_curvature_error(const WarpedPolarMetric& m, double h) {
  double worst = 0.0;
  for (double r = 0.5; r <= 4.0; r += 0.25) {
    const double fpp = (m.f(r + h) - 2 * m.f(r) + m.f(r - h)) / (h * h);
    worst = std::max(worst, std::abs(-fpp / m.f(r) - m.curvature(r, 0.0)));
  }
  return worst;
}

double conformal_fd_curvature_error(const ConformalDiscMetric& m, double h) {
  double worst = 0.0;
  for (double r = 0.0; r <= 0.7; r += 0.1) {
    for (int j = 0; j < 8; ++j) {
      const double x = r * std::cos(0.7 * j), y = r * std::sin(0.7 * j);
      auto L = [&](double a, double b) { return std::log(m.psi(a, b)); };
      const double lap =
          (L(x + h, y) + L(x - h, y) + L(x, y + h) + L(x, y - h) - 4 * L(x, y)) / (h * h);
      worst = std::max(worst, std::abs(-lap / (2 * m.psi(x, y)) - m.curvature_xy(x, y)));
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("finite-difference curvature converges at second order") {
  for (const auto& m : {make_hyperbolic(1.0), make_radial_pinched(1.0, 1.0, 6.0)}) {
    const double e1 = warped_fd_curvature_error(*m, 2e-2);
    const double e2 = warped_fd_curvature_error(*m, 1e-2);
    CAPTURE(m->family());
    CHECK(e1 / e2 >= 3.5);
    CHECK(e1 / e2 <= 4.5);
  }
  for (const auto& m : {make_poincare(1.0, 0.9), make_poincare_perturbed(0.4, 0.9)}) {
    const double e1 = conformal_fd_curvature_error(*m, 2e-2);
    const double e2 = conformal_fd_curvature_error(*m, 1e-2);
    CAPTURE(m->family());
    CHECK(e1 / e2 >= 3.5);
    CHECK(e1 / e2 <= 4.5);
  }
}

TEST_CASE("log-curvature derivatives agree with finite differences") {
  auto m = make_radial_pinched();
  auto closed = m->log_curvature_radial(1.3);
  auto F = [&](double r) { return std::log(-m->curvature(r, 0.0)); };
  const double h = 1e-4;
  CHECK(closed.first == doctest::Approx((F(1.3 + h) - F(1.3 - h)) / (2 * h)).epsilon(1e-7));
  CHECK(closed.second ==
        doctest::Approx((F(1.3 + h) - 2 * F(1.3) + F(1.3 - h)) / (h * h)).epsilon(1e-5));
  const auto b = m->bounds();
  CHECK(b.c3 > 0.0);
  CHECK(b.c4 > 0.0);
  CHECK(b.c4 >= std::abs(m->log_curvature_radial(0.0).second) - 1e-12);
}

TEST_CASE("numerical geodesic distances agree with closed forms") {
  auto exact = make_hyperbolic(1.0, 6.0);
  auto numeric = make_radial_from_curvature([](double) { return -1.0; }, 6.0);
  const std::vector<std::pair<ChartPoint, ChartPoint>> pairs{
      {{1.0, 0.0}, {1.0, 1.0}},  {{0.3, 0.2}, {2.0, 2.9}}, {{1.5, 0.0}, {1.5, M_PI - 0.01}},
      {{0.01, 1.0}, {0.02, 2.5}}, {{2.0, 0.0}, {0.0, 0.0}}, {{0.7, -1.0}, {2.2, 0.4}}};
  for (const auto& [a, b] : pairs) {
    const double d0 = exact->distance(a, b);
    CHECK(std::abs(numeric->distance(a, b) - d0) <= 1e-8 * std::max(1.0, d0));
    CHECK(d0 == doctest::Approx(exact->distance(b, a)).epsilon(1e-14));
  }
  // Law of cosines at a right angle through the pole.
  CHECK(std::cosh(exact->distance({1.0, 0.0}, {1.0, M_PI / 2})) ==
        doctest::Approx(std::cosh(1.0) * std::cosh(1.0)).epsilon(1e-13));

  auto disc = make_poincare(1.0, 0.9);
  auto perturbed_flat = make_poincare_perturbed(0.0, 0.9);
  for (const auto& [a, b] : std::vector<std::pair<ChartPoint, ChartPoint>>{
           {{0.1, 0.0}, {0.5, 1.0}}, {{0.6, 3.0}, {0.7, -2.0}}, {{0.0, 0.0}, {0.8, 0.4}}}) {
    const double d0 = disc->distance(a, b);
    CHECK(std::abs(perturbed_flat->distance(a, b) - d0) <= 1e-8 * std::max(1.0, d0));
  }
  CHECK(disc->distance({0.0, 0.0}, {0.5, 0.0}) == doctest::Approx(2 * std::atanh(0.5)));
}

TEST_CASE("Clairaut quadrature agrees with Hamiltonian shooting on the pinched warp") {
  auto m = make_radial_pinched(1.0, 1.0, 8.0);
  const auto chart = warped_hamiltonian(*m);
  auto cart = [](ChartPoint p) {
    return std::array<double, 2>{p.r * std::cos(p.theta), p.r * std::sin(p.theta)};
  };
  for (const auto& [a, b] : std::vector<std::pair<ChartPoint, ChartPoint>>{
           {{1.0, 0.0}, {1.2, 0.8}}, {{0.4, 0.1}, {2.0, 2.5}}, {{2.0, 0.3}, {2.5, 0.9}},
           {{0.05, 1.0}, {1.5, -2.0}}, {{1.0, 0.0}, {1.0, 3.0}}}) {
    const double d = m->distance(a, b);
    // RK4 shooting at arc-length step 0.005 is the less accurate of the two.
    CHECK(std::abs(shoot_distance(chart, cart(a), cart(b)) - d) <= 1e-7 * std::max(1.0, d));
    CHECK(m->distance(b, a) == doctest::Approx(d).epsilon(1e-12));
  }
  // Far from the pole, where shooting in normal coordinates is ill-conditioned.
  const ChartPoint a{4.77668, 1.4776}, b{3.80193, 1.57481};
  const double far = m->distance(a, b);
  CHECK(far > a.r - b.r);
  CHECK(far < a.r + b.r);
  CHECK(far < (a.r - b.r) + m->f(b.r) * (b.theta - a.theta));
}

TEST_CASE("geodesic distance dominates the Euclidean chart lower bound") {
  auto p = make_poincare_perturbed(0.4, 0.9);
  auto w = make_radial_pinched(1.0, 1.0, 8.0);
  for (int k = 0; k < 12; ++k) {
    ChartPoint a{0.05 * k, 0.5 * k}, b{0.6 - 0.03 * k, -0.2 * k};
    const double e = std::hypot(a.r * std::cos(a.theta) - b.r * std::cos(b.theta),
                                a.r * std::sin(a.theta) - b.r * std::sin(b.theta));
    CHECK(p->distance(a, b) >= p->euclidean_lower_bound_factor() * e - 1e-12);
    ChartPoint c{5 * a.r, a.theta}, d{5 * b.r, b.theta};
    CHECK(w->distance(c, d) >= 5 * e - 1e-12);
    CHECK(w->distance(c, d) <= c.r + d.r + 1e-10);
  }
}
