#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "lorentz/grid.hpp"
#include "oracles/radial_bvp.hpp"

using namespace lorentz;

namespace {

ScalarField sample(const PolarGrid& g, const std::function<double(double, double)>& fn) {
  ScalarField u(g, 0.0);
  for (int i = 0; i < g.n_r(); ++i)
    for (int j = 0; j < g.n_theta(); ++j) u.at(i, j) = fn(g.r(i), g.theta(j));
  return u;
}

std::shared_ptr<const WarpedPolarMetric> flat_chart(double r_max) {
  return std::make_shared<WarpedPolarMetric>(
      "flat", [](double) { return -1.0; },
      WarpProfile{[](double r) { return r; }, [](double) { return 1.0; }}, r_max);
}

}  // namespace

TEST_CASE("grid layout and validation") {
  PolarGrid g(16, 32, 2.0);
  CHECK(g.r(15) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(g.r(0) == doctest::Approx(0.5 * g.h()));
  CHECK(g.signed_index(-1, 3) == g.index(0, 19));
  CHECK(g.signed_index(-2, 30) == g.index(1, 14));
  CHECK_THROWS_AS(PolarGrid(16, 31, 2.0), GridError);
  CHECK_THROWS_AS(build_stencils(PolarGrid(3, 32, 1.0)), GridError);
  CHECK_THROWS_AS(build_stencils(PolarGrid(8, 6, 1.0)), GridError);
  CHECK_NOTHROW(build_stencils(PolarGrid(4, 8, 1.0)));
  CHECK_THROWS_AS(ScalarField(g, std::vector<double>(g.size(), NAN)), GridError);
}

TEST_CASE("constants have identically zero Hessian") {
  PolarGrid g(12, 16, 2.0);
  const std::vector<MetricPtr> charts{make_hyperbolic(1.0), make_radial_pinched(),
                                      make_poincare(1.0, 0.9)};
  for (const auto& m : charts) {
    const PolarGrid gg = m->kind() == ChartKind::ConformalDisc ? PolarGrid(12, 16, 0.7) : g;
    const auto H = covariant_hessian(ScalarField(gg, 0.37), *m);
    for (const auto& n : H.nodes) {
      CHECK(n.H_rr == 0.0);
      CHECK(n.H_rt == 0.0);
      CHECK(n.H_tt == 0.0);
      CHECK(n.grad_norm2 == 0.0);
      CHECK(n.det_ratio == 1.0);
    }
  }
}

TEST_CASE("quadratic radial function on the flat chart has Hessian equal to g") {
  auto m = flat_chart(5.0);
  PolarGrid g(20, 24, 3.0);
  const auto H = covariant_hessian(sample(g, [](double r, double) { return 0.5 * r * r; }), *m);
  for (int k = 0; k < g.size(); ++k) {
    const double r = g.r(g.ring(k));
    CHECK(std::abs(H.nodes[k].H_rr - 1.0) <= 1e-12);
    CHECK(std::abs(H.nodes[k].H_rt) <= 1e-12);
    CHECK(std::abs(H.nodes[k].H_tt - r * r) <= 1e-12 * std::max(1.0, r * r));
    CHECK(std::abs(H.nodes[k].lambda_min - 2.0) <= 1e-12);
  }
}

TEST_CASE("stencils are exact on quadratics in the chart coordinates") {
  PolarGrid g(10, 16, 2.0);
  const auto st = build_stencils(g);
  auto p = [](double r, double t) { return 1.0 + 2 * r - t + 0.5 * r * r + 0.25 * r * t - t * t; };
  const auto u = sample(g, p);
  for (int k = 0; k < g.size(); ++k) {
    const int i = g.ring(k), j = g.spoke(k);
    // Angular wrap and the pole break polynomial structure in theta.
    if (i == 0 || j == 0 || j == g.n_theta() - 1) continue;
    const double r = g.r(i), t = g.theta(j);
    const Partials d = apply_stencil(st[k], u.values, k);
    CHECK(d.u_r == doctest::Approx(2 + r + 0.25 * t).epsilon(1e-10));
    CHECK(d.u_t == doctest::Approx(-1 + 0.25 * r - 2 * t).epsilon(1e-10));
    CHECK(d.u_rr == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(d.u_rt == doctest::Approx(0.25).epsilon(1e-9));
    CHECK(d.u_tt == doctest::Approx(-2.0).epsilon(1e-9));
  }
}

TEST_CASE("covariant Hessian of cosh r - 1 on the hyperbolic plane converges at second order") {
  auto m = make_hyperbolic(1.0);
  auto err = [&](int n_r) {
    PolarGrid g(n_r, 16, 2.0);
    const auto H = covariant_hessian(sample(g, [](double r, double) { return std::cosh(r) - 1; }), *m);
    double worst = 0.0;
    for (int k = 0; k < g.size(); ++k) {
      const double r = g.r(g.ring(k));
      worst = std::max(worst, std::abs(H.nodes[k].H_rr - std::cosh(r)));
      const double expect_tt = std::sinh(r) * std::cosh(r) * std::sinh(r);
      worst = std::max(worst, std::abs(H.nodes[k].H_tt - expect_tt) / (std::sinh(r) * std::sinh(r)));
      worst = std::max(worst, std::abs(H.nodes[k].H_rt));
    }
    return worst;
  };
  const double e1 = err(32), e2 = err(64);
  CHECK(e1 / e2 >= 3.5);
  CHECK(e1 / e2 <= 4.5);
}

TEST_CASE("pole coupling converges at second order for a non-radial function") {
  auto m = make_hyperbolic(1.0);
  // u = exp(0.3 x) cos(0.5 y) in geodesic normal coordinates; radial partials at the inner ring.
  auto err = [&](int n_r) {
    PolarGrid g(n_r, 32, 1.0);
    auto fn = [](double r, double t) {
      const double x = r * std::cos(t), y = r * std::sin(t);
      return std::exp(0.3 * x) * std::cos(0.5 * y);
    };
    const auto H = covariant_hessian(sample(g, fn), *m);
    double worst = 0.0;
    for (int j = 0; j < g.n_theta(); ++j) {
      const auto& n = H.nodes[g.index(0, j)];
      const double r = g.r(0), t = g.theta(j);
      const double c = std::cos(t), s = std::sin(t);
      const double x = r * c, y = r * s, e = std::exp(0.3 * x);
      const double ux = 0.3 * e * std::cos(0.5 * y), uy = -0.5 * e * std::sin(0.5 * y);
      const double uxx = 0.09 * e * std::cos(0.5 * y), uxy = -0.15 * e * std::sin(0.5 * y);
      const double uyy = -0.25 * e * std::cos(0.5 * y);
      worst = std::max(worst, std::abs(n.u_r - (c * ux + s * uy)));
      worst = std::max(worst, std::abs(n.H_rr - (c * c * uxx + 2 * c * s * uxy + s * s * uyy)));
    }
    return worst;
  };
  const double e1 = err(16), e2 = err(32);
  CHECK(e1 / e2 >= 3.5);
  CHECK(e1 / e2 <= 4.5);
}

TEST_CASE("model constants have zero residual") {
  for (double C : {0.25, 1.0, 4.0}) {
    auto m = make_hyperbolic(C);
    PolarGrid g(16, 16, 3.0);
    const auto res = ma_operator(ScalarField(g, 1.0 / (2.0 * C)), *m, 1.0 / (2.0 * C));
    for (double v : res.values) CHECK(v == 0.0);
  }
  auto disc = make_poincare(1.0, 0.9);
  const auto res = ma_operator(ScalarField(PolarGrid(16, 16, 0.7), 0.5), *disc, 0.5);
  for (double v : res.values) CHECK(std::abs(v) <= 1e-14);
}

TEST_CASE("residual of an inadmissible field names the node") {
  auto m = make_hyperbolic(1.0);
  PolarGrid g(8, 16, 2.0);
  ScalarField u(g, 0.5);
  u.at(3, 5) = -4.0;
  try {
    ma_operator(u, *m, 0.5);
    FAIL("expected InadmissibleError");
  } catch (const InadmissibleError& e) {
    CHECK(e.node >= 0);
    CHECK(std::string(e.what()).find("inadmissible") != std::string::npos);
  }
}

TEST_CASE("radial oracle solution has small discrete residual") {
  auto k = [](double r) { return -(1.0 + r * r / (1.0 + r * r)); };
  auto m = make_radial_pinched(1.0, 1.0, 6.0);
  const double l = 3.0, b = 1.0 / (2.0 * m->c2_of_radius(l));
  // Radial fields make angular stencils exact, so a long thin grid isolates radial error.
  PolarGrid g(4000, 8, l);
  std::vector<double> radii(g.n_r());
  for (int i = 0; i < g.n_r(); ++i) radii[i] = g.r(i);
  const auto sol = oracle::solve_radial_bvp(k, l, b, radii);
  ScalarField u(g, 0.0);
  for (int i = 0; i < g.n_r(); ++i)
    for (int j = 0; j < g.n_theta(); ++j) u.at(i, j) = sol.u[i];
  const auto res = ma_operator(u, *m, b);
  double worst = 0.0;
  for (int node = 0; node < g.size(); ++node)
    if (!g.on_boundary(node)) worst = std::max(worst, std::abs(res.values[node]));
  CHECK(worst <= 1e-6);
  CHECK(std::abs(res.values[g.index(g.n_r() - 1, 0)]) <= 1e-9);
}

TEST_CASE("residual is invariant under a one-step rotation for radial fields") {
  auto m = make_radial_pinched();
  PolarGrid g(12, 16, 2.0);
  const auto u = sample(g, [](double r, double) { return 0.4 - 0.02 * r * r; });
  const auto res = ma_operator(u, *m, u(11, 0));
  for (int i = 0; i < g.n_r(); ++i)
    for (int j = 0; j < g.n_theta(); ++j) CHECK(res(i, j) == res(i, j + 1));
}

TEST_CASE("CSV round trip and corruption detection") {
  PolarGrid g(6, 8, 1.5);
  const auto u = sample(g, [](double r, double t) { return std::sin(t) * r + 1.0 / 3.0; });
  const std::string path = "grid_roundtrip_test.csv";
  write_field_csv(path, u, FieldCoordinates::Cartesian);
  const auto back = read_field_csv(path, g, FieldCoordinates::Cartesian);
  CHECK(back.values == u.values);
  CHECK_THROWS_AS(read_field_csv(path, g, FieldCoordinates::Polar), GridError);
  CHECK_THROWS_AS(read_field_csv(path, PolarGrid(6, 10, 1.5), FieldCoordinates::Cartesian),
                  GridError);
  {
    std::ofstream os(path, std::ios::app);
    os << "0.1,0.2,abc\n";
  }
  CHECK_THROWS_AS(read_field_csv(path, g, FieldCoordinates::Cartesian), GridError);
  std::remove(path.c_str());
}

TEST_CASE("bicubic interpolation is fourth order and crosses the pole") {
  auto fn = [](double r, double t) {
    const double x = r * std::cos(t), y = r * std::sin(t);
    return std::exp(0.3 * x) * std::cos(0.5 * y);
  };
  auto err = [&](int n) {
    PolarGrid g(n, 2 * n, 2.0);
    const auto u = sample(g, fn);
    double worst = 0.0;
    for (double r : {0.0, 0.013, 0.2, 1.0, 1.77, 1.99})
      for (double t : {0.1, 1.3, 3.0, 5.9}) worst = std::max(worst, std::abs(interpolate(u, r, t) - fn(r, t)));
    return worst;
  };
  const double e1 = err(16), e2 = err(32);
  CHECK(e2 < 1e-5);
  CHECK(e1 / e2 > 10.0);
  PolarGrid g(16, 32, 2.0);
  const auto u = sample(g, fn);
  CHECK(interpolate(u, g.r(3), g.theta(7)) == doctest::Approx(u(3, 7)).epsilon(1e-14));
  CHECK(std::abs(pole_value(u) - 1.0) <= 1e-3);
}
