#include "lorentz/geodesic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/toms748_solve.hpp>

#include "lorentz/metric.hpp"

namespace lorentz {

namespace {

using State = std::array<double, 4>;

struct Endpoint {
  double x, y, vx, vy;
};

State initial_state(const HamiltonianChart& c, std::array<double, 2> a, double beta) {
  const auto g = c.metric(a[0], a[1]);
  const double ex = std::cos(beta), ey = std::sin(beta);
  const double n = std::sqrt(g[0] * ex * ex + 2 * g[1] * ex * ey + g[2] * ey * ey);
  const double vx = ex / n, vy = ey / n;
  return {a[0], a[1], g[0] * vx + g[1] * vy, g[1] * vx + g[2] * vy};
}

// Flows for arc length s with n RK4 steps; returns position and velocity at the end.
Endpoint flow(const HamiltonianChart& c, State z, double s, int n) {
  const double h = s / n;
  for (int k = 0; k < n; ++k) {
    const State k1 = c.vector_field(z);
    State t;
    for (int i = 0; i < 4; ++i) t[i] = z[i] + 0.5 * h * k1[i];
    const State k2 = c.vector_field(t);
    for (int i = 0; i < 4; ++i) t[i] = z[i] + 0.5 * h * k2[i];
    const State k3 = c.vector_field(t);
    for (int i = 0; i < 4; ++i) t[i] = z[i] + h * k3[i];
    const State k4 = c.vector_field(t);
    for (int i = 0; i < 4; ++i) z[i] += h / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
  }
  const State v = c.vector_field(z);
  return {z[0], z[1], v[0], v[1]};
}

struct Shot {
  double beta, s;
};

std::optional<Shot> newton_shoot(const HamiltonianChart& c, std::array<double, 2> a,
                                 std::array<double, 2> b, Shot guess,
                                 const ShootingOptions& opt) {
  auto steps = [&](double s) {
    return std::max(16, static_cast<int>(std::ceil(std::abs(s) / opt.max_step)));
  };
  // Trials whose geodesic leaves the chart count as non-finite misses.
  auto miss = [&](Shot q, int n) {
    try {
      const Endpoint e = flow(c, initial_state(c, a, q.beta), q.s, n);
      return std::array<double, 2>{e.x - b[0], e.y - b[1]};
    } catch (const MetricError&) {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      return std::array<double, 2>{nan, nan};
    }
  };
  Shot q = guess;
  for (int it = 0; it < opt.max_newton; ++it) {
    const int n = steps(q.s);
    Endpoint e;
    try {
      e = flow(c, initial_state(c, a, q.beta), q.s, n);
    } catch (const MetricError&) {
      return std::nullopt;
    }
    const double fx = e.x - b[0], fy = e.y - b[1];
    const double err = std::hypot(fx, fy);
    if (err <= opt.tol) return q;
    const double db = 1e-7;
    const auto fp = miss({q.beta + db, q.s}, n);
    const auto fm = miss({q.beta - db, q.s}, n);
    const double jb_x = (fp[0] - fm[0]) / (2 * db), jb_y = (fp[1] - fm[1]) / (2 * db);
    const double det = jb_x * e.vy - jb_y * e.vx;
    if (!(std::abs(det) > 1e-300)) return std::nullopt;
    const double dbeta = -(fx * e.vy - fy * e.vx) / det;
    const double ds = -(jb_x * fy - jb_y * fx) / det;
    double lambda = 1.0;
    bool moved = false;
    for (int ls = 0; ls < 30; ++ls, lambda *= 0.5) {
      Shot trial{q.beta + lambda * dbeta, q.s + lambda * ds};
      if (!(trial.s > 0.0)) continue;
      const auto f = miss(trial, steps(trial.s));
      const double e2 = std::hypot(f[0], f[1]);
      if (std::isfinite(e2) && e2 < err) {
        q = trial;
        moved = true;
        break;
      }
    }
    if (!moved) return err <= 1e3 * opt.tol ? std::optional<Shot>(q) : std::nullopt;
  }
  const auto f = miss(q, steps(q.s));
  if (std::hypot(f[0], f[1]) <= 1e3 * opt.tol) return q;
  return std::nullopt;
}

Shot straight_guess(const HamiltonianChart& c, std::array<double, 2> a, std::array<double, 2> b) {
  const double dx = b[0] - a[0], dy = b[1] - a[1];
  const auto g = c.metric(0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]));
  return {std::atan2(dy, dx), std::sqrt(g[0] * dx * dx + 2 * g[1] * dx * dy + g[2] * dy * dy)};
}

}  // namespace

double shoot_distance(const HamiltonianChart& chart, std::array<double, 2> a,
                      std::array<double, 2> b, const ShootingOptions& opt) {
  if (a == b) return 0.0;
  if (auto q = newton_shoot(chart, a, b, straight_guess(chart, a, b), opt)) return q->s;
  // Homotopy: move the target from a toward b, reusing each solution as the next guess.
  std::array<double, 2> t0{a[0] + (b[0] - a[0]) / opt.homotopy_pieces,
                           a[1] + (b[1] - a[1]) / opt.homotopy_pieces};
  auto q = newton_shoot(chart, a, t0, straight_guess(chart, a, t0), opt);
  for (int k = 2; q && k <= opt.homotopy_pieces; ++k) {
    const double w = static_cast<double>(k) / opt.homotopy_pieces;
    const std::array<double, 2> t{a[0] + w * (b[0] - a[0]), a[1] + w * (b[1] - a[1])};
    Shot guess{q->beta, q->s * k / (k - 1.0)};
    q = newton_shoot(chart, a, t, guess, opt);
  }
  if (!q) {
    std::ostringstream os;
    os << "geodesic shooting failed between (" << a[0] << "," << a[1] << ") and (" << b[0] << ","
       << b[1] << ")";
    throw MetricError(os.str());
  }
  return q->s;
}

namespace {

// Over r in [lo, hi] with gap = f(lo) - c >= 0: the angle swept by the Clairaut geodesic
// with constant c, and J = integral of sqrt(f^2 - c^2)/f dr. The length is c * angle + J,
// which is stationary in c at the true geodesic. The substitution r = lo + s^2 removes the
// turning-point singularity; f(r) - f(lo) integrates f' near lo to avoid cancellation.
struct Sweep {
  double angle = 0.0;
  double j = 0.0;
};

Sweep sweep(const std::function<double(double)>& f, const std::function<double(double)>& fp,
            double lo, double hi, double c, double gap, bool with_j) {
  if (!(hi > lo)) return {};
  if (c == 0.0) return {0.0, hi - lo};
  using boost::math::quadrature::gauss;
  using boost::math::quadrature::gauss_kronrod;
  const double f_lo = f(lo);
  const double top = std::sqrt(hi - lo);
  auto root = [&](double s, double fr) {
    // Scaled by s^2 itself: lo + s^2 - lo is inexact when s^2 is tiny.
    const double rise =
        s * s < 1e-4
            ? s * s * gauss<double, 7>::integrate([&](double t) { return fp(lo + s * s * t); }, 0.0, 1.0)
            : fr - f_lo;
    return std::sqrt(std::max((rise + gap) * (fr + c), 0.0));
  };
  Sweep out;
  out.angle = gauss_kronrod<double, 31>::integrate(
      [&](double s) {
        const double fr = f(lo + s * s);
        const double q = root(s, fr);
        return q > 0.0 ? 2.0 * s * c / (fr * q) : 0.0;
      },
      0.0, top, 12, 1e-10);
  if (with_j)
    out.j = gauss_kronrod<double, 31>::integrate(
        [&](double s) {
          const double fr = f(lo + s * s);
          return 2.0 * s * root(s, fr) / fr;
        },
        0.0, top, 12, 1e-12);
  return out;
}

}  // namespace

double clairaut_distance(const std::function<double(double)>& f,
                         const std::function<double(double)>& f_prime, double r1, double r2,
                         double dtheta) {
  if (r1 > r2) std::swap(r1, r2);
  const double delta = std::abs(std::remainder(dtheta, 2.0 * M_PI));
  if (r1 == 0.0 || delta < 1e-15) return r2 - r1;
  if (M_PI - delta < 1e-15) return r1 + r2;
  boost::math::tools::eps_tolerance<double> tol(40);
  std::uintmax_t iters = 100;
  const double f1 = f(r1);
  // Geodesic leaving r1 tangentially sweeps the largest angle among monotone ones.
  const double tangent = sweep(f, f_prime, r1, r2, f1, 0.0, false).angle;
  if (delta <= tangent) {
    auto monotone = [&](double tau, bool with_j) {
      return sweep(f, f_prime, r1, r2, tau * f1, (1.0 - tau) * f1, with_j);
    };
    auto miss = [&](double tau) { return monotone(tau, false).angle - delta; };
    const auto [a, b] = boost::math::tools::toms748_solve(miss, 0.0, 1.0, -delta, tangent - delta,
                                                          tol, iters);
    const double tau = 0.5 * (a + b);
    return tau * f1 * delta + monotone(tau, true).j;
  }
  // Turning radius rs < r1: the swept angle decreases from pi (rs -> 0) to `tangent` (rs = r1).
  auto turn = [&](double rs, bool with_j) {
    const double c = f(rs);
    const Sweep p = sweep(f, f_prime, rs, r1, c, 0.0, with_j);
    const Sweep q = sweep(f, f_prime, rs, r2, c, 0.0, with_j);
    return Sweep{p.angle + q.angle, p.j + q.j};
  };
  auto miss = [&](double rs) { return rs <= 0.0 ? M_PI - delta : turn(rs, false).angle - delta; };
  const auto [a, b] =
      boost::math::tools::toms748_solve(miss, 0.0, r1, M_PI - delta, tangent - delta, tol, iters);
  const double rs = 0.5 * (a + b);
  return f(rs) * delta + turn(rs, true).j;
}

HamiltonianChart warped_hamiltonian(const WarpedPolarMetric& m) {
  // q = 1/f^2 - 1/rho^2 and Q2 = q'/rho, with Taylor forms near the pole.
  const double k0 = m.radial_curvature(0.0);
  const double dk = 1e-3;
  const double k2 = (m.radial_curvature(dk) - k0) / (dk * dk);
  const double f3 = -k0 / 6.0, f5 = (k0 * k0 - 6.0 * k2) / 120.0;
  const double a2 = 3.0 * f3 * f3 - 2.0 * f5;
  const WarpedPolarMetric* mp = &m;
  HamiltonianChart c;
  c.vector_field = [mp, f3, a2](const State& z) {
    const double x = z[0], y = z[1], px = z[2], py = z[3];
    const double rho = std::hypot(x, y);
    double q, Q2;
    if (rho < 2e-3) {
      q = -2.0 * f3 + a2 * rho * rho;
      Q2 = 2.0 * a2;
    } else {
      const double f = mp->f(rho), fp = mp->f_prime(rho);
      q = 1.0 / (f * f) - 1.0 / (rho * rho);
      Q2 = (-2.0 * fp / (f * f * f) + 2.0 / (rho * rho * rho)) / rho;
    }
    const double L = x * py - y * px;
    return State{px - L * q * y, py + L * q * x, -(L * q * py + 0.5 * L * L * Q2 * x),
                 -(-L * q * px + 0.5 * L * L * Q2 * y)};
  };
  c.metric = [mp](double x, double y) {
    const double rho = std::hypot(x, y);
    if (rho < 1e-12) return std::array<double, 3>{1.0, 0.0, 1.0};
    const double ratio = mp->f(rho) / rho;
    const double phi = ratio * ratio;
    const double nx = x / rho, ny = y / rho;
    return std::array<double, 3>{phi + (1 - phi) * nx * nx, (1 - phi) * nx * ny,
                                 phi + (1 - phi) * ny * ny};
  };
  return c;
}

HamiltonianChart conformal_hamiltonian(const ConformalDiscMetric& m) {
  const ConformalDiscMetric* mp = &m;
  HamiltonianChart c;
  c.vector_field = [mp](const State& z) {
    const double psi = mp->psi(z[0], z[1]);
    const auto gl = mp->grad_log_psi(z[0], z[1]);
    const double e = (z[2] * z[2] + z[3] * z[3]) / (2.0 * psi);
    return State{z[2] / psi, z[3] / psi, e * gl[0], e * gl[1]};
  };
  c.metric = [mp](double x, double y) {
    const double p = mp->psi(x, y);
    return std::array<double, 3>{p, 0.0, p};
  };
  return c;
}

}  // namespace lorentz
