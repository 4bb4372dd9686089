#pragma once

// Independent radial reference for the Dirichlet problem on geodesic balls of a warped
// metric with radial curvature K(r). Shares no code with the library: the warp is
// co-integrated here and the ODE is solved by adaptive Runge-Kutta with root-bracketed
// shooting on u(0).
//
// For radial u the equation reduces to
//   (u'' + 1)((f'/f) u' + 1) = -K (u'^2 + 2u),   f'' = -K f,
// with u'(0) = 0 and u(l) = b.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include <boost/math/tools/toms748_solve.hpp>
#include <boost/numeric/odeint.hpp>

namespace oracle {

struct RadialBvpSolution {
  double pole_value = 0.0;
  std::vector<double> radii;
  std::vector<double> u;
  std::vector<double> u_r;
};

namespace detail {

using State = std::array<double, 4>;  // u, u', f, f'

struct Breakdown {
  double u_prime;
};

struct Rhs {
  std::function<double(double)> K;
  void operator()(const State& y, State& dy, double r) const {
    const double k = K(r);
    const double denom = 1.0 + y[3] / y[2] * y[1];
    const double q = y[1] * y[1] + 2.0 * y[0];
    if (!(denom > 1e-10) || !(q > 0.0) || !std::isfinite(y[0]) || std::abs(y[0]) > 1e6)
      throw Breakdown{y[1]};
    dy[0] = y[1];
    dy[1] = -k * q / denom - 1.0;
    dy[2] = y[3];
    dy[3] = -k * y[2];
  }
};

constexpr double kStart = 1e-4;

inline State series_start(const std::function<double(double)>& K, double s) {
  const double k0 = -K(0.0);
  const double u2 = std::sqrt(2.0 * k0 * s) - 1.0;
  const double r = kStart;
  return {s + 0.5 * u2 * r * r, u2 * r, r + k0 * r * r * r / 6.0, 1.0 + 0.5 * k0 * r * r};
}

template <class Observer>
void integrate(const std::function<double(double)>& K, double s, std::vector<double> times,
               Observer obs) {
  namespace ode = boost::numeric::odeint;
  State y = series_start(K, s);
  auto stepper = ode::make_dense_output(1e-13, 1e-13, ode::runge_kutta_dopri5<State>());
  ode::integrate_times(stepper, Rhs{K}, y, times.begin(), times.end(), 1e-3, obs);
}

// Signed miss u(l; s) - b; a breakdown counts as overshoot in the direction of u'.
inline double miss(const std::function<double(double)>& K, double l, double b, double s) {
  double end = 0.0;
  try {
    integrate(K, s, {kStart, l}, [&](const State& y, double) { end = y[0]; });
  } catch (const Breakdown& e) {
    return e.u_prime >= 0.0 ? 1e6 : -1e6;
  }
  return end - b;
}

}  // namespace detail

/// Solves the radial problem on [0, l] and samples u, u' at the requested radii (> 0).
inline RadialBvpSolution solve_radial_bvp(const std::function<double(double)>& K, double l,
                                          double b, std::vector<double> radii) {
  const double k0 = -K(0.0);
  double lo = 1e-3 * b, hi = 1.0 / (2.0 * k0);
  auto F = [&](double s) { return detail::miss(K, l, b, s); };
  double flo = F(lo), fhi = F(hi);
  if (flo * fhi > 0.0) {
    // Scan for a sign change.
    const int n = 400;
    bool found = false;
    double prev_s = lo, prev_f = flo;
    for (int k = 1; k <= n && !found; ++k) {
      const double s = lo + (hi - lo) * k / n;
      const double f = F(s);
      if (prev_f * f <= 0.0) {
        lo = prev_s;
        hi = s;
        flo = prev_f;
        fhi = f;
        found = true;
      }
      prev_s = s;
      prev_f = f;
    }
    if (!found) throw std::runtime_error("radial oracle: no sign change in shooting bracket");
  }
  boost::uintmax_t iters = 200;
  auto tol = [](double a, double c) { return std::abs(a - c) <= 1e-16 * std::max(1.0, a); };
  const auto br = boost::math::tools::toms748_solve(F, lo, hi, flo, fhi, tol, iters);
  // The bracket end with the smaller miss.
  const double s = std::abs(F(br.first)) <= std::abs(F(br.second)) ? br.first : br.second;

  RadialBvpSolution out;
  out.pole_value = s;
  std::vector<std::size_t> order(radii.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::sort(order.begin(), order.end(), [&](auto a, auto c) { return radii[a] < radii[c]; });
  std::vector<double> times{detail::kStart};
  for (auto k : order) times.push_back(std::max(radii[k], detail::kStart));
  std::vector<std::pair<double, double>> samples;
  detail::integrate(K, s, times, [&](const detail::State& y, double) {
    samples.emplace_back(y[0], y[1]);
  });
  // integrate_times reports once per time, including the start.
  out.radii = radii;
  out.u.resize(radii.size());
  out.u_r.resize(radii.size());
  for (std::size_t m = 0; m < order.size(); ++m) {
    const auto k = order[m];
    if (radii[k] < detail::kStart) {
      const double u2 = std::sqrt(2.0 * k0 * s) - 1.0;
      out.u[k] = s + 0.5 * u2 * radii[k] * radii[k];
      out.u_r[k] = u2 * radii[k];
    } else {
      out.u[k] = samples[m + 1].first;
      out.u_r[k] = samples[m + 1].second;
    }
  }
  return out;
}

}  // namespace oracle
