#pragma once

#include <array>
#include <functional>

namespace lorentz {

/// Cogeodesic flow of a chart metric in Cartesian chart coordinates.
/// State is (x, y, p_x, p_y); the Hamiltonian is half the inverse metric on p.
struct HamiltonianChart {
  std::function<std::array<double, 4>(const std::array<double, 4>&)> vector_field;
  /// Cartesian metric components (g_xx, g_xy, g_yy).
  std::function<std::array<double, 3>(double, double)> metric;
};

struct ShootingOptions {
  double tol = 1e-11;       ///< endpoint miss in chart units
  double max_step = 0.005;  ///< RK4 step in arc length
  int max_newton = 40;
  int homotopy_pieces = 8;
};

/// Length of the geodesic from a to b, found by Newton shooting on the initial
/// direction and arc length. Throws MetricError when shooting fails.
double shoot_distance(const HamiltonianChart& chart, std::array<double, 2> a,
                      std::array<double, 2> b, const ShootingOptions& opt = {});

/// Geodesic distance in dr^2 + f(r)^2 dtheta^2 between (r1, theta1) and (r2, theta2) from
/// the Clairaut integral f^2 theta' = c: the constant c, and the turning radius when the
/// geodesic dips toward the pole, are found by root finding on the swept angle.
double clairaut_distance(const std::function<double(double)>& f,
                         const std::function<double(double)>& f_prime, double r1, double r2,
                         double dtheta);

class WarpedPolarMetric;
class ConformalDiscMetric;

HamiltonianChart warped_hamiltonian(const WarpedPolarMetric& m);
HamiltonianChart conformal_hamiltonian(const ConformalDiscMetric& m);

}  // namespace lorentz
