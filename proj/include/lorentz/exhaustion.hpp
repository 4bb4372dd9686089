#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lorentz/grid.hpp"
#include "lorentz/ma_solver.hpp"

namespace lorentz {

struct GridResolution {
  int n_r = 0;
  int n_theta = 0;
};

/// Increasing radii l_1 < ... < l_L with one grid per radius and an observation
/// ball B(x0, l_obs), l_obs <= l_1 - 1.
struct ExhaustionSchedule {
  std::vector<double> radii;
  std::vector<GridResolution> resolutions;
  double l_obs = 1.0;
  double tol = 1e-5;
  /// Replace b by (b + 1/(2 c1))/2 at every radius.
  bool boundary_blend = false;
  GridResolution reference{32, 64};
  double theta0 = 0.0;
  SolverOptions solver;
};

void validate_schedule(const ExhaustionSchedule& s, const MetricChart& m);

/// One row per solved radius; delta is NaN on the first row.
struct ConvergenceRow {
  double l = 0.0;
  double delta = 0.0;
  double min_u = 0.0;
  double max_u = 0.0;
  double max_grad = 0.0;
};

struct ExhaustionStep {
  double l = 0.0;
  double boundary_value = 0.0;
  bool warm_started = false;
  AdmissibleField field;
};

struct ExhaustionResult {
  std::vector<ExhaustionStep> steps;
  std::vector<ConvergenceRow> table;
  /// Last solution sampled on the reference grid over B(x0, l_obs).
  ScalarField limit;
  bool converged = false;  ///< stopped because delta <= tol
};

/// Raised when delta grows on three consecutive steps. Carries the partial run.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, ExhaustionResult partial)
      : std::runtime_error(what), partial(std::move(partial)) {}
  ExhaustionResult partial;
};

/// Boundary datum used at radius l.
double exhaustion_boundary_value(const MetricChart& m, double l, bool blend);

/// Warm start for a solve on `grid` from a solution on a smaller ball: interpolated
/// inside the old ball, the old boundary value outside, shifted by b_new - b_old.
ScalarField warm_start(const ScalarField& previous, double b_old, const PolarGrid& grid,
                       double b_new);

/// Samples u on the reference grid over B(x0, l_obs).
ScalarField restrict_to_reference(const ScalarField& u, const PolarGrid& reference);

/// The rings of u with r <= radius + h/2 as a field on their own pole-offset grid; values are
/// copied, not interpolated. Throws GridError when fewer than four rings remain.
ScalarField restrict_to_rings(const ScalarField& u, double radius);

/// Solves the Dirichlet problems in order, warm starting each from the previous.
/// `on_step` runs after every solve. NonConvergence propagates from the solver.
ExhaustionResult run_exhaustion(const ExhaustionSchedule& s, MetricPtr m,
                                const std::function<void(const ExhaustionStep&)>& on_step = {});

/// CSV with columns l, delta, min_u, max_u, max_grad.
void write_convergence_csv(const std::string& path, const std::vector<ConvergenceRow>& rows);

}  // namespace lorentz
