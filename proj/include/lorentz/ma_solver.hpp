#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lorentz/grid.hpp"
#include "lorentz/metric.hpp"

namespace lorentz {

struct SolverOptions {
  double tol = 1e-10;        ///< interior log-residual infinity norm
  int max_iter = 50;
  double kappa = 0.1;        ///< admissibility margins kept above kappa times their previous values
  double min_step = 1e-12;   ///< damping underflow threshold
  double linear_tol = 1e-12; ///< relative residual of each linear solve
};

/// Dirichlet problem on B(x0, l) with constant boundary value b.
struct DirichletProblem {
  MetricPtr metric;
  PolarGrid grid;
  double boundary_value = 0.0;
  SolverOptions options;
  /// Starting field; the constant b when absent.
  std::optional<ScalarField> initial;
};

/// Problem with the standard datum b = 1/(2 C2(l)), C2(l) the max of -K on the closed ball.
DirichletProblem make_dirichlet_problem(MetricPtr metric, const PolarGrid& grid,
                                        const SolverOptions& options = {});

/// Checks b > 0 and b <= 1/(2 c1). Throws std::invalid_argument.
void validate_problem(const DirichletProblem& p);

struct TraceRow {
  int iteration = 0;
  double residual = 0.0;
  double step = 0.0;
  double min_eigenvalue = 0.0;
  double rhs_min = 0.0;
};

/// Converged solution. Margins are minima over all nodes.
struct AdmissibleField {
  ScalarField u;
  HessianField hessian;
  double min_eigenvalue = 0.0;
  double rhs_min = 0.0;  ///< min of |grad u|^2 + 2u
  double residual = 0.0; ///< interior log-residual infinity norm
  int iterations = 0;
  std::vector<TraceRow> trace;
};

class NonConvergence : public std::runtime_error {
 public:
  NonConvergence(const std::string& what, std::vector<TraceRow> trace, ScalarField last)
      : std::runtime_error(what), trace(std::move(trace)), last(std::move(last)) {}
  std::vector<TraceRow> trace;
  ScalarField last;
};

/// Damped Newton iteration on the log-form residual from an admissible start.
/// Returns immediately when the starting residual is already within tolerance.
AdmissibleField solve_dirichlet(const DirichletProblem& p);

/// Derived quantities of an arbitrary field, as stored in AdmissibleField.
AdmissibleField describe_field(const ScalarField& u, const MetricChart& m);

struct SubsolutionReport {
  double margin = 0.0;  ///< min over nodes of 1 + 2 b K
  int worst_node = 0;
};

/// Subsolution check of the constant b: det(g)/det(g) >= -K (2b) at every node.
SubsolutionReport verify_subsolution(const DirichletProblem& p);

/// Trace CSV: iteration, residual, step, min_eigenvalue, rhs_min.
void write_trace_csv(const std::string& path, const std::vector<TraceRow>& trace);

}  // namespace lorentz
