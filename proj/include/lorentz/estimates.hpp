#pragma once

#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "lorentz/grid.hpp"
#include "lorentz/ma_solver.hpp"
#include "lorentz/metric.hpp"

namespace lorentz {

/// One audited inequality. margin = bound - observed for upper bounds and
/// observed - bound for lower bounds; pass iff margin >= -slack. `pass` is empty when
/// the hypothesis of the estimate does not hold at the probe.
struct EstimateRecord {
  std::string id;
  std::string locus;  ///< where the extremum was observed
  double bound = 0.0;
  double observed = 0.0;
  double margin = 0.0;
  std::optional<bool> pass;
  bool gating = true;
  nlohmann::json details = nlohmann::json::object();
};

struct EstimateReport {
  std::vector<EstimateRecord> records;
  /// All gating records pass.
  bool pass() const;
  nlohmann::json to_json() const;
};

struct AuditSlacks {
  double solver_tol = 1e-10;            ///< zero-order slack is 10 solver_tol
  double gradient_fd_constant = 1.0;    ///< C in the gradient slack C h^2 + 10 tol
  double cutoff_values = 1e-8;          ///< items i) and ii)
  double cutoff_hessian = 1e-4;         ///< item iii)
};

/// u(p): the two-ring extrapolation at the pole, bicubic interpolation elsewhere.
double value_at(const ScalarField& u, ChartPoint p);

/// "r=...,theta=..." for a chart point, "x0" for the pole.
std::string locus_of(ChartPoint p);
std::string locus_of(const PolarGrid& g, int node);

/// Lower and upper records: b - slack <= u <= 1/(2 c1) + slack.
std::vector<EstimateRecord> check_zero_order(const AdmissibleField& u, const MetricChart& m,
                                             double b, const AuditSlacks& s);

/// max |grad u|_g <= 2/sqrt(c1) + C h^2 + 10 tol.
EstimateRecord check_first_order(const AdmissibleField& u, const MetricChart& m,
                                 const AuditSlacks& s);

/// u <= b + (2/sqrt(c1)) (l_eff - d(x0, .)) at every node, l_eff the largest distance
/// from x0 to the boundary ring (= l on warped charts).
EstimateRecord check_barrier(const AdmissibleField& u, const MetricChart& m, double b,
                             const AuditSlacks& s);

/// min eigenvalue of g^{-1}(Hess u + g) > 0.
EstimateRecord check_admissibility(const AdmissibleField& u);

/// A = 2 sqrt(c2) coth(sqrt(c2) r0).
double comparison_constant(double c2, double r0);

/// min{ r0/(2A), 1/(32 c2), c1 r0^2/(9 A^2) }.
double lower_bound_formula(double c1, double c2, double r0);

/// Throws std::invalid_argument unless B(center, r0) lies in the solved ball.
void require_ball_inside(const AdmissibleField& u, const MetricChart& m, ChartPoint center,
                         double r0);

EstimateRecord check_lower_bound(const AdmissibleField& u, const MetricChart& m,
                                 ChartPoint center, double r0);

/// phi = r0/A - u - d^2(center, .)/(A r0) on Q = {phi > 0}.
struct CutoffFunction {
  ChartPoint center;
  double r0 = 0.0;
  double c2 = 0.0;
  double A = 0.0;
  double rho_max = 0.0;  ///< r0/A
  double u_center = 0.0;
  bool hypothesis = false;  ///< u(center) < r0/A
  std::vector<double> phi;       ///< per node; meaningful on Q only
  std::vector<char> in_support;  ///< node lies in Q
  std::vector<double> dist;      ///< d(center, node), NaN where not computed
};

struct CutoffAudit {
  CutoffFunction cutoff;
  std::vector<EstimateRecord> records;  ///< items i), ii), iii), or one hypothesis marker
};

CutoffAudit build_cutoff(const AdmissibleField& u, const MetricChart& m, ChartPoint center,
                         double r0, const AuditSlacks& s);

/// c2, c2' over B(center, r0) and B(center, r0 + 1); c3, c4 over B(center, r0).
struct SecondOrderConstants {
  double c2 = 0.0;
  double c2_prime = 0.0;
  double c3 = 0.0;
  double c4 = 0.0;
  double c_cal = 1.0;
};

SecondOrderConstants second_order_constants(const MetricChart& m, ChartPoint center, double r0,
                                            double c_cal);

/// Max eigenvalue of g^{-1}(g + Hess u) on B(center, sqrt(c1)(r0/A - u(center))/6) against
/// the calibrated bound. Reported as a ratio, never gating.
EstimateRecord check_second_order(const AdmissibleField& u, const MetricChart& m,
                                  ChartPoint center, double r0, const SecondOrderConstants& k);

/// Geodesic distances from `center` to every node whose Euclidean lower bound is within
/// `radius`; other entries are NaN.
std::vector<double> distances_within(const MetricChart& m, const PolarGrid& g, ChartPoint center,
                                     double radius);

/// Audit configuration for a full report.
struct AuditPlan {
  std::vector<double> r0_list{1.0, 2.0};
  std::vector<ChartPoint> probes;
  double c_cal = 1.0;
  AuditSlacks slacks;
};

/// Zero/first order, barrier, admissibility, lower bound at x0 for each r0 (and at each
/// probe), cutoff and second-order audits at each probe with each r0 that fits.
EstimateReport audit_solution(const AdmissibleField& u, const MetricChart& m, double b,
                              const AuditPlan& plan);

}  // namespace lorentz
