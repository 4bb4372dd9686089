#pragma once

#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace lorentz {

class MetricError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown when a polar-chart quantity is requested at the pole r = 0.
class PoleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A point in polar chart coordinates. For conformal charts r is the Euclidean
/// chart radius, for warped charts it is the geodesic distance to the pole.
struct ChartPoint {
  double r = 0.0;
  double theta = 0.0;
};

/// Diagonal metric E dr^2 + G dtheta^2 sampled at a chart point, with first partials.
struct PolarMetricSample {
  double E = 1.0, G = 1.0;
  double E_r = 0.0, E_t = 0.0;
  double G_r = 0.0, G_t = 0.0;
};

/// Second-kind Christoffel symbols in the (r, theta) chart. `r_tt` is Gamma^r_{theta theta}.
struct Christoffel {
  double r_rr = 0, r_rt = 0, r_tt = 0;
  double t_rr = 0, t_rt = 0, t_tt = 0;
};

Christoffel christoffel(const PolarMetricSample& s);

/// |grad log(-K)|_g and the g-operator norm of the covariant Hessian of log(-K).
struct LogCurvatureDerivatives {
  double gradient_norm = 0.0;
  double hessian_norm = 0.0;
};

/// Curvature certificates: -c2 <= K <= -c1 on the chart domain.
struct CurvatureBounds {
  double c1 = 0.0;
  double c2 = 0.0;
  /// max of -K over the closed solve domain of chart radius l (nondecreasing).
  std::function<double(double)> c2_of_radius;
  double c3 = 0.0;
  double c4 = 0.0;
  /// Hoelder data of the curvature. Never checked at runtime.
  std::optional<double> holder_exponent;
  std::optional<double> holder_constant;
};

enum class ChartKind { WarpedPolar, ConformalDisc };

/// Analytic surface metric in an explicit chart, evaluated on demand.
///
/// Every chart is written in polar coordinates (r, theta) about the base point
/// x0 with a diagonal metric. Objects are immutable after construction.
class MetricChart {
 public:
  virtual ~MetricChart() = default;

  virtual ChartKind kind() const = 0;
  virtual std::string family() const = 0;
  /// Largest chart radius on which the metric is defined.
  virtual double chart_radius() const = 0;
  /// True when g and K do not depend on theta.
  virtual bool radial() const = 0;

  virtual PolarMetricSample sample(double r, double theta) const = 0;
  virtual double curvature(double r, double theta) const = 0;
  virtual LogCurvatureDerivatives log_curvature_derivatives(double r, double theta) const = 0;

  virtual double c1() const = 0;
  virtual double c2() const = 0;
  /// max(-K) over the solve domain of chart radius l, never underestimated.
  virtual double c2_of_radius(double l) const = 0;
  /// max(-K) over the closed geodesic ball B(center, radius).
  virtual double max_neg_curvature(ChartPoint center, double radius) const = 0;
  /// max over B(center, radius) of |grad log(-K)| and |Hess log(-K)|.
  virtual LogCurvatureDerivatives max_log_curvature_derivatives(ChartPoint center,
                                                                double radius) const = 0;

  /// Geodesic distance between two chart points.
  virtual double distance(ChartPoint a, ChartPoint b) const = 0;
  /// Constant s such that d(a, b) >= s |a - b| in chart Cartesian coordinates.
  virtual double euclidean_lower_bound_factor() const = 0;

  /// Chart Cartesian components of the metric at the pole (2x2 row-major).
  virtual std::array<double, 4> metric_at_pole() const = 0;

  CurvatureBounds bounds() const;
};

using MetricPtr = std::shared_ptr<const MetricChart>;

/// Warp profile of g = dr^2 + f(r)^2 dtheta^2.
struct WarpProfile {
  std::function<double(double)> f;
  std::function<double(double)> f_prime;
};

/// Optional closed forms of d/dr log(-K) and d^2/dr^2 log(-K).
struct RadialLogCurvature {
  std::function<double(double)> first;
  std::function<double(double)> second;
};

/// Geodesic polar chart dr^2 + f(r)^2 dtheta^2 about the pole, with radial curvature.
class WarpedPolarMetric final : public MetricChart {
 public:
  WarpedPolarMetric(std::string family, std::function<double(double)> curvature, WarpProfile warp,
                    double r_max, std::optional<RadialLogCurvature> log_curvature = std::nullopt,
                    std::optional<double> constant_curvature = std::nullopt);

  ChartKind kind() const override { return ChartKind::WarpedPolar; }
  std::string family() const override { return family_; }
  double chart_radius() const override { return r_max_; }
  bool radial() const override { return true; }

  PolarMetricSample sample(double r, double theta) const override;
  double curvature(double r, double /*theta*/) const override { return curvature_(r); }
  LogCurvatureDerivatives log_curvature_derivatives(double r, double theta) const override;

  double c1() const override { return c1_; }
  double c2() const override { return c2_; }
  double c2_of_radius(double l) const override;
  double max_neg_curvature(ChartPoint center, double radius) const override;
  LogCurvatureDerivatives max_log_curvature_derivatives(ChartPoint center,
                                                        double radius) const override;
  double distance(ChartPoint a, ChartPoint b) const override;
  double euclidean_lower_bound_factor() const override { return 1.0; }
  std::array<double, 4> metric_at_pole() const override { return {1.0, 0.0, 0.0, 1.0}; }

  double f(double r) const { return warp_.f(r); }
  double f_prime(double r) const { return warp_.f_prime(r); }
  double radial_curvature(double r) const { return curvature_(r); }
  std::optional<double> constant_curvature() const { return constant_curvature_; }

  /// d/dr and d^2/dr^2 of log(-K), closed form when available, else centered FD with step 1e-4.
  std::pair<double, double> log_curvature_radial(double r) const;

 private:
  std::string family_;
  std::function<double(double)> curvature_;
  WarpProfile warp_;
  double r_max_;
  std::optional<RadialLogCurvature> log_curvature_;
  std::optional<double> constant_curvature_;
  double c1_ = 0.0;
  double c2_ = 0.0;
};

/// Conformal disc chart g = psi(x, y) (dx^2 + dy^2), evaluated in polar form.
struct ConformalFactor {
  std::function<double(double, double)> psi;
  /// Cartesian gradient of log psi.
  std::function<std::array<double, 2>(double, double)> grad_log_psi;
  /// Euclidean Laplacian of log psi.
  std::function<double(double, double)> laplacian_log_psi;
};

class ConformalDiscMetric final : public MetricChart {
 public:
  /// `closed_form_distance`, when given, replaces geodesic shooting.
  ConformalDiscMetric(std::string family, ConformalFactor factor, double domain_radius,
                      bool radial, double psi_lower_bound,
                      std::function<double(ChartPoint, ChartPoint)> closed_form_distance = {});

  ChartKind kind() const override { return ChartKind::ConformalDisc; }
  std::string family() const override { return family_; }
  double chart_radius() const override { return domain_radius_; }
  bool radial() const override { return radial_; }

  PolarMetricSample sample(double r, double theta) const override;
  double curvature(double r, double theta) const override;
  LogCurvatureDerivatives log_curvature_derivatives(double r, double theta) const override;

  double c1() const override { return c1_; }
  double c2() const override { return c2_; }
  double c2_of_radius(double l) const override;
  double max_neg_curvature(ChartPoint center, double radius) const override;
  LogCurvatureDerivatives max_log_curvature_derivatives(ChartPoint center,
                                                        double radius) const override;
  double distance(ChartPoint a, ChartPoint b) const override;
  double euclidean_lower_bound_factor() const override;
  std::array<double, 4> metric_at_pole() const override;

  double psi(double x, double y) const { return factor_.psi(x, y); }
  std::array<double, 2> grad_log_psi(double x, double y) const { return factor_.grad_log_psi(x, y); }
  double curvature_xy(double x, double y) const;

 private:
  double sampled_max_neg_curvature(double cx, double cy, double chart_disc_radius) const;

  std::string family_;
  ConformalFactor factor_;
  double domain_radius_;
  bool radial_;
  double psi_lower_bound_;
  std::function<double(ChartPoint, ChartPoint)> closed_form_distance_;
  double c1_ = 0.0;
  double c2_ = 0.0;
};

// ---------------------------------------------------------------------------
// Families

/// Constant curvature -C: f(r) = sinh(sqrt(C) r)/sqrt(C).
std::shared_ptr<const WarpedPolarMetric> make_hyperbolic(double scale, double r_max = 12.0);

/// Warp profile realising a prescribed radial curvature via f'' = -K f, f(0)=0, f'(0)=1,
/// integrated with classical RK4 at step `ode_step`.
std::shared_ptr<const WarpedPolarMetric> make_radial_from_curvature(
    std::function<double(double)> curvature, double r_max, double ode_step = 1e-3,
    std::optional<RadialLogCurvature> log_curvature = std::nullopt,
    std::string family = "radial");

/// K(r) = -(k0 + amplitude r^2/(1 + r^2)), pinched in [-(k0 + amplitude), -k0].
std::shared_ptr<const WarpedPolarMetric> make_radial_pinched(double k0 = 1.0,
                                                             double amplitude = 1.0,
                                                             double r_max = 12.0);

/// Poincare disc scaled to constant curvature -C on the chart disc of radius `domain_radius`.
std::shared_ptr<const ConformalDiscMetric> make_poincare(double scale = 1.0,
                                                         double domain_radius = 0.9);

/// psi = 4 exp(2 eps x)/(1 - |x|^2)^2, whose curvature is -exp(-2 eps x).
std::shared_ptr<const ConformalDiscMetric> make_poincare_perturbed(double epsilon,
                                                                   double domain_radius = 0.9);

struct WarpChristoffels {
  double theta_r_theta;  ///< Gamma^theta_{r theta} = f'/f
  double r_theta_theta;  ///< Gamma^r_{theta theta} = -f f'
};

/// The two nonzero independent symbols of a warped chart. Throws PoleError at r = 0.
WarpChristoffels christoffels_polar(const WarpedPolarMetric& m, double r);

/// Jacobi consistency |f'' + K f| / max(1, f) at the given radius, f'' by a five-point stencil.
double jacobi_defect(const WarpedPolarMetric& m, double r, double h = 1e-3);

inline constexpr double kJacobiTol = 1e-7;

}  // namespace lorentz
