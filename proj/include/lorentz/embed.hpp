#pragma once

#include <Eigen/Dense>
#include <array>
#include <iosfwd>
#include <json.hpp>
#include <stdexcept>
#include <string>
#include <vector>

#include "lorentz/grid.hpp"
#include "lorentz/ma_solver.hpp"
#include "lorentz/metric.hpp"

namespace lorentz {

class EmbedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Lorentz product with signature (+, +, -).
double lorentz_dot(const Eigen::Vector3d& a, const Eigen::Vector3d& b);

/// Symmetric 2-tensor in (r, theta) chart components.
struct SymTensor2 {
  double rr = 0.0, rt = 0.0, tt = 0.0;
};

/// Coframe theta1 = a dr + b dtheta, theta2 = c dtheta (Gram-Schmidt of the chart
/// frame) and connection form omega = alpha dr + beta dtheta, with
/// d theta1 = omega ^ theta2 and d theta2 = -omega ^ theta1.
struct ConnectionNode {
  double theta1_r = 0.0, theta1_t = 0.0, theta2_t = 0.0;
  double omega_r = 0.0, omega_t = 0.0;
};

/// gbar = (g + (d sqrt(2u))^2)/(2u) on the grid of u.
struct ConformalHyperbolicMetric {
  PolarGrid grid;
  std::vector<SymTensor2> gbar;
  /// Gauss curvature of gbar from finite differences of sqrt(2u) and log u.
  std::vector<double> K;
  /// -1 + [det(Hess u + g)/det g + K_g(|grad u|^2 + 2u)]/(1 + |grad u|^2/(2u))^2.
  std::vector<double> K_identity;
  std::vector<ConnectionNode> connection;
  /// gbar at the pole in chart Cartesian components, row-major.
  std::array<double, 4> pole_metric{};
  double pole_u = 0.0;
  double max_curvature_defect = 0.0;  ///< max |K + 1|
  int worst_node = 0;
  double max_identity_defect = 0.0;  ///< max |K_identity + 1| over interior nodes
};

/// Throws EmbedError when u <= 0 at a node or at the pole.
ConformalHyperbolicMetric conformal_metric(const AdmissibleField& u, const MetricChart& m);

struct DevelopOptions {
  double curvature_check_tol = 1e-2;  ///< required max |K_gbar + 1|
  int substeps = 8;                   ///< RK4 steps per grid interval
  int reproject_every = 16;
};

/// Columns (e1, e2, i): the images of the gbar-orthonormal frame and the point on H.
using LorentzFrame = Eigen::Matrix3d;

/// Developing map from the pole, which goes to the apex (0, 0, 1).
struct DevelopingMap {
  PolarGrid grid;
  std::vector<LorentzFrame> frames;
  std::vector<Eigen::Vector3d> points;
  double frame_drift = 0.0;         ///< max |F^T eta F - eta|
  double hyperboloid_defect = 0.0;  ///< max |<i, i> + 1|
  double holonomy_sum = 0.0;        ///< sum over cells of |M - I| for the loop transport M
  double holonomy_max = 0.0;
  int holonomy_worst_cell = 0;      ///< node at the inner corner; -1 - j for pole cells
  /// max |i - i'| / i_3 between the ray tree and the ring tree (spoke 0 then rings).
  double path_defect = 0.0;
};

/// Throws EmbedError when max |K_gbar + 1| exceeds curvature_check_tol.
DevelopingMap develop(const ConformalHyperbolicMetric& gbar, const DevelopOptions& opt = {});

struct EmbeddingMap {
  PolarGrid grid;
  std::vector<Eigen::Vector3d> X;
  std::vector<Eigen::Vector3d> normal;  ///< future timelike, <n, n> = -1
  std::vector<SymTensor2> h;            ///< -<d_ij X, n>
  std::vector<SymTensor2> pullback;     ///< <d_i X, d_j X>
  std::vector<double> u;
  std::vector<double> grad_norm2;  ///< |grad u|_g^2 from the same differentiator as X
  Eigen::Vector3d pole = Eigen::Vector3d::Zero();
};

/// X = sqrt(2u) i nodewise; derivatives of X from high-order stencils in r (across the pole)
/// and spectral differentiation in theta. Throws EmbedError on a degenerate induced metric.
EmbeddingMap assemble_embedding(const AdmissibleField& u, const MetricChart& m,
                                const DevelopingMap& i);

struct EmbedTolerances {
  double pullback = 1e-2;
  double pinching = 1e-6;
};

struct Extremum {
  double value = 0.0;
  int node = -1;  ///< -1 for the pole point
};

struct EmbeddingAudit {
  Extremum pullback_error;      ///< |G - g|_g / |g|_g
  Extremum margin_upper;        ///< min of sqrt(1/c1 + rho^2) - Z
  Extremum margin_light;        ///< min of Z - rho
  Extremum margin_lower;        ///< min of Z - sqrt(1/c2 + rho^2)
  Extremum saturation_upper;    ///< max of sqrt(1/c1 + rho^2) - Z
  Extremum saturation_lower;    ///< max of Z - sqrt(1/c2 + rho^2)
  Extremum gauss_residual;      ///< |K + det h/det g|
  Extremum codazzi_residual;    ///< g-norm of d_r h_t. - d_t h_r.
  Extremum second_form;         ///< |A|^2
  Extremum support_residual;    ///< |<X, n>^2 - (|grad u|^2 + 2u)|
  Extremum normal_defect;       ///< |<n, d_i X>| / |d_i X|
  Extremum position_defect;     ///< |-<X, X>/2 - u|
  double c1 = 0.0;
  double c2 = 0.0;
  DevelopingMap develop_stats;  ///< holonomy and drift figures; frames not serialized
  double curvature_defect = 0.0;

  bool pass(const EmbedTolerances& tol) const;
  /// Worst offender among the gating checks.
  std::string worst_offender(const EmbedTolerances& tol) const;
  nlohmann::json to_json(const EmbedTolerances& tol) const;
};

EmbeddingAudit verify_embedding(const EmbeddingMap& e, const MetricChart& m);

/// Wavefront OBJ of (x1, x2, Z): the pole point, then nodes row-major; triangles are
/// counterclockwise viewed from +x3. Throws EmbedError for fewer than two rings.
void export_graph_obj(const EmbeddingMap& e, std::ostream& os);
void export_graph_obj(const EmbeddingMap& e, const std::string& path);

/// Max nodewise |X' - R X| for the grid rotated by h_theta; R rotates about the x3 axis.
double rotation_equivariance_error(const AdmissibleField& u, const MetricChart& m,
                                   const DevelopOptions& opt = {});

}  // namespace lorentz
