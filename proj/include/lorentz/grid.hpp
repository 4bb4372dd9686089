#pragma once

#include <array>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "lorentz/metric.hpp"

namespace lorentz {

class GridError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised by the residual when a node leaves the admissible cone.
class InadmissibleError : public std::runtime_error {
 public:
  InadmissibleError(int node, double eigenvalue, double rhs, const std::string& what)
      : std::runtime_error(what), node(node), eigenvalue(eigenvalue), rhs(rhs) {}
  int node;
  double eigenvalue;
  double rhs;
};

/// Pole-offset polar lattice on the ball of radius l.
///
/// Rings sit at r_i = (i + 1/2) h for i = 0..n_r-1 with (n_r - 1/2) h = l, so the last
/// ring is the boundary circle r = l. Angles theta_j = theta0 + j h_theta are periodic.
/// For conformal charts r and theta are polar coordinates of the Euclidean chart disc.
class PolarGrid {
 public:
  PolarGrid() = default;
  PolarGrid(int n_r, int n_theta, double l, double theta0 = 0.0);

  int n_r() const { return n_r_; }
  int n_theta() const { return n_theta_; }
  int size() const { return n_r_ * n_theta_; }
  double ball_radius() const { return l_; }
  double h() const { return h_; }
  double h_theta() const { return h_theta_; }
  double theta0() const { return theta0_; }

  double r(int i) const { return (i + 0.5) * h_; }
  double theta(int j) const { return theta0_ + j * h_theta_; }
  int wrap(int j) const { return ((j % n_theta_) + n_theta_) % n_theta_; }
  int index(int i, int j) const { return i * n_theta_ + wrap(j); }
  int ring(int node) const { return node / n_theta_; }
  int spoke(int node) const { return node % n_theta_; }
  bool on_boundary(int node) const { return ring(node) == n_r_ - 1; }

  /// Node holding the value at signed ring index i (i < 0 crosses the pole).
  int signed_index(int i, int j) const {
    return i >= 0 ? index(i, j) : index(-i - 1, j + n_theta_ / 2);
  }

  bool operator==(const PolarGrid& o) const {
    return n_r_ == o.n_r_ && n_theta_ == o.n_theta_ && l_ == o.l_ && theta0_ == o.theta0_;
  }

 private:
  int n_r_ = 0;
  int n_theta_ = 0;
  double l_ = 0.0;
  double h_ = 0.0;
  double h_theta_ = 0.0;
  double theta0_ = 0.0;
};

/// Grid function; every stored value is finite.
struct ScalarField {
  PolarGrid grid;
  std::vector<double> values;

  ScalarField() = default;
  ScalarField(PolarGrid g, double fill) : grid(g), values(g.size(), fill) {}
  ScalarField(PolarGrid g, std::vector<double> v);

  double operator()(int i, int j) const { return values[grid.index(i, j)]; }
  double& at(int i, int j) { return values[grid.index(i, j)]; }
};

/// Linear stencils in difference form: a derivative is sum of w (v[a] - v[b]) over its
/// entries, so constants are annihilated exactly.
struct Stencil {
  struct Entry {
    int a = 0, b = 0;
    double w = 0.0;
  };
  struct Terms {
    std::array<Entry, 3> e;
    int n = 0;
  };
  Terms r, t, rr, rt, tt;
};

/// Second-order stencils for every node: centered in the interior with across-pole
/// coupling, one-sided in r on the boundary ring. Rejects n_r < 4 or n_theta < 8.
std::vector<Stencil> build_stencils(const PolarGrid& grid);

/// Chart partials of a grid function at one node.
struct Partials {
  double u = 0, u_r = 0, u_t = 0, u_rr = 0, u_rt = 0, u_tt = 0;
};

Partials apply_stencil(const Stencil& s, const std::vector<double>& v, int node);

/// Metric data cached per node.
struct NodeGeometry {
  PolarMetricSample g;
  Christoffel gamma;
  double K = 0.0;
};

std::vector<NodeGeometry> sample_geometry(const PolarGrid& grid, const MetricChart& m);

/// Per-node derived quantities of u. Chart components; Hessian is covariant.
struct HessianNode {
  double H_rr = 0, H_rt = 0, H_tt = 0;
  double u_r = 0, u_t = 0;
  double grad_norm2 = 0;  ///< |grad u|_g^2
  double det_ratio = 0;   ///< det(Hess u + g)/det g
  double lambda_min = 0;  ///< eigenvalues of g^{-1}(Hess u + g)
  double lambda_max = 0;
};

struct HessianField {
  PolarGrid grid;
  std::vector<HessianNode> nodes;
};

/// Covariant Hessian Hess u_ij = d_ij u - Gamma^k_ij d_k u with its invariants.
HessianNode hessian_at(const Partials& p, const NodeGeometry& geo);

HessianField covariant_hessian(const ScalarField& u, const MetricChart& m);
HessianField covariant_hessian(const ScalarField& u, const std::vector<Stencil>& st,
                               const std::vector<NodeGeometry>& geo);

/// Log-form residual log[det(Hess u + g)/det g] - log[-K(|grad u|^2 + 2u)] on interior
/// nodes, u - boundary_value on the boundary ring. Throws InadmissibleError.
ScalarField ma_operator(const ScalarField& u, const MetricChart& m, double boundary_value);
ScalarField ma_operator(const ScalarField& u, const std::vector<Stencil>& st,
                        const std::vector<NodeGeometry>& geo, double boundary_value);

/// Column labels of field dumps.
enum class FieldCoordinates { Polar, Cartesian };

FieldCoordinates coordinates_for(const MetricChart& m);

/// CSV dump: header then one row per node, row-major in (i, j), 17 significant digits.
void write_field_csv(std::ostream& os, const ScalarField& f, FieldCoordinates c,
                     const std::string& value_name = "value");
void write_field_csv(const std::string& path, const ScalarField& f, FieldCoordinates c,
                     const std::string& value_name = "value");

/// Reads a dump written for `grid`. Throws GridError on malformed rows, non-finite
/// values, or coordinates that do not match the grid.
ScalarField read_field_csv(const std::string& path, const PolarGrid& grid, FieldCoordinates c);

/// Bicubic interpolation in (r, theta) using the across-pole extension. r <= l.
double interpolate(const ScalarField& f, double r, double theta);

/// Value at the pole from the first two rings: mean over j of (9 u_0j - u_1j)/8.
double pole_value(const ScalarField& f);

}  // namespace lorentz
