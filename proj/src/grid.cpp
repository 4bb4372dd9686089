#include "lorentz/grid.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "lorentz/parallel.hpp"

namespace lorentz {

PolarGrid::PolarGrid(int n_r, int n_theta, double l, double theta0)
    : n_r_(n_r), n_theta_(n_theta), l_(l), theta0_(theta0) {
  if (n_r < 2) throw GridError("grid needs at least two rings");
  if (n_theta < 2 || n_theta % 2 != 0) throw GridError("n_theta must be even");
  if (!(l > 0.0)) throw GridError("ball radius must be positive");
  h_ = l / (n_r - 0.5);
  h_theta_ = 2.0 * std::numbers::pi / n_theta;
}

ScalarField::ScalarField(PolarGrid g, std::vector<double> v) : grid(g), values(std::move(v)) {
  if (static_cast<int>(values.size()) != grid.size())
    throw GridError("field size does not match grid");
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (!std::isfinite(values[k])) {
      std::ostringstream os;
      os << "non-finite value at node " << k;
      throw GridError(os.str());
    }
  }
}

std::vector<Stencil> build_stencils(const PolarGrid& g) {
  if (g.n_r() < 4 || g.n_theta() < 8) {
    std::ostringstream os;
    os << "grid too coarse: " << g.n_r() << "x" << g.n_theta() << " (need n_r>=4, n_theta>=8)";
    throw GridError(os.str());
  }
  const double h = g.h(), ht = g.h_theta();
  std::vector<Stencil> out(g.size());
  for (int i = 0; i < g.n_r(); ++i) {
    for (int j = 0; j < g.n_theta(); ++j) {
      Stencil& s = out[g.index(i, j)];
      auto at = [&](int ii, int jj) { return g.signed_index(ii, jj); };
      const int c = at(i, j);
      s.t = {{{{at(i, j + 1), at(i, j - 1), 0.5 / ht}}}, 1};
      s.tt = {{{{at(i, j + 1), c, 1.0 / (ht * ht)}, {at(i, j - 1), c, 1.0 / (ht * ht)}}}, 2};
      if (i < g.n_r() - 1) {
        const int e = at(i + 1, j), w = at(i - 1, j);
        s.r = {{{{e, w, 0.5 / h}}}, 1};
        s.rr = {{{{e, c, 1.0 / (h * h)}, {w, c, 1.0 / (h * h)}}}, 2};
        const double k = 1.0 / (4.0 * h * ht);
        s.rt = {{{{at(i + 1, j + 1), at(i + 1, j - 1), k}, {at(i - 1, j - 1), at(i - 1, j + 1), k}}},
                2};
      } else {
        // One-sided second order: 3(C-W) - (W-WW) and 2(C-W) - 3(W-WW) + (WW-WWW).
        const int w = at(i - 1, j), ww = at(i - 2, j), www = at(i - 3, j);
        s.r = {{{{c, w, 1.5 / h}, {ww, w, 0.5 / h}}}, 2};
        s.rr = {{{{c, w, 2.0 / (h * h)}, {ww, w, 3.0 / (h * h)}, {ww, www, 1.0 / (h * h)}}}, 3};
        const double k = 1.0 / (4.0 * h * ht);
        s.rt = {{{{at(i, j + 1), at(i, j - 1), 3 * k},
                  {at(i - 1, j - 1), at(i - 1, j + 1), 4 * k},
                  {at(i - 2, j + 1), at(i - 2, j - 1), k}}},
                3};
      }
    }
  }
  return out;
}

Partials apply_stencil(const Stencil& s, const std::vector<double>& v, int node) {
  auto dot = [&v](const Stencil::Terms& t) {
    double acc = 0.0;
    for (int k = 0; k < t.n; ++k) acc += t.e[k].w * (v[t.e[k].a] - v[t.e[k].b]);
    return acc;
  };
  Partials p;
  p.u = v[node];
  p.u_r = dot(s.r);
  p.u_t = dot(s.t);
  p.u_rr = dot(s.rr);
  p.u_rt = dot(s.rt);
  p.u_tt = dot(s.tt);
  return p;
}

std::vector<NodeGeometry> sample_geometry(const PolarGrid& grid, const MetricChart& m) {
  std::vector<NodeGeometry> out(grid.size());
  parallel_for(out.size(), [&](std::size_t k) {
    const int node = static_cast<int>(k);
    const double r = grid.r(grid.ring(node)), t = grid.theta(grid.spoke(node));
    out[k].g = m.sample(r, t);
    out[k].gamma = christoffel(out[k].g);
    out[k].K = m.curvature(r, t);
  });
  return out;
}

HessianNode hessian_at(const Partials& p, const NodeGeometry& geo) {
  const auto& c = geo.gamma;
  const auto& g = geo.g;
  HessianNode n;
  n.u_r = p.u_r;
  n.u_t = p.u_t;
  n.H_rr = p.u_rr - c.r_rr * p.u_r - c.t_rr * p.u_t;
  n.H_rt = p.u_rt - c.r_rt * p.u_r - c.t_rt * p.u_t;
  n.H_tt = p.u_tt - c.r_tt * p.u_r - c.t_tt * p.u_t;
  n.grad_norm2 = p.u_r * p.u_r / g.E + p.u_t * p.u_t / g.G;
  // Symmetric form g^{-1/2}(H + g)g^{-1/2}.
  const double a = (n.H_rr + g.E) / g.E;
  const double b = n.H_rt / std::sqrt(g.E * g.G);
  const double d = (n.H_tt + g.G) / g.G;
  const double mean = 0.5 * (a + d), half = 0.5 * (a - d);
  const double rad = std::hypot(half, b);
  n.lambda_min = mean - rad;
  n.lambda_max = mean + rad;
  n.det_ratio = a * d - b * b;
  return n;
}

HessianField covariant_hessian(const ScalarField& u, const std::vector<Stencil>& st,
                               const std::vector<NodeGeometry>& geo) {
  HessianField out{u.grid, std::vector<HessianNode>(u.grid.size())};
  parallel_for(out.nodes.size(), [&](std::size_t k) {
    const int node = static_cast<int>(k);
    out.nodes[k] = hessian_at(apply_stencil(st[k], u.values, node), geo[k]);
  });
  return out;
}

HessianField covariant_hessian(const ScalarField& u, const MetricChart& m) {
  return covariant_hessian(u, build_stencils(u.grid), sample_geometry(u.grid, m));
}

ScalarField ma_operator(const ScalarField& u, const std::vector<Stencil>& st,
                        const std::vector<NodeGeometry>& geo, double boundary_value) {
  const PolarGrid& g = u.grid;
  std::vector<double> res(g.size());
  parallel_for(res.size(), [&](std::size_t k) {
    const int node = static_cast<int>(k);
    if (g.on_boundary(node)) {
      res[k] = u.values[k] - boundary_value;
      return;
    }
    const HessianNode h = hessian_at(apply_stencil(st[k], u.values, node), geo[k]);
    const double rhs = -geo[k].K * (h.grad_norm2 + 2.0 * u.values[k]);
    if (!(h.lambda_min > 0.0) || !(rhs > 0.0)) {
      std::ostringstream os;
      os << "inadmissible node " << node << " (ring " << g.ring(node) << ", spoke "
         << g.spoke(node) << "): min eigenvalue " << h.lambda_min << ", rhs " << rhs;
      throw InadmissibleError(node, h.lambda_min, rhs, os.str());
    }
    res[k] = std::log(h.det_ratio) - std::log(rhs);
  });
  return ScalarField(g, std::move(res));
}

ScalarField ma_operator(const ScalarField& u, const MetricChart& m, double boundary_value) {
  return ma_operator(u, build_stencils(u.grid), sample_geometry(u.grid, m), boundary_value);
}

FieldCoordinates coordinates_for(const MetricChart& m) {
  return m.kind() == ChartKind::ConformalDisc ? FieldCoordinates::Cartesian
                                              : FieldCoordinates::Polar;
}

namespace {

std::array<double, 2> node_coordinates(const PolarGrid& g, int i, int j, FieldCoordinates c) {
  const double r = g.r(i), t = g.theta(j);
  if (c == FieldCoordinates::Cartesian) return {r * std::cos(t), r * std::sin(t)};
  return {r, t};
}

}  // namespace

void write_field_csv(std::ostream& os, const ScalarField& f, FieldCoordinates c,
                     const std::string& value_name) {
  const PolarGrid& g = f.grid;
  os << (c == FieldCoordinates::Cartesian ? "x,y," : "r,theta,") << value_name << '\n';
  os << std::setprecision(17);
  for (int i = 0; i < g.n_r(); ++i) {
    for (int j = 0; j < g.n_theta(); ++j) {
      const auto xy = node_coordinates(g, i, j, c);
      os << xy[0] << ',' << xy[1] << ',' << f(i, j) << '\n';
    }
  }
}

void write_field_csv(const std::string& path, const ScalarField& f, FieldCoordinates c,
                     const std::string& value_name) {
  std::ofstream os(path);
  if (!os) throw GridError("cannot write " + path);
  write_field_csv(os, f, c, value_name);
  if (!os) throw GridError("write failed for " + path);
}

ScalarField read_field_csv(const std::string& path, const PolarGrid& grid, FieldCoordinates c) {
  std::ifstream is(path);
  if (!is) throw GridError("cannot read " + path);
  std::string line;
  if (!std::getline(is, line)) throw GridError(path + ": empty file");
  const std::string expected = c == FieldCoordinates::Cartesian ? "x,y," : "r,theta,";
  if (line.rfind(expected, 0) != 0) throw GridError(path + ": unexpected header '" + line + "'");
  std::vector<double> values;
  values.reserve(grid.size());
  int row = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (row >= grid.size()) throw GridError(path + ": more rows than grid nodes");
    std::array<double, 3> v{};
    const char* p = line.data();
    const char* end = line.data() + line.size();
    for (int k = 0; k < 3; ++k) {
      auto [next, ec] = std::from_chars(p, end, v[k]);
      if (ec != std::errc() || !std::isfinite(v[k])) {
        std::ostringstream os;
        os << path << ": malformed value on row " << row + 2;
        throw GridError(os.str());
      }
      p = next;
      if (k < 2) {
        if (p == end || *p != ',') {
          std::ostringstream os;
          os << path << ": malformed row " << row + 2;
          throw GridError(os.str());
        }
        ++p;
      }
    }
    if (p != end) throw GridError(path + ": trailing data on row " + std::to_string(row + 2));
    const int i = row / grid.n_theta(), j = row % grid.n_theta();
    const auto xy = node_coordinates(grid, i, j, c);
    if (std::abs(xy[0] - v[0]) > 1e-12 * (1 + std::abs(xy[0])) ||
        std::abs(xy[1] - v[1]) > 1e-12 * (1 + std::abs(xy[1]))) {
      std::ostringstream os;
      os << path << ": coordinates on row " << row + 2 << " do not match the grid";
      throw GridError(os.str());
    }
    values.push_back(v[2]);
    ++row;
  }
  if (row != grid.size()) {
    std::ostringstream os;
    os << path << ": expected " << grid.size() << " rows, found " << row;
    throw GridError(os.str());
  }
  return ScalarField(grid, std::move(values));
}

namespace {

// Cubic Lagrange weights for nodes x0 + k (k = 0..3) at position x (unit spacing).
std::array<double, 4> lagrange4(double x) {
  std::array<double, 4> w{};
  for (int k = 0; k < 4; ++k) {
    double p = 1.0;
    for (int m = 0; m < 4; ++m)
      if (m != k) p *= (x - m) / (k - m);
    w[k] = p;
  }
  return w;
}

}  // namespace

double interpolate(const ScalarField& f, double r, double theta) {
  const PolarGrid& g = f.grid;
  if (r < 0.0) {
    r = -r;
    theta += std::numbers::pi;
  }
  if (r > g.ball_radius() * (1.0 + 1e-12)) throw GridError("interpolation outside the ball");
  // Signed ring index k has radius (k + 1/2) h; k < 0 crosses the pole.
  const double x = r / g.h() - 0.5;
  const int k0 = std::clamp(static_cast<int>(std::floor(x)) - 1, -2, g.n_r() - 4);
  const auto wr = lagrange4(x - k0);
  const double y = (theta - g.theta0()) / g.h_theta();
  const double yf = std::floor(y);
  const int j0 = static_cast<int>(yf) - 1;
  const auto wt = lagrange4(y - j0);
  const int shift = g.n_theta() / 2;
  // Offsets from a base value keep constants exact.
  const double base = f.values[g.signed_index(k0, j0)];
  double acc = 0.0;
  for (int a = 0; a < 4; ++a) {
    const int k = k0 + a;
    double ring = 0.0;
    for (int b = 0; b < 4; ++b) {
      // Across the pole the same physical angle sits half a turn away on ring -k-1.
      const int node = k >= 0 ? g.index(k, j0 + b) : g.index(-k - 1, j0 + b + shift);
      ring += wt[b] * (f.values[node] - base);
    }
    acc += wr[a] * ring;
  }
  return base + acc;
}

double pole_value(const ScalarField& f) {
  const PolarGrid& g = f.grid;
  double acc = 0.0;
  for (int j = 0; j < g.n_theta(); ++j) acc += (9.0 * f(0, j) - f(1, j)) / 8.0;
  return acc / g.n_theta();
}

}  // namespace lorentz
