#include "lorentz/embed.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>

#include "lorentz/parallel.hpp"

namespace lorentz {

namespace {

const Eigen::Matrix3d kEta = Eigen::Vector3d(1.0, 1.0, -1.0).asDiagonal();

Eigen::Matrix3d lorentz_inverse(const Eigen::Matrix3d& F) { return kEta * F.transpose() * kEta; }

double max_abs(const Eigen::Matrix3d& M) { return M.cwiseAbs().maxCoeff(); }

/// Generator of F' = F A for the coframe values (theta1, theta2) and connection omega.
Eigen::Matrix3d generator(double theta1, double theta2, double omega) {
  Eigen::Matrix3d A;
  A << 0.0, -omega, theta1, omega, 0.0, theta2, theta1, theta2, 0.0;
  return A;
}

/// Lorentz Gram-Schmidt of the columns (e1, e2, i), i first.
void reproject(Eigen::Matrix3d& F) {
  Eigen::Vector3d i = F.col(2), e1 = F.col(0), e2 = F.col(1);
  i /= std::sqrt(-lorentz_dot(i, i));
  e1 += lorentz_dot(e1, i) * i;
  e1 /= std::sqrt(lorentz_dot(e1, e1));
  e2 += lorentz_dot(e2, i) * i - lorentz_dot(e2, e1) * e1;
  e2 /= std::sqrt(lorentz_dot(e2, e2));
  F.col(0) = e1;
  F.col(1) = e2;
  F.col(2) = i;
}

double drift(const Eigen::Matrix3d& F) { return max_abs(F.transpose() * kEta * F - kEta); }

/// Classical RK4 for F' = F A(t) on [t0, t1]; reprojects every `every` steps.
template <class Gen>
void rk4(Eigen::Matrix3d& F, double t0, double t1, int steps, const Gen& A, int& counter,
         int every) {
  const double dt = (t1 - t0) / steps;
  for (int n = 0; n < steps; ++n) {
    const double t = t0 + n * dt;
    const Eigen::Matrix3d Am = A(t + 0.5 * dt);
    const Eigen::Matrix3d k1 = F * A(t);
    const Eigen::Matrix3d k2 = (F + 0.5 * dt * k1) * Am;
    const Eigen::Matrix3d k3 = (F + 0.5 * dt * k2) * Am;
    const Eigen::Matrix3d k4 = (F + dt * k3) * A(t + dt);
    F += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (every > 0 && ++counter % every == 0) reproject(F);
  }
}

/// Weights of derivative orders 0..2 at z for the nodes x (Fornberg's recursion).
std::vector<std::array<double, 3>> fornberg(double z, const std::vector<double>& x) {
  const int n = static_cast<int>(x.size());
  std::vector<std::array<double, 3>> c(n, {0.0, 0.0, 0.0});
  double c1 = 1.0, c4 = x[0] - z;
  c[0][0] = 1.0;
  for (int i = 1; i < n; ++i) {
    const int mn = std::min(i, 2);
    double c2 = 1.0;
    const double c5 = c4;
    c4 = x[i] - z;
    for (int j = 0; j < i; ++j) {
      const double c3 = x[i] - x[j];
      c2 *= c3;
      if (j == i - 1) {
        for (int k = mn; k >= 1; --k) c[i][k] = c1 * (k * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
        c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
      }
      for (int k = mn; k >= 1; --k) c[j][k] = (c4 * c[j][k] - k * c[j][k - 1]) / c3;
      c[j][0] = c4 * c[j][0] / c3;
    }
    c1 = c2;
  }
  return c;
}

/// Lagrange weights at z for the nodes x.
std::vector<double> lagrange(double z, const std::vector<double>& x) {
  std::vector<double> w(x.size(), 1.0);
  for (std::size_t a = 0; a < x.size(); ++a)
    for (std::size_t b = 0; b < x.size(); ++b)
      if (a != b) w[a] *= (z - x[b]) / (x[a] - x[b]);
  return w;
}

struct Derivs {
  double r = 0, t = 0, rr = 0, rt = 0, tt = 0;
};

/// Nine-point Fornberg stencils along signed radial lines and spectral differentiation
/// along rings. Tensor components odd under the pole reflection use parity -1.
class Differentiator {
 public:
  explicit Differentiator(const PolarGrid& g) : g_(g) {
    const int n_r = g.n_r(), width = std::min(9, 2 * n_r);
    width_ = width;
    for (int i = 0; i < n_r; ++i) {
      const int k0 = std::clamp(i - width / 2, -n_r, n_r - width);
      std::vector<double> x(width);
      for (int a = 0; a < width; ++a) x[a] = (k0 + a + 0.5) * g.h();
      start_.push_back(k0);
      weights_.push_back(fornberg(g.r(i), x));
    }
    const int n = g.n_theta();
    const double ht = g.h_theta();
    d1_.assign(n, 0.0);
    d2_.assign(n, -std::numbers::pi * std::numbers::pi / (3.0 * ht * ht) - 1.0 / 6.0);
    for (int m = 1; m < n; ++m) {
      const double sign = m % 2 == 0 ? 1.0 : -1.0;
      const double s = std::sin(0.5 * m * ht);
      d1_[m] = 0.5 * sign * std::cos(0.5 * m * ht) / s;
      d2_[m] = -0.5 * sign / (s * s);
    }
  }

  std::vector<Derivs> apply(const std::vector<double>& v, double parity) const {
    const int n_r = g_.n_r(), n = g_.n_theta();
    std::vector<Derivs> out(g_.size());
    parallel_for(n_r, [&](std::size_t ii) {
      const int i = static_cast<int>(ii);
      std::vector<double> dr(n), ring(n);
      for (int j = 0; j < n; ++j) {
        double a = 0.0, b = 0.0;
        for (int q = 0; q < width_; ++q) {
          const int k = start_[i] + q;
          const double val = v[g_.signed_index(k, j)] * (k < 0 ? parity : 1.0);
          a += weights_[i][q][1] * val;
          b += weights_[i][q][2] * val;
        }
        dr[j] = a;
        ring[j] = v[g_.index(i, j)];
        out[g_.index(i, j)].r = a;
        out[g_.index(i, j)].rr = b;
      }
      for (int j = 0; j < n; ++j) {
        double t = 0.0, tt = 0.0, rt = 0.0;
        for (int k = 0; k < n; ++k) {
          const int m = ((j - k) % n + n) % n;
          t += d1_[m] * ring[k];
          tt += d2_[m] * ring[k];
          rt += d1_[m] * dr[k];
        }
        Derivs& d = out[g_.index(i, j)];
        d.t = t;
        d.tt = tt;
        d.rt = rt;
      }
    });
    return out;
  }

 private:
  PolarGrid g_;
  int width_ = 9;
  std::vector<int> start_;
  std::vector<std::vector<std::array<double, 3>>> weights_;
  std::vector<double> d1_, d2_;
};

/// Symmetric square root of a 2x2 SPD matrix.
Eigen::Matrix2d sqrt_spd(const Eigen::Matrix2d& P) {
  const double s = std::sqrt(P.determinant());
  const double t = std::sqrt(P.trace() + 2.0 * s);
  return (P + s * Eigen::Matrix2d::Identity()) / t;
}

/// Lorentz frame at the apex for the ray leaving the pole in chart direction theta.
Eigen::Matrix3d pole_frame(const std::array<double, 4>& pole_metric, double theta) {
  Eigen::Matrix2d P;
  P << pole_metric[0], pole_metric[1], pole_metric[2], pole_metric[3];
  const Eigen::Vector2d e = (sqrt_spd(P) * Eigen::Vector2d(std::cos(theta), std::sin(theta))).normalized();
  Eigen::Matrix3d F;
  F << e.x(), -e.y(), 0.0, e.y(), e.x(), 0.0, 0.0, 0.0, 1.0;
  return F;
}

ConnectionNode connection_at(const HessianNode& hu, const NodeGeometry& geo, double u,
                             SymTensor2& gbar_out) {
  const double w = std::sqrt(2.0 * u);
  const double du[2] = {hu.u_r, hu.u_t};
  const double Hu[2][2] = {{hu.H_rr, hu.H_rt}, {hu.H_rt, hu.H_tt}};
  const double g[2][2] = {{geo.g.E, 0.0}, {0.0, geo.g.G}};
  const auto& c = geo.gamma;
  // gamma[k][i][j] = Gamma^k_ij.
  const double gamma[2][2][2] = {{{c.r_rr, c.r_rt}, {c.r_rt, c.r_tt}},
                                 {{c.t_rr, c.t_rt}, {c.t_rt, c.t_tt}}};
  double dw[2], W[2][2], gb[2][2];
  for (int i = 0; i < 2; ++i) dw[i] = du[i] / w;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      W[i][j] = Hu[i][j] / w - du[i] * du[j] / (w * w * w);
      gb[i][j] = (g[i][j] + dw[i] * dw[j]) / (2.0 * u);
    }
  // dgb[k][i][j] = d_k gbar_ij from the g-covariant derivative (nabla g = 0).
  double dgb[2][2][2];
  for (int k = 0; k < 2; ++k)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        double v = (W[k][i] * dw[j] + dw[i] * W[k][j]) / (2.0 * u) - gb[i][j] * du[k] / u;
        for (int m = 0; m < 2; ++m) v += gamma[m][k][i] * gb[m][j] + gamma[m][k][j] * gb[i][m];
        dgb[k][i][j] = v;
      }
  const double E = gb[0][0], F = gb[0][1], G = gb[1][1];
  gbar_out = {E, F, G};
  const double sE = std::sqrt(E), D = E * G - F * F, sD = std::sqrt(D);
  const double S = sD / sE;
  double d_sE[2], d_FsE[2], d_S[2];
  for (int k = 0; k < 2; ++k) {
    const double dE = dgb[k][0][0], dF = dgb[k][0][1], dG = dgb[k][1][1];
    const double dD = dE * G + E * dG - 2.0 * F * dF;
    d_sE[k] = dE / (2.0 * sE);
    d_FsE[k] = dF / sE - F * dE / (2.0 * E * sE);
    d_S[k] = dD / (2.0 * sD * sE) - sD * dE / (2.0 * E * sE);
  }
  ConnectionNode n;
  n.theta1_r = sE;
  n.theta1_t = F / sE;
  n.theta2_t = S;
  n.omega_r = (d_FsE[0] - d_sE[1]) / S;
  n.omega_t = (d_S[0] + n.omega_r * F / sE) / sE;
  return n;
}

}  // namespace

double lorentz_dot(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  return a.x() * b.x() + a.y() * b.y() - a.z() * b.z();
}

ConformalHyperbolicMetric conformal_metric(const AdmissibleField& field, const MetricChart& m) {
  const ScalarField& u = field.u;
  const PolarGrid& g = u.grid;
  for (int k = 0; k < g.size(); ++k)
    if (!(u.values[k] > 0.0)) {
      std::ostringstream os;
      os << "u must be positive: u = " << u.values[k] << " at node " << k << " (ring "
         << g.ring(k) << ", spoke " << g.spoke(k) << ")";
      throw EmbedError(os.str());
    }
  const double u0 = pole_value(u);
  if (!(u0 > 0.0)) throw EmbedError("u must be positive at the pole");

  const auto st = build_stencils(g);
  const auto geo = sample_geometry(g, m);
  std::vector<double> w(g.size()), lu(g.size());
  for (int k = 0; k < g.size(); ++k) {
    w[k] = std::sqrt(2.0 * u.values[k]);
    lu[k] = std::log(u.values[k]);
  }

  ConformalHyperbolicMetric out;
  out.grid = g;
  out.gbar.resize(g.size());
  out.K.resize(g.size());
  out.K_identity.resize(g.size());
  out.connection.resize(g.size());
  parallel_for(g.size(), [&](std::size_t kk) {
    const int k = static_cast<int>(kk);
    const auto& G = geo[k];
    const double E = G.g.E, Gt = G.g.G, uk = u.values[k];
    const HessianNode hu = hessian_at(apply_stencil(st[k], u.values, k), G);
    const HessianNode hw = hessian_at(apply_stencil(st[k], w, k), G);
    const HessianNode hl = hessian_at(apply_stencil(st[k], lu, k), G);
    // Curvature of g1 = g + dw^2, then of gbar = g1/(2u).
    const double q = 1.0 + hw.grad_norm2;
    const double det_w = (hw.H_rr * hw.H_tt - hw.H_rt * hw.H_rt) / (E * Gt);
    const double K1 = (G.K + det_w / q) / q;
    const double wr = hw.u_r / E, wt = hw.u_t / Gt;  // raised
    const double wl = wr * hl.u_r + wt * hl.u_t;
    const double i_rr = 1.0 / E - wr * wr / q, i_rt = -wr * wt / q, i_tt = 1.0 / Gt - wt * wt / q;
    const double lap = i_rr * (hl.H_rr - wl * hw.H_rr / q) + 2.0 * i_rt * (hl.H_rt - wl * hw.H_rt / q) +
                       i_tt * (hl.H_tt - wl * hw.H_tt / q);
    out.K[k] = 2.0 * uk * (K1 + 0.5 * lap);
    const double s = 1.0 + hu.grad_norm2 / (2.0 * uk);
    out.K_identity[k] = -1.0 + (hu.det_ratio + G.K * (hu.grad_norm2 + 2.0 * uk)) / (s * s);
    out.connection[k] = connection_at(hu, G, uk, out.gbar[k]);
  });

  out.max_curvature_defect = 0.0;
  for (int k = 0; k < g.size(); ++k) {
    const double d = std::abs(out.K[k] + 1.0);
    if (!(d <= out.max_curvature_defect)) {
      out.max_curvature_defect = d;
      out.worst_node = k;
    }
    if (!g.on_boundary(k))
      out.max_identity_defect = std::max(out.max_identity_defect, std::abs(out.K_identity[k] + 1.0));
  }

  // Pole data: central differences across the pole give the Cartesian gradient.
  const int n = g.n_theta();
  double gx = 0.0, gy = 0.0;
  for (int j = 0; j < n; ++j) {
    const double d = (u(0, j) - u(0, j + n / 2)) / g.h();
    gx += d * std::cos(g.theta(j));
    gy += d * std::sin(g.theta(j));
  }
  gx *= 2.0 / n;
  gy *= 2.0 / n;
  const auto g0 = m.metric_at_pole();
  const double w0sq = 2.0 * u0;
  out.pole_u = u0;
  out.pole_metric = {(g0[0] + gx * gx / w0sq) / w0sq, (g0[1] + gx * gy / w0sq) / w0sq,
                     (g0[2] + gx * gy / w0sq) / w0sq, (g0[3] + gy * gy / w0sq) / w0sq};
  return out;
}

DevelopingMap develop(const ConformalHyperbolicMetric& cm, const DevelopOptions& opt) {
  if (!(cm.max_curvature_defect <= opt.curvature_check_tol)) {
    std::ostringstream os;
    os << "conformal metric is not hyperbolic: |K + 1| = " << cm.max_curvature_defect
       << " at node " << cm.worst_node << " exceeds " << opt.curvature_check_tol;
    throw EmbedError(os.str());
  }
  const PolarGrid& g = cm.grid;
  const int n_r = g.n_r(), n = g.n_theta(), m = std::max(1, opt.substeps);
  if (n_r < 3) throw EmbedError("developing needs at least three rings");
  const double h = g.h();
  DevelopingMap out;
  out.grid = g;
  out.frames.resize(g.size());
  out.points.resize(g.size());

  // Rays from the pole: theta1 and omega along the signed line through spoke j.
  parallel_for(n, [&](std::size_t jj) {
    const int j = static_cast<int>(jj);
    auto A = [&](double s) {
      const int k0 = std::clamp(static_cast<int>(std::floor(s / h - 0.5)) - 2, -n_r, n_r - 6);
      std::vector<double> x(6);
      for (int a = 0; a < 6; ++a) x[a] = (k0 + a + 0.5) * h;
      const auto wts = lagrange(s, x);
      double t1 = 0.0, om = 0.0;
      for (int a = 0; a < 6; ++a) {
        const int k = k0 + a;
        const auto& c = cm.connection[g.signed_index(k, j)];
        t1 += wts[a] * c.theta1_r;
        om += wts[a] * (k < 0 ? -c.omega_r : c.omega_r);
      }
      return generator(t1, 0.0, om);
    };
    Eigen::Matrix3d F = pole_frame(cm.pole_metric, g.theta(j));
    int counter = 0;
    double s0 = 0.0;
    for (int i = 0; i < n_r; ++i) {
      rk4(F, s0, g.r(i), m, A, counter, opt.reproject_every);
      s0 = g.r(i);
      out.frames[g.index(i, j)] = F;
      out.points[g.index(i, j)] = F.col(2);
    }
  });

  // Angular transports along every ring edge (i, j) -> (i, j + 1).
  std::vector<Eigen::Matrix3d> T(g.size());
  parallel_for(n_r, [&](std::size_t ii) {
    const int i = static_cast<int>(ii);
    const double ht = g.h_theta();
    for (int j = 0; j < n; ++j) {
      auto A = [&](double t) {
        const int k0 = j - 2;
        std::vector<double> x(6);
        for (int a = 0; a < 6; ++a) x[a] = (k0 + a) * ht;
        const auto wts = lagrange(t, x);
        double t1 = 0.0, t2 = 0.0, om = 0.0;
        for (int a = 0; a < 6; ++a) {
          const auto& c = cm.connection[g.index(i, k0 + a)];
          t1 += wts[a] * c.theta1_t;
          t2 += wts[a] * c.theta2_t;
          om += wts[a] * c.omega_t;
        }
        return generator(t1, t2, om);
      };
      Eigen::Matrix3d M = Eigen::Matrix3d::Identity();
      int counter = 0;
      rk4(M, j * ht, (j + 1) * ht, m, A, counter, 0);
      T[g.index(i, j)] = M;
    }
  });

  // Cell loops in the frame of their inner corner; pole cells close the fan.
  std::vector<double> defect(g.size());
  parallel_for(g.size(), [&](std::size_t kk) {
    const int k = static_cast<int>(kk);
    const int i = g.ring(k), j = g.spoke(k);
    const auto& F = out.frames;
    Eigen::Matrix3d M;
    if (i + 1 < n_r) {
      M = lorentz_inverse(F[k]) * F[g.index(i + 1, j)] * T[g.index(i + 1, j)] *
          lorentz_inverse(F[g.index(i + 1, j + 1)]) * F[g.index(i, j + 1)] * lorentz_inverse(T[k]);
      defect[k] = max_abs(M - Eigen::Matrix3d::Identity());
    } else {
      defect[k] = 0.0;
    }
  });
  std::vector<double> pole_defect(n);
  for (int j = 0; j < n; ++j) {
    const Eigen::Matrix3d M =
        lorentz_inverse(out.frames[g.index(0, j + 1)]) * out.frames[g.index(0, j)] * T[g.index(0, j)];
    pole_defect[j] = max_abs(M - Eigen::Matrix3d::Identity());
  }
  out.holonomy_sum = 0.0;
  out.holonomy_max = -1.0;
  for (int k = 0; k < g.size(); ++k) {
    out.holonomy_sum += defect[k];
    if (defect[k] > out.holonomy_max) {
      out.holonomy_max = defect[k];
      out.holonomy_worst_cell = k;
    }
  }
  for (int j = 0; j < n; ++j) {
    out.holonomy_sum += pole_defect[j];
    if (pole_defect[j] > out.holonomy_max) {
      out.holonomy_max = pole_defect[j];
      out.holonomy_worst_cell = -1 - j;
    }
  }

  // Ring tree: spoke 0 radially, then along each ring the shorter way round.
  std::vector<double> path(n_r, 0.0);
  parallel_for(n_r, [&](std::size_t ii) {
    const int i = static_cast<int>(ii);
    Eigen::Matrix3d fwd = out.frames[g.index(i, 0)], bwd = fwd;
    double worst = 0.0;
    for (int j = 1; j <= n / 2; ++j) {
      fwd = fwd * T[g.index(i, j - 1)];
      bwd = bwd * lorentz_inverse(T[g.index(i, n - j)]);
      for (const auto& [F, jj] : {std::pair{fwd, j}, std::pair{bwd, n - j}}) {
        const Eigen::Vector3d& p = out.points[g.index(i, jj)];
        worst = std::max(worst, (F.col(2) - p).cwiseAbs().maxCoeff() / p.z());
      }
    }
    path[i] = worst;
  });
  out.path_defect = *std::max_element(path.begin(), path.end());

  for (int k = 0; k < g.size(); ++k) {
    out.frame_drift = std::max(out.frame_drift, drift(out.frames[k]));
    out.hyperboloid_defect =
        std::max(out.hyperboloid_defect, std::abs(lorentz_dot(out.points[k], out.points[k]) + 1.0));
  }
  return out;
}

EmbeddingMap assemble_embedding(const AdmissibleField& field, const MetricChart& m,
                                const DevelopingMap& dev) {
  const ScalarField& u = field.u;
  const PolarGrid& g = u.grid;
  if (!(dev.grid == g)) throw EmbedError("developing map and u live on different grids");
  EmbeddingMap e;
  e.grid = g;
  e.u = u.values;
  e.X.resize(g.size());
  for (int k = 0; k < g.size(); ++k) e.X[k] = std::sqrt(2.0 * u.values[k]) * dev.points[k];
  e.pole = Eigen::Vector3d(0.0, 0.0, std::sqrt(2.0 * pole_value(u)));

  const Differentiator D(g);
  std::array<std::vector<Derivs>, 3> dX;
  for (int c = 0; c < 3; ++c) {
    std::vector<double> v(g.size());
    for (int k = 0; k < g.size(); ++k) v[k] = e.X[k][c];
    dX[c] = D.apply(v, 1.0);
  }
  const auto du = D.apply(u.values, 1.0);
  const auto geo = sample_geometry(g, m);

  e.normal.resize(g.size());
  e.h.resize(g.size());
  e.pullback.resize(g.size());
  e.grad_norm2.resize(g.size());
  int degenerate = -1;
  for (int k = 0; k < g.size(); ++k) {
    Eigen::Vector3d Xr, Xt, Xrr, Xrt, Xtt;
    for (int c = 0; c < 3; ++c) {
      Xr[c] = dX[c][k].r;
      Xt[c] = dX[c][k].t;
      Xrr[c] = dX[c][k].rr;
      Xrt[c] = dX[c][k].rt;
      Xtt[c] = dX[c][k].tt;
    }
    SymTensor2& G = e.pullback[k];
    G = {lorentz_dot(Xr, Xr), lorentz_dot(Xr, Xt), lorentz_dot(Xt, Xt)};
    if (!(G.rr > 0.0 && G.rr * G.tt - G.rt * G.rt > 0.0)) {
      if (degenerate < 0) degenerate = k;
      continue;
    }
    Eigen::Vector3d nv = kEta * Xr.cross(Xt);
    nv /= std::sqrt(-lorentz_dot(nv, nv));
    if (nv.z() < 0.0) nv = -nv;
    e.normal[k] = nv;
    e.h[k] = {-lorentz_dot(Xrr, nv), -lorentz_dot(Xrt, nv), -lorentz_dot(Xtt, nv)};
    e.grad_norm2[k] = du[k].r * du[k].r / geo[k].g.E + du[k].t * du[k].t / geo[k].g.G;
  }
  if (degenerate >= 0) {
    std::ostringstream os;
    os << "degenerate induced metric at node " << degenerate << " (ring " << g.ring(degenerate)
       << ", spoke " << g.spoke(degenerate) << ")";
    throw EmbedError(os.str());
  }
  return e;
}

EmbeddingAudit verify_embedding(const EmbeddingMap& e, const MetricChart& m) {
  const PolarGrid& g = e.grid;
  const auto geo = sample_geometry(g, m);
  EmbeddingAudit a;
  a.c1 = m.c1();
  a.c2 = m.c2();

  const Differentiator D(g);
  std::vector<double> hrr(g.size()), hrt(g.size()), htt(g.size());
  for (int k = 0; k < g.size(); ++k) {
    hrr[k] = e.h[k].rr;
    hrt[k] = e.h[k].rt;
    htt[k] = e.h[k].tt;
  }
  const auto dhrr = D.apply(hrr, 1.0), dhrt = D.apply(hrt, -1.0), dhtt = D.apply(htt, 1.0);

  auto upd_max = [](Extremum& x, double v, int node) {
    if (x.node == -2 || v > x.value || std::isnan(v)) x = {v, node};
  };
  auto upd_min = [](Extremum& x, double v, int node) {
    if (x.node == -2 || v < x.value || std::isnan(v)) x = {v, node};
  };
  for (Extremum* x : {&a.pullback_error, &a.margin_upper, &a.margin_light, &a.margin_lower,
                      &a.saturation_upper, &a.saturation_lower, &a.gauss_residual,
                      &a.codazzi_residual, &a.second_form, &a.support_residual,
                      &a.normal_defect, &a.position_defect})
    x->node = -2;

  auto pinching = [&](const Eigen::Vector3d& X, int node) {
    const double rho2 = X.x() * X.x() + X.y() * X.y(), Z = X.z();
    const double up = std::sqrt(1.0 / a.c1 + rho2) - Z;
    upd_min(a.margin_upper, up, node);
    upd_max(a.saturation_upper, up, node);
    upd_min(a.margin_light, Z - std::sqrt(rho2), node);
    const double lo = Z - std::sqrt(1.0 / a.c2 + rho2);
    upd_min(a.margin_lower, lo, node);
    upd_max(a.saturation_lower, lo, node);
  };
  pinching(e.pole, -1);

  for (int k = 0; k < g.size(); ++k) {
    const double E = geo[k].g.E, G = geo[k].g.G;
    const auto& P = e.pullback[k];
    const double dr = P.rr - E, dt = P.rt, dtt = P.tt - G;
    upd_max(a.pullback_error,
            std::sqrt((dr * dr / (E * E) + 2.0 * dt * dt / (E * G) + dtt * dtt / (G * G)) / 2.0), k);
    pinching(e.X[k], k);

    const auto& h = e.h[k];
    upd_max(a.gauss_residual, std::abs(geo[k].K + (h.rr * h.tt - h.rt * h.rt) / (E * G)), k);
    upd_max(a.second_form, h.rr * h.rr / (E * E) + 2.0 * h.rt * h.rt / (E * G) + h.tt * h.tt / (G * G), k);

    // nabla_k h_ij = d_k h_ij - Gamma^m_ki h_mj - Gamma^m_kj h_im.
    const auto& c = geo[k].gamma;
    const double H[2][2] = {{h.rr, h.rt}, {h.rt, h.tt}};
    const double gamma[2][2][2] = {{{c.r_rr, c.r_rt}, {c.r_rt, c.r_tt}},
                                   {{c.t_rr, c.t_rt}, {c.t_rt, c.t_tt}}};
    const double dh[2][2][2] = {{{dhrr[k].r, dhrt[k].r}, {dhrt[k].r, dhtt[k].r}},
                                {{dhrr[k].t, dhrt[k].t}, {dhrt[k].t, dhtt[k].t}}};
    auto cov = [&](int kk, int i, int j) {
      double v = dh[kk][i][j];
      for (int mm = 0; mm < 2; ++mm) v -= gamma[mm][kk][i] * H[mm][j] + gamma[mm][kk][j] * H[i][mm];
      return v;
    };
    const double c1 = cov(0, 1, 0) - cov(1, 0, 0), c2 = cov(0, 1, 1) - cov(1, 0, 1);
    upd_max(a.codazzi_residual, std::sqrt(c1 * c1 / (E * E * G) + c2 * c2 / (E * G * G)), k);

    const double xn = lorentz_dot(e.X[k], e.normal[k]);
    upd_max(a.support_residual, std::abs(xn * xn - (e.grad_norm2[k] + 2.0 * e.u[k])), k);
    upd_max(a.position_defect, std::abs(-0.5 * lorentz_dot(e.X[k], e.X[k]) - e.u[k]), k);
  }
  // Tangency relative to the tangent lengths, with the derivatives used in assembly.
  std::array<std::vector<Derivs>, 3> dX;
  for (int c = 0; c < 3; ++c) {
    std::vector<double> v(g.size());
    for (int k = 0; k < g.size(); ++k) v[k] = e.X[k][c];
    dX[c] = D.apply(v, 1.0);
  }
  for (int k = 0; k < g.size(); ++k) {
    const Eigen::Vector3d Xr(dX[0][k].r, dX[1][k].r, dX[2][k].r);
    const Eigen::Vector3d Xt(dX[0][k].t, dX[1][k].t, dX[2][k].t);
    const double d = std::max(std::abs(lorentz_dot(e.normal[k], Xr)) / std::sqrt(e.pullback[k].rr),
                              std::abs(lorentz_dot(e.normal[k], Xt)) / std::sqrt(e.pullback[k].tt));
    upd_max(a.normal_defect, d, k);
  }
  return a;
}

bool EmbeddingAudit::pass(const EmbedTolerances& tol) const {
  return worst_offender(tol).empty();
}

std::string EmbeddingAudit::worst_offender(const EmbedTolerances& tol) const {
  std::ostringstream os;
  os << std::setprecision(17);
  auto where = [&](int node) {
    if (node < 0) return std::string("x0");
    const PolarGrid& g = develop_stats.grid;
    std::ostringstream w;
    w << "node " << node;
    if (g.size() > 0) w << " (ring " << g.ring(node) << ", spoke " << g.spoke(node) << ")";
    return w.str();
  };
  if (!(pullback_error.value <= tol.pullback)) {
    os << "pullback error " << pullback_error.value << " at " << where(pullback_error.node);
    return os.str();
  }
  for (const auto& [name, x] : {std::pair{"upper pinching", &margin_upper},
                                std::pair{"light-cone pinching", &margin_light},
                                std::pair{"lower pinching", &margin_lower}}) {
    if (!(x->value >= -tol.pinching)) {
      os << name << " margin " << x->value << " at " << where(x->node);
      return os.str();
    }
  }
  return {};
}

nlohmann::json EmbeddingAudit::to_json(const EmbedTolerances& tol) const {
  auto ex = [](const Extremum& x) {
    return nlohmann::json{{"value", x.value}, {"node", x.node}};
  };
  nlohmann::json j;
  j["pass"] = pass(tol);
  j["worst_offender"] = worst_offender(tol);
  j["tolerances"] = {{"pullback", tol.pullback}, {"pinching", tol.pinching}};
  j["c1"] = c1;
  j["c2"] = c2;
  j["pullback_error"] = ex(pullback_error);
  j["pinching"] = {{"upper_margin", ex(margin_upper)},
                   {"light_cone_margin", ex(margin_light)},
                   {"lower_margin", ex(margin_lower)},
                   {"upper_saturation", ex(saturation_upper)},
                   {"lower_saturation", ex(saturation_lower)}};
  j["gauss_residual"] = ex(gauss_residual);
  j["codazzi_residual"] = ex(codazzi_residual);
  j["second_fundamental_form_norm2"] = ex(second_form);
  j["support_residual"] = ex(support_residual);
  j["normal_defect"] = ex(normal_defect);
  j["position_defect"] = ex(position_defect);
  j["curvature_defect"] = curvature_defect;
  j["develop"] = {{"frame_drift", develop_stats.frame_drift},
                  {"hyperboloid_defect", develop_stats.hyperboloid_defect},
                  {"holonomy_sum", develop_stats.holonomy_sum},
                  {"holonomy_max", develop_stats.holonomy_max},
                  {"holonomy_worst_cell", develop_stats.holonomy_worst_cell},
                  {"path_defect", develop_stats.path_defect}};
  return j;
}

void export_graph_obj(const EmbeddingMap& e, std::ostream& os) {
  const PolarGrid& g = e.grid;
  if (g.n_r() < 2 || static_cast<int>(e.X.size()) != g.size())
    throw EmbedError("too few rings for triangulation");
  const int n = g.n_theta();
  os << std::setprecision(17);
  os << "v " << e.pole.x() << ' ' << e.pole.y() << ' ' << e.pole.z() << '\n';
  for (const auto& X : e.X) os << "v " << X.x() << ' ' << X.y() << ' ' << X.z() << '\n';
  // OBJ indices are 1-based; the pole is vertex 1.
  auto v = [&](int i, int j) { return g.index(i, j) + 2; };
  for (int j = 0; j < n; ++j) os << "f 1 " << v(0, j) << ' ' << v(0, j + 1) << '\n';
  for (int i = 0; i + 1 < g.n_r(); ++i)
    for (int j = 0; j < n; ++j) {
      os << "f " << v(i, j) << ' ' << v(i + 1, j) << ' ' << v(i + 1, j + 1) << '\n';
      os << "f " << v(i, j) << ' ' << v(i + 1, j + 1) << ' ' << v(i, j + 1) << '\n';
    }
}

void export_graph_obj(const EmbeddingMap& e, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw EmbedError("cannot write " + path);
  export_graph_obj(e, os);
}

double rotation_equivariance_error(const AdmissibleField& field, const MetricChart& m,
                                   const DevelopOptions& opt) {
  if (!m.radial()) throw std::invalid_argument("rotation equivariance needs a radial metric");
  const PolarGrid& g = field.u.grid;
  const PolarGrid rotated(g.n_r(), g.n_theta(), g.ball_radius(), g.theta0() + g.h_theta());
  const AdmissibleField turned = describe_field(ScalarField(rotated, field.u.values), m);

  auto embed = [&](const AdmissibleField& f) {
    return assemble_embedding(f, m, develop(conformal_metric(f, m), opt));
  };
  const EmbeddingMap a = embed(field), b = embed(turned);
  const double c = std::cos(g.h_theta()), s = std::sin(g.h_theta());
  Eigen::Matrix3d R;
  R << c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0;
  double worst = 0.0;
  for (int k = 0; k < g.size(); ++k)
    worst = std::max(worst, (b.X[k] - R * a.X[k]).cwiseAbs().maxCoeff());
  return worst;
}

}  // namespace lorentz
