#include "lorentz/ma_solver.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "lorentz/parallel.hpp"

namespace lorentz {

DirichletProblem make_dirichlet_problem(MetricPtr metric, const PolarGrid& grid,
                                        const SolverOptions& options) {
  DirichletProblem p;
  p.boundary_value = 1.0 / (2.0 * metric->c2_of_radius(grid.ball_radius()));
  p.metric = std::move(metric);
  p.grid = grid;
  p.options = options;
  return p;
}

void validate_problem(const DirichletProblem& p) {
  if (!p.metric) throw std::invalid_argument("problem has no metric");
  if (!(p.boundary_value > 0.0)) throw std::invalid_argument("boundary value must be positive");
  const double cap = 1.0 / (2.0 * p.metric->c1());
  if (p.boundary_value > cap * (1.0 + 1e-14)) {
    std::ostringstream os;
    os << "boundary value " << p.boundary_value << " exceeds 1/(2 c1) = " << cap;
    throw std::invalid_argument(os.str());
  }
  if (p.grid.ball_radius() > p.metric->chart_radius())
    throw std::invalid_argument("ball exceeds the chart");
  if (!(p.options.tol > 0.0) || p.options.max_iter < 1 || !(p.options.kappa > 0.0) ||
      !(p.options.kappa < 1.0))
    throw std::invalid_argument("invalid solver options");
  if (p.initial && !(p.initial->grid == p.grid))
    throw std::invalid_argument("initial field lives on a different grid");
}

namespace {

struct Margins {
  double min_eigenvalue = std::numeric_limits<double>::infinity();
  double rhs_min = std::numeric_limits<double>::infinity();
};

struct Evaluation {
  std::vector<double> residual;
  std::vector<HessianNode> nodes;
  Margins margins;  ///< over interior nodes
  double norm = 0.0;
};

// Residual and per-node data; nullopt when some interior node leaves the admissible cone.
std::optional<Evaluation> evaluate(const std::vector<double>& u, const PolarGrid& g,
                                   const std::vector<Stencil>& st,
                                   const std::vector<NodeGeometry>& geo, double b) {
  Evaluation ev;
  ev.residual.resize(g.size());
  ev.nodes.resize(g.size());
  std::vector<char> bad(g.size(), 0);
  parallel_for(g.size(), [&](std::size_t k) {
    const int node = static_cast<int>(k);
    if (g.on_boundary(node)) {
      ev.residual[k] = u[k] - b;
      return;
    }
    const HessianNode h = hessian_at(apply_stencil(st[k], u, node), geo[k]);
    ev.nodes[k] = h;
    const double q = h.grad_norm2 + 2.0 * u[k];
    const double rhs = -geo[k].K * q;
    if (!(h.lambda_min > 0.0) || !(rhs > 0.0) || !std::isfinite(h.det_ratio)) {
      bad[k] = 1;
      return;
    }
    ev.residual[k] = std::log(h.det_ratio) - std::log(rhs);
  });
  for (int k = 0; k < g.size(); ++k) {
    if (bad[k]) return std::nullopt;
    if (!std::isfinite(ev.residual[k])) return std::nullopt;
    ev.norm = std::max(ev.norm, std::abs(ev.residual[k]));
    if (!g.on_boundary(k)) {
      ev.margins.min_eigenvalue = std::min(ev.margins.min_eigenvalue, ev.nodes[k].lambda_min);
      ev.margins.rhs_min =
          std::min(ev.margins.rhs_min, ev.nodes[k].grad_norm2 + 2.0 * u[k]);
    }
  }
  return ev;
}

using SpMat = Eigen::SparseMatrix<double>;

SpMat jacobian(const std::vector<double>& u, const Evaluation& ev, const PolarGrid& g,
               const std::vector<Stencil>& st, const std::vector<NodeGeometry>& geo) {
  const int n = g.size();
  std::vector<std::vector<Eigen::Triplet<double>>> rows(n);
  parallel_for(n, [&](std::size_t k) {
    const int node = static_cast<int>(k);
    auto& out = rows[k];
    if (g.on_boundary(node)) {
      out.emplace_back(node, node, 1.0);
      return;
    }
    const HessianNode& h = ev.nodes[k];
    const auto& gm = geo[k].g;
    const auto& gam = geo[k].gamma;
    const double m11 = h.H_rr + gm.E, m12 = h.H_rt, m22 = h.H_tt + gm.G;
    const double det = m11 * m22 - m12 * m12;
    const double q = h.grad_norm2 + 2.0 * u[k];
    const double c_rr = m22 / det, c_rt = -2.0 * m12 / det, c_tt = m11 / det;
    const double c_r = -(c_rr * gam.r_rr + c_rt * gam.r_rt + c_tt * gam.r_tt) -
                       2.0 * h.u_r / (gm.E * q);
    const double c_t = -(c_rr * gam.t_rr + c_rt * gam.t_rt + c_tt * gam.t_tt) -
                       2.0 * h.u_t / (gm.G * q);
    const double c_0 = -2.0 / q;
    auto add = [&](const Stencil::Terms& t, double c) {
      for (int m = 0; m < t.n; ++m) {
        out.emplace_back(node, t.e[m].a, c * t.e[m].w);
        out.emplace_back(node, t.e[m].b, -c * t.e[m].w);
      }
    };
    add(st[k].rr, c_rr);
    add(st[k].rt, c_rt);
    add(st[k].tt, c_tt);
    add(st[k].r, c_r);
    add(st[k].t, c_t);
    out.emplace_back(node, node, c_0);
  });
  std::vector<Eigen::Triplet<double>> all;
  for (auto& r : rows) all.insert(all.end(), r.begin(), r.end());
  SpMat J(n, n);
  J.setFromTriplets(all.begin(), all.end());
  J.makeCompressed();
  return J;
}

std::string describe_trace_end(const std::vector<TraceRow>& trace) {
  std::ostringstream os;
  if (!trace.empty()) {
    const auto& t = trace.back();
    os << " after iteration " << t.iteration << " (residual " << t.residual << ", step " << t.step
       << ")";
  }
  return os.str();
}

}  // namespace

AdmissibleField describe_field(const ScalarField& u, const MetricChart& m) {
  AdmissibleField out;
  out.u = u;
  out.hessian = covariant_hessian(u, m);
  out.min_eigenvalue = std::numeric_limits<double>::infinity();
  out.rhs_min = std::numeric_limits<double>::infinity();
  for (int k = 0; k < u.grid.size(); ++k) {
    const auto& n = out.hessian.nodes[k];
    out.min_eigenvalue = std::min(out.min_eigenvalue, n.lambda_min);
    out.rhs_min = std::min(out.rhs_min, n.grad_norm2 + 2.0 * u.values[k]);
  }
  return out;
}

AdmissibleField solve_dirichlet(const DirichletProblem& p) {
  validate_problem(p);
  const PolarGrid& g = p.grid;
  const auto st = build_stencils(g);
  const auto geo = sample_geometry(g, *p.metric);
  const double b = p.boundary_value;
  const auto& opt = p.options;

  std::vector<double> u = p.initial ? p.initial->values : std::vector<double>(g.size(), b);
  auto ev = evaluate(u, g, st, geo, b);
  if (!ev) throw NonConvergence("starting field is not admissible", {}, ScalarField(g, u));

  std::vector<TraceRow> trace;
  trace.push_back({0, ev->norm, 0.0, ev->margins.min_eigenvalue, ev->margins.rhs_min});
  int it = 0;
  Eigen::SparseLU<SpMat> lu;
  bool analyzed = false;
  while (ev->norm > opt.tol) {
    if (it >= opt.max_iter) {
      throw NonConvergence("Newton iteration limit reached" + describe_trace_end(trace), trace,
                           ScalarField(g, u));
    }
    ++it;
    const SpMat J = jacobian(u, *ev, g, st, geo);
    if (!analyzed) {
      lu.analyzePattern(J);
      analyzed = true;
    }
    lu.factorize(J);
    if (lu.info() != Eigen::Success)
      throw NonConvergence("singular Newton Jacobian" + describe_trace_end(trace), trace,
                           ScalarField(g, u));
    const Eigen::Map<const Eigen::VectorXd> F(ev->residual.data(), g.size());
    Eigen::VectorXd rhs = -F;
    Eigen::VectorXd delta = lu.solve(rhs);
    // Iterative refinement until the relative linear residual meets linear_tol.
    for (int refine = 0; refine < 3; ++refine) {
      const Eigen::VectorXd r = rhs - J * delta;
      if (r.norm() <= opt.linear_tol * rhs.norm()) break;
      delta += lu.solve(r);
    }

    double lambda = 1.0;
    std::optional<Evaluation> next;
    std::vector<double> trial(g.size());
    const Margins prev = ev->margins;
    while (lambda >= opt.min_step) {
      for (int k = 0; k < g.size(); ++k) trial[k] = u[k] + lambda * delta[k];
      next = evaluate(trial, g, st, geo, b);
      if (next && next->margins.min_eigenvalue >= opt.kappa * prev.min_eigenvalue &&
          next->margins.rhs_min >= opt.kappa * prev.rhs_min)
        break;
      next.reset();
      lambda *= 0.5;
    }
    if (!next) {
      trace.push_back({it, ev->norm, lambda, ev->margins.min_eigenvalue, ev->margins.rhs_min});
      throw NonConvergence("damping underflow" + describe_trace_end(trace), trace,
                           ScalarField(g, u));
    }
    u.swap(trial);
    ev = std::move(next);
    trace.push_back({it, ev->norm, lambda, ev->margins.min_eigenvalue, ev->margins.rhs_min});
  }

  AdmissibleField out = describe_field(ScalarField(g, std::move(u)), *p.metric);
  out.residual = ev->norm;
  out.iterations = it;
  out.trace = std::move(trace);
  return out;
}

SubsolutionReport verify_subsolution(const DirichletProblem& p) {
  SubsolutionReport rep;
  rep.margin = std::numeric_limits<double>::infinity();
  const PolarGrid& g = p.grid;
  for (int k = 0; k < g.size(); ++k) {
    const double K = p.metric->curvature(g.r(g.ring(k)), g.theta(g.spoke(k)));
    const double m = 1.0 + K * 2.0 * p.boundary_value;
    if (m < rep.margin) {
      rep.margin = m;
      rep.worst_node = k;
    }
  }
  return rep;
}

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& trace) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << "iteration,residual,step,min_eigenvalue,rhs_min\n" << std::setprecision(17);
  for (const auto& t : trace)
    os << t.iteration << ',' << t.residual << ',' << t.step << ',' << t.min_eigenvalue << ','
       << t.rhs_min << '\n';
}

}  // namespace lorentz
