#include "lorentz/exhaustion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace lorentz {

void validate_schedule(const ExhaustionSchedule& s, const MetricChart& m) {
  if (s.radii.empty()) throw std::invalid_argument("exhaustion.radii is empty");
  if (s.resolutions.size() != s.radii.size())
    throw std::invalid_argument("grid resolutions must match exhaustion.radii");
  for (std::size_t k = 0; k < s.radii.size(); ++k) {
    if (!(s.radii[k] > 0.0)) throw std::invalid_argument("exhaustion.radii must be positive");
    if (k > 0 && !(s.radii[k] > s.radii[k - 1]))
      throw std::invalid_argument("exhaustion.radii must be strictly increasing");
    if (s.radii[k] > m.chart_radius())
      throw std::invalid_argument("exhaustion radius exceeds the chart radius");
  }
  if (!(s.l_obs > 0.0)) throw std::invalid_argument("exhaustion.l_obs must be positive");
  // Warped charts measure radii geodesically; conformal radii are chart units.
  if (m.kind() == ChartKind::WarpedPolar && s.l_obs > s.radii.front() - 1.0 + 1e-12)
    throw std::invalid_argument("exhaustion.l_obs must not exceed l_1 - 1");
  if (m.kind() == ChartKind::ConformalDisc && !(s.l_obs < s.radii.front()))
    throw std::invalid_argument("exhaustion.l_obs must lie inside the first ball");
  if (!(s.tol > 0.0)) throw std::invalid_argument("exhaustion.tol must be positive");
}

double exhaustion_boundary_value(const MetricChart& m, double l, bool blend) {
  const double b = 1.0 / (2.0 * m.c2_of_radius(l));
  return blend ? 0.5 * (b + 1.0 / (2.0 * m.c1())) : b;
}

ScalarField warm_start(const ScalarField& previous, double b_old, const PolarGrid& grid,
                       double b_new) {
  const double l_old = previous.grid.ball_radius();
  ScalarField out(grid, 0.0);
  for (int i = 0; i < grid.n_r(); ++i) {
    const double r = grid.r(i);
    for (int j = 0; j < grid.n_theta(); ++j) {
      const double v = r <= l_old ? interpolate(previous, r, grid.theta(j)) : b_old;
      out.at(i, j) = v + (b_new - b_old);
    }
  }
  return out;
}

ScalarField restrict_to_reference(const ScalarField& u, const PolarGrid& reference) {
  ScalarField out(reference, 0.0);
  for (int i = 0; i < reference.n_r(); ++i)
    for (int j = 0; j < reference.n_theta(); ++j)
      out.at(i, j) = interpolate(u, reference.r(i), reference.theta(j));
  return out;
}

ScalarField restrict_to_rings(const ScalarField& u, double radius) {
  const PolarGrid& g = u.grid;
  const int n = std::min(g.n_r(), static_cast<int>(std::floor(radius / g.h() + 1.0)));
  if (n < 4) throw GridError("too few rings inside the observation ball");
  const PolarGrid sub(n, g.n_theta(), (n - 0.5) * g.h(), g.theta0());
  return ScalarField(sub, std::vector<double>(u.values.begin(), u.values.begin() + sub.size()));
}

namespace {

ConvergenceRow summarize(double l, const AdmissibleField& f) {
  ConvergenceRow row;
  row.l = l;
  row.delta = std::numeric_limits<double>::quiet_NaN();
  row.min_u = *std::min_element(f.u.values.begin(), f.u.values.end());
  row.max_u = *std::max_element(f.u.values.begin(), f.u.values.end());
  row.max_grad = 0.0;
  for (const auto& n : f.hessian.nodes) row.max_grad = std::max(row.max_grad, std::sqrt(n.grad_norm2));
  return row;
}

}  // namespace

ExhaustionResult run_exhaustion(const ExhaustionSchedule& s, MetricPtr m,
                                const std::function<void(const ExhaustionStep&)>& on_step) {
  validate_schedule(s, *m);
  const PolarGrid reference(s.reference.n_r, s.reference.n_theta, s.l_obs, s.theta0);
  ExhaustionResult res;
  ScalarField previous_ref;
  int rising = 0;
  for (std::size_t k = 0; k < s.radii.size(); ++k) {
    const double l = s.radii[k];
    const PolarGrid grid(s.resolutions[k].n_r, s.resolutions[k].n_theta, l, s.theta0);
    DirichletProblem p;
    p.metric = m;
    p.grid = grid;
    p.boundary_value = exhaustion_boundary_value(*m, l, s.boundary_blend);
    p.options = s.solver;

    ExhaustionStep step;
    step.l = l;
    step.boundary_value = p.boundary_value;
    // When the constant subsolution already solves the problem (C1 = C2) it is kept exactly.
    double constant_residual = 0.0;
    for (double v : ma_operator(ScalarField(grid, p.boundary_value), *m, p.boundary_value).values)
      constant_residual = std::max(constant_residual, std::abs(v));
    if (!res.steps.empty() && constant_residual > s.solver.tol) {
      const auto& prev = res.steps.back();
      ScalarField start = warm_start(prev.field.u, prev.boundary_value, grid, p.boundary_value);
      // A start that is not admissible falls back to the constant subsolution.
      try {
        ma_operator(start, *m, p.boundary_value);
        p.initial = std::move(start);
        step.warm_started = true;
      } catch (const InadmissibleError&) {
      }
    }
    step.field = solve_dirichlet(p);

    ConvergenceRow row = summarize(l, step.field);
    ScalarField ref = restrict_to_reference(step.field.u, reference);
    if (k > 0) {
      double d = 0.0;
      for (int n = 0; n < reference.size(); ++n)
        d = std::max(d, std::abs(ref.values[n] - previous_ref.values[n]));
      row.delta = d;
      if (res.table.size() >= 2 && d > res.table.back().delta)
        ++rising;
      else
        rising = 0;
    }
    previous_ref = std::move(ref);
    res.table.push_back(row);
    res.steps.push_back(std::move(step));
    if (on_step) on_step(res.steps.back());

    if (rising >= 3) {
      res.limit = previous_ref;
      std::ostringstream os;
      os << "exhaustion diverges: delta increased on three consecutive steps up to l=" << l;
      throw DivergenceError(os.str(), std::move(res));
    }
    if (k > 0 && row.delta <= s.tol) {
      res.converged = true;
      break;
    }
  }
  res.limit = previous_ref;
  return res;
}

void write_convergence_csv(const std::string& path, const std::vector<ConvergenceRow>& rows) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << "l,delta,min_u,max_u,max_grad\n" << std::setprecision(17);
  for (const auto& r : rows) {
    os << r.l << ',';
    if (!std::isnan(r.delta)) os << r.delta;
    os << ',' << r.min_u << ',' << r.max_u << ',' << r.max_grad << '\n';
  }
}

}  // namespace lorentz
