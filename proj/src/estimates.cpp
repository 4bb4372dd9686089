#include "lorentz/estimates.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "lorentz/parallel.hpp"

namespace lorentz {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::array<double, 2> cartesian(ChartPoint p) {
  return {p.r * std::cos(p.theta), p.r * std::sin(p.theta)};
}

ChartPoint node_point(const PolarGrid& g, int node) {
  return {g.r(g.ring(node)), g.theta(g.spoke(node))};
}

EstimateRecord upper_record(std::string id, std::string locus, double bound, double observed,
                            double slack) {
  EstimateRecord r;
  r.id = std::move(id);
  r.locus = std::move(locus);
  r.bound = bound;
  r.observed = observed;
  r.margin = bound - observed;
  r.pass = r.margin >= -slack;
  r.details["slack"] = slack;
  return r;
}

EstimateRecord lower_record(std::string id, std::string locus, double bound, double observed,
                            double slack) {
  EstimateRecord r = upper_record(std::move(id), std::move(locus), bound, observed, slack);
  r.margin = observed - bound;
  r.pass = r.margin >= -slack;
  return r;
}

EstimateRecord marker(std::string id, ChartPoint center, double r0, std::string reason) {
  EstimateRecord r;
  r.id = std::move(id);
  r.locus = locus_of(center);
  r.bound = kNaN;
  r.observed = kNaN;
  r.margin = kNaN;
  r.gating = false;
  r.details["r0"] = r0;
  r.details["skipped"] = std::move(reason);
  return r;
}

// Distance from the pole to every node.
std::vector<double> pole_distances(const MetricChart& m, const PolarGrid& g) {
  std::vector<double> d(g.size());
  if (m.kind() == ChartKind::WarpedPolar) {
    for (int k = 0; k < g.size(); ++k) d[k] = g.r(g.ring(k));
    return d;
  }
  parallel_for(d.size(), [&](std::size_t k) {
    d[k] = m.distance({0.0, 0.0}, node_point(g, static_cast<int>(k)));
  });
  return d;
}

// Nodes of B(center, radius), the nearest node when that set is empty.
std::vector<int> nodes_in_ball(const std::vector<double>& dist, const PolarGrid& g,
                               ChartPoint center, double radius) {
  std::vector<int> out;
  for (int k = 0; k < g.size(); ++k)
    if (!std::isnan(dist[k]) && dist[k] <= radius) out.push_back(k);
  if (out.empty()) {
    const auto c = cartesian(center);
    double best = std::numeric_limits<double>::infinity();
    int arg = 0;
    for (int k = 0; k < g.size(); ++k) {
      const auto p = cartesian(node_point(g, k));
      const double e = std::hypot(p[0] - c[0], p[1] - c[1]);
      if (e < best) best = e, arg = k;
    }
    out.push_back(arg);
  }
  return out;
}

}  // namespace

bool EstimateReport::pass() const {
  return std::all_of(records.begin(), records.end(),
                     [](const EstimateRecord& r) { return !r.gating || r.pass.value_or(false); });
}

nlohmann::json EstimateReport::to_json() const {
  nlohmann::json recs = nlohmann::json::array();
  for (const auto& r : records) {
    nlohmann::json j;
    j["id"] = r.id;
    j["locus"] = r.locus;
    j["bound"] = r.bound;
    j["observed"] = r.observed;
    j["margin"] = r.margin;
    j["pass"] = r.pass ? nlohmann::json(*r.pass) : nlohmann::json(nullptr);
    j["gating"] = r.gating;
    j["details"] = r.details;
    recs.push_back(std::move(j));
  }
  return {{"pass", pass()}, {"records", std::move(recs)}};
}

double value_at(const ScalarField& u, ChartPoint p) {
  return p.r == 0.0 ? pole_value(u) : interpolate(u, p.r, p.theta);
}

std::string locus_of(ChartPoint p) {
  if (p.r == 0.0) return "x0";
  std::ostringstream os;
  os << "r=" << p.r << ",theta=" << p.theta;
  return os.str();
}

std::string locus_of(const PolarGrid& g, int node) {
  std::ostringstream os;
  os << "node " << node << " (ring " << g.ring(node) << ", spoke " << g.spoke(node) << ", "
     << locus_of(node_point(g, node)) << ")";
  return os.str();
}

std::vector<EstimateRecord> check_zero_order(const AdmissibleField& u, const MetricChart& m,
                                             double b, const AuditSlacks& s) {
  const auto& v = u.u.values;
  const int lo = static_cast<int>(std::min_element(v.begin(), v.end()) - v.begin());
  const int hi = static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
  const double slack = 10.0 * s.solver_tol;
  return {lower_record("zero_order_lower", locus_of(u.u.grid, lo), b, v[lo], slack),
          upper_record("zero_order_upper", locus_of(u.u.grid, hi), 1.0 / (2.0 * m.c1()), v[hi],
                       slack)};
}

EstimateRecord check_first_order(const AdmissibleField& u, const MetricChart& m,
                                 const AuditSlacks& s) {
  int worst = 0;
  for (int k = 1; k < u.u.grid.size(); ++k)
    if (u.hessian.nodes[k].grad_norm2 > u.hessian.nodes[worst].grad_norm2) worst = k;
  const double h = u.u.grid.h();
  const double slack = s.gradient_fd_constant * h * h + 10.0 * s.solver_tol;
  auto r = upper_record("gradient", locus_of(u.u.grid, worst), 2.0 / std::sqrt(m.c1()),
                        std::sqrt(u.hessian.nodes[worst].grad_norm2), slack);
  r.details["h"] = h;
  return r;
}

EstimateRecord check_barrier(const AdmissibleField& u, const MetricChart& m, double b,
                             const AuditSlacks& s) {
  const PolarGrid& g = u.u.grid;
  const auto d = pole_distances(m, g);
  double l_eff = 0.0;
  for (int j = 0; j < g.n_theta(); ++j) l_eff = std::max(l_eff, d[g.index(g.n_r() - 1, j)]);
  const double slope = 2.0 / std::sqrt(m.c1());
  int worst = 0;
  double worst_margin = std::numeric_limits<double>::infinity();
  for (int k = 0; k < g.size(); ++k) {
    const double margin = b + slope * (l_eff - d[k]) - u.u.values[k];
    if (margin < worst_margin) worst_margin = margin, worst = k;
  }
  auto r = upper_record("barrier", locus_of(g, worst), b + slope * (l_eff - d[worst]),
                        u.u.values[worst], 10.0 * s.solver_tol);
  r.details["l_eff"] = l_eff;
  return r;
}

EstimateRecord check_admissibility(const AdmissibleField& u) {
  int worst = 0;
  for (int k = 1; k < u.u.grid.size(); ++k)
    if (u.hessian.nodes[k].lambda_min < u.hessian.nodes[worst].lambda_min) worst = k;
  auto r = lower_record("admissibility", locus_of(u.u.grid, worst), 0.0,
                        u.hessian.nodes[worst].lambda_min, 0.0);
  r.pass = r.margin > 0.0;
  r.details["rhs_min"] = u.rhs_min;
  return r;
}

double comparison_constant(double c2, double r0) {
  const double s = std::sqrt(c2);
  return 2.0 * s / std::tanh(s * r0);
}

double lower_bound_formula(double c1, double c2, double r0) {
  const double A = comparison_constant(c2, r0);
  return std::min({r0 / (2.0 * A), 1.0 / (32.0 * c2), c1 * r0 * r0 / (9.0 * A * A)});
}

void require_ball_inside(const AdmissibleField& u, const MetricChart& m, ChartPoint center,
                         double r0) {
  const PolarGrid& g = u.u.grid;
  const double l = g.ball_radius();
  bool inside;
  if (m.kind() == ChartKind::WarpedPolar) {
    inside = center.r + r0 <= l + 1e-12;
  } else {
    inside = center.r < l;
    if (inside && m.euclidean_lower_bound_factor() * (l - center.r) < r0) {
      std::vector<double> d(g.n_theta());
      parallel_for(d.size(), [&](std::size_t j) {
        d[j] = m.distance(center, {l, g.theta(static_cast<int>(j))});
      });
      inside = *std::min_element(d.begin(), d.end()) >= r0 - 1e-12;
    }
  }
  if (!inside) {
    std::ostringstream os;
    os << "ball of radius " << r0 << " about " << locus_of(center)
       << " is not contained in the solved ball of radius " << l;
    throw std::invalid_argument(os.str());
  }
}

EstimateRecord check_lower_bound(const AdmissibleField& u, const MetricChart& m,
                                 ChartPoint center, double r0) {
  require_ball_inside(u, m, center, r0);
  const double c1 = m.c1();
  const double c2 = m.max_neg_curvature(center, r0);
  const double A = comparison_constant(c2, r0);
  const double bound = lower_bound_formula(c1, c2, r0);
  auto r = lower_record("lower_bound", locus_of(center), bound, value_at(u.u, center), 1e-8);
  r.gating = false;
  r.details["r0"] = r0;
  r.details["c2"] = c2;
  r.details["A"] = A;
  r.details["terms"] = {r0 / (2.0 * A), 1.0 / (32.0 * c2), c1 * r0 * r0 / (9.0 * A * A)};
  r.details["ratio"] = r.observed / bound;
  return r;
}

std::vector<double> distances_within(const MetricChart& m, const PolarGrid& g, ChartPoint center,
                                     double radius) {
  const double s = m.euclidean_lower_bound_factor();
  const auto c = cartesian(center);
  std::vector<double> d(g.size(), kNaN);
  parallel_for(d.size(), [&](std::size_t k) {
    const ChartPoint p = node_point(g, static_cast<int>(k));
    const auto x = cartesian(p);
    if (s * std::hypot(x[0] - c[0], x[1] - c[1]) <= radius) d[k] = m.distance(center, p);
  });
  return d;
}

CutoffAudit build_cutoff(const AdmissibleField& u, const MetricChart& m, ChartPoint center,
                         double r0, const AuditSlacks& s) {
  require_ball_inside(u, m, center, r0);
  const PolarGrid& g = u.u.grid;
  CutoffAudit out;
  CutoffFunction& cf = out.cutoff;
  cf.center = center;
  cf.r0 = r0;
  cf.c2 = m.max_neg_curvature(center, r0);
  cf.A = comparison_constant(cf.c2, r0);
  cf.rho_max = r0 / cf.A;
  cf.u_center = value_at(u.u, center);
  cf.hypothesis = cf.u_center < cf.rho_max;
  if (!cf.hypothesis) {
    auto r = marker("cutoff", center, r0, "hypothesis u(center) < r0/A fails");
    r.bound = cf.rho_max;
    r.observed = cf.u_center;
    out.records.push_back(std::move(r));
    return out;
  }

  // Q lies in B(center, r0); its stencil neighbours are filled in a second pass.
  cf.dist = distances_within(m, g, center, r0);
  const double scale = cf.A * r0;
  auto phi_at = [&](int k) {
    return cf.rho_max - u.u.values[k] - cf.dist[k] * cf.dist[k] / scale;
  };
  cf.phi.assign(g.size(), kNaN);
  cf.in_support.assign(g.size(), 0);
  for (int k = 0; k < g.size(); ++k) {
    if (std::isnan(cf.dist[k])) continue;
    cf.phi[k] = phi_at(k);
    cf.in_support[k] = cf.phi[k] > 0.0;
  }
  const auto st = build_stencils(g);
  std::vector<int> missing;
  for (int k = 0; k < g.size(); ++k) {
    if (!cf.in_support[k]) continue;
    for (const auto* t : {&st[k].r, &st[k].t, &st[k].rr, &st[k].rt, &st[k].tt})
      for (int e = 0; e < t->n; ++e)
        for (int n : {t->e[e].a, t->e[e].b})
          if (std::isnan(cf.dist[n])) missing.push_back(n);
  }
  std::sort(missing.begin(), missing.end());
  missing.erase(std::unique(missing.begin(), missing.end()), missing.end());
  parallel_for(missing.size(), [&](std::size_t q) {
    cf.dist[missing[q]] = m.distance(center, node_point(g, missing[q]));
  });
  for (int k : missing) cf.phi[k] = phi_at(k);

  const auto geo = sample_geometry(g, m);
  const double C1 = m.c1();
  const double gap = cf.rho_max - cf.u_center;
  const double rho_small = std::sqrt(C1) * gap / 6.0;
  int max_phi = -1, min_small = -1, max_grad = -1, min_eig = -1;
  double v_max_phi = -std::numeric_limits<double>::infinity();
  double v_min_small = std::numeric_limits<double>::infinity();
  double v_max_grad = 0.0;
  double v_min_eig = std::numeric_limits<double>::infinity();
  for (int k = 0; k < g.size(); ++k) {
    if (!std::isnan(cf.dist[k]) && cf.dist[k] <= rho_small && cf.phi[k] < v_min_small)
      v_min_small = cf.phi[k], min_small = k;
    if (!cf.in_support[k]) continue;
    if (cf.phi[k] > v_max_phi) v_max_phi = cf.phi[k], max_phi = k;
    const Partials pp = apply_stencil(st[k], cf.phi, k);
    const Partials pu = apply_stencil(st[k], u.u.values, k);
    const HessianNode hp = hessian_at(pp, geo[k]);
    if (hp.grad_norm2 > v_max_grad * v_max_grad) v_max_grad = std::sqrt(hp.grad_norm2), max_grad = k;
    // g^{-1}(Hess phi + Hess u + g): Hessians are linear in the partials.
    Partials sum;
    sum.u_r = pp.u_r + pu.u_r;
    sum.u_t = pp.u_t + pu.u_t;
    sum.u_rr = pp.u_rr + pu.u_rr;
    sum.u_rt = pp.u_rt + pu.u_rt;
    sum.u_tt = pp.u_tt + pu.u_tt;
    const double eig = hessian_at(sum, geo[k]).lambda_min;
    if (eig < v_min_eig) v_min_eig = eig, min_eig = k;
  }

  auto locus = [&](int k) { return k < 0 ? std::string("empty") : locus_of(g, k); };
  auto finish = [&](EstimateRecord r) {
    r.gating = false;
    r.details["center"] = locus_of(center);
    r.details["r0"] = r0;
    r.details["c2"] = cf.c2;
    r.details["A"] = cf.A;
    if (std::isnan(r.observed) || std::isinf(r.observed)) {
      r.observed = kNaN;
      r.margin = kNaN;
      r.pass = true;
      r.details["empty"] = true;
    }
    out.records.push_back(std::move(r));
  };
  finish(upper_record("cutoff_i_upper", locus(max_phi), cf.rho_max,
                      max_phi < 0 ? kNaN : v_max_phi, s.cutoff_values));
  auto small = lower_record("cutoff_i_lower", locus(min_small), 0.5 * gap,
                            min_small < 0 ? kNaN : v_min_small, s.cutoff_values);
  small.details["radius"] = rho_small;
  finish(std::move(small));
  finish(upper_record("cutoff_ii", locus(max_grad), 3.0 / std::sqrt(C1),
                      max_grad < 0 ? kNaN : v_max_grad, s.cutoff_values));
  finish(lower_record("cutoff_iii", locus(min_eig), 0.0, min_eig < 0 ? kNaN : v_min_eig,
                      s.cutoff_hessian));
  return out;
}

SecondOrderConstants second_order_constants(const MetricChart& m, ChartPoint center, double r0,
                                            double c_cal) {
  SecondOrderConstants k;
  k.c2 = m.max_neg_curvature(center, r0);
  k.c2_prime = std::max(k.c2, m.max_neg_curvature(center, r0 + 1.0));
  const auto d = m.max_log_curvature_derivatives(center, r0);
  k.c3 = d.gradient_norm;
  k.c4 = d.hessian_norm;
  k.c_cal = c_cal;
  return k;
}

EstimateRecord check_second_order(const AdmissibleField& u, const MetricChart& m,
                                  ChartPoint center, double r0, const SecondOrderConstants& k) {
  require_ball_inside(u, m, center, r0);
  const double A = comparison_constant(k.c2, r0);
  const double rho_max = r0 / A;
  const double u_c = value_at(u.u, center);
  if (!(u_c < rho_max)) {
    auto r = marker("second_order", center, r0, "hypothesis u(center) < r0/A fails");
    r.bound = rho_max;
    r.observed = u_c;
    return r;
  }
  const double rho_small = std::sqrt(m.c1()) * (rho_max - u_c) / 6.0;
  const PolarGrid& g = u.u.grid;
  const auto ball = nodes_in_ball(distances_within(m, g, center, rho_small), g, center, rho_small);
  int worst = ball.front();
  for (int n : ball)
    if (u.hessian.nodes[n].lambda_max > u.hessian.nodes[worst].lambda_max) worst = n;
  const double sc2 = std::sqrt(k.c2);
  const double bound = std::exp(k.c_cal * k.c2_prime) / (rho_max - u_c) *
                       (1.0 + std::sqrt(k.c4) * r0 / sc2 +
                        k.c2_prime * (1.0 + r0 / sc2 + k.c3 * r0 / sc2));
  auto r = upper_record("second_order", locus_of(g, worst), bound,
                        u.hessian.nodes[worst].lambda_max, 0.0);
  r.gating = false;
  r.details["center"] = locus_of(center);
  r.details["r0"] = r0;
  r.details["radius"] = rho_small;
  r.details["nodes"] = ball.size();
  r.details["ratio"] = r.observed / bound;
  r.details["c2"] = k.c2;
  r.details["c2_prime"] = k.c2_prime;
  r.details["c3"] = k.c3;
  r.details["c4"] = k.c4;
  r.details["c_cal"] = k.c_cal;
  return r;
}

EstimateReport audit_solution(const AdmissibleField& u, const MetricChart& m, double b,
                              const AuditPlan& plan) {
  EstimateReport rep;
  for (auto& r : check_zero_order(u, m, b, plan.slacks)) rep.records.push_back(std::move(r));
  rep.records.push_back(check_first_order(u, m, plan.slacks));
  rep.records.push_back(check_barrier(u, m, b, plan.slacks));
  rep.records.push_back(check_admissibility(u));

  std::vector<ChartPoint> centers{{0.0, 0.0}};
  centers.insert(centers.end(), plan.probes.begin(), plan.probes.end());
  for (std::size_t c = 0; c < centers.size(); ++c) {
    const ChartPoint x = centers[c];
    for (double r0 : plan.r0_list) {
      try {
        require_ball_inside(u, m, x, r0);
      } catch (const std::invalid_argument& e) {
        rep.records.push_back(marker("lower_bound", x, r0, e.what()));
        continue;
      }
      rep.records.push_back(check_lower_bound(u, m, x, r0));
      if (c == 0) continue;
      for (auto& r : build_cutoff(u, m, x, r0, plan.slacks).records)
        rep.records.push_back(std::move(r));
      rep.records.push_back(
          check_second_order(u, m, x, r0, second_order_constants(m, x, r0, plan.c_cal)));
    }
  }
  return rep;
}

}  // namespace lorentz
