// Acceptance run: one PASS/FAIL line per criterion, nonzero exit when any fails.
// Usage: acceptance [path to lorentz_embed]

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "lorentz/cli.hpp"
#include "lorentz/embed.hpp"
#include "lorentz/estimates.hpp"
#include "lorentz/exhaustion.hpp"
#include "oracles/radial_bvp.hpp"

using namespace lorentz;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  if (!pass) ++failures;
  std::cout << (pass ? "PASS" : "FAIL") << "  [" << std::setw(2) << id << "] " << name << ": "
            << detail << std::endl;
}

std::string sci(double v) {
  std::ostringstream os;
  os << std::scientific << std::setprecision(3) << v;
  return os.str();
}

double pinched_k(double r) { return -(1.0 + r * r / (1.0 + r * r)); }

struct Run {
  std::string name;
  MetricPtr metric;
  AdmissibleField field;
  double b = 0.0;
};

Run solve(const std::string& name, MetricPtr m, int n_r, int n_theta, double l) {
  const auto p = make_dirichlet_problem(m, PolarGrid(n_r, n_theta, l));
  return {name, m, solve_dirichlet(p), p.boundary_value};
}

double oracle_error(const Run& run) {
  const PolarGrid& g = run.field.u.grid;
  std::vector<double> radii(g.n_r());
  for (int i = 0; i < g.n_r(); ++i) radii[i] = g.r(i);
  const auto sol = oracle::solve_radial_bvp(pinched_k, g.ball_radius(), run.b, radii);
  double worst = 0.0;
  for (int i = 0; i < g.n_r(); ++i)
    for (int j = 0; j < g.n_theta(); ++j)
      worst = std::max(worst, std::abs(run.field.u(i, j) - sol.u[i]) / std::abs(sol.u[i]));
  return worst;
}

struct Embedded {
  std::string name;
  bool model = false;
  ConformalHyperbolicMetric gbar;
  DevelopingMap dev;
  EmbeddingAudit audit;
};

Embedded embed(const Run& run, bool model) {
  Embedded e;
  e.name = run.name;
  e.model = model;
  e.gbar = conformal_metric(run.field, *run.metric);
  e.dev = develop(e.gbar);
  const EmbeddingMap map = assemble_embedding(run.field, *run.metric, e.dev);
  e.audit = verify_embedding(map, *run.metric);
  e.dev.frames.clear();
  e.dev.points.clear();
  return e;
}

// Independent evaluation of the three-term lower bound.
double lower_bound_by_hand(double c1, double c2, double r0) {
  const double A = 2.0 * std::sqrt(c2) / std::tanh(std::sqrt(c2) * r0);
  return std::min({r0 / (2.0 * A), 1.0 / (32.0 * c2), c1 * r0 * r0 / (9.0 * A * A)});
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

}  // namespace

int main(int argc, char** argv) {
  std::cout << std::unitbuf;
  const auto pinched = make_radial_pinched(1.0, 1.0, 12.0);

  // 1. Exact model recovery.
  std::vector<Run> models;
  {
    double err = 0.0;
    int iters = 0;
    for (double C : {0.25, 1.0, 4.0})
      for (double l : {2.0, 3.0, 4.0, 5.0}) {
        Run r = solve("hyperbolic C=" + sci(C) + " l=" + sci(l), make_hyperbolic(C), 32, 32, l);
        for (double v : r.field.u.values) err = std::max(err, std::abs(v - 1.0 / (2.0 * C)));
        iters = std::max(iters, r.field.iterations);
        models.push_back(std::move(r));
      }
    report(1, "exact model recovery", err <= 1e-10 && iters <= 2,
           "max |u - 1/(2C)| " + sci(err) + " <= 1e-10, max Newton iterations " +
               std::to_string(iters) + " <= 2");
  }

  // 2. Radial oracle equivalence.
  const Run p64 = solve("pinched 64x64 l=3", pinched, 64, 64, 3.0);
  const Run p128 = solve("pinched 128x128 l=3", pinched, 128, 128, 3.0);
  {
    const double e64 = oracle_error(p64), e128 = oracle_error(p128);
    const double ratio = e64 / e128;
    report(2, "radial oracle equivalence", e64 <= 1e-3 && ratio >= 3.5 && ratio <= 4.5,
           "relative error 64x64 " + sci(e64) + " <= 1e-3, 128x128 " + sci(e128) +
               ", ratio " + sci(ratio) + " in [3.5, 4.5]");
  }

  // Pinched exhaustion iterates, also used for criterion 9.
  auto schedule = [](bool blend) {
    ExhaustionSchedule s;
    s.radii = {2, 3, 4, 5, 6};
    for (double l : s.radii) s.resolutions.push_back({static_cast<int>(16 * l), 32});
    s.l_obs = 1.0;
    s.tol = 1e-12;
    s.boundary_blend = blend;
    return s;
  };
  const ExhaustionResult ex = run_exhaustion(schedule(false), pinched);
  const ExhaustionResult ex_blend = run_exhaustion(schedule(true), pinched);

  std::vector<const Run*> runs;
  for (const auto& r : models) runs.push_back(&r);
  runs.push_back(&p64);
  runs.push_back(&p128);
  std::vector<Run> iterates;
  for (const auto& s : ex.steps)
    iterates.push_back({"pinched exhaustion l=" + sci(s.l), pinched, s.field, s.boundary_value});
  for (const auto& r : iterates) runs.push_back(&r);
  const Run p4 = solve("pinched 64x64 l=4", pinched, 64, 64, 4.0);
  runs.push_back(&p4);

  // 3. A priori estimate suite.
  {
    AuditSlacks slacks;
    double zero = 1e300, grad = 1e300, barrier = 1e300, eig = 1e300, cutoff = 1e300;
    bool ok = true;
    std::string worst;
    for (const Run* r : runs) {
      const MetricChart& m = *r->metric;
      const double h = r->field.u.grid.h();
      for (const auto& rec : check_zero_order(r->field, m, r->b, slacks)) {
        zero = std::min(zero, rec.margin);
        if (rec.margin < -1e-8) ok = false, worst = r->name + " " + rec.id;
      }
      const auto g = check_first_order(r->field, m, slacks);
      grad = std::min(grad, g.margin);
      if (g.margin < -(slacks.gradient_fd_constant * h * h + 1e-8)) ok = false, worst = r->name + " gradient";
      const auto bar = check_barrier(r->field, m, r->b, slacks);
      barrier = std::min(barrier, bar.margin);
      if (bar.margin < -1e-8) ok = false, worst = r->name + " barrier";
      const auto adm = check_admissibility(r->field);
      eig = std::min(eig, adm.observed);
      if (!(adm.observed > 0.0)) ok = false, worst = r->name + " admissibility";
    }
    // Cutoff items at three interior node probes with r0 = 1.
    const PolarGrid& g = p4.field.u.grid;
    int items = 0;
    for (auto [i, j] : {std::pair{15, 3}, std::pair{23, 20}, std::pair{31, 41}}) {
      const auto a = build_cutoff(p4.field, *pinched, {g.r(i), g.theta(j)}, 1.0, slacks);
      if (!a.cutoff.hypothesis) ok = false, worst = "cutoff hypothesis";
      for (const auto& rec : a.records) {
        ++items;
        cutoff = std::min(cutoff, rec.margin);
        if (!rec.pass.value_or(false)) ok = false, worst = "cutoff " + rec.id;
      }
    }
    report(3, "a priori estimate suite", ok && items >= 9,
           std::to_string(runs.size()) + " runs: zero-order margin " + sci(zero) +
               ", gradient margin " + sci(grad) + ", barrier margin " + sci(barrier) +
               ", min eigenvalue " + sci(eig) + ", cutoff items " + std::to_string(items) +
               " min margin " + sci(cutoff) + (ok ? "" : ", worst " + worst));
  }

  // 4. Lower-bound formula audit.
  {
    const double model = lower_bound_by_hand(1.0, 1.0, 1.0);
    // For c1 = c2 = r0 = 1 the third term wins: tanh(1)^2 / 36.
    const double closed = std::pow(std::tanh(1.0), 2) / 36.0;
    bool ok = std::abs(model - closed) <= 1e-15 && std::abs(lower_bound_formula(1, 1, 1) - model) <= 1e-15;
    double ratio = 1e300, recompute = 0.0;
    int audited = 0;
    for (const Run* r : runs)
      for (double r0 : {1.0, 2.0}) {
        if (r->field.u.grid.ball_radius() < r0 + 1e-12) continue;
        const auto rec = check_lower_bound(r->field, *r->metric, {0.0, 0.0}, r0);
        const double c2 = rec.details["c2"].get<double>();
        recompute = std::max(recompute, std::abs(rec.bound - lower_bound_by_hand(r->metric->c1(), c2, r0)));
        ratio = std::min(ratio, rec.observed / rec.bound);
        ok = ok && rec.bound <= rec.observed;
        ++audited;
      }
    ok = ok && recompute <= 1e-14;
    report(4, "lower-bound formula audit", ok,
           "model bound " + sci(model) + " = tanh(1)^2/36, " + std::to_string(audited) +
               " evaluations, min u(x0)/bound " + sci(ratio) + ", recomputation gap " + sci(recompute));
  }

  // Embeddings shared by 5 to 8.
  std::vector<Embedded> emb;
  for (double C : {0.25, 1.0, 4.0}) emb.push_back(embed(solve("hyperbolic C=" + sci(C), make_hyperbolic(C), 48, 48, 2.0), true));
  emb.push_back(embed(solve("poincare", make_poincare(1.0), 32, 32, 0.6), true));
  emb.push_back(embed(p64, false));
  emb.push_back(embed(p128, false));
  const Embedded& e64 = emb[emb.size() - 2];
  const Embedded& e128 = emb.back();

  // 5. Conformal-curvature identity.
  {
    double model = 0.0;
    for (const auto& e : emb)
      if (e.model) model = std::max(model, e.gbar.max_curvature_defect);
    const double d64 = e64.gbar.max_curvature_defect, d128 = e128.gbar.max_curvature_defect;
    const double ratio = d64 / d128;
    report(5, "conformal-curvature identity",
           d128 <= 1e-2 && model <= 1e-6 && ratio >= 3.5 && ratio <= 4.5,
           "pinched 128x128 max |K + 1| " + sci(d128) + " <= 1e-2, models " + sci(model) +
               " <= 1e-6, refinement ratio " + sci(ratio) + " in [3.5, 4.5]");
  }

  // 6. Embedding fidelity.
  {
    double pull_model = 0.0, pull_pinched = 0.0, support = 0.0, hol_model = 0.0, hol_pinched = 0.0;
    for (const auto& e : emb) {
      (e.model ? pull_model : pull_pinched) =
          std::max(e.model ? pull_model : pull_pinched, e.audit.pullback_error.value);
      (e.model ? hol_model : hol_pinched) =
          std::max(e.model ? hol_model : hol_pinched, e.dev.holonomy_sum);
      support = std::max(support, e.audit.support_residual.value);
    }
    const bool ok = pull_pinched <= 1e-2 && pull_model <= 1e-6 && support <= 1e-6 &&
                    hol_model <= 1e-5 && hol_pinched <= 1e-5;
    report(6, "embedding fidelity", ok,
           "pullback pinched " + sci(pull_pinched) + " <= 1e-2, models " + sci(pull_model) +
               " <= 1e-6; holonomy models " + sci(hol_model) + ", pinched " + sci(hol_pinched) +
               " (128x128 " + sci(e128.dev.holonomy_sum) + ", per cell " + sci(e128.dev.holonomy_max) +
               ") <= 1e-5; support residual " + sci(support) + " <= 1e-6");
  }

  // 7. Pinching.
  {
    double margin = 1e300, saturation = 0.0;
    for (const auto& e : emb) {
      margin = std::min({margin, e.audit.margin_upper.value, e.audit.margin_light.value,
                         e.audit.margin_lower.value});
      if (e.model && e.name.rfind("hyperbolic", 0) == 0)
        saturation = std::max({saturation, e.audit.saturation_upper.value, e.audit.saturation_lower.value});
    }
    report(7, "pinching", margin >= -1e-6 && saturation <= 1e-4,
           "min margin over " + std::to_string(emb.size()) + " graphs " + sci(margin) +
               " >= -1e-6, constant-curvature saturation " + sci(saturation) + " <= 1e-4");
  }

  // 8. Extrinsic bounds.
  {
    const double A64 = std::sqrt(e64.audit.second_form.value);
    const double A128 = std::sqrt(e128.audit.second_form.value);
    const double change = std::abs(A64 - A128) / A128;
    const double gauss = e128.audit.gauss_residual.value, codazzi = e128.audit.codazzi_residual.value;
    report(8, "extrinsic bounds",
           std::isfinite(A128) && change <= 0.02 && gauss <= 1e-2 && codazzi <= 1e-2,
           "max |A| " + sci(A64) + " -> " + sci(A128) + ", change " + sci(change) +
               " <= 2e-2; Gauss " + sci(gauss) + " <= 1e-2, Codazzi " + sci(codazzi) + " <= 1e-2");
  }

  // 9. Uniqueness proxy.
  {
    double d = 0.0;
    for (std::size_t k = 0; k < ex.limit.values.size(); ++k)
      d = std::max(d, std::abs(ex.limit.values[k] - ex_blend.limit.values[k]));
    report(9, "uniqueness proxy", d <= 5e-4,
           "max |u - u'| on B(x0, 1) at l = 6 " + sci(d) + " <= 5e-4 (delta_last " +
               sci(ex.table.back().delta) + ")");
  }

  // 10. Equivariance proxy.
  {
    const auto f = solve("pinched 32x32 l=2", pinched, 32, 32, 2.0);
    const double err = rotation_equivariance_error(f.field, *pinched);
    report(10, "equivariance proxy", err <= 1e-6, "max |X' - R X| " + sci(err) + " <= 1e-6");
  }

  // 11. Determinism across two processes.
  {
    const fs::path root = fs::temp_directory_path() / "lorentz_acceptance_determinism";
    fs::remove_all(root);
    fs::create_directories(root);
    const fs::path cfg = root / "config.json";
    std::ofstream(cfg) << R"({
      "schema_version": 1,
      "metric": {"family": "radial_pinched", "params": {"k0": 1, "amplitude": 1}},
      "grid": {"resolutions": [{"n_r": 32, "n_theta": 32}, {"n_r": 48, "n_theta": 32},
                               {"n_r": 64, "n_theta": 32}]},
      "exhaustion": {"radii": [2, 3, 4], "l_obs": 1},
      "audit": {"r0": [1], "probes": [{"r": 2, "theta": 0.5}]}
    })";
    const std::string exe = argc > 1 ? argv[1] : "lorentz_embed";
    bool ok = true;
    for (const char* name : {"a", "b"}) {
      const std::string cmd = "\"" + exe + "\" all --trace --config \"" + cfg.string() +
                              "\" --out \"" + (root / name).string() + "\" 2>/dev/null";
      ok = ok && std::system(cmd.c_str()) == 0;
    }
    int compared = 0, differing = 0;
    if (ok)
      for (const auto& entry : fs::directory_iterator(root / "a")) {
        const std::string name = entry.path().filename().string();
        if (name == "metadata.json" || name == ".lock") continue;
        ++compared;
        if (slurp(entry.path()) != slurp(root / "b" / name)) ++differing;
      }
    report(11, "determinism", ok && compared >= 10 && differing == 0,
           std::string(ok ? "" : "CLI run failed; ") + std::to_string(compared) +
               " CSV/JSON/OBJ artifacts compared, " + std::to_string(differing) + " differ");
  }

  std::cout << (failures == 0 ? "all criteria pass" : std::to_string(failures) + " criteria fail")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
