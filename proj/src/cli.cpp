#include "lorentz/cli.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include "lorentz/parallel.hpp"

namespace lorentz {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Schema helpers. Every accessor names the full field path in its error.

void reject_unknown(const json& obj, const std::string& path, std::set<std::string> allowed) {
  for (const auto& [key, value] : obj.items())
    if (!allowed.count(key)) throw ConfigError("unknown field " + path + key);
}

const json& object_at(const json& parent, const std::string& path, const std::string& key,
                      bool required) {
  static const json empty = json::object();
  if (!parent.contains(key)) {
    if (required) throw ConfigError("missing field " + path + key);
    return empty;
  }
  const json& v = parent.at(key);
  if (!v.is_object()) throw ConfigError(path + key + " must be an object");
  return v;
}

double number(const json& obj, const std::string& path, const std::string& key, double fallback,
              bool positive, bool required = false) {
  if (!obj.contains(key)) {
    if (required) throw ConfigError("missing field " + path + key);
    return fallback;
  }
  const json& v = obj.at(key);
  if (!v.is_number()) throw ConfigError(path + key + " must be a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw ConfigError(path + key + " must be finite");
  if (positive && !(x > 0.0)) throw ConfigError(path + key + " must be positive");
  return x;
}

int integer(const json& obj, const std::string& path, const std::string& key, int fallback,
            int minimum, bool required = false) {
  if (!obj.contains(key)) {
    if (required) throw ConfigError("missing field " + path + key);
    return fallback;
  }
  const json& v = obj.at(key);
  if (!v.is_number_integer()) throw ConfigError(path + key + " must be an integer");
  const int x = v.get<int>();
  if (x < minimum) throw ConfigError(path + key + " must be at least " + std::to_string(minimum));
  return x;
}

bool boolean(const json& obj, const std::string& path, const std::string& key, bool fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj.at(key).is_boolean()) throw ConfigError(path + key + " must be a boolean");
  return obj.at(key).get<bool>();
}

std::vector<double> positive_list(const json& obj, const std::string& path, const std::string& key,
                                  std::vector<double> fallback, bool required) {
  if (!obj.contains(key)) {
    if (required) throw ConfigError("missing field " + path + key);
    return fallback;
  }
  const json& v = obj.at(key);
  if (!v.is_array() || v.empty()) throw ConfigError(path + key + " must be a nonempty array");
  std::vector<double> out;
  for (std::size_t k = 0; k < v.size(); ++k) {
    const std::string name = path + key + "[" + std::to_string(k) + "]";
    if (!v[k].is_number()) throw ConfigError(name + " must be a number");
    const double x = v[k].get<double>();
    if (!(x > 0.0) || !std::isfinite(x)) throw ConfigError(name + " must be positive");
    out.push_back(x);
  }
  return out;
}

GridResolution resolution(const json& obj, const std::string& path, GridResolution fallback) {
  reject_unknown(obj, path, {"n_r", "n_theta"});
  GridResolution r;
  r.n_r = integer(obj, path, "n_r", fallback.n_r, 4, fallback.n_r == 0);
  r.n_theta = integer(obj, path, "n_theta", fallback.n_theta, 8, fallback.n_theta == 0);
  if (r.n_theta % 2 != 0) throw ConfigError(path + "n_theta must be even");
  return r;
}

json resolution_json(const GridResolution& r) { return {{"n_r", r.n_r}, {"n_theta", r.n_theta}}; }

// ---------------------------------------------------------------------------
// Artifacts.

void write_json(const fs::path& p, const json& j) {
  std::ofstream os(p);
  if (!os) throw ArtifactError("cannot write " + p.string());
  os << j.dump(2) << '\n';
}

json read_json(const fs::path& p) {
  std::ifstream is(p);
  if (!is) throw ArtifactError("missing artifact " + p.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw ArtifactError("corrupt artifact " + p.string() + ": " + e.what());
  }
}

std::string field_name(std::size_t k) { return "u_l" + std::to_string(k) + ".csv"; }

/// Exclusive advisory lock on DIR/.lock, held for the lifetime of the object.
class DirectoryLock {
 public:
  explicit DirectoryLock(const fs::path& dir) {
    fs::create_directories(dir);
    const std::string p = (dir / ".lock").string();
    fd_ = ::open(p.c_str(), O_CREAT | O_RDWR, 0644);
    if (fd_ < 0) throw ArtifactError("cannot open lock file " + p);
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
      ::close(fd_);
      throw ArtifactError("run directory is locked by another process: " + dir.string());
    }
  }
  ~DirectoryLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  int fd_ = -1;
};

/// Wall-clock data lives only in metadata.json, one entry per command.
void record_metadata(const fs::path& dir, const std::string& command,
                     std::chrono::system_clock::time_point start, int exit_code) {
  json meta = json::object();
  const fs::path p = dir / "metadata.json";
  if (fs::exists(p)) {
    try {
      meta = read_json(p);
    } catch (const ArtifactError&) {
      meta = json::object();
    }
  }
  const auto end = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(start);
  std::ostringstream stamp;
  stamp << std::put_time(std::gmtime(&t), "%Y-%m-%dT%H:%M:%SZ");
  meta[command] = {{"started_utc", stamp.str()},
                   {"wall_seconds", std::chrono::duration<double>(end - start).count()},
                   {"workers", worker_count()},
                   {"exit", exit_code}};
  write_json(p, meta);
}

PolarGrid step_grid(const RunConfig& c, std::size_t k) {
  return PolarGrid(c.schedule.resolutions[k].n_r, c.schedule.resolutions[k].n_theta,
                   c.schedule.radii[k], c.schedule.theta0);
}

struct SolvedRun {
  RunConfig config;
  MetricPtr metric;
  json solve;
};

SolvedRun load_run(const fs::path& dir) {
  SolvedRun r;
  const json cfg = read_json(dir / "config.json");
  try {
    r.config = parse_config(cfg);
  } catch (const ConfigError& e) {
    throw ArtifactError(std::string("config.json in the run directory is invalid: ") + e.what());
  }
  r.metric = make_metric(r.config.metric);
  r.solve = read_json(dir / "solve.json");
  if (!r.solve.contains("steps") || !r.solve["steps"].is_array() || r.solve["steps"].empty())
    throw ArtifactError("solve.json lists no solved radii");
  if (!r.solve.value("solved", false)) throw ArtifactError("the solve did not converge");
  if (r.solve["steps"].size() > r.config.schedule.radii.size())
    throw ArtifactError("solve.json does not match config.json");
  return r;
}

ScalarField read_step(const fs::path& dir, const SolvedRun& r, std::size_t k) {
  try {
    return read_field_csv((dir / field_name(k)).string(), step_grid(r.config, k),
                          coordinates_for(*r.metric));
  } catch (const GridError& e) {
    throw ArtifactError(field_name(k) + ": " + e.what());
  } catch (const std::ios_base::failure& e) {
    throw ArtifactError(field_name(k) + ": " + e.what());
  }
}

void write_embedding_csv(const fs::path& p, const EmbeddingMap& e, FieldCoordinates c) {
  std::ofstream os(p);
  if (!os) throw ArtifactError("cannot write " + p.string());
  const PolarGrid& g = e.grid;
  os << (c == FieldCoordinates::Polar ? "r,theta" : "x,y")
     << ",x1,x2,x3,n1,n2,n3,h_rr,h_rt,h_tt\n"
     << std::setprecision(17);
  for (int k = 0; k < g.size(); ++k) {
    const double r = g.r(g.ring(k)), t = g.theta(g.spoke(k));
    if (c == FieldCoordinates::Polar)
      os << r << ',' << t;
    else
      os << r * std::cos(t) << ',' << r * std::sin(t);
    const auto& X = e.X[k];
    const auto& n = e.normal[k];
    os << ',' << X.x() << ',' << X.y() << ',' << X.z() << ',' << n.x() << ',' << n.y() << ','
       << n.z() << ',' << e.h[k].rr << ',' << e.h[k].rt << ',' << e.h[k].tt << '\n';
  }
}

template <class F>
int guarded(std::ostream& log, F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const ArtifactError& e) {
    log << "artifact error: " << e.what() << '\n';
    return kExitInvalid;
  }
}

}  // namespace

// ---------------------------------------------------------------------------

MetricPtr make_metric(const MetricConfig& c) {
  const json& p = c.params;
  const std::string path = "metric.params.";
  if (c.family == "hyperbolic") {
    reject_unknown(p, path, {"scale", "r_max"});
    return make_hyperbolic(number(p, path, "scale", 1.0, true), number(p, path, "r_max", 12.0, true));
  }
  if (c.family == "radial_pinched") {
    reject_unknown(p, path, {"k0", "amplitude", "r_max"});
    const double amplitude = number(p, path, "amplitude", 1.0, false);
    if (amplitude < 0.0) throw ConfigError(path + "amplitude must be nonnegative");
    return make_radial_pinched(number(p, path, "k0", 1.0, true), amplitude,
                               number(p, path, "r_max", 12.0, true));
  }
  if (c.family == "poincare" || c.family == "poincare_perturbed") {
    const bool perturbed = c.family == "poincare_perturbed";
    if (perturbed)
      reject_unknown(p, path, {"epsilon", "domain_radius"});
    else
      reject_unknown(p, path, {"scale", "domain_radius"});
    const double radius = number(p, path, "domain_radius", 0.9, true);
    if (!(radius < 1.0)) throw ConfigError(path + "domain_radius must be below 1");
    if (perturbed) return make_poincare_perturbed(number(p, path, "epsilon", 0.0, false, true), radius);
    return make_poincare(number(p, path, "scale", 1.0, true), radius);
  }
  throw ConfigError("metric.family must be one of hyperbolic, radial_pinched, poincare, "
                    "poincare_perturbed");
}

RunConfig parse_config(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  reject_unknown(j, "", {"schema_version", "metric", "grid", "exhaustion", "solver", "audit",
                         "embed", "output"});
  if (!j.contains("schema_version")) throw ConfigError("missing field schema_version");
  if (!j["schema_version"].is_number_integer() || j["schema_version"].get<int>() != kSchemaVersion)
    throw ConfigError("schema_version must be " + std::to_string(kSchemaVersion));
  RunConfig c;

  const json& mj = object_at(j, "", "metric", true);
  reject_unknown(mj, "metric.", {"family", "params"});
  if (!mj.contains("family") || !mj["family"].is_string())
    throw ConfigError("metric.family must be a string");
  c.metric.family = mj["family"].get<std::string>();
  c.metric.params = object_at(mj, "metric.", "params", false);
  MetricPtr metric;
  try {
    metric = make_metric(c.metric);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("metric.params: ") + e.what());
  }

  const json& sj = object_at(j, "", "solver", false);
  reject_unknown(sj, "solver.", {"tol", "max_iter", "kappa", "min_step", "linear_tol"});
  auto& so = c.schedule.solver;
  so.tol = number(sj, "solver.", "tol", so.tol, true);
  so.max_iter = integer(sj, "solver.", "max_iter", so.max_iter, 1);
  so.kappa = number(sj, "solver.", "kappa", so.kappa, true);
  if (!(so.kappa < 1.0)) throw ConfigError("solver.kappa must be below 1");
  so.min_step = number(sj, "solver.", "min_step", so.min_step, true);
  so.linear_tol = number(sj, "solver.", "linear_tol", so.linear_tol, true);

  const json& ej = object_at(j, "", "exhaustion", true);
  reject_unknown(ej, "exhaustion.", {"radii", "l_obs", "tol", "boundary_blend"});
  c.schedule.radii = positive_list(ej, "exhaustion.", "radii", {}, true);
  c.schedule.l_obs = number(ej, "exhaustion.", "l_obs", 1.0, true);
  c.schedule.tol = number(ej, "exhaustion.", "tol", 1e-5, true);
  c.schedule.boundary_blend = boolean(ej, "exhaustion.", "boundary_blend", false);

  const json& gj = object_at(j, "", "grid", true);
  reject_unknown(gj, "grid.", {"n_r", "n_theta", "resolutions", "reference", "theta0"});
  if (gj.contains("resolutions")) {
    if (gj.contains("n_r") || gj.contains("n_theta"))
      throw ConfigError("grid.resolutions excludes grid.n_r and grid.n_theta");
    const json& rs = gj["resolutions"];
    if (!rs.is_array()) throw ConfigError("grid.resolutions must be an array");
    for (std::size_t k = 0; k < rs.size(); ++k) {
      const std::string path = "grid.resolutions[" + std::to_string(k) + "].";
      if (!rs[k].is_object()) throw ConfigError(path + " must be an object");
      c.schedule.resolutions.push_back(resolution(rs[k], path, {}));
    }
  } else {
    const GridResolution r{integer(gj, "grid.", "n_r", 0, 4, true),
                           integer(gj, "grid.", "n_theta", 0, 8, true)};
    if (r.n_theta % 2 != 0) throw ConfigError("grid.n_theta must be even");
    c.schedule.resolutions.assign(c.schedule.radii.size(), r);
  }
  c.schedule.reference = resolution(object_at(gj, "grid.", "reference", false), "grid.reference.",
                                    c.schedule.reference);
  c.schedule.theta0 = number(gj, "grid.", "theta0", 0.0, false);
  try {
    validate_schedule(c.schedule, *metric);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }

  const json& aj = object_at(j, "", "audit", false);
  reject_unknown(aj, "audit.", {"r0", "c_cal", "probes", "slacks"});
  c.audit.r0_list = positive_list(aj, "audit.", "r0", c.audit.r0_list, false);
  c.audit.c_cal = number(aj, "audit.", "c_cal", c.audit.c_cal, true);
  if (aj.contains("probes")) {
    const json& ps = aj["probes"];
    if (!ps.is_array()) throw ConfigError("audit.probes must be an array");
    for (std::size_t k = 0; k < ps.size(); ++k) {
      const std::string path = "audit.probes[" + std::to_string(k) + "].";
      if (!ps[k].is_object()) throw ConfigError(path + " must be an object");
      reject_unknown(ps[k], path, {"r", "theta"});
      const double r = number(ps[k], path, "r", 0.0, false, true);
      if (r < 0.0) throw ConfigError(path + "r must be nonnegative");
      c.audit.probes.push_back({r, number(ps[k], path, "theta", 0.0, false, true)});
    }
  }
  const json& slj = object_at(aj, "audit.", "slacks", false);
  reject_unknown(slj, "audit.slacks.",
                 {"solver_tol", "gradient_fd_constant", "cutoff_values", "cutoff_hessian"});
  auto& sl = c.audit.slacks;
  sl.solver_tol = number(slj, "audit.slacks.", "solver_tol", so.tol, true);
  sl.gradient_fd_constant = number(slj, "audit.slacks.", "gradient_fd_constant", sl.gradient_fd_constant, true);
  sl.cutoff_values = number(slj, "audit.slacks.", "cutoff_values", sl.cutoff_values, true);
  sl.cutoff_hessian = number(slj, "audit.slacks.", "cutoff_hessian", sl.cutoff_hessian, true);

  const json& bj = object_at(j, "", "embed", false);
  reject_unknown(bj, "embed.", {"curvature_check_tol", "substeps", "reproject_every",
                                "pullback_tol", "pinching_slack"});
  c.develop.curvature_check_tol = number(bj, "embed.", "curvature_check_tol", c.develop.curvature_check_tol, true);
  c.develop.substeps = integer(bj, "embed.", "substeps", c.develop.substeps, 1);
  c.develop.reproject_every = integer(bj, "embed.", "reproject_every", c.develop.reproject_every, 1);
  c.embed.pullback = number(bj, "embed.", "pullback_tol", c.embed.pullback, true);
  c.embed.pinching = number(bj, "embed.", "pinching_slack", c.embed.pinching, true);

  const json& oj = object_at(j, "", "output", false);
  reject_unknown(oj, "output.", {"directory", "obj", "embedding_csv", "trace"});
  if (oj.contains("directory")) {
    if (!oj["directory"].is_string() || oj["directory"].get<std::string>().empty())
      throw ConfigError("output.directory must be a nonempty string");
    c.output.directory = oj["directory"].get<std::string>();
  }
  c.output.obj = boolean(oj, "output.", "obj", c.output.obj);
  c.output.embedding_csv = boolean(oj, "output.", "embedding_csv", c.output.embedding_csv);
  c.output.trace = boolean(oj, "output.", "trace", c.output.trace);

  // Normalized form with every default spelled out.
  json res = json::array();
  for (const auto& r : c.schedule.resolutions) res.push_back(resolution_json(r));
  json probes = json::array();
  for (const auto& p : c.audit.probes) probes.push_back({{"r", p.r}, {"theta", p.theta}});
  c.source = {
      {"schema_version", kSchemaVersion},
      {"metric", {{"family", c.metric.family}, {"params", c.metric.params}}},
      {"grid", {{"resolutions", res}, {"reference", resolution_json(c.schedule.reference)},
                {"theta0", c.schedule.theta0}}},
      {"exhaustion", {{"radii", c.schedule.radii}, {"l_obs", c.schedule.l_obs},
                      {"tol", c.schedule.tol}, {"boundary_blend", c.schedule.boundary_blend}}},
      {"solver", {{"tol", so.tol}, {"max_iter", so.max_iter}, {"kappa", so.kappa},
                  {"min_step", so.min_step}, {"linear_tol", so.linear_tol}}},
      {"audit", {{"r0", c.audit.r0_list}, {"c_cal", c.audit.c_cal}, {"probes", probes},
                 {"slacks", {{"solver_tol", sl.solver_tol},
                             {"gradient_fd_constant", sl.gradient_fd_constant},
                             {"cutoff_values", sl.cutoff_values},
                             {"cutoff_hessian", sl.cutoff_hessian}}}}},
      {"embed", {{"curvature_check_tol", c.develop.curvature_check_tol},
                 {"substeps", c.develop.substeps},
                 {"reproject_every", c.develop.reproject_every},
                 {"pullback_tol", c.embed.pullback},
                 {"pinching_slack", c.embed.pinching}}},
      {"output", {{"directory", c.output.directory}, {"obj", c.output.obj},
                  {"embedding_csv", c.output.embedding_csv}, {"trace", c.output.trace}}}};
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path);
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

int cmd_solve(const RunConfig& c, const std::string& out, std::ostream& log) {
  const fs::path dir(out);
  const auto start = std::chrono::system_clock::now();
  int code = guarded(log, [&] {
    DirectoryLock lock(dir);
    // Stale artifacts of an earlier run must not survive into this one.
    for (const char* name : {"solve.json", "estimates.json", "embedding.json", "graph.obj",
                             "embedding.csv", "u.csv", "convergence.csv"})
      fs::remove(dir / name);
    json cfg = c.source;
    cfg["output"]["directory"] = ".";
    write_json(dir / "config.json", cfg);
    const MetricPtr m = make_metric(c.metric);
    const FieldCoordinates coords = coordinates_for(*m);

    json steps = json::array();
    auto trace_path = [&](std::size_t k) { return dir / ("trace_l" + std::to_string(k) + ".csv"); };
    auto on_step = [&](const ExhaustionStep& s) {
      const std::size_t k = steps.size();
      write_field_csv((dir / field_name(k)).string(), s.field.u, coords, "u");
      if (c.output.trace) write_trace_csv(trace_path(k).string(), s.field.trace);
      steps.push_back({{"l", s.l},
                       {"boundary_value", s.boundary_value},
                       {"warm_started", s.warm_started},
                       {"iterations", s.field.iterations},
                       {"residual", s.field.residual},
                       {"min_eigenvalue", s.field.min_eigenvalue},
                       {"rhs_min", s.field.rhs_min},
                       {"field", field_name(k)}});
      log << "solved l=" << s.l << " in " << s.field.iterations << " iterations, residual "
          << s.field.residual << '\n';
    };
    auto write_solve = [&](bool solved, const ExhaustionResult& r, const std::string& failure) {
      json j = {{"solved", solved},
                {"exhaustion_converged", r.converged},
                {"steps", steps},
                {"limit", "u.csv"},
                {"convergence", "convergence.csv"}};
      if (!failure.empty()) j["failure"] = failure;
      write_json(dir / "solve.json", j);
    };

    ExhaustionResult res;
    try {
      res = run_exhaustion(c.schedule, m, on_step);
    } catch (const NonConvergence& e) {
      write_trace_csv(trace_path(steps.size()).string(), e.trace);
      write_solve(false, res, e.what());
      log << "nonconvergence at l=" << c.schedule.radii[steps.size()] << ": " << e.what() << '\n';
      return static_cast<int>(kExitNonConvergence);
    } catch (const DivergenceError& e) {
      write_convergence_csv((dir / "convergence.csv").string(), e.partial.table);
      write_solve(false, e.partial, e.what());
      log << e.what() << '\n';
      return static_cast<int>(kExitNonConvergence);
    }
    write_field_csv((dir / "u.csv").string(), res.limit, coords, "u");
    write_convergence_csv((dir / "convergence.csv").string(), res.table);
    write_solve(true, res, "");
    log << (res.converged ? "exhaustion converged" : "schedule exhausted") << " after "
        << res.steps.size() << " radii\n";
    return static_cast<int>(kExitOk);
  });
  if (fs::exists(dir)) record_metadata(dir, "solve", start, code);
  return code;
}

int cmd_verify(const std::string& out, std::ostream& log) {
  const fs::path dir(out);
  const auto start = std::chrono::system_clock::now();
  int code = guarded(log, [&] {
    if (!fs::is_directory(dir)) throw ArtifactError("no run directory " + dir.string());
    DirectoryLock lock(dir);
    fs::remove(dir / "estimates.json");
    const SolvedRun run = load_run(dir);
    json radii = json::array();
    bool pass = true;
    for (std::size_t k = 0; k < run.solve["steps"].size(); ++k) {
      const double l = run.config.schedule.radii[k];
      const double b = exhaustion_boundary_value(*run.metric, l, run.config.schedule.boundary_blend);
      const AdmissibleField f = describe_field(read_step(dir, run, k), *run.metric);
      const EstimateReport rep = audit_solution(f, *run.metric, b, run.config.audit);
      pass = pass && rep.pass();
      radii.push_back({{"l", l}, {"boundary_value", b}, {"report", rep.to_json()}});
      log << "audited l=" << l << ": " << (rep.pass() ? "pass" : "FAIL") << '\n';
    }
    write_json(dir / "estimates.json", {{"pass", pass}, {"radii", radii}});
    return static_cast<int>(pass ? kExitOk : kExitAuditFailed);
  });
  if (fs::exists(dir)) record_metadata(dir, "verify", start, code);
  return code;
}

int cmd_embed(const std::string& out, std::ostream& log) {
  const fs::path dir(out);
  const auto start = std::chrono::system_clock::now();
  int code = guarded(log, [&] {
    if (!fs::is_directory(dir)) throw ArtifactError("no run directory " + dir.string());
    DirectoryLock lock(dir);
    for (const char* name : {"embedding.json", "graph.obj", "embedding.csv"}) fs::remove(dir / name);
    const SolvedRun run = load_run(dir);
    const json est = read_json(dir / "estimates.json");
    if (!est.value("pass", false))
      throw ArtifactError("the estimate audit failed; embedding is not attempted");
    const RunConfig& c = run.config;
    const std::size_t last = run.solve["steps"].size() - 1;
    const ScalarField u = restrict_to_rings(read_step(dir, run, last), c.schedule.l_obs);
    const AdmissibleField f = describe_field(u, *run.metric);

    EmbeddingAudit audit;
    EmbeddingMap e;
    try {
      const ConformalHyperbolicMetric gbar = conformal_metric(f, *run.metric);
      DevelopingMap dev = develop(gbar, c.develop);
      e = assemble_embedding(f, *run.metric, dev);
      audit = verify_embedding(e, *run.metric);
      audit.curvature_defect = gbar.max_curvature_defect;
      dev.frames.clear();
      dev.points.clear();
      audit.develop_stats = std::move(dev);
    } catch (const EmbedError& err) {
      log << "embedding failed: " << err.what() << '\n';
      return static_cast<int>(kExitEmbedFailed);
    }
    json j = audit.to_json(c.embed);
    j["grid"] = {{"n_r", u.grid.n_r()}, {"n_theta", u.grid.n_theta()},
                 {"radius", u.grid.ball_radius()}, {"source_field", field_name(last)}};
    write_json(dir / "embedding.json", j);
    if (c.output.obj) export_graph_obj(e, (dir / "graph.obj").string());
    if (c.output.embedding_csv)
      write_embedding_csv(dir / "embedding.csv", e, coordinates_for(*run.metric));
    if (!audit.pass(c.embed)) {
      log << "embedding audit failed: " << audit.worst_offender(c.embed) << '\n';
      return static_cast<int>(kExitEmbedFailed);
    }
    log << "embedding audit passed; pullback error " << audit.pullback_error.value << '\n';
    return static_cast<int>(kExitOk);
  });
  if (fs::exists(dir)) record_metadata(dir, "embed", start, code);
  return code;
}

int run_cli(int argc, char** argv, std::ostream& log) {
  CLI::App app{"Monge-Ampere solver and isometric embedding into R^{2,1}", "lorentz_embed"};
  std::string config, out;
  bool trace = false;
  app.add_option("--config", config, "run configuration (JSON)");
  app.add_option("--out", out, "run directory");
  app.add_flag("--trace", trace, "write Newton iteration traces");
  app.require_subcommand(1, 1);
  for (const char* name : {"solve", "verify", "embed", "all"}) {
    auto* sub = app.add_subcommand(name);
    sub->fallthrough();
  }
  app.get_subcommand("solve")->description("solve the exhaustion sequence");
  app.get_subcommand("verify")->description("audit the a priori estimates");
  app.get_subcommand("embed")->description("reconstruct and audit the embedding");
  app.get_subcommand("all")->description("solve, verify and embed");
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInvalid;
  }
  const std::string cmd = app.get_subcommands().front()->get_name();

  return guarded(log, [&] {
    std::optional<RunConfig> cfg;
    if (!config.empty()) cfg = load_config(config);
    if (cfg && trace) cfg->output.trace = true;
    if (out.empty()) {
      if (!cfg) throw ConfigError("either --out or --config is required");
      out = cfg->output.directory;
    }
    if ((cmd == "solve" || cmd == "all") && !cfg) throw ConfigError("--config is required for " + cmd);
    if (cmd == "solve") return cmd_solve(*cfg, out, log);
    if (cmd == "verify") return cmd_verify(out, log);
    if (cmd == "embed") return cmd_embed(out, log);
    int code = cmd_solve(*cfg, out, log);
    if (code == kExitOk) code = cmd_verify(out, log);
    if (code == kExitOk) code = cmd_embed(out, log);
    return code;
  });
}

}  // namespace lorentz
