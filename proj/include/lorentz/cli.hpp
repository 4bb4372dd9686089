#pragma once

#include <iosfwd>
#include <json.hpp>
#include <stdexcept>
#include <string>

#include "lorentz/embed.hpp"
#include "lorentz/estimates.hpp"
#include "lorentz/exhaustion.hpp"

namespace lorentz {

inline constexpr int kSchemaVersion = 1;

/// Exit statuses of the command-line front end.
enum ExitCode : int {
  kExitOk = 0,
  kExitAuditFailed = 1,  ///< a gating a priori estimate failed
  kExitInvalid = 2,      ///< invalid config, missing or corrupt artifacts, locked directory
  kExitNonConvergence = 3,
  kExitEmbedFailed = 4,
};

/// Invalid configuration; the message names the offending field.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Missing or corrupt run artifacts.
class ArtifactError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MetricConfig {
  std::string family;
  nlohmann::json params = nlohmann::json::object();
};

struct OutputConfig {
  std::string directory = "run";
  bool obj = true;
  bool embedding_csv = true;
  bool trace = false;
};

/// Validated run configuration. `source` is the normalized JSON written to config.json.
struct RunConfig {
  MetricConfig metric;
  ExhaustionSchedule schedule;
  AuditPlan audit;
  DevelopOptions develop;
  EmbedTolerances embed;
  OutputConfig output;
  nlohmann::json source;
};

/// Validates the schema and every tolerance before any computation. Throws ConfigError.
RunConfig parse_config(const nlohmann::json& j);
RunConfig load_config(const std::string& path);

MetricPtr make_metric(const MetricConfig& c);

/// Each command writes into `out` and returns an ExitCode; diagnostics go to `log`.
int cmd_solve(const RunConfig& c, const std::string& out, std::ostream& log);
int cmd_verify(const std::string& out, std::ostream& log);
int cmd_embed(const std::string& out, std::ostream& log);

/// Full front end: lorentz_embed {solve,verify,embed,all} [--config PATH] [--out DIR] [--trace].
int run_cli(int argc, char** argv, std::ostream& log);

}  // namespace lorentz
