#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "reachcert/bounds.hpp"
#include "reachcert/func_approx.hpp"
#include "reachcert/model.hpp"

namespace reachcert::app {

inline constexpr const char* kToolVersion = "reachcert 0.1.0";

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& message, int line, std::string pointer);
  int line() const { return line_; }
  const std::string& pointer() const { return pointer_; }

 private:
  int line_;
  std::string pointer_;
};

struct ModelSection {
  std::string type = "thermal";  // "thermal" or "linear_gaussian"
  ThermalParams thermal;
  LinearGaussianKernel linear;
  std::vector<std::string> action_labels;
};

struct FviSection {
  std::size_t N = 600;
  std::size_t M = 1000;
  std::size_t M0 = 1000;
  double p = 2.0;
  std::size_t rbf_count = 50;
  double rbf_width = 0.7;
  double rbf_ridge = 1e-8;
  std::vector<State> rbf_centers;  // empty: lattice over A
  std::uint64_t seed = 0;
};

struct BoundsSection {
  std::size_t resolution = 100;
  double eps0 = 0.05;
  double eps1 = 0.1;
  double eps2 = 0.1;
};

struct CertifySection {
  bool enabled = true;
  std::size_t N_tilde = 4000;
  std::size_t M_tilde = 10000;
  double eps = 0.0;  // <= 0: default slack
  std::uint64_t seed = 0;
};

struct PolicySection {
  bool enabled = true;
  std::size_t mc_runs = 10000;
  std::uint64_t seed = 0;
};

struct OracleSection {
  bool enabled = false;
  std::size_t resolution = 200;
};

struct RunConfig {
  ModelSection model;
  ReachAvoidSpec spec;             // initial_state = first of initial_states
  std::vector<State> initial_states;
  FviSection fvi;
  BoundsSection bounds;
  CertifySection certify;
  PolicySection policy;
  OracleSection oracle;
  std::size_t export_resolution = 50;
  nlohmann::json echo;  // the parsed document
};

// Schema-checked parse; errors carry the line of the offending entry.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

// Re-validates after command-line overrides.
void validate_config(const RunConfig& config);

// Everything derived from a configuration that the commands share.
struct Problem {
  std::unique_ptr<MarkovProcess> process;
  ReachAvoidSpec spec;
  std::unique_ptr<SamplingDistribution> eta;
  std::shared_ptr<const RbfClassConfig> rbf;
};

Problem build_problem(const RunConfig& config);

// Each command writes its artifacts below out_dir and returns the report.
nlohmann::json cmd_run(const RunConfig& config, const std::filesystem::path& out_dir);
nlohmann::json cmd_oracle(const RunConfig& config, std::size_t resolution, const std::filesystem::path& out_dir);
nlohmann::json cmd_certify(const RunConfig& config, const nlohmann::json& stored_report,
                           const std::filesystem::path& out_dir);
nlohmann::json cmd_policy(const RunConfig& config, const nlohmann::json& stored_report,
                          const std::filesystem::path& out_dir);

struct PlanArgs {
  double eps0 = 0.05;
  double eps1 = 0.1;
  double eps2 = 0.1;
  double alpha = 0.9;
  std::size_t d = 50;
  double p = 2.0;
  std::size_t n_actions = 4;
  int horizon = 10;
};

// delta0 = delta1 = delta2 = (1 - alpha) / (1 + 2 (N_t - 1)).
nlohmann::json cmd_plan(const PlanArgs& args);

// Removes the "timing" member so two reports can be compared byte for byte.
nlohmann::json strip_timing(nlohmann::json report);

std::string error_json(const std::exception& e);

}  // namespace reachcert::app
