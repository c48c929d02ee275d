// reachcert command-line front end.
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "reachcert/app.hpp"
#include "reachcert/parallel.hpp"

namespace app = reachcert::app;
using nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::string out = "out";
  std::optional<int> workers;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c, bool needs_config = true) {
  auto* opt = cmd->add_option("--config", c.config, "run configuration (JSON)");
  if (needs_config) opt->required();
  cmd->add_option("--out", c.out, "output directory")->capture_default_str();
  cmd->add_option("--workers", c.workers, "worker threads (default: REACHCERT_WORKERS or all cores)");
  cmd->add_option("--seed", c.seed, "override the fvi seed");
}

void apply_workers(const Common& c) {
  if (c.workers) {
    if (*c.workers < 1) throw std::invalid_argument("--workers must be >= 1");
    reachcert::set_workers(*c.workers);
  } else if (const char* env = std::getenv("REACHCERT_WORKERS")) {
    const int n = std::atoi(env);
    if (n < 1) throw std::invalid_argument("REACHCERT_WORKERS must be a positive integer");
    reachcert::set_workers(n);
  }
}

app::RunConfig load(const Common& c) {
  auto cfg = app::load_config(c.config);
  if (c.seed) {
    cfg.fvi.seed = *c.seed;
    app::validate_config(cfg);
  }
  return cfg;
}

json read_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open report " + path);
  return json::parse(in);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Reach-avoid fitted value iteration with error certificates"};
  cli.require_subcommand(1);

  Common run_opts, oracle_opts, certify_opts, policy_opts;
  std::size_t resolution = 0;
  std::string certify_report, policy_report;
  app::PlanArgs plan;
  int plan_workers = 0;

  auto* run = cli.add_subcommand("run", "fit the value stack and attach certificates");
  add_common(run, run_opts);
  run->add_option("--resolution", resolution, "oracle grid resolution (enables the oracle section)");

  auto* oracle = cli.add_subcommand("oracle", "grid dynamic programming reference");
  add_common(oracle, oracle_opts);
  oracle->add_option("--resolution", resolution, "cells per axis (default: config oracle.resolution)");

  auto* certify = cli.add_subcommand("certify", "sample-based certificate for a stored value stack");
  add_common(certify, certify_opts);
  certify->add_option("--report", certify_report, "report.json from a previous run")->required();

  auto* policy = cli.add_subcommand("policy", "extract the policy of a stored run and evaluate it");
  add_common(policy, policy_opts);
  policy->add_option("--report", policy_report, "report.json from a previous run")->required();
  policy->add_option("--resolution", resolution, "grid resolution for the fixed-policy DP check");

  auto* plan_cmd = cli.add_subcommand("plan", "a-priori sample sizes for an accuracy/confidence target");
  plan_cmd->add_option("--eps0", plan.eps0)->capture_default_str();
  plan_cmd->add_option("--eps1", plan.eps1)->capture_default_str();
  plan_cmd->add_option("--eps2", plan.eps2)->capture_default_str();
  plan_cmd->add_option("--alpha", plan.alpha, "target confidence 1 - total delta")->capture_default_str();
  plan_cmd->add_option("--d", plan.d, "pseudo-dimension")->capture_default_str();
  plan_cmd->add_option("--p", plan.p)->capture_default_str();
  plan_cmd->add_option("--n-actions", plan.n_actions)->capture_default_str();
  plan_cmd->add_option("--horizon", plan.horizon, "N_t")->capture_default_str();
  plan_cmd->add_option("--workers", plan_workers, "accepted for symmetry; planning is serial");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return cli.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return cli.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << json{{"error", {{"type", "usage_error"}, {"message", e.what()}}}}.dump() << "\n";
    return 2;
  }

  try {
    json report;
    if (*run) {
      apply_workers(run_opts);
      auto cfg = load(run_opts);
      if (resolution > 0) {
        cfg.oracle.enabled = true;
        cfg.oracle.resolution = resolution;
      }
      report = app::cmd_run(cfg, run_opts.out);
      std::cout << json{{"r_hat", report["r_hat"]}, {"report", run_opts.out + "/report.json"}}.dump(2) << "\n";
    } else if (*oracle) {
      apply_workers(oracle_opts);
      const auto cfg = load(oracle_opts);
      report = app::cmd_oracle(cfg, resolution > 0 ? resolution : cfg.oracle.resolution, oracle_opts.out);
      std::cout << json{{"oracle", report["oracle"]}, {"convergence", report["convergence"]}}.dump(2) << "\n";
    } else if (*certify) {
      apply_workers(certify_opts);
      const auto cfg = load(certify_opts);
      report = app::cmd_certify(cfg, read_report(certify_report), certify_opts.out);
      std::cout << report["certificate"].dump(2) << "\n";
    } else if (*policy) {
      apply_workers(policy_opts);
      auto cfg = load(policy_opts);
      if (resolution > 0) {
        cfg.oracle.enabled = true;
        cfg.oracle.resolution = resolution;
      }
      report = app::cmd_policy(cfg, read_report(policy_report), policy_opts.out);
      std::cout << report["initial_states"].dump(2) << "\n";
    } else if (*plan_cmd) {
      std::cout << app::cmd_plan(plan).dump(2) << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << app::error_json(e) << "\n";
    return 1;
  }
  return 0;
}
