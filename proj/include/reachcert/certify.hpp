#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "reachcert/bounds.hpp"
#include "reachcert/fvi.hpp"
#include "reachcert/model.hpp"

namespace reachcert {

class IndependenceError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Holdout base points plus two independent successor batches per
// (point, action). Batches are regenerated on demand from stream
// (kHoldoutSuccessors, i, a, batch); storing 2 * N * |A| * M draws at
// certification sizes would take several gigabytes.
class HoldoutSet {
 public:
  HoldoutSet(const MarkovProcess& process, std::vector<State> base_points, std::size_t n_successors,
             std::uint64_t seed, std::string eta_id);

  std::size_t size() const { return base_points_.size(); }
  std::size_t n_successors() const { return n_successors_; }
  std::size_t n_actions() const { return process_->n_actions(); }
  std::uint64_t seed() const { return seed_; }
  const std::string& eta_id() const { return eta_id_; }
  const std::vector<State>& base_points() const { return base_points_; }
  const MarkovProcess& process() const { return *process_; }

  // Fills out with the M draws of batch (0 or 1) at (i, a), flattened.
  void successors(std::size_t i, std::size_t a, int batch, std::span<double> out) const;

  // Stores every batch in memory; later calls read the stored copy.
  void materialize();
  bool materialized() const { return stored_.has_value(); }
  // Test hook: makes batch 1 an exact copy of batch 0.
  void make_twins_identical();

 private:
  std::size_t offset(std::size_t i, std::size_t a, int batch) const;

  const MarkovProcess* process_;
  std::vector<State> base_points_;
  std::size_t n_successors_;
  std::uint64_t seed_;
  std::string eta_id_;
  std::optional<std::vector<double>> stored_;
};

// Base points from stream (kHoldoutBasePoints). The process must outlive the
// returned set.
HoldoutSet draw_holdout(const MarkovProcess& process, const SamplingDistribution& eta, std::size_t n_tilde,
                        std::size_t m_tilde, std::uint64_t seed);

// mean_i |value_k(x_i) - max_a That^a_1 next(x_i)| over batch 0. A null next
// is the zero function.
double estimate_single_step(const HoldoutSet& holdout, const FittedFunction& value_k, const FittedFunction* next,
                            const ReachAvoidSpec& spec);

// mean_i max_a |That^a_1 next(x_i) - That^a_2 next(x_i)|.
double estimate_bias(const HoldoutSet& holdout, const FittedFunction* next, const ReachAvoidSpec& spec);

struct StepEstimate {
  int k = 0;
  double single_step = 0.0;
  double bias = 0.0;
};

struct StepEstimates {
  std::vector<StepEstimate> per_k;  // k = 1..N_t-1 in order
  std::string eta_id;
  std::uint64_t holdout_seed = 0;
};

// All steps in one pass: each successor batch is drawn once and its basis
// features are shared by every value function. Refuses a holdout drawn with
// the FVI seed.
StepEstimates estimate_all(const HoldoutSet& holdout, const ValueFunctionStack& values, const ReachAvoidSpec& spec,
                           std::uint64_t fvi_seed);
// Same numbers via the per-step estimators.
StepEstimates estimate_all_reference(const HoldoutSet& holdout, const ValueFunctionStack& values,
                                     const ReachAvoidSpec& spec, std::uint64_t fvi_seed);

struct SampleCertificate {
  std::vector<StepEstimate> per_k;
  // Bound on the step-k error accumulated from steps k..N_t-1, k = 1..N_t-1.
  std::vector<double> delta_profile;
  double Delta = 0.0;
  double delta_Delta = 0.0;
  double L = 0.0;
  double B = 0.0;
  double B0 = 0.0;
  double eps = 0.0;
  double eps0 = 0.0;
  double delta0 = 0.0;
  std::size_t n_tilde = 0;
  bool valid = false;    // delta_Delta in (0, 1)
  bool vacuous = false;  // !valid or Delta >= 1
};

// 2 sum_{k=1}^{N_t-1} B^{k-1}.
double certificate_L(double B, int horizon);

// Slack making exp(-2 N eps^2 / L^2) equal to 0.1.
double default_certificate_eps(double L, std::size_t n_tilde);

// eps <= 0 selects default_certificate_eps.
SampleCertificate sample_certificate(const StepEstimates& estimates, const ScalingFactors& scaling, double eps,
                                     double eps0, std::size_t n_tilde, std::size_t m0, std::size_t n_actions);

struct PolicyBound {
  double bound = 0.0;        // on |r* - r^mu|
  double lower_bound = 0.0;  // r* >= mc_estimate - halfwidth
  bool vacuous = false;
};

PolicyBound policy_performance_bound(const SampleCertificate& cert, double r_hat, double mc_estimate,
                                     double mc_halfwidth);

}  // namespace reachcert
