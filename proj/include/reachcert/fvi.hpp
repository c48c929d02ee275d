#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "reachcert/func_approx.hpp"
#include "reachcert/model.hpp"
#include "reachcert/oracle.hpp"

namespace reachcert {

struct FviConfig {
  std::size_t n_base = 600;        // base points per iteration
  std::size_t n_successors = 1000; // kernel draws per (base point, action)
  std::size_t n_initial = 1000;    // kernel draws per action at x0
  double p = 2.0;
  std::shared_ptr<const RbfClassConfig> rbf;
  std::uint64_t seed = 0;

  void validate() const;
};

// One iteration's draws. successors are stored flat as [i][a][j][dim].
struct SampleSet {
  std::size_t dim = 0;
  std::size_t n_actions = 0;
  std::size_t n_successors = 0;
  std::vector<State> base_points;
  std::vector<double> successors;

  std::span<const double> block(std::size_t i) const;
  StateView successor(std::size_t i, std::size_t a, std::size_t j) const;
};

// Base points come from stream (kFviBasePoints, k); the successors of base
// point i under action a from stream (kFviSuccessors, k, i, a).
SampleSet generate_samples(const MarkovProcess& process, const SamplingDistribution& eta, std::size_t n_base,
                           std::size_t n_successors, std::uint64_t seed, int k);

void draw_successors(const MarkovProcess& process, StateView x, std::size_t action, std::size_t count, Rng& rng,
                     std::span<double> out);

struct OperatorValue {
  double value = 0.0;
  std::size_t action = 0;
};

// Monte-Carlo estimate of max_a E[1_K(y) + 1_{A\K}(y) next(y)] from the
// successor block of one base point ([a][j][dim]). A null `next` stands for
// the zero function.
OperatorValue empirical_operator(std::span<const double> block, std::size_t n_actions, std::size_t n_successors,
                                 const FittedFunction* next, const ReachAvoidSpec& spec);

// Per-action means behind empirical_operator.
void empirical_action_values(std::span<const double> block, std::size_t n_actions, std::size_t n_successors,
                             const FittedFunction* next, const ReachAvoidSpec& spec, std::span<double> out);

// Fitted functions for k = 1..N_t; the one at N_t is identically zero.
class ValueFunctionStack {
 public:
  ValueFunctionStack() = default;
  ValueFunctionStack(int horizon, std::shared_ptr<const RbfClassConfig> config);

  int horizon() const { return static_cast<int>(functions_.size()); }
  const FittedFunction& at(int k) const;
  void set(int k, FittedFunction f);
  // nullptr at k = N_t, where the function is the zero function.
  const FittedFunction* next_for(int k) const;

 private:
  std::vector<FittedFunction> functions_;
};

// Base points and argmax labels of one iteration, kept for policy synthesis.
struct IterationLabels {
  std::vector<State> base_points;
  std::vector<std::size_t> actions;
};

struct FviResult {
  ValueFunctionStack values;
  double w0_hat = 0.0;
  double r_hat = 0.0;
  std::size_t initial_action = 0;
  bool short_circuit = false;
  std::vector<double> fit_residuals;    // index k, entries 1..N_t-1 used
  std::vector<IterationLabels> labels;  // index k, entries 1..N_t-1 used
};

// Backward loop k = N_t-1..1: fresh samples, empirical operator at each base
// point, regression into the class.
FviResult fit_value_stack(const MarkovProcess& process, const ReachAvoidSpec& spec, const SamplingDistribution& eta,
                          const FviConfig& config);

// Scalar estimate of the step-0 value at x using stream (kFviInitial, slot).
OperatorValue estimate_initial_value(const MarkovProcess& process, const ReachAvoidSpec& spec,
                                     const ValueFunctionStack& values, StateView x, std::size_t n_initial,
                                     std::uint64_t seed, std::uint64_t slot = 0);

FviResult run_fvi(const MarkovProcess& process, const ReachAvoidSpec& spec, const SamplingDistribution& eta,
                  const FviConfig& config);

// Re-derives the per-iteration labels of a stored stack from the same
// streams fit_value_stack used; identical to FviResult::labels.
std::vector<IterationLabels> label_iterations(const MarkovProcess& process, const ReachAvoidSpec& spec,
                                              const SamplingDistribution& eta, const ValueFunctionStack& values,
                                              const FviConfig& config);

// Argmax labels at base points generalised by 1-nearest-neighbour per step.
// Step 0 is labelled on a fresh base set drawn from stream (kPolicyLabels).
// States in K or outside A map to action 0.
Policy extract_policy(const MarkovProcess& process, const ReachAvoidSpec& spec, const SamplingDistribution& eta,
                      const FviResult& result, const FviConfig& config);

// 1-NN lookup; ties go to the lowest prototype index.
std::size_t nearest_label(const IterationLabels& labels, StateView x);

}  // namespace reachcert
