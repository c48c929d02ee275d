#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "reachcert/model.hpp"

namespace reachcert {

class VacuousBoundError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct BoundBudget {
  double eps0 = 0.05;
  double eps1 = 0.1;
  double eps2 = 0.1;
  double delta0 = 0.01;
  double delta1 = 0.01;
  double delta2 = 0.01;
  double p = 2.0;
  std::size_t d = 1;
  std::size_t n_actions = 1;
  int horizon = 1;
  // Sample sizes of an actual run. When all three are set the confidences are
  // recomputed from them instead of taking delta0..delta2 as given.
  std::size_t N = 0;
  std::size_t M = 0;
  std::size_t M0 = 0;

  bool has_sample_sizes() const { return N > 0 && M > 0 && M0 > 0; }
  void validate() const;
};

enum class ScalingMethod { kNumeric, kAnalytic };

struct ScalingFactors {
  double B = 0.0;
  double B0 = 0.0;
  ScalingMethod method = ScalingMethod::kNumeric;
  std::string eta_id;
};

// 1 - (1 - 2 exp(-2 M eps1^2))^(n_actions * n_points). Throws
// VacuousBoundError when 2 exp(-2 M eps1^2) > 1.
double hoeffding_delta(std::size_t m, double eps1, std::size_t n_actions, std::size_t n_points);

// 4e(d+1) (32e / eps2^p)^d exp(-N eps2^(2p) / 128), capped at 1.
double pollard_delta(double n, double eps2, double p, std::size_t d);

struct SingleStepBound {
  double eps = 0.0;
  double confidence_loss = 0.0;
  bool bias_symbolic = true;  // the inherent Bellman error is added on top
};

SingleStepBound single_step_bound(const BoundBudget& budget);

struct NumericScaling {
  double value = 0.0;
  double half_resolution_value = 0.0;
  double refinement_delta = 0.0;  // value - half_resolution_value
  std::size_t resolution = 0;
};

// sup over y in A\K of the integral over x in A\K of max_a t(y|x,a) eta(x)/eta(y),
// both on a midpoint grid over A restricted to cells whose midpoint is in A\K.
NumericScaling scaling_B_numeric(const MarkovProcess& process, const ReachAvoidSpec& spec,
                                 const SamplingDistribution& eta, std::size_t grid_resolution = 100);
// Single-resolution evaluation; serial reference for the parallel sweep.
double scaling_B_grid(const MarkovProcess& process, const ReachAvoidSpec& spec, const SamplingDistribution& eta,
                      std::size_t grid_resolution, bool parallel = true);

// n_actions / |det(dynamics)|.
double scaling_B_analytic_linear_gaussian(std::span<const double> dynamics, std::size_t dim, std::size_t n_actions);

// sup over x1 in A\K of max_a t(x1|x0,a) / eta(x1) on the midpoint grid.
NumericScaling scaling_B0(const MarkovProcess& process, const ReachAvoidSpec& spec, const SamplingDistribution& eta,
                          StateView x0, std::size_t grid_resolution = 100);

struct AprioriCertificate {
  double delta_quantified = 0.0;  // accuracy without the bias term
  double bias_coefficient = 0.0;  // multiplier of the unquantified bias
  double delta_total = 0.0;       // confidence loss
  bool bias_symbolic = true;
  bool vacuous = false;
  double B = 0.0;
  double B0 = 0.0;
};

// Confidence loss (N_t-1) delta1 + (N_t-1) delta2 + delta0, with each term
// from the Hoeffding/Pollard expressions when the budget carries sample sizes.
AprioriCertificate global_apriori_certificate(const BoundBudget& budget, double B, double B0);

// Geometric weights sum_{k=1}^{N_t-1} B^{(k-1)/p}.
double propagation_weight(double B, double p, int horizon);

struct SampleSizes {
  double N = 0.0;  // may exceed 2^53 for tight budgets
  double M = 0.0;
  double M0 = 0.0;
};

SampleSizes plan_sample_sizes(double eps0, double eps1, double eps2, double delta0, double delta1, double delta2,
                              std::size_t d, double p, std::size_t n_actions);

// Confidence for the step-0 estimate: 2 |A| exp(-2 M0 eps0^2), exact
// form 1 - (1 - 2 exp(-2 M0 eps0^2))^|A|.
double initial_delta(std::size_t m0, double eps0, std::size_t n_actions);

// Double-valued variants of the Hoeffding bound for planner round-trips.
double hoeffding_delta_real(double m, double eps1, std::size_t n_actions, double n_points);

const char* to_string(ScalingMethod m);

}  // namespace reachcert
