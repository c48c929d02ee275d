#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "reachcert/model.hpp"

namespace reachcert {

class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor-product arrangement of the leading centers. Center j enumerates the
// axes lexicographically with the last axis varying fastest; centers past the
// lattice size are listed explicitly.
struct CenterLattice {
  std::vector<std::vector<double>> axes;
};

// Linear-in-weights Gaussian RBF network without bias term:
//   w(x) = sum_j w_j exp(-|x - c_j|^2 / (2 width^2)).
struct RbfClassConfig {
  std::vector<State> centers;
  double width = 1.0;
  double ridge = 1e-8;
  std::optional<CenterLattice> lattice;

  void validate() const;
  std::size_t n_basis() const { return centers.size(); }
  std::size_t dim() const { return centers.empty() ? 0 : centers.front().size(); }
};

RbfClassConfig rbf_class(std::vector<State> centers, double width, double ridge = 1e-8);

// Deterministic lattice over `region`: the largest near-cubic lattice with at
// most n_basis nodes at cell midpoints, the remainder at midpoints between
// nodes closest to the middle of the region. Falls back to an exact
// factorisation of n_basis when there are too few such midpoints.
RbfClassConfig lattice_rbf_class(const BoxSet& region, std::size_t n_basis, double width, double ridge = 1e-8);

// Fills out[j] with the j-th basis function at x. Uses the separable lattice
// path when available.
void basis_features(const RbfClassConfig& config, StateView x, std::span<double> out);
// One exp per center; kept as the reference for the lattice path.
void basis_features_reference(const RbfClassConfig& config, StateView x, std::span<double> out);

// Element of the class W. Evaluation is clipped to [0, 1].
class FittedFunction {
 public:
  FittedFunction(std::shared_ptr<const RbfClassConfig> config, std::vector<double> weights);
  static FittedFunction zero(std::shared_ptr<const RbfClassConfig> config);

  const RbfClassConfig& config() const { return *config_; }
  const std::shared_ptr<const RbfClassConfig>& config_ptr() const { return config_; }
  const std::vector<double>& weights() const { return weights_; }

  double raw(StateView x) const;
  double operator()(StateView x) const;
  // Clipped value from precomputed basis features.
  double from_features(std::span<const double> features) const;

 private:
  std::shared_ptr<const RbfClassConfig> config_;
  std::vector<double> weights_;
};

double evaluate(const FittedFunction& f, StateView x);

// argmin_w sum_i |w(x_i) - y_i|^p over raw network outputs. For p = 2 this
// solves (Phi^T Phi / N + ridge I) w = Phi^T y / N; for p != 2 it runs
// iteratively reweighted least squares on top of the same solve.
FittedFunction fit(std::shared_ptr<const RbfClassConfig> config, std::span<const State> inputs,
                   std::span<const double> targets, double p = 2.0);

// Root-mean-square of raw residuals.
double fit_residual_rms(const FittedFunction& f, std::span<const State> inputs, std::span<const double> targets);

// The class is a vector space spanned by n_basis fixed functions.
std::size_t pseudo_dimension(const RbfClassConfig& config);

}  // namespace reachcert
