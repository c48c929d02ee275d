#include "reachcert/func_approx.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <Eigen/Dense>

namespace reachcert {

namespace {

// Splits n into `dims` integer factors, the first axis taking the largest.
std::vector<std::size_t> split_counts(std::size_t n, std::size_t dims) {
  if (dims == 1) return {n};
  const double root = std::pow(static_cast<double>(n), 1.0 / static_cast<double>(dims));
  std::size_t d = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(root + 1e-9)));
  while (n % d != 0) --d;
  auto rest = split_counts(n / d, dims - 1);
  rest.push_back(d);
  std::sort(rest.begin(), rest.end(), std::greater<>());
  return rest;
}

// Equal per-axis counts grown one axis at a time while the product fits in n.
std::vector<std::size_t> near_cube_counts(std::size_t n, std::size_t dims) {
  std::size_t q = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(std::pow(static_cast<double>(n), 1.0 / static_cast<double>(dims)) + 1e-9)));
  const auto product = [](const std::vector<std::size_t>& c) {
    std::size_t p = 1;
    for (auto v : c) p *= v;
    return p;
  };
  std::vector<std::size_t> counts(dims, q);
  while (product(counts) > n) --counts[0];
  for (std::size_t d = 0; d < dims; ++d) {
    ++counts[d];
    if (product(counts) > n) {
      --counts[d];
      break;
    }
  }
  return counts;
}

std::vector<State> tensor_product(const std::vector<std::vector<double>>& axes) {
  std::vector<State> points{State{}};
  for (const auto& axis : axes) {
    std::vector<State> next;
    next.reserve(points.size() * axis.size());
    for (const auto& prefix : points) {
      for (double v : axis) {
        State c = prefix;
        c.push_back(v);
        next.push_back(std::move(c));
      }
    }
    points = std::move(next);
  }
  return points;
}

Eigen::MatrixXd design_matrix(const RbfClassConfig& config, std::span<const State> inputs) {
  const auto nb = config.n_basis();
  Eigen::MatrixXd phi(static_cast<Eigen::Index>(inputs.size()), static_cast<Eigen::Index>(nb));
  std::vector<double> row(nb);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].size() != config.dim()) throw DimensionError("fit: input dimension mismatch");
    basis_features(config, inputs[i], row);
    for (std::size_t j = 0; j < nb; ++j) phi(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
  }
  return phi;
}

Eigen::VectorXd solve_weighted(const Eigen::MatrixXd& phi, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                               double ridge) {
  const double total = w.sum();
  Eigen::MatrixXd gram = phi.transpose() * w.asDiagonal() * phi / total;
  gram.diagonal().array() += ridge;
  const Eigen::VectorXd rhs = phi.transpose() * (w.array() * y.array()).matrix() / total;
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-15)) {
    throw FitError("fit: design matrix is singular or too ill-conditioned for the configured ridge");
  }
  Eigen::VectorXd sol = llt.solve(rhs);
  if (!sol.allFinite()) throw FitError("fit: non-finite weights");
  return sol;
}

}  // namespace

void RbfClassConfig::validate() const {
  if (centers.empty()) throw std::invalid_argument("RBF class needs at least one center");
  if (!(width > 0.0) || !std::isfinite(width)) throw std::invalid_argument("RBF width must be positive");
  if (!(ridge >= 0.0)) throw std::invalid_argument("ridge must be nonnegative");
  const auto n = centers.front().size();
  if (n == 0) throw std::invalid_argument("RBF centers must have positive dimension");
  std::set<State> seen;
  for (const auto& c : centers) {
    if (c.size() != n) throw DimensionError("RBF centers differ in dimension");
    if (!seen.insert(c).second) throw std::invalid_argument("RBF centers must be pairwise distinct");
  }
  if (lattice) {
    std::size_t count = 1;
    for (const auto& axis : lattice->axes) count *= axis.size();
    if (lattice->axes.size() != n || count > centers.size()) {
      throw std::invalid_argument("RBF lattice does not match the center list");
    }
  }
}

RbfClassConfig rbf_class(std::vector<State> centers, double width, double ridge) {
  RbfClassConfig cfg;
  cfg.centers = std::move(centers);
  cfg.width = width;
  cfg.ridge = ridge;
  cfg.validate();
  return cfg;
}

RbfClassConfig lattice_rbf_class(const BoxSet& region, std::size_t n_basis, double width, double ridge) {
  if (n_basis == 0) throw std::invalid_argument("RBF class needs at least one center");
  const std::size_t dims = region.dim();
  auto counts = near_cube_counts(n_basis, dims);
  std::size_t in_lattice = 1;
  for (auto c : counts) in_lattice *= c;
  std::size_t dual = 1;
  for (auto c : counts) dual *= c - 1;
  if (n_basis - in_lattice > dual) {
    counts = split_counts(n_basis, dims);
    in_lattice = n_basis;
  }

  CenterLattice lattice;
  for (std::size_t d = 0; d < dims; ++d) {
    const double lo = region.lower()[d];
    const double step = (region.upper()[d] - lo) / static_cast<double>(counts[d]);
    std::vector<double> axis(counts[d]);
    for (std::size_t i = 0; i < counts[d]; ++i) axis[i] = lo + (static_cast<double>(i) + 0.5) * step;
    lattice.axes.push_back(std::move(axis));
  }
  auto centers = tensor_product(lattice.axes);

  if (in_lattice < n_basis) {
    // Leftover centers go to the midpoints between lattice nodes, nearest to
    // the middle of the region first.
    std::vector<std::vector<double>> mid_axes;
    for (const auto& axis : lattice.axes) {
      std::vector<double> m;
      for (std::size_t i = 0; i + 1 < axis.size(); ++i) m.push_back(0.5 * (axis[i] + axis[i + 1]));
      mid_axes.push_back(std::move(m));
    }
    auto extras = tensor_product(mid_axes);
    const auto dist = [&](const State& c) {
      double s = 0.0;
      for (std::size_t d = 0; d < dims; ++d) {
        const double diff = c[d] - 0.5 * (region.lower()[d] + region.upper()[d]);
        s += diff * diff;
      }
      return s;
    };
    std::stable_sort(extras.begin(), extras.end(),
                     [&](const State& a, const State& b) { return dist(a) < dist(b) - 1e-12; });
    extras.resize(n_basis - in_lattice);
    centers.insert(centers.end(), extras.begin(), extras.end());
  }

  RbfClassConfig cfg = rbf_class(std::move(centers), width, ridge);
  cfg.lattice = std::move(lattice);
  cfg.validate();
  return cfg;
}

void basis_features_reference(const RbfClassConfig& config, StateView x, std::span<double> out) {
  const double scale = -0.5 / (config.width * config.width);
  for (std::size_t j = 0; j < config.centers.size(); ++j) {
    const auto& c = config.centers[j];
    double d2 = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) {
      const double d = x[i] - c[i];
      d2 += d * d;
    }
    out[j] = std::exp(scale * d2);
  }
}

void basis_features(const RbfClassConfig& config, StateView x, std::span<double> out) {
  if (!config.lattice) {
    basis_features_reference(config, x, out);
    return;
  }
  const double scale = -0.5 / (config.width * config.width);
  const auto& axes = config.lattice->axes;
  // exp(-|x-c|^2 / 2s^2) factors into one exp per axis coordinate.
  std::size_t filled = 1;
  out[0] = 1.0;
  for (std::size_t d = 0; d < axes.size(); ++d) {
    const auto& axis = axes[d];
    double factors[64];
    std::vector<double> big;
    double* f = factors;
    if (axis.size() > 64) {
      big.resize(axis.size());
      f = big.data();
    }
    for (std::size_t i = 0; i < axis.size(); ++i) {
      const double diff = x[d] - axis[i];
      f[i] = std::exp(scale * diff * diff);
    }
    // Expand in place from the back so prefixes are read before overwritten.
    for (std::size_t p = filled; p-- > 0;) {
      const double prefix = out[p];
      for (std::size_t i = axis.size(); i-- > 0;) out[p * axis.size() + i] = prefix * f[i];
    }
    filled *= axis.size();
  }
  for (std::size_t j = filled; j < config.centers.size(); ++j) {
    const auto& c = config.centers[j];
    double d2 = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) {
      const double d = x[i] - c[i];
      d2 += d * d;
    }
    out[j] = std::exp(scale * d2);
  }
}

FittedFunction::FittedFunction(std::shared_ptr<const RbfClassConfig> config, std::vector<double> weights)
    : config_(std::move(config)), weights_(std::move(weights)) {
  if (!config_) throw std::invalid_argument("FittedFunction needs a class configuration");
  if (weights_.size() != config_->n_basis()) throw DimensionError("weight count differs from basis size");
}

FittedFunction FittedFunction::zero(std::shared_ptr<const RbfClassConfig> config) {
  const auto nb = config->n_basis();
  return FittedFunction(std::move(config), std::vector<double>(nb, 0.0));
}

double FittedFunction::raw(StateView x) const {
  if (x.size() != config_->dim()) throw DimensionError("evaluate: state dimension mismatch");
  double features[256];
  std::vector<double> big;
  std::span<double> f(features, weights_.size());
  if (weights_.size() > 256) {
    big.resize(weights_.size());
    f = big;
  }
  basis_features(*config_, x, f);
  double acc = 0.0;
  for (std::size_t j = 0; j < weights_.size(); ++j) acc += weights_[j] * f[j];
  return acc;
}

double FittedFunction::operator()(StateView x) const { return std::clamp(raw(x), 0.0, 1.0); }

double FittedFunction::from_features(std::span<const double> features) const {
  double acc = 0.0;
  for (std::size_t j = 0; j < weights_.size(); ++j) acc += weights_[j] * features[j];
  return std::clamp(acc, 0.0, 1.0);
}

double evaluate(const FittedFunction& f, StateView x) { return f(x); }

FittedFunction fit(std::shared_ptr<const RbfClassConfig> config, std::span<const State> inputs,
                   std::span<const double> targets, double p) {
  if (!config) throw std::invalid_argument("fit: missing class configuration");
  if (inputs.empty()) throw std::invalid_argument("fit: at least one point is required");
  if (inputs.size() != targets.size()) throw std::invalid_argument("fit: inputs and targets differ in length");
  if (!(p >= 1.0)) throw std::invalid_argument("fit: norm order p must be >= 1");

  const Eigen::MatrixXd phi = design_matrix(*config, inputs);
  const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(targets.data(), static_cast<Eigen::Index>(targets.size()));
  Eigen::VectorXd w = Eigen::VectorXd::Ones(y.size());
  Eigen::VectorXd sol = solve_weighted(phi, y, w, config->ridge);

  if (p != 2.0) {
    constexpr int kIterations = 100;
    constexpr double kFloor = 1e-8;
    for (int it = 0; it < kIterations; ++it) {
      const Eigen::ArrayXd r = (phi * sol - y).array().abs().max(kFloor);
      w = r.pow(p - 2.0).matrix();
      Eigen::VectorXd next = solve_weighted(phi, y, w, config->ridge);
      const double change = (next - sol).lpNorm<Eigen::Infinity>();
      sol = std::move(next);
      if (change < 1e-12) break;
    }
  }
  return FittedFunction(std::move(config), std::vector<double>(sol.data(), sol.data() + sol.size()));
}

double fit_residual_rms(const FittedFunction& f, std::span<const State> inputs, std::span<const double> targets) {
  if (inputs.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const double r = f.raw(inputs[i]) - targets[i];
    acc += r * r;
  }
  return std::sqrt(acc / static_cast<double>(inputs.size()));
}

std::size_t pseudo_dimension(const RbfClassConfig& config) { return config.n_basis(); }

}  // namespace reachcert
