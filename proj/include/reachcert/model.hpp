#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "reachcert/rng.hpp"

namespace reachcert {

using State = std::vector<double>;
using StateView = std::span<const double>;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Closed axis-aligned hyperrectangle.
class BoxSet {
 public:
  BoxSet() = default;
  BoxSet(std::vector<double> lower, std::vector<double> upper);

  std::size_t dim() const { return lower_.size(); }
  const std::vector<double>& lower() const { return lower_; }
  const std::vector<double>& upper() const { return upper_; }

  bool contains(StateView x) const;
  bool contains(const BoxSet& other) const;
  double volume() const;

 private:
  std::vector<double> lower_;
  std::vector<double> upper_;
};

// Throws DimensionError when dim(x) differs from the box dimension.
bool box_contains(const BoxSet& set, StateView x);

// Where a state sits relative to the reach-avoid sets. The target is tested
// first, so a point on a shared face counts as reached.
enum class Region { kTarget, kSafe, kOutside };

struct ReachAvoidSpec {
  BoxSet safe;
  BoxSet target;
  int horizon = 1;
  State initial_state;

  void validate() const;
  std::size_t dim() const { return safe.dim(); }
  Region classify(StateView x) const;
};

// y = dynamics * x + offsets[a] + diag(stddev) * z, z ~ N(0, I).
struct LinearGaussianKernel {
  std::size_t dim = 0;
  std::vector<double> dynamics;  // row-major dim x dim
  std::vector<std::vector<double>> offsets;
  std::vector<double> stddev;

  void validate() const;
  void mean(StateView x, std::size_t action, std::span<double> out) const;
  double density(StateView y, StateView x, std::size_t action) const;
  double determinant() const;
};

// Controlled stochastic kernel over R^n with a finite action set. Immutable
// after construction; safe to share across workers.
class MarkovProcess {
 public:
  using Sampler = std::function<void(StateView x, std::size_t action, Rng& rng, std::span<double> out)>;
  using Density = std::function<double(StateView y, StateView x, std::size_t action)>;

  MarkovProcess(std::size_t dim, std::vector<std::string> action_labels, Sampler sampler, Density density);
  MarkovProcess(LinearGaussianKernel kernel, std::vector<std::string> action_labels);

  std::size_t dim() const { return dim_; }
  std::size_t n_actions() const { return labels_.size(); }
  const std::vector<std::string>& action_labels() const { return labels_; }

  void sample(StateView x, std::size_t action, Rng& rng, std::span<double> out) const;
  double density(StateView y, StateView x, std::size_t action) const;

  const LinearGaussianKernel* linear_gaussian() const { return linear_ ? &*linear_ : nullptr; }

 private:
  std::size_t dim_;
  std::vector<std::string> labels_;
  std::optional<LinearGaussianKernel> linear_;
  Sampler sampler_;
  Density density_;
};

// Two-room heating benchmark.
struct ThermalParams {
  double x_a = 6.0;
  double b1 = 0.0375;
  double b2 = 0.025;
  double a_ex = 0.0625;
  double c1 = 0.65;
  double c2 = 0.6;
  double nu = 0.5;

  void validate() const;
  LinearGaussianKernel kernel() const;
};

// Actions are ordered (OFF,OFF), (OFF,ON), (ON,OFF), (ON,ON).
MarkovProcess thermal_process(const ThermalParams& params);

// Base-point distribution supported on A \ K.
class SamplingDistribution {
 public:
  using DensityFn = std::function<double(StateView x)>;
  using SamplerFn = std::function<void(Rng& rng, std::span<double> out)>;

  SamplingDistribution(std::string id, std::size_t dim, DensityFn density, SamplerFn sampler);

  const std::string& id() const { return id_; }
  std::size_t dim() const { return dim_; }
  double density(StateView x) const { return density_(x); }
  void sample(Rng& rng, std::span<double> out) const { sampler_(rng, out); }

 private:
  std::string id_;
  std::size_t dim_;
  DensityFn density_;
  SamplerFn sampler_;
};

inline constexpr int kRejectionAttempts = 100000;

// Uniform on safe \ target by rejection. Throws on degenerate geometry.
SamplingDistribution uniform_eta(const BoxSet& safe, const BoxSet& target);

}  // namespace reachcert
