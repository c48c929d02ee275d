#include "reachcert/model.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace reachcert {

namespace {

void require_dim(std::size_t expected, std::size_t got, const char* what) {
  if (expected != got) {
    std::ostringstream os;
    os << what << ": expected dimension " << expected << ", got " << got;
    throw DimensionError(os.str());
  }
}

std::string box_id(const BoxSet& b) {
  std::ostringstream os;
  os.precision(17);
  os << "[";
  for (std::size_t i = 0; i < b.dim(); ++i) os << (i ? "," : "") << b.lower()[i] << ":" << b.upper()[i];
  os << "]";
  return os.str();
}

}  // namespace

BoxSet::BoxSet(std::vector<double> lower, std::vector<double> upper)
    : lower_(std::move(lower)), upper_(std::move(upper)) {
  if (lower_.empty() || lower_.size() != upper_.size()) {
    throw std::invalid_argument("box bounds must be nonempty and of equal length");
  }
  for (std::size_t i = 0; i < lower_.size(); ++i) {
    if (!std::isfinite(lower_[i]) || !std::isfinite(upper_[i]) || !(lower_[i] < upper_[i])) {
      throw std::invalid_argument("box requires finite lower < upper on every axis");
    }
  }
}

bool BoxSet::contains(StateView x) const {
  for (std::size_t i = 0; i < lower_.size(); ++i) {
    if (x[i] < lower_[i] || x[i] > upper_[i]) return false;
  }
  return true;
}

bool BoxSet::contains(const BoxSet& other) const {
  if (other.dim() != dim()) return false;
  for (std::size_t i = 0; i < lower_.size(); ++i) {
    if (other.lower_[i] < lower_[i] || other.upper_[i] > upper_[i]) return false;
  }
  return true;
}

double BoxSet::volume() const {
  double v = 1.0;
  for (std::size_t i = 0; i < lower_.size(); ++i) v *= upper_[i] - lower_[i];
  return v;
}

bool box_contains(const BoxSet& set, StateView x) {
  require_dim(set.dim(), x.size(), "box_contains");
  return set.contains(x);
}

void ReachAvoidSpec::validate() const {
  if (safe.dim() == 0 || target.dim() != safe.dim()) {
    throw std::invalid_argument("safe and target sets must share a nonzero dimension");
  }
  if (!safe.contains(target)) throw std::invalid_argument("target set must lie inside the safe set");
  if (horizon < 1) throw std::invalid_argument("horizon must be at least 1");
  require_dim(safe.dim(), initial_state.size(), "initial_state");
  for (double v : initial_state) {
    if (!std::isfinite(v)) throw std::invalid_argument("initial_state must be finite");
  }
}

Region ReachAvoidSpec::classify(StateView x) const {
  if (target.contains(x)) return Region::kTarget;
  if (safe.contains(x)) return Region::kSafe;
  return Region::kOutside;
}

void LinearGaussianKernel::validate() const {
  if (dim == 0) throw std::invalid_argument("kernel dimension must be positive");
  if (dynamics.size() != dim * dim) throw std::invalid_argument("dynamics must be dim x dim");
  if (offsets.empty()) throw std::invalid_argument("at least one action is required");
  for (const auto& o : offsets) require_dim(dim, o.size(), "action offset");
  require_dim(dim, stddev.size(), "noise stddev");
  for (double s : stddev) {
    if (!(s > 0.0) || !std::isfinite(s)) throw std::invalid_argument("noise stddev must be positive");
  }
}

void LinearGaussianKernel::mean(StateView x, std::size_t action, std::span<double> out) const {
  const auto& off = offsets[action];
  for (std::size_t r = 0; r < dim; ++r) {
    double acc = off[r];
    for (std::size_t c = 0; c < dim; ++c) acc += dynamics[r * dim + c] * x[c];
    out[r] = acc;
  }
}

double LinearGaussianKernel::density(StateView y, StateView x, std::size_t action) const {
  const auto& off = offsets[action];
  double quad = 0.0;
  double norm = 1.0;
  for (std::size_t r = 0; r < dim; ++r) {
    double m = off[r];
    for (std::size_t c = 0; c < dim; ++c) m += dynamics[r * dim + c] * x[c];
    const double z = (y[r] - m) / stddev[r];
    quad += z * z;
    norm *= stddev[r] * std::sqrt(2.0 * std::numbers::pi);
  }
  return std::exp(-0.5 * quad) / norm;
}

double LinearGaussianKernel::determinant() const {
  // Gaussian elimination with partial pivoting; dim is small.
  std::vector<double> m = dynamics;
  double det = 1.0;
  for (std::size_t col = 0; col < dim; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < dim; ++r) {
      if (std::abs(m[r * dim + col]) > std::abs(m[pivot * dim + col])) pivot = r;
    }
    if (m[pivot * dim + col] == 0.0) return 0.0;
    if (pivot != col) {
      for (std::size_t c = 0; c < dim; ++c) std::swap(m[pivot * dim + c], m[col * dim + c]);
      det = -det;
    }
    const double p = m[col * dim + col];
    det *= p;
    for (std::size_t r = col + 1; r < dim; ++r) {
      const double f = m[r * dim + col] / p;
      for (std::size_t c = col; c < dim; ++c) m[r * dim + c] -= f * m[col * dim + c];
    }
  }
  return det;
}

MarkovProcess::MarkovProcess(std::size_t dim, std::vector<std::string> action_labels, Sampler sampler,
                             Density density)
    : dim_(dim), labels_(std::move(action_labels)), sampler_(std::move(sampler)), density_(std::move(density)) {
  if (dim_ == 0) throw std::invalid_argument("state dimension must be positive");
  if (labels_.empty()) throw std::invalid_argument("action list must be nonempty");
  if (!sampler_ || !density_) throw std::invalid_argument("sampler and density are required");
}

MarkovProcess::MarkovProcess(LinearGaussianKernel kernel, std::vector<std::string> action_labels)
    : dim_(kernel.dim), labels_(std::move(action_labels)) {
  kernel.validate();
  if (labels_.size() != kernel.offsets.size()) {
    throw std::invalid_argument("one label per action offset is required");
  }
  linear_ = std::move(kernel);
}

void MarkovProcess::sample(StateView x, std::size_t action, Rng& rng, std::span<double> out) const {
  if (linear_) {
    linear_->mean(x, action, out);
    for (std::size_t r = 0; r < dim_; ++r) out[r] += linear_->stddev[r] * rng.normal();
    return;
  }
  sampler_(x, action, rng, out);
}

double MarkovProcess::density(StateView y, StateView x, std::size_t action) const {
  if (linear_) return linear_->density(y, x, action);
  return density_(y, x, action);
}

void ThermalParams::validate() const {
  for (double r : {b1, b2, a_ex, c1, c2}) {
    if (!(r >= 0.0) || !std::isfinite(r)) throw std::invalid_argument("thermal rates must be nonnegative");
  }
  if (!std::isfinite(x_a)) throw std::invalid_argument("ambient temperature must be finite");
  if (!(nu > 0.0) || !std::isfinite(nu)) throw std::invalid_argument("noise level nu must be positive");
}

LinearGaussianKernel ThermalParams::kernel() const {
  validate();
  LinearGaussianKernel k;
  k.dim = 2;
  k.dynamics = {1.0 - b1 - a_ex, a_ex, a_ex, 1.0 - b2 - a_ex};
  const double cx = b1 * x_a;
  const double cy = b2 * x_a;
  for (int h1 = 0; h1 <= 1; ++h1) {
    for (int h2 = 0; h2 <= 1; ++h2) {
      k.offsets.push_back({cx + c1 * h1, cy + c2 * h2});
    }
  }
  k.stddev = {nu, nu};
  return k;
}

MarkovProcess thermal_process(const ThermalParams& params) {
  return MarkovProcess(params.kernel(), {"(OFF,OFF)", "(OFF,ON)", "(ON,OFF)", "(ON,ON)"});
}

SamplingDistribution::SamplingDistribution(std::string id, std::size_t dim, DensityFn density, SamplerFn sampler)
    : id_(std::move(id)), dim_(dim), density_(std::move(density)), sampler_(std::move(sampler)) {}

SamplingDistribution uniform_eta(const BoxSet& safe, const BoxSet& target) {
  if (safe.dim() != target.dim()) throw DimensionError("uniform_eta: safe/target dimension mismatch");
  if (!safe.contains(target)) throw std::invalid_argument("uniform_eta: target must lie inside safe set");
  const double vol = safe.volume() - target.volume();
  if (!(vol > 0.0)) throw std::invalid_argument("uniform_eta: safe \\ target has no volume");
  const double value = 1.0 / vol;

  auto density = [safe, target, value](StateView x) {
    return (safe.contains(x) && !target.contains(x)) ? value : 0.0;
  };
  auto sampler = [safe, target](Rng& rng, std::span<double> out) {
    for (int attempt = 0; attempt < kRejectionAttempts; ++attempt) {
      for (std::size_t i = 0; i < safe.dim(); ++i) out[i] = rng.uniform(safe.lower()[i], safe.upper()[i]);
      if (!target.contains(out)) return;
    }
    throw std::runtime_error("uniform_eta: rejection sampler exhausted its attempt budget");
  };
  return SamplingDistribution("uniform:" + box_id(safe) + "\\" + box_id(target), safe.dim(), density, sampler);
}

}  // namespace reachcert
