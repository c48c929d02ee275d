#include "reachcert/fvi.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace reachcert {

void FviConfig::validate() const {
  if (n_base < 1) throw std::invalid_argument("fvi: N must be >= 1");
  if (n_successors < 1) throw std::invalid_argument("fvi: M must be >= 1");
  if (n_initial < 1) throw std::invalid_argument("fvi: M0 must be >= 1");
  if (!(p >= 1.0)) throw std::invalid_argument("fvi: p must be >= 1");
  if (!rbf) throw std::invalid_argument("fvi: missing RBF class");
  rbf->validate();
}

std::span<const double> SampleSet::block(std::size_t i) const {
  const std::size_t stride = n_actions * n_successors * dim;
  return {successors.data() + i * stride, stride};
}

StateView SampleSet::successor(std::size_t i, std::size_t a, std::size_t j) const {
  return {successors.data() + ((i * n_actions + a) * n_successors + j) * dim, dim};
}

void draw_successors(const MarkovProcess& process, StateView x, std::size_t action, std::size_t count, Rng& rng,
                     std::span<double> out) {
  const std::size_t n = process.dim();
  for (std::size_t j = 0; j < count; ++j) process.sample(x, action, rng, out.subspan(j * n, n));
}

namespace {

std::vector<State> draw_base_points(const SamplingDistribution& eta, std::size_t count, Rng& rng) {
  std::vector<State> points(count, State(eta.dim()));
  for (auto& x : points) eta.sample(rng, x);
  return points;
}

// Fills the [a][j][dim] block of base point x.
void draw_block(const MarkovProcess& process, StateView x, std::size_t m, std::uint64_t seed, StreamDomain domain,
                std::uint64_t k, std::uint64_t i, std::span<double> out) {
  const std::size_t per_action = m * process.dim();
  for (std::size_t a = 0; a < process.n_actions(); ++a) {
    Rng rng(seed, domain, {k, i, static_cast<std::uint64_t>(a)});
    draw_successors(process, x, a, m, rng, out.subspan(a * per_action, per_action));
  }
}

OperatorValue best_of(std::span<const double> v) {
  OperatorValue out{v[0], 0};
  for (std::size_t a = 1; a < v.size(); ++a) {
    if (v[a] > out.value) out = {v[a], a};
  }
  return out;
}

// Labels `points` with the empirical-operator argmax, processing points in
// parallel. Successor streams are keyed by (domain, k, i, a).
void label_points(const MarkovProcess& process, const ReachAvoidSpec& spec, const std::vector<State>& points,
                  std::size_t m, const FittedFunction* next, std::uint64_t seed, StreamDomain domain, std::uint64_t k,
                  std::vector<double>& values, std::vector<std::size_t>& actions) {
  const std::size_t n_actions = process.n_actions();
  values.assign(points.size(), 0.0);
  actions.assign(points.size(), 0);
  const auto count = static_cast<long>(points.size());
#pragma omp parallel
  {
    std::vector<double> block(n_actions * m * process.dim());
#pragma omp for schedule(dynamic, 8)
    for (long i = 0; i < count; ++i) {
      const auto idx = static_cast<std::size_t>(i);
      draw_block(process, points[idx], m, seed, domain, k, idx, block);
      const auto best = empirical_operator(block, n_actions, m, next, spec);
      values[idx] = best.value;
      actions[idx] = best.action;
    }
  }
}

}  // namespace

SampleSet generate_samples(const MarkovProcess& process, const SamplingDistribution& eta, std::size_t n_base,
                           std::size_t n_successors, std::uint64_t seed, int k) {
  if (n_base < 1 || n_successors < 1) throw std::invalid_argument("generate_samples: N and M must be >= 1");
  if (eta.dim() != process.dim()) throw DimensionError("generate_samples: eta and process differ in dimension");
  SampleSet s;
  s.dim = process.dim();
  s.n_actions = process.n_actions();
  s.n_successors = n_successors;
  Rng base_rng(seed, StreamDomain::kFviBasePoints, {static_cast<std::uint64_t>(k)});
  s.base_points = draw_base_points(eta, n_base, base_rng);
  const std::size_t stride = s.n_actions * n_successors * s.dim;
  s.successors.resize(n_base * stride);
  for (std::size_t i = 0; i < n_base; ++i) {
    draw_block(process, s.base_points[i], n_successors, seed, StreamDomain::kFviSuccessors,
               static_cast<std::uint64_t>(k), i, std::span<double>(s.successors.data() + i * stride, stride));
  }
  return s;
}

void empirical_action_values(std::span<const double> block, std::size_t n_actions, std::size_t n_successors,
                             const FittedFunction* next, const ReachAvoidSpec& spec, std::span<double> out) {
  const std::size_t n = spec.dim();
  if (n_successors < 1) throw std::invalid_argument("empirical operator needs at least one successor");
  if (block.size() != n_actions * n_successors * n) throw DimensionError("empirical operator: block size mismatch");
  for (std::size_t a = 0; a < n_actions; ++a) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n_successors; ++j) {
      StateView y(block.data() + (a * n_successors + j) * n, n);
      switch (spec.classify(y)) {
        case Region::kTarget:
          acc += 1.0;
          break;
        case Region::kSafe:
          if (next) acc += (*next)(y);
          break;
        case Region::kOutside:
          break;
      }
    }
    out[a] = acc / static_cast<double>(n_successors);
  }
}

OperatorValue empirical_operator(std::span<const double> block, std::size_t n_actions, std::size_t n_successors,
                                 const FittedFunction* next, const ReachAvoidSpec& spec) {
  if (n_actions < 1) throw std::invalid_argument("empirical operator needs at least one action");
  double small[16];
  std::vector<double> big;
  std::span<double> v(small, n_actions);
  if (n_actions > 16) {
    big.resize(n_actions);
    v = big;
  }
  empirical_action_values(block, n_actions, n_successors, next, spec, v);
  auto best = best_of(v);
  best.value = std::clamp(best.value, 0.0, 1.0);
  return best;
}

ValueFunctionStack::ValueFunctionStack(int horizon, std::shared_ptr<const RbfClassConfig> config) {
  if (horizon < 1) throw std::invalid_argument("value stack horizon must be >= 1");
  functions_.assign(static_cast<std::size_t>(horizon), FittedFunction::zero(config));
}

const FittedFunction& ValueFunctionStack::at(int k) const {
  if (k < 1 || k > horizon()) throw std::out_of_range("value stack index outside 1..N_t");
  return functions_[static_cast<std::size_t>(k) - 1];
}

void ValueFunctionStack::set(int k, FittedFunction f) {
  if (k < 1 || k >= horizon()) throw std::out_of_range("only steps 1..N_t-1 are fitted");
  functions_[static_cast<std::size_t>(k) - 1] = std::move(f);
}

const FittedFunction* ValueFunctionStack::next_for(int k) const {
  if (k + 1 >= horizon()) return nullptr;
  return &at(k + 1);
}

FviResult fit_value_stack(const MarkovProcess& process, const ReachAvoidSpec& spec, const SamplingDistribution& eta,
                          const FviConfig& config) {
  config.validate();
  spec.validate();
  if (process.dim() != spec.dim() || eta.dim() != spec.dim() || config.rbf->dim() != spec.dim()) {
    throw DimensionError("fvi: process, eta, class and spec differ in dimension");
  }
  FviResult result;
  result.values = ValueFunctionStack(spec.horizon, config.rbf);
  result.fit_residuals.assign(static_cast<std::size_t>(spec.horizon), 0.0);
  result.labels.resize(static_cast<std::size_t>(spec.horizon));

  std::vector<double> targets;
  for (int k = spec.horizon - 1; k >= 1; --k) {
    const auto uk = static_cast<std::uint64_t>(k);
    Rng base_rng(config.seed, StreamDomain::kFviBasePoints, {uk});
    auto points = draw_base_points(eta, config.n_base, base_rng);
    auto& labels = result.labels[static_cast<std::size_t>(k)];
    label_points(process, spec, points, config.n_successors, result.values.next_for(k), config.seed,
                 StreamDomain::kFviSuccessors, uk, targets, labels.actions);
    auto f = fit(config.rbf, points, targets, config.p);
    result.fit_residuals[static_cast<std::size_t>(k)] = fit_residual_rms(f, points, targets);
    result.values.set(k, std::move(f));
    labels.base_points = std::move(points);
  }
  return result;
}

OperatorValue estimate_initial_value(const MarkovProcess& process, const ReachAvoidSpec& spec,
                                     const ValueFunctionStack& values, StateView x, std::size_t n_initial,
                                     std::uint64_t seed, std::uint64_t slot) {
  if (n_initial < 1) throw std::invalid_argument("fvi: M0 must be >= 1");
  std::vector<double> block(process.n_actions() * n_initial * process.dim());
  draw_block(process, x, n_initial, seed, StreamDomain::kFviInitial, slot, 0, block);
  return empirical_operator(block, process.n_actions(), n_initial, values.next_for(0), spec);
}

FviResult run_fvi(const MarkovProcess& process, const ReachAvoidSpec& spec, const SamplingDistribution& eta,
                  const FviConfig& config) {
  config.validate();
  spec.validate();
  const Region start = spec.classify(spec.initial_state);
  if (start != Region::kSafe) {
    FviResult result;
    result.short_circuit = true;
    result.r_hat = start == Region::kTarget ? 1.0 : 0.0;
    return result;
  }
  FviResult result = fit_value_stack(process, spec, eta, config);
  const auto w0 = estimate_initial_value(process, spec, result.values, spec.initial_state, config.n_initial,
                                         config.seed);
  result.w0_hat = w0.value;
  result.initial_action = w0.action;
  result.r_hat = w0.value;
  return result;
}

std::vector<IterationLabels> label_iterations(const MarkovProcess& process, const ReachAvoidSpec& spec,
                                              const SamplingDistribution& eta, const ValueFunctionStack& values,
                                              const FviConfig& config) {
  config.validate();
  if (values.horizon() != spec.horizon) throw std::invalid_argument("label_iterations: horizon mismatch");
  std::vector<IterationLabels> labels(static_cast<std::size_t>(spec.horizon));
  std::vector<double> unused;
  for (int k = spec.horizon - 1; k >= 1; --k) {
    const auto uk = static_cast<std::uint64_t>(k);
    Rng base_rng(config.seed, StreamDomain::kFviBasePoints, {uk});
    auto& l = labels[static_cast<std::size_t>(k)];
    l.base_points = draw_base_points(eta, config.n_base, base_rng);
    label_points(process, spec, l.base_points, config.n_successors, values.next_for(k), config.seed,
                 StreamDomain::kFviSuccessors, uk, unused, l.actions);
  }
  return labels;
}

std::size_t nearest_label(const IterationLabels& labels, StateView x) {
  if (labels.base_points.empty()) throw std::invalid_argument("nearest_label: no prototypes");
  std::size_t best = 0;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < labels.base_points.size(); ++i) {
    const auto& p = labels.base_points[i];
    double d2 = 0.0;
    for (std::size_t d = 0; d < p.size(); ++d) {
      const double diff = p[d] - x[d];
      d2 += diff * diff;
    }
    if (d2 < best_d2) {
      best_d2 = d2;
      best = i;
    }
  }
  return labels.actions[best];
}

Policy extract_policy(const MarkovProcess& process, const ReachAvoidSpec& spec, const SamplingDistribution& eta,
                      const FviResult& result, const FviConfig& config) {
  if (result.short_circuit) return Policy::constant(spec.horizon, 0);
  if (result.values.horizon() != spec.horizon) throw std::invalid_argument("extract_policy: horizon mismatch");

  auto tables = std::make_shared<std::vector<IterationLabels>>(result.labels);
  tables->resize(static_cast<std::size_t>(spec.horizon));

  auto& step0 = (*tables)[0];
  Rng base_rng(config.seed, StreamDomain::kPolicyLabels, {0});
  step0.base_points = draw_base_points(eta, config.n_base, base_rng);
  std::vector<double> unused;
  label_points(process, spec, step0.base_points, config.n_successors, result.values.next_for(0), config.seed,
               StreamDomain::kPolicyLabels, 1, unused, step0.actions);

  std::vector<Policy::Map> maps;
  for (int k = 0; k < spec.horizon; ++k) {
    maps.push_back([tables, spec, k](StateView x) -> std::size_t {
      if (spec.classify(x) != Region::kSafe) return 0;
      return nearest_label((*tables)[static_cast<std::size_t>(k)], x);
    });
  }
  return Policy(std::move(maps));
}

}  // namespace reachcert
