#include "reachcert/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>

namespace reachcert {

Grid::Grid(BoxSet region, std::vector<std::size_t> resolution)
    : region_(std::move(region)), resolution_(std::move(resolution)) {
  if (resolution_.size() != region_.dim()) throw DimensionError("grid resolution must give one count per axis");
  size_ = 1;
  cell_volume_ = 1.0;
  for (std::size_t d = 0; d < resolution_.size(); ++d) {
    if (resolution_[d] < 1) throw std::invalid_argument("grid resolution must be positive");
    step_.push_back((region_.upper()[d] - region_.lower()[d]) / static_cast<double>(resolution_[d]));
    size_ *= resolution_[d];
    cell_volume_ *= step_.back();
  }
}

Grid::Grid(BoxSet region, std::size_t per_axis)
    : Grid(region, std::vector<std::size_t>(region.dim(), per_axis)) {}

double Grid::axis_center(std::size_t axis, std::size_t i) const {
  return region_.lower()[axis] + (static_cast<double>(i) + 0.5) * step_[axis];
}

void Grid::center(std::size_t cell, std::span<double> out) const {
  for (std::size_t d = dim(); d-- > 0;) {
    const std::size_t i = cell % resolution_[d];
    cell /= resolution_[d];
    out[d] = axis_center(d, i);
  }
}

State Grid::center(std::size_t cell) const {
  State x(dim());
  center(cell, x);
  return x;
}

std::optional<std::size_t> Grid::locate(StateView x) const {
  if (x.size() != dim()) throw DimensionError("grid locate: dimension mismatch");
  if (!region_.contains(x)) return std::nullopt;
  std::size_t cell = 0;
  for (std::size_t d = 0; d < dim(); ++d) {
    auto i = static_cast<std::size_t>(std::floor((x[d] - region_.lower()[d]) / step_[d]));
    i = std::min(i, resolution_[d] - 1);
    cell = cell * resolution_[d] + i;
  }
  return cell;
}

Policy Policy::constant(int horizon, std::size_t action) {
  return Policy(std::vector<Map>(static_cast<std::size_t>(horizon), [action](StateView) { return action; }));
}

double GridValue::lookup(int k, StateView x) const {
  const auto cell = grid.locate(x);
  if (!cell) return 0.0;
  return values.at(static_cast<std::size_t>(k))[*cell];
}

namespace {

constexpr double kMassTolerance = 0.005;

struct Setup {
  Grid grid;
  std::vector<Region> regions;
  std::vector<double> centers;  // flattened
  bool separable;
};

Setup make_setup(const MarkovProcess& process, const ReachAvoidSpec& spec, std::size_t resolution,
                 QuadratureKernel kernel) {
  spec.validate();
  if (process.dim() != spec.dim()) throw DimensionError("process and reach-avoid spec differ in dimension");
  if (resolution < 2) throw std::invalid_argument("oracle grid resolution must be at least 2 per axis");
  Grid grid(spec.safe, resolution);
  std::vector<Region> regions(grid.size());
  std::vector<double> centers(grid.size() * grid.dim());
  for (std::size_t c = 0; c < grid.size(); ++c) {
    std::span<double> x(centers.data() + c * grid.dim(), grid.dim());
    grid.center(c, x);
    regions[c] = spec.classify(x);
  }
  bool separable = kernels::separable_supported(process, grid);
  if (kernel == QuadratureKernel::kReference) separable = false;
  if (kernel == QuadratureKernel::kSeparable && !separable) {
    throw std::invalid_argument("separable quadrature requires a 2-D linear-Gaussian process");
  }
  return Setup{std::move(grid), std::move(regions), std::move(centers), separable};
}

void integrate(const MarkovProcess& process, const Setup& s, std::span<const double> field,
               const kernels::QueryBatch& q, std::span<double> out) {
  if (s.separable) {
    kernels::integrate_separable(*process.linear_gaussian(), s.grid, field, q, out);
  } else {
    kernels::integrate_reference(process, s.grid, field, q, out);
  }
}

std::vector<double> make_field(const Setup& s, const std::vector<double>& next) {
  std::vector<double> field(s.grid.size());
  for (std::size_t c = 0; c < field.size(); ++c) {
    field[c] = s.regions[c] == Region::kTarget ? 1.0 : next[c];
  }
  return field;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

OracleDiagnostics diagnose(const MarkovProcess& process, const ReachAvoidSpec& spec, const Setup& s) {
  OracleDiagnostics diag;
  const std::size_t n = s.grid.dim();
  State xc(n);
  for (std::size_t d = 0; d < n; ++d) xc[d] = 0.5 * (spec.safe.lower()[d] + spec.safe.upper()[d]);

  kernels::QueryBatch q;
  q.dim = n;
  for (std::size_t a = 0; a < process.n_actions(); ++a) {
    q.states.insert(q.states.end(), xc.begin(), xc.end());
    q.actions.push_back(a);
  }
  std::vector<double> ones(s.grid.size(), 1.0);
  std::vector<double> mass(q.size());
  integrate(process, s, ones, q, mass);

  std::vector<double> exact(q.size());
  if (const auto* lg = process.linear_gaussian()) {
    State m(n);
    for (std::size_t a = 0; a < q.size(); ++a) {
      lg->mean(xc, a, m);
      double p = 1.0;
      for (std::size_t d = 0; d < n; ++d) {
        p *= normal_cdf((spec.safe.upper()[d] - m[d]) / lg->stddev[d]) -
             normal_cdf((spec.safe.lower()[d] - m[d]) / lg->stddev[d]);
      }
      exact[a] = p;
    }
  } else {
    std::vector<std::size_t> fine = s.grid.resolution();
    for (auto& r : fine) r *= 4;
    Grid refined(spec.safe, fine);
    std::vector<double> ones_fine(refined.size(), 1.0);
    kernels::integrate_reference(process, refined, ones_fine, q, exact);
  }

  double worst = 1.0;
  for (std::size_t a = 0; a < q.size(); ++a) {
    if (!(exact[a] > 0.0)) continue;
    const double ratio = mass[a] / exact[a];
    if (std::abs(ratio - 1.0) > std::abs(worst - 1.0)) worst = ratio;
  }
  diag.quadrature_mass_ratio = worst;
  if (!(std::abs(worst - 1.0) <= kMassTolerance)) {
    std::ostringstream os;
    os << "coarse grid: quadrature captures " << worst << " of the kernel mass over the safe set";
    diag.warnings.push_back(os.str());
  }
  return diag;
}

kernels::QueryBatch initial_queries(const ReachAvoidSpec& spec, std::size_t n_actions) {
  kernels::QueryBatch q;
  q.dim = spec.dim();
  for (std::size_t a = 0; a < n_actions; ++a) {
    q.states.insert(q.states.end(), spec.initial_state.begin(), spec.initial_state.end());
    q.actions.push_back(a);
  }
  return q;
}

GridValue empty_stack(const Setup& s, int horizon) {
  GridValue gv{s.grid, s.regions, {}};
  gv.values.assign(static_cast<std::size_t>(horizon) + 1, std::vector<double>(s.grid.size(), 0.0));
  return gv;
}

std::size_t argmax_lowest(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t a = 1; a < v.size(); ++a) {
    if (v[a] > v[best]) best = a;
  }
  return best;
}

}  // namespace

OracleResult dp_optimal(const MarkovProcess& process, const ReachAvoidSpec& spec, std::size_t grid_resolution,
                        QuadratureKernel kernel) {
  const Setup s = make_setup(process, spec, grid_resolution, kernel);
  const std::size_t n_actions = process.n_actions();
  const std::size_t cells = s.grid.size();
  OracleResult result{empty_stack(s, spec.horizon), {}, 0.0, 0, diagnose(process, spec, s)};

  kernels::QueryBatch q;
  q.dim = s.grid.dim();
  q.states.reserve(cells * n_actions * q.dim);
  for (std::size_t c = 0; c < cells; ++c) {
    for (std::size_t a = 0; a < n_actions; ++a) {
      q.states.insert(q.states.end(), s.centers.begin() + static_cast<long>(c * q.dim),
                      s.centers.begin() + static_cast<long>((c + 1) * q.dim));
      q.actions.push_back(a);
    }
  }

  auto tables = std::make_shared<std::vector<std::vector<std::size_t>>>(
      static_cast<std::size_t>(spec.horizon), std::vector<std::size_t>(cells, 0));
  std::vector<double> out(q.size());
  for (int k = spec.horizon - 1; k >= 0; --k) {
    const auto field = make_field(s, result.value.values[static_cast<std::size_t>(k) + 1]);
    integrate(process, s, field, q, out);
    auto& values = result.value.values[static_cast<std::size_t>(k)];
    auto& table = (*tables)[static_cast<std::size_t>(k)];
    for (std::size_t c = 0; c < cells; ++c) {
      std::span<const double> v(out.data() + c * n_actions, n_actions);
      const std::size_t best = argmax_lowest(v);
      table[c] = best;
      values[c] = std::clamp(v[best], 0.0, 1.0);
    }
  }

  std::vector<Policy::Map> maps;
  const auto grid = std::make_shared<Grid>(s.grid);
  for (int k = 0; k < spec.horizon; ++k) {
    maps.push_back([tables, grid, spec, k](StateView x) -> std::size_t {
      if (spec.classify(x) != Region::kSafe) return 0;
      return (*tables)[static_cast<std::size_t>(k)][*grid->locate(x)];
    });
  }
  result.policy = Policy(std::move(maps));

  switch (spec.classify(spec.initial_state)) {
    case Region::kTarget:
      result.r_star = 1.0;
      break;
    case Region::kOutside:
      result.r_star = 0.0;
      break;
    case Region::kSafe: {
      const auto field = make_field(s, result.value.values[1]);
      const auto q0 = initial_queries(spec, n_actions);
      std::vector<double> v(n_actions);
      integrate(process, s, field, q0, v);
      result.initial_action = argmax_lowest(v);
      result.r_star = std::clamp(v[result.initial_action], 0.0, 1.0);
      break;
    }
  }
  return result;
}

FixedPolicyResult dp_fixed_policy(const MarkovProcess& process, const ReachAvoidSpec& spec, const Policy& policy,
                                  std::size_t grid_resolution, QuadratureKernel kernel) {
  const Setup s = make_setup(process, spec, grid_resolution, kernel);
  if (policy.horizon() < spec.horizon) throw std::invalid_argument("policy is shorter than the horizon");
  const std::size_t cells = s.grid.size();
  const std::size_t n = s.grid.dim();
  FixedPolicyResult result{empty_stack(s, spec.horizon), 0.0, diagnose(process, spec, s)};

  kernels::QueryBatch q;
  q.dim = n;
  q.states = s.centers;
  q.actions.resize(cells);
  std::vector<double> out(cells);
  for (int k = spec.horizon - 1; k >= 0; --k) {
    for (std::size_t c = 0; c < cells; ++c) {
      const std::size_t a = policy.action(k, StateView(s.centers.data() + c * n, n));
      if (a >= process.n_actions()) throw std::out_of_range("policy returned an invalid action index");
      q.actions[c] = a;
    }
    const auto field = make_field(s, result.value.values[static_cast<std::size_t>(k) + 1]);
    integrate(process, s, field, q, out);
    auto& values = result.value.values[static_cast<std::size_t>(k)];
    for (std::size_t c = 0; c < cells; ++c) values[c] = std::clamp(out[c], 0.0, 1.0);
  }

  switch (spec.classify(spec.initial_state)) {
    case Region::kTarget:
      result.r_mu = 1.0;
      break;
    case Region::kOutside:
      result.r_mu = 0.0;
      break;
    case Region::kSafe: {
      kernels::QueryBatch q0;
      q0.dim = n;
      q0.states = spec.initial_state;
      q0.actions = {policy.action(0, spec.initial_state)};
      const auto field = make_field(s, result.value.values[1]);
      double v = 0.0;
      integrate(process, s, field, q0, std::span<double>(&v, 1));
      result.r_mu = std::clamp(v, 0.0, 1.0);
      break;
    }
  }
  return result;
}

double quadrature_operator(const MarkovProcess& process, const ReachAvoidSpec& spec,
                           const std::function<double(StateView)>& next_value, StateView x, std::size_t action,
                           std::size_t grid_resolution) {
  const Setup s = make_setup(process, spec, grid_resolution, QuadratureKernel::kAuto);
  std::vector<double> field(s.grid.size());
  const std::size_t n = s.grid.dim();
  for (std::size_t c = 0; c < field.size(); ++c) {
    if (s.regions[c] == Region::kTarget) {
      field[c] = 1.0;
    } else {
      field[c] = next_value(StateView(s.centers.data() + c * n, n));
    }
  }
  kernels::QueryBatch q;
  q.dim = n;
  q.states.assign(x.begin(), x.end());
  q.actions = {action};
  double v = 0.0;
  integrate(process, s, field, q, std::span<double>(&v, 1));
  return v;
}

MonteCarloEstimate monte_carlo_reach_avoid(const MarkovProcess& process, const ReachAvoidSpec& spec,
                                           const Policy& policy, std::size_t n_runs, std::uint64_t seed) {
  spec.validate();
  if (n_runs < 1) throw std::invalid_argument("monte_carlo_reach_avoid: n_runs must be >= 1");
  if (policy.horizon() < spec.horizon) throw std::invalid_argument("policy is shorter than the horizon");
  MonteCarloEstimate est;
  est.runs = n_runs;

  const Region start = spec.classify(spec.initial_state);
  if (start != Region::kSafe) {
    est.successes = start == Region::kTarget ? n_runs : 0;
    est.estimate = start == Region::kTarget ? 1.0 : 0.0;
    return est;
  }

  std::vector<unsigned char> success(n_runs, 0);
  const auto runs = static_cast<long>(n_runs);
#pragma omp parallel
  {
    State x(spec.dim());
    State next(spec.dim());
#pragma omp for schedule(static)
    for (long r = 0; r < runs; ++r) {
      Rng rng(seed, StreamDomain::kMonteCarlo, {static_cast<std::uint64_t>(r)});
      x = spec.initial_state;
      for (int k = 0; k < spec.horizon; ++k) {
        process.sample(x, policy.action(k, x), rng, next);
        const Region reg = spec.classify(next);
        if (reg == Region::kTarget) {
          success[static_cast<std::size_t>(r)] = 1;
          break;
        }
        if (reg == Region::kOutside) break;
        std::swap(x, next);
      }
    }
  }
  for (auto s : success) est.successes += s;
  est.estimate = static_cast<double>(est.successes) / static_cast<double>(n_runs);
  est.half_width_95 = 1.96 * std::sqrt(est.estimate * (1.0 - est.estimate) / static_cast<double>(n_runs));
  return est;
}

}  // namespace reachcert
