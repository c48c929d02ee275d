#include "reachcert/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "reachcert/oracle.hpp"

namespace reachcert {

namespace {

constexpr double kE = std::numbers::e;

void check_eps(double eps, const char* name) {
  if (!(eps > 0.0) || !std::isfinite(eps)) throw std::invalid_argument(std::string(name) + " must be positive");
}

void check_delta(double delta, const char* name) {
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument(std::string(name) + " must lie in (0, 1)");
}

// Cells of a resolution^n grid over A whose midpoints lie in A\K.
struct SafeCells {
  Grid grid;
  std::vector<State> points;
};

SafeCells safe_cells(const ReachAvoidSpec& spec, std::size_t resolution) {
  if (resolution < 1) throw std::invalid_argument("grid resolution must be positive");
  SafeCells cells{Grid(spec.safe, resolution), {}};
  for (std::size_t c = 0; c < cells.grid.size(); ++c) {
    State x = cells.grid.center(c);
    if (spec.classify(x) == Region::kSafe) cells.points.push_back(std::move(x));
  }
  if (cells.points.empty()) throw std::invalid_argument("grid has no cell midpoint in A\\K");
  return cells;
}

void check_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw std::domain_error(std::string(what) + ": non-finite density value");
}

// Contribution of all x-cells to the integral at y, maxing over actions.
// Helpers run inside parallel loops and never throw; callers check results.
double b_integral(const MarkovProcess& process, const SamplingDistribution& eta, const SafeCells& cells,
                  StateView y, double cell_volume) {
  double acc = 0.0;
  for (const auto& x : cells.points) {
    double best = 0.0;
    for (std::size_t a = 0; a < process.n_actions(); ++a) best = std::max(best, process.density(y, x, a));
    acc += best * eta.density(x);
  }
  return acc * cell_volume / eta.density(y);
}

// Linear-Gaussian shortcut: all actions share the normalisation, so the max
// over actions is one exp of the smallest scaled distance. means holds
// [x][a][dim] and eta_x the eta density per x.
double b_integral_gaussian(const LinearGaussianKernel& kernel, std::span<const double> means,
                           std::span<const double> eta_x, std::size_t n_actions, StateView y, double eta_y,
                           double cell_volume) {
  const std::size_t n = kernel.dim;
  double norm = 1.0;
  for (double s : kernel.stddev) norm /= s * std::sqrt(2.0 * std::numbers::pi);
  double acc = 0.0;
  for (std::size_t i = 0; i < eta_x.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < n_actions; ++a) {
      const double* m = means.data() + (i * n_actions + a) * n;
      double q = 0.0;
      for (std::size_t d = 0; d < n; ++d) {
        const double z = (y[d] - m[d]) / kernel.stddev[d];
        q += z * z;
      }
      best = std::min(best, q);
    }
    acc += std::exp(-0.5 * best) * eta_x[i];
  }
  return norm * acc * cell_volume / eta_y;
}

}  // namespace

void BoundBudget::validate() const {
  check_eps(eps0, "eps0");
  check_eps(eps1, "eps1");
  check_eps(eps2, "eps2");
  check_delta(delta0, "delta0");
  check_delta(delta1, "delta1");
  check_delta(delta2, "delta2");
  if (!(p >= 1.0)) throw std::invalid_argument("p must be >= 1");
  if (d < 1) throw std::invalid_argument("pseudo-dimension must be >= 1");
  if (n_actions < 1) throw std::invalid_argument("n_actions must be >= 1");
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
}

double hoeffding_delta_real(double m, double eps1, std::size_t n_actions, double n_points) {
  check_eps(eps1, "eps1");
  if (!(m >= 1.0) || !(n_points >= 1.0) || n_actions < 1) {
    throw std::invalid_argument("hoeffding_delta: M, N and n_actions must be >= 1");
  }
  const double log_q = std::log(2.0) - 2.0 * m * eps1 * eps1;
  if (log_q > 0.0) throw VacuousBoundError("bound vacuous: 2 exp(-2 M eps1^2) exceeds 1");
  const double q = std::exp(log_q);
  if (q >= 1.0) return 1.0;
  // 1 - (1 - q)^n = -expm1(n log1p(-q))
  return -std::expm1(static_cast<double>(n_actions) * n_points * std::log1p(-q));
}

double hoeffding_delta(std::size_t m, double eps1, std::size_t n_actions, std::size_t n_points) {
  return hoeffding_delta_real(static_cast<double>(m), eps1, n_actions, static_cast<double>(n_points));
}

double initial_delta(std::size_t m0, double eps0, std::size_t n_actions) {
  return hoeffding_delta(m0, eps0, n_actions, 1);
}

double pollard_delta(double n, double eps2, double p, std::size_t d) {
  if (!(eps2 > 0.0 && eps2 <= 1.0)) throw std::invalid_argument("pollard_delta: eps2 must lie in (0, 1]");
  if (d < 1) throw std::invalid_argument("pollard_delta: d must be >= 1");
  if (!(n >= 1.0)) throw std::invalid_argument("pollard_delta: N must be >= 1");
  if (!(p >= 1.0)) throw std::invalid_argument("pollard_delta: p must be >= 1");
  const auto dd = static_cast<double>(d);
  const double log_value = std::log(4.0 * kE * (dd + 1.0)) + dd * (std::log(32.0 * kE) - p * std::log(eps2)) -
                           n * std::pow(eps2, 2.0 * p) / 128.0;
  if (log_value >= 0.0) return 1.0;
  return std::exp(log_value);
}

SingleStepBound single_step_bound(const BoundBudget& budget) {
  return {2.0 * budget.eps1 + 2.0 * budget.eps2, budget.delta1 + budget.delta2, true};
}

double scaling_B_grid(const MarkovProcess& process, const ReachAvoidSpec& spec, const SamplingDistribution& eta,
                      std::size_t grid_resolution, bool parallel) {
  spec.validate();
  if (eta.dim() != spec.dim() || process.dim() != spec.dim()) {
    throw DimensionError("scaling_B_numeric: dimension mismatch");
  }
  const SafeCells cells = safe_cells(spec, grid_resolution);
  const double vol = cells.grid.cell_volume();
  const std::size_t count = cells.points.size();
  std::vector<double> eta_x(count);
  for (std::size_t i = 0; i < count; ++i) {
    eta_x[i] = eta.density(cells.points[i]);
    if (!(eta_x[i] > 0.0)) throw std::domain_error("scaling factor: eta vanishes on A\\K");
  }
  std::vector<double> integrals(count);
  const auto* kernel = process.linear_gaussian();
  if (!parallel) {
    for (std::size_t i = 0; i < count; ++i) integrals[i] = b_integral(process, eta, cells, cells.points[i], vol);
  } else if (!kernel) {
#pragma omp parallel for schedule(dynamic, 16)
    for (long i = 0; i < static_cast<long>(count); ++i) {
      const auto idx = static_cast<std::size_t>(i);
      integrals[idx] = b_integral(process, eta, cells, cells.points[idx], vol);
    }
  } else {
    const std::size_t n = spec.dim();
    const std::size_t n_actions = process.n_actions();
    std::vector<double> means(count * n_actions * n);
    for (std::size_t i = 0; i < count; ++i) {
      for (std::size_t a = 0; a < n_actions; ++a) {
        kernel->mean(cells.points[i], a, std::span<double>(means.data() + (i * n_actions + a) * n, n));
      }
    }
#pragma omp parallel for schedule(dynamic, 16)
    for (long i = 0; i < static_cast<long>(count); ++i) {
      const auto idx = static_cast<std::size_t>(i);
      integrals[idx] = b_integral_gaussian(*kernel, means, eta_x, n_actions, cells.points[idx], eta_x[idx], vol);
    }
  }
  double sup = 0.0;
  for (double v : integrals) {
    check_finite(v, "scaling_B_numeric");
    sup = std::max(sup, v);
  }
  return sup;
}

NumericScaling scaling_B_numeric(const MarkovProcess& process, const ReachAvoidSpec& spec,
                                 const SamplingDistribution& eta, std::size_t grid_resolution) {
  if (grid_resolution < 2) throw std::invalid_argument("scaling_B_numeric: resolution must be >= 2");
  NumericScaling out;
  out.resolution = grid_resolution;
  out.value = scaling_B_grid(process, spec, eta, grid_resolution);
  out.half_resolution_value = scaling_B_grid(process, spec, eta, grid_resolution / 2);
  out.refinement_delta = out.value - out.half_resolution_value;
  return out;
}

double scaling_B_analytic_linear_gaussian(std::span<const double> dynamics, std::size_t dim, std::size_t n_actions) {
  if (dynamics.size() != dim * dim) throw DimensionError("dynamics must be dim x dim");
  if (n_actions < 1) throw std::invalid_argument("n_actions must be >= 1");
  LinearGaussianKernel k;
  k.dim = dim;
  k.dynamics.assign(dynamics.begin(), dynamics.end());
  const double det = k.determinant();
  if (!(std::abs(det) > 1e-300)) throw std::domain_error("dynamics matrix is singular");
  return static_cast<double>(n_actions) / std::abs(det);
}

NumericScaling scaling_B0(const MarkovProcess& process, const ReachAvoidSpec& spec, const SamplingDistribution& eta,
                          StateView x0, std::size_t grid_resolution) {
  if (x0.size() != spec.dim()) throw DimensionError("scaling_B0: x0 dimension mismatch");
  auto at = [&](std::size_t res) {
    const SafeCells cells = safe_cells(spec, res);
    double sup = 0.0;
    for (const auto& x1 : cells.points) {
      const double e = eta.density(x1);
      if (!(e > 0.0)) throw std::domain_error("scaling_B0: eta vanishes on A\\K");
      for (std::size_t a = 0; a < process.n_actions(); ++a) {
        const double t = process.density(x1, x0, a);
        check_finite(t, "scaling_B0");
        sup = std::max(sup, t / e);
      }
    }
    return sup;
  };
  if (grid_resolution < 2) throw std::invalid_argument("scaling_B0: resolution must be >= 2");
  NumericScaling out;
  out.resolution = grid_resolution;
  out.value = at(grid_resolution);
  out.half_resolution_value = at(grid_resolution / 2);
  out.refinement_delta = out.value - out.half_resolution_value;
  return out;
}

double propagation_weight(double B, double p, int horizon) {
  if (!(B >= 0.0) || !(p >= 1.0)) throw std::invalid_argument("propagation_weight: need B >= 0 and p >= 1");
  double sum = 0.0;
  for (int k = 1; k <= horizon - 1; ++k) sum += std::pow(B, static_cast<double>(k - 1) / p);
  return sum;
}

AprioriCertificate global_apriori_certificate(const BoundBudget& budget, double B, double B0) {
  budget.validate();
  if (!(B >= 0.0) || !(B0 >= 0.0)) throw std::invalid_argument("scaling factors must be nonnegative");
  AprioriCertificate cert;
  cert.B = B;
  cert.B0 = B0;
  const double weight = propagation_weight(B, budget.p, budget.horizon);
  cert.bias_coefficient = B0 * weight;
  cert.delta_quantified = B0 * weight * (2.0 * budget.eps1 + 2.0 * budget.eps2) + budget.eps0;

  double d0 = budget.delta0, d1 = budget.delta1, d2 = budget.delta2;
  if (budget.has_sample_sizes()) {
    auto vacuous_to_one = [](auto f) {
      try {
        return f();
      } catch (const VacuousBoundError&) {
        return 1.0;
      }
    };
    d0 = vacuous_to_one([&] { return initial_delta(budget.M0, budget.eps0, budget.n_actions); });
    d1 = vacuous_to_one([&] { return hoeffding_delta(budget.M, budget.eps1, budget.n_actions, budget.N); });
    d2 = budget.eps2 <= 1.0 ? pollard_delta(static_cast<double>(budget.N), budget.eps2, budget.p, budget.d) : 1.0;
  }
  const double steps = static_cast<double>(budget.horizon - 1);
  cert.delta_total = steps * d1 + steps * d2 + d0;
  cert.vacuous = cert.delta_total >= 1.0 || cert.delta_quantified >= 1.0;
  return cert;
}

SampleSizes plan_sample_sizes(double eps0, double eps1, double eps2, double delta0, double delta1, double delta2,
                              std::size_t d, double p, std::size_t n_actions) {
  check_eps(eps0, "eps0");
  check_eps(eps1, "eps1");
  if (!(eps2 > 0.0 && eps2 <= 1.0)) throw std::invalid_argument("eps2 must lie in (0, 1]");
  check_delta(delta0, "delta0");
  check_delta(delta1, "delta1");
  check_delta(delta2, "delta2");
  if (d < 1) throw std::invalid_argument("pseudo-dimension must be >= 1");
  if (!(p >= 1.0)) throw std::invalid_argument("p must be >= 1");
  if (n_actions < 1) throw std::invalid_argument("n_actions must be >= 1");

  using ld = long double;
  const ld e = std::numbers::e_v<long double>;
  const ld dd = static_cast<ld>(d);
  const ld pp = static_cast<ld>(p);
  const ld scale = std::pow(1.0L / static_cast<ld>(eps2), 2.0L * pp);
  const ld n_real = 128.0L * (std::log(4.0L * e * (dd + 1.0L)) + dd * std::log(32.0L * e)) * scale +
                    128.0L * dd * pp * scale * std::log(1.0L / static_cast<ld>(eps2)) +
                    128.0L * scale * std::log(1.0L / static_cast<ld>(delta2));
  const ld n = std::ceil(n_real);
  const ld log_actions = std::log(2.0L * static_cast<ld>(n_actions));
  const ld inv1 = 1.0L / static_cast<ld>(eps1);
  const ld m = std::ceil(0.5L * inv1 * inv1 * (log_actions + std::log(1.0L / static_cast<ld>(delta1)) + std::log(n)));
  const ld inv0 = 1.0L / static_cast<ld>(eps0);
  const ld m0 = std::ceil(0.5L * inv0 * inv0 * (log_actions + std::log(1.0L / static_cast<ld>(delta0))));
  return {static_cast<double>(n), static_cast<double>(m), static_cast<double>(m0)};
}

const char* to_string(ScalingMethod m) { return m == ScalingMethod::kNumeric ? "numeric" : "analytic"; }

}  // namespace reachcert
