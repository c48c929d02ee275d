#include "reachcert/certify.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

namespace reachcert {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void check_seeds(const HoldoutSet& holdout, std::uint64_t fvi_seed) {
  if (holdout.seed() == fvi_seed) {
    throw IndependenceError("holdout set was drawn with the FVI seed; certificates need independent samples");
  }
}

// That^a_batch next(x_i) for every action.
void batch_values(const HoldoutSet& h, std::size_t i, int batch, const FittedFunction* next,
                  const ReachAvoidSpec& spec, std::vector<double>& buffer, std::span<double> out) {
  const std::size_t n = spec.dim();
  const std::size_t m = h.n_successors();
  buffer.resize(m * n);
  for (std::size_t a = 0; a < h.n_actions(); ++a) {
    h.successors(i, a, batch, buffer);
    double acc = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      StateView y(buffer.data() + j * n, n);
      const Region r = spec.classify(y);
      if (r == Region::kTarget) {
        acc += 1.0;
      } else if (r == Region::kSafe && next) {
        acc += (*next)(y);
      }
    }
    out[a] = acc / static_cast<double>(m);
  }
}

}  // namespace

HoldoutSet::HoldoutSet(const MarkovProcess& process, std::vector<State> base_points, std::size_t n_successors,
                       std::uint64_t seed, std::string eta_id)
    : process_(&process),
      base_points_(std::move(base_points)),
      n_successors_(n_successors),
      seed_(seed),
      eta_id_(std::move(eta_id)) {
  if (base_points_.empty()) throw std::invalid_argument("holdout needs at least one base point");
  if (n_successors_ < 1) throw std::invalid_argument("holdout needs at least one successor per batch");
}

std::size_t HoldoutSet::offset(std::size_t i, std::size_t a, int batch) const {
  return ((i * n_actions() + a) * 2 + static_cast<std::size_t>(batch)) * n_successors_ * process_->dim();
}

void HoldoutSet::successors(std::size_t i, std::size_t a, int batch, std::span<double> out) const {
  if (batch != 0 && batch != 1) throw std::out_of_range("holdout batch must be 0 or 1");
  const std::size_t len = n_successors_ * process_->dim();
  if (out.size() != len) throw DimensionError("holdout successor buffer has the wrong size");
  if (stored_) {
    std::copy_n(stored_->begin() + static_cast<long>(offset(i, a, batch)), len, out.begin());
    return;
  }
  Rng rng(seed_, StreamDomain::kHoldoutSuccessors,
          {static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(a), static_cast<std::uint64_t>(batch)});
  draw_successors(*process_, base_points_[i], a, n_successors_, rng, out);
}

void HoldoutSet::materialize() {
  if (stored_) return;
  const std::size_t len = n_successors_ * process_->dim();
  std::vector<double> all(size() * n_actions() * 2 * len);
  for (std::size_t i = 0; i < size(); ++i) {
    for (std::size_t a = 0; a < n_actions(); ++a) {
      for (int b = 0; b < 2; ++b) successors(i, a, b, std::span<double>(all.data() + offset(i, a, b), len));
    }
  }
  stored_ = std::move(all);
}

void HoldoutSet::make_twins_identical() {
  materialize();
  const std::size_t len = n_successors_ * process_->dim();
  for (std::size_t i = 0; i < size(); ++i) {
    for (std::size_t a = 0; a < n_actions(); ++a) {
      std::copy_n(stored_->begin() + static_cast<long>(offset(i, a, 0)), len,
                  stored_->begin() + static_cast<long>(offset(i, a, 1)));
    }
  }
}

HoldoutSet draw_holdout(const MarkovProcess& process, const SamplingDistribution& eta, std::size_t n_tilde,
                        std::size_t m_tilde, std::uint64_t seed) {
  if (n_tilde < 1 || m_tilde < 1) throw std::invalid_argument("draw_holdout: sizes must be >= 1");
  if (eta.dim() != process.dim()) throw DimensionError("draw_holdout: eta and process differ in dimension");
  Rng rng(seed, StreamDomain::kHoldoutBasePoints);
  std::vector<State> points(n_tilde, State(eta.dim()));
  for (auto& x : points) eta.sample(rng, x);
  return HoldoutSet(process, std::move(points), m_tilde, seed, eta.id());
}

double estimate_single_step(const HoldoutSet& holdout, const FittedFunction& value_k, const FittedFunction* next,
                            const ReachAvoidSpec& spec) {
  std::vector<double> buffer;
  std::vector<double> v(holdout.n_actions());
  double acc = 0.0;
  for (std::size_t i = 0; i < holdout.size(); ++i) {
    batch_values(holdout, i, 0, next, spec, buffer, v);
    acc += std::abs(value_k(holdout.base_points()[i]) - *std::max_element(v.begin(), v.end()));
  }
  return acc / static_cast<double>(holdout.size());
}

double estimate_bias(const HoldoutSet& holdout, const FittedFunction* next, const ReachAvoidSpec& spec) {
  std::vector<double> buffer;
  std::vector<double> v1(holdout.n_actions()), v2(holdout.n_actions());
  double acc = 0.0;
  for (std::size_t i = 0; i < holdout.size(); ++i) {
    batch_values(holdout, i, 0, next, spec, buffer, v1);
    batch_values(holdout, i, 1, next, spec, buffer, v2);
    double worst = 0.0;
    for (std::size_t a = 0; a < v1.size(); ++a) worst = std::max(worst, std::abs(v1[a] - v2[a]));
    acc += worst;
  }
  return acc / static_cast<double>(holdout.size());
}

StepEstimates estimate_all_reference(const HoldoutSet& holdout, const ValueFunctionStack& values,
                                     const ReachAvoidSpec& spec, std::uint64_t fvi_seed) {
  check_seeds(holdout, fvi_seed);
  StepEstimates out{{}, holdout.eta_id(), holdout.seed()};
  for (int k = 1; k < values.horizon(); ++k) {
    const FittedFunction* next = values.next_for(k);
    out.per_k.push_back({k, estimate_single_step(holdout, values.at(k), next, spec), estimate_bias(holdout, next, spec)});
  }
  return out;
}

StepEstimates estimate_all(const HoldoutSet& holdout, const ValueFunctionStack& values, const ReachAvoidSpec& spec,
                           std::uint64_t fvi_seed) {
  check_seeds(holdout, fvi_seed);
  if (holdout.process().dim() != spec.dim()) throw DimensionError("estimate_all: dimension mismatch");
  StepEstimates out{{}, holdout.eta_id(), holdout.seed()};
  const int steps = values.horizon() - 1;
  if (steps < 1) return out;

  const auto& config = values.at(1).config();
  const std::size_t nb = config.n_basis();
  const std::size_t n = spec.dim();
  const std::size_t m = holdout.n_successors();
  const std::size_t n_actions = holdout.n_actions();
  const auto ks = static_cast<std::size_t>(steps);

  // Column k-1 holds the weights of the step-(k+1) function.
  Eigen::MatrixXd weights = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(nb), static_cast<Eigen::Index>(ks));
  for (int k = 1; k < steps; ++k) {
    const auto& w = values.at(k + 1).weights();
    for (std::size_t j = 0; j < nb; ++j) weights(static_cast<Eigen::Index>(j), k - 1) = w[j];
  }

  const std::size_t count = holdout.size();
  std::vector<double> single(count * ks), bias(count * ks);

#pragma omp parallel
  {
    std::vector<double> buffer(m * n);
    RowMajor phi(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(nb));
    Eigen::MatrixXd raw;
    // sums[(batch * n_actions + a) * ks + k-1]
    std::vector<double> sums(2 * n_actions * ks);
    std::vector<double> row(nb);
#pragma omp for schedule(dynamic, 4)
    for (long ii = 0; ii < static_cast<long>(count); ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      for (int b = 0; b < 2; ++b) {
        for (std::size_t a = 0; a < n_actions; ++a) {
          holdout.successors(i, a, b, buffer);
          Eigen::Index safe = 0;
          double hits = 0.0;
          for (std::size_t j = 0; j < m; ++j) {
            StateView y(buffer.data() + j * n, n);
            const Region r = spec.classify(y);
            if (r == Region::kTarget) {
              hits += 1.0;
            } else if (r == Region::kSafe) {
              basis_features(config, y, row);
              for (std::size_t c = 0; c < nb; ++c) phi(safe, static_cast<Eigen::Index>(c)) = row[c];
              ++safe;
            }
          }
          raw.noalias() = phi.topRows(safe) * weights;
          double* s = sums.data() + (static_cast<std::size_t>(b) * n_actions + a) * ks;
          for (std::size_t k = 0; k < ks; ++k) {
            double acc = hits;
            for (Eigen::Index j = 0; j < safe; ++j) acc += std::clamp(raw(j, static_cast<Eigen::Index>(k)), 0.0, 1.0);
            s[k] = acc / static_cast<double>(m);
          }
        }
      }
      const StateView x = holdout.base_points()[i];
      for (std::size_t k = 0; k < ks; ++k) {
        double best = 0.0;
        double worst = 0.0;
        for (std::size_t a = 0; a < n_actions; ++a) {
          const double v1 = sums[a * ks + k];
          const double v2 = sums[(n_actions + a) * ks + k];
          best = a == 0 ? v1 : std::max(best, v1);
          worst = std::max(worst, std::abs(v1 - v2));
        }
        single[i * ks + k] = std::abs(values.at(static_cast<int>(k) + 1)(x) - best);
        bias[i * ks + k] = worst;
      }
    }
  }

  for (std::size_t k = 0; k < ks; ++k) {
    double e = 0.0, b = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
      e += single[i * ks + k];
      b += bias[i * ks + k];
    }
    out.per_k.push_back({static_cast<int>(k) + 1, e / static_cast<double>(count), b / static_cast<double>(count)});
  }
  return out;
}

double certificate_L(double B, int horizon) {
  if (!(B >= 0.0)) throw std::invalid_argument("certificate_L: B must be nonnegative");
  double sum = 0.0;
  double power = 1.0;
  for (int k = 1; k <= horizon - 1; ++k) {
    sum += power;
    power *= B;
  }
  return 2.0 * sum;
}

double default_certificate_eps(double L, std::size_t n_tilde) {
  if (n_tilde < 1) throw std::invalid_argument("default_certificate_eps: N must be >= 1");
  return L * std::sqrt(std::log(10.0) / (2.0 * static_cast<double>(n_tilde)));
}

SampleCertificate sample_certificate(const StepEstimates& estimates, const ScalingFactors& scaling, double eps,
                                     double eps0, std::size_t n_tilde, std::size_t m0, std::size_t n_actions) {
  if (estimates.eta_id != scaling.eta_id) {
    throw std::invalid_argument("scaling factors and holdout estimates were computed under different eta (" +
                                scaling.eta_id + " vs " + estimates.eta_id + ")");
  }
  if (!(scaling.B >= 0.0) || !(scaling.B0 >= 0.0)) throw std::invalid_argument("scaling factors must be >= 0");
  if (n_tilde < 1) throw std::invalid_argument("sample_certificate: N must be >= 1");
  const int horizon = static_cast<int>(estimates.per_k.size()) + 1;
  for (std::size_t j = 0; j < estimates.per_k.size(); ++j) {
    if (estimates.per_k[j].k != static_cast<int>(j) + 1) {
      throw std::invalid_argument("sample_certificate: estimates must cover k = 1..N_t-1 in order");
    }
  }

  SampleCertificate cert;
  cert.per_k = estimates.per_k;
  cert.B = scaling.B;
  cert.B0 = scaling.B0;
  cert.L = certificate_L(scaling.B, horizon);
  cert.eps = eps > 0.0 ? eps : default_certificate_eps(cert.L, n_tilde);
  cert.eps0 = eps0;
  try {
    cert.delta0 = initial_delta(m0, eps0, n_actions);
  } catch (const VacuousBoundError&) {
    cert.delta0 = 1.0;  // too few initial-state samples; flagged invalid below
  }
  cert.n_tilde = n_tilde;

  // Tail sums from k = N_t-1 down to 1: acc_k = (e_k + b_k) + B acc_{k+1}.
  const std::size_t steps = estimates.per_k.size();
  cert.delta_profile.assign(steps, 0.0);
  double acc = 0.0;
  double tail_l = 0.0;
  for (std::size_t j = steps; j-- > 0;) {
    acc = estimates.per_k[j].single_step + estimates.per_k[j].bias + scaling.B * acc;
    tail_l = 2.0 + scaling.B * tail_l;
    cert.delta_profile[j] = acc + (cert.L > 0.0 ? cert.eps * tail_l / cert.L : 0.0);
  }
  cert.Delta = scaling.B0 * acc + scaling.B0 * cert.eps + eps0;
  if (cert.L > 0.0) {
    const double n = static_cast<double>(n_tilde);
    cert.delta_Delta = std::exp(-2.0 * n * cert.eps * cert.eps / (cert.L * cert.L)) - cert.delta0;
  } else {
    cert.delta_Delta = -cert.delta0;  // exp(-inf) with no propagation steps
  }
  cert.valid = cert.delta_Delta > 0.0 && cert.delta_Delta < 1.0;
  cert.vacuous = !cert.valid || cert.Delta >= 1.0;
  return cert;
}

PolicyBound policy_performance_bound(const SampleCertificate& cert, double r_hat, double mc_estimate,
                                     double mc_halfwidth) {
  if (!(mc_halfwidth >= 0.0)) throw std::invalid_argument("half-width must be nonnegative");
  PolicyBound out;
  const double raw = cert.Delta + std::abs(r_hat - mc_estimate) + mc_halfwidth;
  out.vacuous = raw >= 1.0 || cert.vacuous;
  out.bound = std::min(1.0, raw);
  out.lower_bound = std::max(0.0, mc_estimate - mc_halfwidth);
  return out;
}

}  // namespace reachcert
