#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "doctest.h"
#include "reachcert/bounds.hpp"

using namespace reachcert;

namespace {

const BoxSet kSafe({17.5, 17.5}, {22.0, 22.0});
const BoxSet kTarget({19.25, 19.25}, {20.25, 20.25});

ReachAvoidSpec benchmark_spec() { return {kSafe, kTarget, 10, {19.0, 19.0}}; }

const MarkovProcess& thermal() {
  static const MarkovProcess p = thermal_process(ThermalParams{});
  return p;
}

const SamplingDistribution& eta() {
  static const SamplingDistribution e = uniform_eta(kSafe, kTarget);
  return e;
}

BoundBudget budget(int horizon = 10) {
  BoundBudget b;
  b.eps0 = 0.05;
  b.eps1 = 0.1;
  b.eps2 = 0.1;
  b.delta0 = b.delta1 = b.delta2 = 0.001;
  b.p = 2.0;
  b.d = 50;
  b.n_actions = 4;
  b.horizon = horizon;
  return b;
}

}  // namespace

TEST_CASE("single-event Hoeffding") {
  // 2 exp(-20), evaluated with 50-digit arithmetic.
  CHECK(hoeffding_delta(1000, 0.1, 1, 1) == doctest::Approx(4.1223072448771156e-9).epsilon(1e-12));
  CHECK(hoeffding_delta(100, 0.1, 1, 1) == doctest::Approx(2.0 * std::exp(-2.0)).epsilon(1e-13));
}

TEST_CASE("Hoeffding over all actions and base points") {
  // 1 - (1 - 2 exp(-20))^2400 to 50 digits: 9.8934884672173549e-6.
  CHECK(hoeffding_delta(1000, 0.1, 4, 600) == doctest::Approx(9.8934884672173549e-6).epsilon(1e-10));
}

TEST_CASE("vacuous Hoeffding precondition") {
  CHECK_THROWS_AS(hoeffding_delta(10, 0.1, 4, 600), VacuousBoundError);
  CHECK_THROWS_AS(hoeffding_delta(34, 0.1, 1, 1), VacuousBoundError);
  CHECK_NOTHROW(hoeffding_delta(35, 0.1, 1, 1));
}

TEST_CASE("Hoeffding monotonicity") {
  double prev = 1.0;
  for (std::size_t m = 50; m <= 5000; m += 50) {
    const double d = hoeffding_delta(m, 0.1, 4, 600);
    CHECK(d <= prev);
    prev = d;
  }
  prev = 1.0;
  for (double eps = 0.06; eps <= 0.5; eps += 0.01) {
    const double d = hoeffding_delta(1000, eps, 4, 600);
    CHECK(d <= prev);
    prev = d;
  }
}

TEST_CASE("Pollard bound cap and monotonicity") {
  CHECK(pollard_delta(1.0, 0.1, 2.0, 50) == 1.0);
  CHECK(pollard_delta(1e4, 0.5, 2.0, 50) == 1.0);
  double prev = 1.0;
  bool strict_seen = false;
  for (double n = 1e5; n <= 1e12; n *= 1.7) {
    const double d = pollard_delta(n, 0.5, 2.0, 50);
    CHECK(d <= prev);
    if (d < prev) strict_seen = true;
    if (prev < 1.0 && prev > 0.0) CHECK(d < prev);
    prev = d;
  }
  CHECK(strict_seen);
  prev = 1.0;
  for (double eps = 0.3; eps <= 1.0; eps += 0.05) {
    const double d = pollard_delta(1e7, eps, 2.0, 50);
    CHECK(d <= prev);
    prev = d;
  }
  CHECK_THROWS(pollard_delta(100.0, 1.5, 2.0, 50));
  CHECK_THROWS(pollard_delta(100.0, 0.1, 2.0, 0));
}

TEST_CASE("bound formulas stay finite at extreme sizes") {
  for (std::size_t d : {1u, 50u, 1000u, 10000u}) {
    for (double n : {1.0, 1e3, 1e6, 1e9, 1e12}) {
      const double v = pollard_delta(n, 0.1, 2.0, d);
      CHECK(std::isfinite(v));
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
  CHECK(std::isfinite(hoeffding_delta_real(1e12, 0.1, 4, 1e12)));
  CHECK(hoeffding_delta_real(1e6, 0.1, 4, 1e12) >= 0.0);
  const auto big = plan_sample_sizes(0.01, 0.01, 0.05, 1e-6, 1e-6, 1e-6, 10000, 2.0, 4);
  CHECK(std::isfinite(big.N));
  CHECK(std::isfinite(big.M));
}

TEST_CASE("single step bound") {
  BoundBudget b = budget();
  b.eps1 = b.eps2 = 0.05;
  b.delta1 = 1e-5;
  b.delta2 = 0.05;
  const auto s = single_step_bound(b);
  CHECK(s.eps == doctest::Approx(0.2));
  CHECK(s.confidence_loss == doctest::Approx(0.05001));
  CHECK(s.bias_symbolic);
}

TEST_CASE("planner values are frozen against high-precision evaluation") {
  // d = 50, p = 2, eps2 = 0.1, delta2 = 0.05; eps1 = 0.1, delta1 = 0.01;
  // eps0 = 0.05, delta0 = 0.01; four actions.
  const auto s = plan_sample_sizes(0.05, 0.1, 0.1, 0.01, 0.01, 0.05, 50, 2.0, 4);
  CHECK(s.N == 592459721.0);
  CHECK(s.M == 1345.0);
  CHECK(s.M0 == 1337.0);
  CHECK(pollard_delta(s.N, 0.1, 2.0, 50) <= 0.05);
  CHECK(hoeffding_delta_real(s.M, 0.1, 4, s.N) <= 0.01);
  CHECK(initial_delta(static_cast<std::size_t>(s.M0), 0.05, 4) <= 0.01);
}

TEST_CASE("planner degree in eps2") {
  const auto a = plan_sample_sizes(0.05, 0.1, 0.1, 0.01, 0.01, 0.05, 50, 2.0, 4);
  const auto b = plan_sample_sizes(0.05, 0.1, 0.05, 0.01, 0.01, 0.05, 50, 2.0, 4);
  CHECK(b.N == 10898920956.0);
  // (1/eps2)^(2p) gives the factor 16; the d p log(1/eps2) term adds the rest.
  CHECK(b.N / a.N > 16.0);
  CHECK(b.N / a.N < 16.0 * (1.0 + std::log(2.0) / std::log(10.0)));
}

TEST_CASE("planner round trip at eps2 = 0.5") {
  const auto s = plan_sample_sizes(0.05, 0.1, 0.5, 0.05, 0.05, 0.05, 50, 2.0, 4);
  CHECK(pollard_delta(s.N, 0.5, 2.0, 50) <= 0.05);
  BoundBudget b = budget(2);
  b.eps2 = 0.5;
  b.delta1 = b.delta2 = 0.05;
  const auto step = single_step_bound(b);
  CHECK(step.confidence_loss <= 0.1);
}

TEST_CASE("planner round trip on random budgets") {
  std::mt19937_64 gen(1234);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const double eps0 = 0.01 + 0.3 * u(gen), eps1 = 0.01 + 0.3 * u(gen), eps2 = 0.05 + 0.95 * u(gen);
    const double d0 = std::pow(10.0, -6.0 * u(gen) - 0.5), d1 = std::pow(10.0, -6.0 * u(gen) - 0.5),
                 d2 = std::pow(10.0, -6.0 * u(gen) - 0.5);
    const std::size_t d = 1 + static_cast<std::size_t>(200 * u(gen));
    const double p = 1.0 + 2.0 * u(gen);
    const std::size_t na = 1 + static_cast<std::size_t>(8 * u(gen));
    const auto s = plan_sample_sizes(eps0, eps1, eps2, d0, d1, d2, d, p, na);
    CHECK(pollard_delta(s.N, eps2, p, d) <= d2);
    CHECK(hoeffding_delta_real(s.M, eps1, na, s.N) <= d1);
    CHECK(hoeffding_delta_real(s.M0, eps0, na, 1.0) <= d0);
  }
}

TEST_CASE("analytic scaling bound") {
  const auto k = ThermalParams{}.kernel();
  CHECK(scaling_B_analytic_linear_gaussian(k.dynamics, 2, 4) == doctest::Approx(4.893901739629134).epsilon(1e-13));
  const std::vector<double> eye{1.0, 0.0, 0.0, 1.0};
  CHECK(scaling_B_analytic_linear_gaussian(eye, 2, 1) == 1.0);
  CHECK(scaling_B_analytic_linear_gaussian(eye, 2, 4) == 4.0);
  const std::vector<double> singular{1.0, 2.0, 2.0, 4.0};
  CHECK_THROWS(scaling_B_analytic_linear_gaussian(singular, 2, 4));
}

TEST_CASE("numeric scaling factor: serial reference equals parallel sweep") {
  const auto spec = benchmark_spec();
  const double serial = scaling_B_grid(thermal(), spec, eta(), 40, false);
  const double parallel = scaling_B_grid(thermal(), spec, eta(), 40, true);
  CHECK(serial == doctest::Approx(parallel).epsilon(1e-12));
}

TEST_CASE("numeric scaling factor below the analytic bound") {
  const auto spec = benchmark_spec();
  const auto b = scaling_B_numeric(thermal(), spec, eta(), 60);
  CHECK(b.resolution == 60);
  CHECK(b.value > 0.0);
  CHECK(b.refinement_delta == doctest::Approx(b.value - b.half_resolution_value));
  CHECK(b.value <= 4.893901739629134 + 0.05);
}

TEST_CASE("uniform eta cancels inside the scaling integrand") {
  // Scaling the density by a constant leaves eta(x)/eta(y), and so B, unchanged.
  const auto spec = benchmark_spec();
  const double vol = 19.25;
  const SamplingDistribution flat_twice(
      "uniform-copy", 2, [&](StateView x) { return spec.classify(x) == Region::kSafe ? 2.0 / vol : 0.0; },
      [&](Rng& rng, std::span<double> out) { eta().sample(rng, out); });
  CHECK(scaling_B_grid(thermal(), spec, flat_twice, 30, false) ==
        doctest::Approx(scaling_B_grid(thermal(), spec, eta(), 30, false)).epsilon(1e-14));
}

TEST_CASE("initial scaling factor") {
  const auto spec = benchmark_spec();
  const double cap = 19.25 / (2.0 * std::numbers::pi * 0.25);
  const auto b0 = scaling_B0(thermal(), spec, eta(), State{19.0, 19.0}, 100);
  CHECK(b0.value > 0.0);
  CHECK(b0.value <= cap + 1e-12);
  // Measured once at resolution 100 and frozen.
  CHECK(b0.value == doctest::Approx(12.254777432401).epsilon(1e-10));
  const auto far = scaling_B0(thermal(), spec, eta(), State{40.0, 40.0}, 50);
  CHECK(far.value < 1e-30);
}

TEST_CASE("a-priori certificate assembly") {
  auto b = budget(2);
  auto c = global_apriori_certificate(b, 3.0, 2.0);
  CHECK(c.delta_quantified == doctest::Approx(2.0 * (2 * 0.1 + 2 * 0.1) + 0.05));
  CHECK(c.bias_coefficient == doctest::Approx(2.0));
  CHECK(c.delta_total == doctest::Approx(0.001 + 0.001 + 0.001));
  CHECK(c.bias_symbolic);

  b = budget(10);
  c = global_apriori_certificate(b, 1.0, 1.5);
  CHECK(c.delta_quantified == doctest::Approx(1.5 * 9 * 0.4 + 0.05));
  CHECK(c.delta_total == doctest::Approx(9 * 0.001 + 9 * 0.001 + 0.001));
  CHECK(c.vacuous);

  const double w = propagation_weight(3.07, 2.0, 10);
  double direct = 0.0;
  for (int k = 1; k <= 9; ++k) direct += std::pow(3.07, (k - 1) / 2.0);
  CHECK(w == doctest::Approx(direct).epsilon(1e-14));
}

TEST_CASE("a-priori certificate from actual sample sizes") {
  auto b = budget(10);
  b.N = 600;
  b.M = 1000;
  b.M0 = 1000;
  const auto c = global_apriori_certificate(b, 2.3, 12.0);
  // Pollard at N = 600 is capped at 1, so the confidence is vacuous.
  CHECK(c.delta_total >= 9.0);
  CHECK(c.vacuous);
  b.M = 10;
  CHECK_NOTHROW(global_apriori_certificate(b, 2.3, 12.0));
}

TEST_CASE("a-priori certificate monotonicity") {
  const auto base = global_apriori_certificate(budget(), 2.0, 3.0).delta_quantified;
  CHECK(global_apriori_certificate(budget(), 2.5, 3.0).delta_quantified >= base);
  CHECK(global_apriori_certificate(budget(), 2.0, 3.5).delta_quantified >= base);
  CHECK(global_apriori_certificate(budget(11), 2.0, 3.0).delta_quantified >= base);
  for (double BoundBudget::*eps : {&BoundBudget::eps0, &BoundBudget::eps1, &BoundBudget::eps2}) {
    auto b = budget();
    b.*eps *= 1.5;
    CHECK(global_apriori_certificate(b, 2.0, 3.0).delta_quantified >= base);
  }
}
