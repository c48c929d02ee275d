#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "doctest.h"
#include "reachcert/func_approx.hpp"

using namespace reachcert;

namespace {

const BoxSet kSafe({17.5, 17.5}, {22.0, 22.0});

std::vector<State> random_points(std::size_t n, std::uint64_t seed) {
  Rng rng(seed, StreamDomain::kTest);
  std::vector<State> xs(n);
  for (auto& x : xs) x = {rng.uniform(17.5, 22.0), rng.uniform(17.5, 22.0)};
  return xs;
}

std::shared_ptr<const RbfClassConfig> small_class(double ridge) {
  return std::make_shared<const RbfClassConfig>(lattice_rbf_class(kSafe, 9, 1.0, ridge));
}

}  // namespace

TEST_CASE("zero function evaluates to zero") {
  const auto cfg = std::make_shared<const RbfClassConfig>(lattice_rbf_class(kSafe, 50, 0.7));
  const auto f = FittedFunction::zero(cfg);
  for (const auto& x : random_points(100, 1)) CHECK(f(x) == 0.0);
}

TEST_CASE("bump peak and clipping") {
  const auto cfg = std::make_shared<const RbfClassConfig>(rbf_class({{19.0, 19.0}}, 0.7));
  const FittedFunction one(cfg, {1.0});
  CHECK(evaluate(one, State{19.0, 19.0}) == 1.0);
  const FittedFunction tall(cfg, {1.3});
  CHECK(tall.raw(State{19.0, 19.0}) == doctest::Approx(1.3));
  CHECK(evaluate(tall, State{19.0, 19.0}) == 1.0);
  const FittedFunction neg(cfg, {-0.5});
  CHECK(evaluate(neg, State{19.0, 19.0}) == 0.0);
  const double r = 0.7;
  CHECK(one.raw(State{19.0 + r, 19.0}) == doctest::Approx(std::exp(-0.5)).epsilon(1e-14));
}

TEST_CASE("evaluate rejects wrong dimension") {
  const auto cfg = std::make_shared<const RbfClassConfig>(rbf_class({{19.0, 19.0}}, 0.7));
  const FittedFunction f(cfg, {1.0});
  CHECK_THROWS_AS(f(State{19.0}), DimensionError);
  CHECK_THROWS(FittedFunction(cfg, {1.0, 2.0}));
}

TEST_CASE("rbf class validation") {
  CHECK_THROWS(rbf_class({}, 0.7));
  CHECK_THROWS(rbf_class({{1.0, 1.0}, {1.0, 1.0}}, 0.7));
  CHECK_THROWS(rbf_class({{1.0, 1.0}}, 0.0));
}

TEST_CASE("lattice centers and separable features") {
  const auto cfg = lattice_rbf_class(kSafe, 50, 0.7);
  REQUIRE(cfg.n_basis() == 50);
  REQUIRE(cfg.lattice.has_value());
  for (const auto& c : cfg.centers) CHECK(kSafe.contains(c));
  std::vector<double> a(50), b(50);
  for (const auto& x : random_points(1000, 2)) {
    basis_features(cfg, x, a);
    basis_features_reference(cfg, x, b);
    for (std::size_t j = 0; j < 50; ++j) CHECK(a[j] == doctest::Approx(b[j]).epsilon(1e-12));
  }
}

TEST_CASE("lattice layout for non-square counts") {
  const auto fifty = lattice_rbf_class(kSafe, 50, 0.7);
  REQUIRE(fifty.lattice.has_value());
  CHECK(fifty.lattice->axes[0].size() == 7);
  CHECK(fifty.lattice->axes[1].size() == 7);
  // The middle of A is a node of the odd lattice; the extra center takes the
  // first of the four nearest midpoints.
  const double half_step = 4.5 / 14.0;
  CHECK(fifty.centers.back()[0] == doctest::Approx(19.75 - half_step));
  CHECK(fifty.centers.back()[1] == doctest::Approx(19.75 - half_step));
  const auto twelve = lattice_rbf_class(kSafe, 12, 0.7);
  CHECK(twelve.lattice->axes[0].size() * twelve.lattice->axes[1].size() == 12);
  const auto three = lattice_rbf_class(kSafe, 3, 0.7);
  CHECK(three.n_basis() == 3);
  for (std::size_t n : {2u, 5u, 17u, 50u, 63u, 200u}) {
    const auto cfg = lattice_rbf_class(kSafe, n, 0.7);
    CHECK(cfg.n_basis() == n);
    std::vector<double> a(n), b(n);
    const State x{18.3, 21.1};
    basis_features(cfg, x, a);
    basis_features_reference(cfg, x, b);
    for (std::size_t j = 0; j < n; ++j) CHECK(a[j] == doctest::Approx(b[j]).epsilon(1e-12));
  }
}

TEST_CASE("pseudo-dimension equals the number of weights") {
  CHECK(pseudo_dimension(lattice_rbf_class(kSafe, 50, 0.7)) == 50);
  CHECK(pseudo_dimension(rbf_class({{19.0, 19.0}}, 0.7)) == 1);
  CHECK(pseudo_dimension(lattice_rbf_class(kSafe, 200, 0.7)) == 200);
}

TEST_CASE("clipped evaluation stays in the unit interval") {
  const auto cfg = std::make_shared<const RbfClassConfig>(lattice_rbf_class(kSafe, 16, 0.7));
  std::mt19937_64 gen(5);
  std::normal_distribution<double> w(0.0, 3.0);
  std::uniform_real_distribution<double> u(10.0, 30.0);
  bool ok = true;
  for (int probe = 0; probe < 1000; ++probe) {
    std::vector<double> weights(16);
    for (auto& v : weights) v = w(gen);
    const FittedFunction f(cfg, weights);
    for (int i = 0; i < 1000; ++i) {
      const double v = f(State{u(gen), u(gen)});
      ok = ok && v >= 0.0 && v <= 1.0;
    }
  }
  CHECK(ok);
}

TEST_CASE("in-class regression recovers the weights") {
  const auto cfg = small_class(1e-10);
  const std::vector<double> truth{0.1, -0.2, 0.3, 0.05, 0.4, -0.1, 0.2, 0.15, -0.05};
  const FittedFunction target(cfg, truth);
  const auto xs = random_points(200, 3);
  std::vector<double> ys;
  for (const auto& x : xs) ys.push_back(target.raw(x));
  const auto f = fit(cfg, xs, ys, 2.0);
  double worst = 0.0;
  for (std::size_t j = 0; j < truth.size(); ++j) worst = std::max(worst, std::abs(f.weights()[j] - truth[j]));
  CHECK(worst <= 1e-6);
}

TEST_CASE("zero targets give zero weights") {
  const auto cfg = small_class(1e-8);
  const auto xs = random_points(100, 4);
  const std::vector<double> ys(xs.size(), 0.0);
  const auto f = fit(cfg, xs, ys);
  for (double v : f.weights()) CHECK(std::abs(v) < 1e-12);
}

TEST_CASE("least squares residual matches an independent QR solve") {
  const auto cfg = small_class(0.0);
  const auto xs = random_points(300, 6);
  std::vector<double> ys;
  for (const auto& x : xs) ys.push_back(0.5 + 0.4 * std::sin(x[0]) * std::cos(1.3 * x[1]));
  const auto f = fit(cfg, xs, ys, 2.0);

  Eigen::MatrixXd phi(xs.size(), cfg->n_basis());
  Eigen::VectorXd y(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    for (std::size_t j = 0; j < cfg->n_basis(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 2; ++k) s += (xs[i][k] - cfg->centers[j][k]) * (xs[i][k] - cfg->centers[j][k]);
      phi(i, j) = std::exp(-s / (2.0 * cfg->width * cfg->width));
    }
    y(i) = ys[i];
  }
  const Eigen::VectorXd w = phi.colPivHouseholderQr().solve(y);
  const double qr_rms = std::sqrt((phi * w - y).squaredNorm() / xs.size());
  CHECK(std::abs(fit_residual_rms(f, xs, ys) - qr_rms) <= 1e-8);

  const auto zero = FittedFunction::zero(cfg);
  CHECK(fit_residual_rms(f, xs, ys) <= fit_residual_rms(zero, xs, ys));
}

TEST_CASE("fit is permutation invariant") {
  const auto cfg = std::make_shared<const RbfClassConfig>(lattice_rbf_class(kSafe, 50, 0.7));
  auto xs = random_points(600, 8);
  std::vector<double> ys;
  for (const auto& x : xs) ys.push_back(std::exp(-0.3 * ((x[0] - 19.7) * (x[0] - 19.7) + (x[1] - 19.7) * (x[1] - 19.7))));
  const auto f1 = fit(cfg, xs, ys);

  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), std::mt19937_64(9));
  std::vector<State> xs2;
  std::vector<double> ys2;
  for (auto i : order) {
    xs2.push_back(xs[i]);
    ys2.push_back(ys[i]);
  }
  const auto f2 = fit(cfg, xs2, ys2);
  for (const auto& x : random_points(200, 10)) CHECK(f1(x) == doctest::Approx(f2(x)).epsilon(1e-9));
}

TEST_CASE("p = 1 fit runs and beats the zero function in l1") {
  const auto cfg = small_class(1e-8);
  const auto xs = random_points(200, 11);
  std::vector<double> ys;
  for (const auto& x : xs) ys.push_back(x[0] > 19.75 ? 0.8 : 0.2);
  const auto f = fit(cfg, xs, ys, 1.0);
  double l1 = 0.0, l1_zero = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    l1 += std::abs(f.raw(xs[i]) - ys[i]);
    l1_zero += std::abs(ys[i]);
  }
  CHECK(l1 < l1_zero);
}

TEST_CASE("fit errors") {
  const auto cfg = small_class(0.0);
  const std::vector<State> one{{19.0, 19.0}};
  const std::vector<double> y{0.5};
  CHECK_THROWS_AS(fit(cfg, one, y), FitError);
  CHECK_THROWS(fit(cfg, std::vector<State>{}, std::vector<double>{}));
}
