// Wall-clock comparison of the serial reference kernels against the parallel
// ones on thermal-benchmark workloads. Usage: bench_kernels [workers]
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>

#include "reachcert/bounds.hpp"
#include "reachcert/certify.hpp"
#include "reachcert/fvi.hpp"
#include "reachcert/oracle.hpp"
#include "reachcert/parallel.hpp"

using namespace reachcert;

namespace {

double time_it(const std::function<double()>& f, double& result) {
  const auto t0 = std::chrono::steady_clock::now();
  result = f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void row(const char* name, const std::function<double()>& ref, const std::function<double()>& fast) {
  double a = 0.0, b = 0.0;
  const double ta = time_it(ref, a);
  const double tb = time_it(fast, b);
  std::printf("%-28s reference %8.3fs  parallel %8.3fs  speedup %6.1fx  |diff| %.2e\n", name, ta, tb, ta / tb,
              std::abs(a - b));
}

}  // namespace

int main(int argc, char** argv) {
  if (argc > 1) set_workers(std::atoi(argv[1]));
  std::printf("workers: %d\n", workers());

  const MarkovProcess process = thermal_process(ThermalParams{});
  ReachAvoidSpec spec{BoxSet({17.5, 17.5}, {22.0, 22.0}), BoxSet({19.25, 19.25}, {20.25, 20.25}), 10, {19.0, 19.0}};
  const auto eta = uniform_eta(spec.safe, spec.target);

  {
    const Grid grid(spec.safe, 72);
    std::vector<double> field(grid.size(), 0.5);
    kernels::QueryBatch q;
    q.dim = 2;
    for (std::size_t c = 0; c < grid.size(); ++c) {
      const State x = grid.center(c);
      for (std::size_t a = 0; a < 4; ++a) {
        q.states.insert(q.states.end(), x.begin(), x.end());
        q.actions.push_back(a);
      }
    }
    std::vector<double> out(q.size());
    row(
        "quadrature step 72^2",
        [&] {
          kernels::integrate_reference(process, grid, field, q, out);
          return out[100];
        },
        [&] {
          kernels::integrate_separable(*process.linear_gaussian(), grid, field, q, out);
          return out[100];
        });
  }

  {
    const auto rbf = lattice_rbf_class(spec.safe, 50, 0.7);
    std::vector<double> f(50);
    Rng rng(1, StreamDomain::kTest);
    std::vector<State> xs(1000000, State(2));
    for (auto& x : xs) x = {rng.uniform(17.5, 22.0), rng.uniform(17.5, 22.0)};
    row(
        "basis features 1e6 points",
        [&] {
          double s = 0.0;
          for (const auto& x : xs) {
            basis_features_reference(rbf, x, f);
            s += f[7];
          }
          return s;
        },
        [&] {
          double s = 0.0;
          for (const auto& x : xs) {
            basis_features(rbf, x, f);
            s += f[7];
          }
          return s;
        });
  }

  row(
      "scaling factor B, 50^2", [&] { return scaling_B_grid(process, spec, eta, 50, false); },
      [&] { return scaling_B_grid(process, spec, eta, 50, true); });

  {
    FviConfig cfg;
    cfg.n_base = 200;
    cfg.n_successors = 200;
    cfg.n_initial = 200;
    cfg.rbf = std::make_shared<const RbfClassConfig>(lattice_rbf_class(spec.safe, 50, 0.7));
    cfg.seed = 1;
    const auto fvi = run_fvi(process, spec, eta, cfg);
    const auto holdout = draw_holdout(process, eta, 200, 2000, 2);
    row(
        "holdout estimates 200x2000",
        [&] { return estimate_all_reference(holdout, fvi.values, spec, 1).per_k[0].single_step; },
        [&] { return estimate_all(holdout, fvi.values, spec, 1).per_k[0].single_step; });
  }
  return 0;
}
