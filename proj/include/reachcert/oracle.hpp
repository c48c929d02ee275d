#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "reachcert/model.hpp"

namespace reachcert {

// Uniform cell lattice over a box. Cell index enumerates axes
// lexicographically, last axis fastest; values live at cell midpoints.
class Grid {
 public:
  Grid(BoxSet region, std::vector<std::size_t> resolution);
  Grid(BoxSet region, std::size_t per_axis);

  const BoxSet& region() const { return region_; }
  std::size_t dim() const { return region_.dim(); }
  std::size_t size() const { return size_; }
  const std::vector<std::size_t>& resolution() const { return resolution_; }
  double step(std::size_t axis) const { return step_[axis]; }
  double cell_volume() const { return cell_volume_; }
  double axis_center(std::size_t axis, std::size_t i) const;

  void center(std::size_t cell, std::span<double> out) const;
  State center(std::size_t cell) const;
  // Nearest cell of a state inside the region; nullopt outside.
  std::optional<std::size_t> locate(StateView x) const;

 private:
  BoxSet region_;
  std::vector<std::size_t> resolution_;
  std::vector<double> step_;
  std::size_t size_ = 0;
  double cell_volume_ = 0.0;
};

// Time-indexed Markov policy; each map returns an action index.
class Policy {
 public:
  using Map = std::function<std::size_t(StateView x)>;

  Policy() = default;
  explicit Policy(std::vector<Map> maps) : maps_(std::move(maps)) {}
  static Policy constant(int horizon, std::size_t action);

  int horizon() const { return static_cast<int>(maps_.size()); }
  std::size_t action(int k, StateView x) const { return maps_.at(static_cast<std::size_t>(k))(x); }

 private:
  std::vector<Map> maps_;
};

// Value-function stack on a grid over A: values[k][cell] for k = 0..N_t.
// Cells whose midpoint lies in K carry no value (0) and are flagged.
struct GridValue {
  Grid grid;
  std::vector<Region> cell_region;
  std::vector<std::vector<double>> values;

  // Piecewise-constant lookup used for off-grid queries.
  double lookup(int k, StateView x) const;
};

struct OracleDiagnostics {
  // Quadrature mass of the kernel over A divided by its exact (or refined)
  // mass, worst case over actions at the centre of A.
  double quadrature_mass_ratio = 1.0;
  std::vector<std::string> warnings;
};

struct OracleResult {
  GridValue value;
  Policy policy;
  double r_star = 0.0;
  std::size_t initial_action = 0;
  OracleDiagnostics diagnostics;
};

struct FixedPolicyResult {
  GridValue value;
  double r_mu = 0.0;
  OracleDiagnostics diagnostics;
};

enum class QuadratureKernel { kAuto, kReference, kSeparable };

OracleResult dp_optimal(const MarkovProcess& process, const ReachAvoidSpec& spec, std::size_t grid_resolution,
                        QuadratureKernel kernel = QuadratureKernel::kAuto);

FixedPolicyResult dp_fixed_policy(const MarkovProcess& process, const ReachAvoidSpec& spec, const Policy& policy,
                                  std::size_t grid_resolution, QuadratureKernel kernel = QuadratureKernel::kAuto);

// Midpoint quadrature over A of [1_K(y) + 1_{A\K}(y) next_value(y)] t(y|x,a).
double quadrature_operator(const MarkovProcess& process, const ReachAvoidSpec& spec,
                           const std::function<double(StateView)>& next_value, StateView x, std::size_t action,
                           std::size_t grid_resolution);

struct MonteCarloEstimate {
  double estimate = 0.0;
  double half_width_95 = 0.0;
  std::size_t runs = 0;
  std::size_t successes = 0;
};

MonteCarloEstimate monte_carlo_reach_avoid(const MarkovProcess& process, const ReachAvoidSpec& spec,
                                           const Policy& policy, std::size_t n_runs, std::uint64_t seed);

namespace kernels {

// Query columns for one backward step: states (flattened) and actions.
struct QueryBatch {
  std::size_t dim = 0;
  std::vector<double> states;
  std::vector<std::size_t> actions;
  std::size_t size() const { return actions.size(); }
};

// out[q] = sum_cells field[cell] * t(center(cell) | x_q, a_q) * cell_volume.
// Direct double loop through MarkovProcess::density.
void integrate_reference(const MarkovProcess& process, const Grid& grid, std::span<const double> field,
                         const QueryBatch& queries, std::span<double> out);

// Same sum for a 2-D linear-Gaussian kernel with diagonal noise: the density
// factors per axis, so the sum is a matrix product evaluated in column blocks
// parallelised with OpenMP.
void integrate_separable(const LinearGaussianKernel& kernel, const Grid& grid, std::span<const double> field,
                         const QueryBatch& queries, std::span<double> out);

bool separable_supported(const MarkovProcess& process, const Grid& grid);

}  // namespace kernels

}  // namespace reachcert
