#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "reachcert/oracle.hpp"

namespace reachcert::kernels {

namespace {

constexpr std::size_t kBlock = 512;

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace

bool separable_supported(const MarkovProcess& process, const Grid& grid) {
  return process.linear_gaussian() != nullptr && grid.dim() == 2 && process.dim() == 2;
}

void integrate_reference(const MarkovProcess& process, const Grid& grid, std::span<const double> field,
                         const QueryBatch& queries, std::span<double> out) {
  const std::size_t n = grid.dim();
  State y(n);
  for (std::size_t q = 0; q < queries.size(); ++q) {
    StateView x(queries.states.data() + q * n, n);
    double acc = 0.0;
    for (std::size_t cell = 0; cell < grid.size(); ++cell) {
      if (field[cell] == 0.0) continue;
      grid.center(cell, y);
      acc += field[cell] * process.density(y, x, queries.actions[q]);
    }
    out[q] = acc * grid.cell_volume();
  }
}

void integrate_separable(const LinearGaussianKernel& kernel, const Grid& grid, std::span<const double> field,
                         const QueryBatch& queries, std::span<double> out) {
  const auto r1 = static_cast<Eigen::Index>(grid.resolution()[0]);
  const auto r2 = static_cast<Eigen::Index>(grid.resolution()[1]);
  const Eigen::Map<const RowMajor> f(field.data(), r1, r2);

  Eigen::VectorXd y1(r1), y2(r2);
  for (Eigen::Index i = 0; i < r1; ++i) y1[i] = grid.axis_center(0, static_cast<std::size_t>(i));
  for (Eigen::Index i = 0; i < r2; ++i) y2[i] = grid.axis_center(1, static_cast<std::size_t>(i));

  const double s1 = kernel.stddev[0];
  const double s2 = kernel.stddev[1];
  const double n1 = 1.0 / (s1 * std::sqrt(2.0 * std::numbers::pi));
  const double n2 = 1.0 / (s2 * std::sqrt(2.0 * std::numbers::pi));
  const double vol = grid.cell_volume();

  const std::size_t total = queries.size();
  const auto n_blocks = static_cast<long>((total + kBlock - 1) / kBlock);

#pragma omp parallel
  {
    Eigen::MatrixXd phi1, phi2, g;
    double mean[2];
#pragma omp for schedule(dynamic, 1)
    for (long b = 0; b < n_blocks; ++b) {
      const std::size_t first = static_cast<std::size_t>(b) * kBlock;
      const std::size_t count = std::min(kBlock, total - first);
      const auto cols = static_cast<Eigen::Index>(count);
      phi1.resize(r1, cols);
      phi2.resize(r2, cols);
      for (std::size_t c = 0; c < count; ++c) {
        const std::size_t q = first + c;
        kernel.mean(StateView(queries.states.data() + 2 * q, 2), queries.actions[q], mean);
        const auto col = static_cast<Eigen::Index>(c);
        for (Eigen::Index i = 0; i < r1; ++i) {
          const double z = (y1[i] - mean[0]) / s1;
          phi1(i, col) = n1 * std::exp(-0.5 * z * z);
        }
        for (Eigen::Index i = 0; i < r2; ++i) {
          const double z = (y2[i] - mean[1]) / s2;
          phi2(i, col) = n2 * std::exp(-0.5 * z * z);
        }
      }
      g.noalias() = f * phi2;
      for (std::size_t c = 0; c < count; ++c) {
        const auto col = static_cast<Eigen::Index>(c);
        out[first + c] = vol * phi1.col(col).dot(g.col(col));
      }
    }
  }
}

}  // namespace reachcert::kernels
