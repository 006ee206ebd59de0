#include "varsep/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <vector>

#include <omp.h>

#include "varsep/errors.hpp"

namespace varsep::kernels {

namespace {
std::atomic<Mode> g_mode{Mode::Parallel};
}

Mode default_mode() { return g_mode.load(); }
void set_default_mode(Mode mode) { g_mode.store(mode); }
int max_threads() { return omp_get_max_threads(); }

namespace omp {

void design_matrix(const basis::Basis& basis, const Eigen::MatrixXd& samples, Eigen::MatrixXd& out) {
  if (samples.cols() != basis.dim())
    throw DimensionMismatch("design_matrix: sample dim " + std::to_string(samples.cols()) +
                            " != basis dim " + std::to_string(basis.dim()));
  const Eigen::Index m = samples.rows();
  const Eigen::Index n = static_cast<Eigen::Index>(basis.size());
  out.resize(m, n);
#pragma omp parallel
  {
    std::vector<double> x(basis.dim()), row(n);
#pragma omp for schedule(static)
    for (Eigen::Index i = 0; i < m; ++i) {
      for (int c = 0; c < basis.dim(); ++c) x[c] = samples(i, c);
      basis.eval_all(x, row);
      for (Eigen::Index j = 0; j < n; ++j) out(i, j) = row[j];
    }
  }
}

void transposed_product(const Eigen::MatrixXd& phi, const Eigen::MatrixXd& r, Eigen::MatrixXd& out) {
  if (phi.rows() != r.rows()) throw DimensionMismatch("transposed_product: row count mismatch");
  const Eigen::Index n = phi.cols();
  out.resize(n, r.cols());
  const int threads = omp_get_max_threads();
  if (threads < 2 || n < 256) {
    out.noalias() = phi.transpose() * r;
    return;
  }
  const Eigen::Index block = (n + threads - 1) / threads;
#pragma omp parallel for schedule(static)
  for (int t = 0; t < threads; ++t) {
    const Eigen::Index start = t * block;
    const Eigen::Index len = std::min(block, n - start);
    if (len > 0) out.middleRows(start, len).noalias() = phi.middleCols(start, len).transpose() * r;
  }
}

}  // namespace omp

void design_matrix(const basis::Basis& basis, const Eigen::MatrixXd& samples, Eigen::MatrixXd& out,
                   Mode mode) {
  if (mode == Mode::Serial)
    serial::design_matrix(basis, samples, out);
  else
    omp::design_matrix(basis, samples, out);
}

void transposed_product(const Eigen::MatrixXd& phi, const Eigen::MatrixXd& r, Eigen::MatrixXd& out,
                        Mode mode) {
  if (mode == Mode::Serial)
    serial::transposed_product(phi, r, out);
  else
    omp::transposed_product(phi, r, out);
}

}  // namespace varsep::kernels
