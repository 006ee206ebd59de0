#include "varsep/kernels.hpp"

#include <vector>

#include "varsep/errors.hpp"

namespace varsep::kernels::serial {

void design_matrix(const basis::Basis& basis, const Eigen::MatrixXd& samples, Eigen::MatrixXd& out) {
  if (samples.cols() != basis.dim())
    throw DimensionMismatch("design_matrix: sample dim " + std::to_string(samples.cols()) +
                            " != basis dim " + std::to_string(basis.dim()));
  const Eigen::Index m = samples.rows();
  const Eigen::Index n = static_cast<Eigen::Index>(basis.size());
  out.resize(m, n);
  std::vector<double> x(basis.dim()), row(n);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (int c = 0; c < basis.dim(); ++c) x[c] = samples(i, c);
    basis.eval_all(x, row);
    for (Eigen::Index j = 0; j < n; ++j) out(i, j) = row[j];
  }
}

void transposed_product(const Eigen::MatrixXd& phi, const Eigen::MatrixXd& r, Eigen::MatrixXd& out) {
  if (phi.rows() != r.rows()) throw DimensionMismatch("transposed_product: row count mismatch");
  out.noalias() = phi.transpose() * r;
}

}  // namespace varsep::kernels::serial
