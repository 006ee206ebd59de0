#pragma once

#include <vector>

#include <Eigen/Dense>

namespace varsep::sreg {

// Thin QR of a growing/shrinking column subset of a fixed design matrix.
// Columns are appended with reorthogonalized Gram-Schmidt and removed with
// Givens rotations, so a support change costs O(M k) instead of O(M k^2).
class IncrementalQR {
 public:
  IncrementalQR(Eigen::Index rows, Eigen::Index capacity, double dependence_tol = 1e-10);

  Eigen::Index size() const { return k_; }
  Eigen::Index rows() const { return m_; }
  const std::vector<Eigen::Index>& columns() const { return cols_; }

  // Returns false (and leaves the factorization untouched) when the column
  // is numerically in the span of the current ones.
  bool append(const Eigen::Ref<const Eigen::VectorXd>& column, Eigen::Index id);
  // Removes the column at position pos (not id).
  void remove_at(Eigen::Index pos);
  Eigen::Index position_of(Eigen::Index id) const;

  auto q() const { return q_.leftCols(k_); }
  auto r() const { return r_.topLeftCorner(k_, k_).triangularView<Eigen::Upper>(); }

  // x = (A^T A)^{-1} b for A the current column set.
  Eigen::VectorXd solve_normal(const Eigen::VectorXd& b) const;
  // Least-squares coefficients min ||A x - y||.
  Eigen::VectorXd least_squares(const Eigen::VectorXd& y) const;
  // diag of A (A^T A)^{-1} A^T.
  Eigen::VectorXd leverage() const;

 private:
  Eigen::Index m_, cap_, k_ = 0;
  double tol_;
  Eigen::MatrixXd q_, r_;
  std::vector<Eigen::Index> cols_;
};

}  // namespace varsep::sreg
