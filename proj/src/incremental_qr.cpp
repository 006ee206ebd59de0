#include "varsep/incremental_qr.hpp"

#include <algorithm>
#include <stdexcept>

namespace varsep::sreg {

IncrementalQR::IncrementalQR(Eigen::Index rows, Eigen::Index capacity, double dependence_tol)
    : m_(rows), cap_(std::min(rows, capacity)), tol_(dependence_tol), q_(rows, cap_), r_(cap_, cap_) {
  r_.setZero();
}

bool IncrementalQR::append(const Eigen::Ref<const Eigen::VectorXd>& column, Eigen::Index id) {
  if (k_ >= cap_) return false;
  const double norm = column.norm();
  if (norm == 0.0) return false;
  Eigen::VectorXd w = column;
  Eigen::VectorXd coef = Eigen::VectorXd::Zero(k_);
  for (int pass = 0; pass < 2; ++pass) {
    if (k_ == 0) break;
    Eigen::VectorXd h = q_.leftCols(k_).transpose() * w;
    w.noalias() -= q_.leftCols(k_) * h;
    coef += h;
  }
  const double rho = w.norm();
  if (rho <= tol_ * norm) return false;
  q_.col(k_) = w / rho;
  r_.col(k_).head(k_) = coef;
  r_(k_, k_) = rho;
  for (Eigen::Index i = k_ + 1; i < cap_; ++i) r_(i, k_) = 0.0;
  cols_.push_back(id);
  ++k_;
  return true;
}

Eigen::Index IncrementalQR::position_of(Eigen::Index id) const {
  auto it = std::find(cols_.begin(), cols_.end(), id);
  return it == cols_.end() ? -1 : static_cast<Eigen::Index>(it - cols_.begin());
}

void IncrementalQR::remove_at(Eigen::Index pos) {
  if (pos < 0 || pos >= k_) throw std::out_of_range("IncrementalQR::remove_at");
  // shift columns of R left; R becomes upper Hessenberg from pos on
  for (Eigen::Index j = pos; j + 1 < k_; ++j) r_.col(j).head(k_) = r_.col(j + 1).head(k_);
  r_.col(k_ - 1).setZero();
  for (Eigen::Index j = pos; j + 1 < k_; ++j) {
    Eigen::JacobiRotation<double> g;
    g.makeGivens(r_(j, j), r_(j + 1, j));
    r_.middleCols(j, k_ - 1 - j).applyOnTheLeft(j, j + 1, g.adjoint());
    q_.applyOnTheRight(j, j + 1, g);
    r_(j + 1, j) = 0.0;
  }
  cols_.erase(cols_.begin() + pos);
  --k_;
  r_.row(k_).setZero();
}

Eigen::VectorXd IncrementalQR::solve_normal(const Eigen::VectorXd& b) const {
  const auto rk = r_.topLeftCorner(k_, k_);
  Eigen::VectorXd y = rk.transpose().triangularView<Eigen::Lower>().solve(b);
  return rk.triangularView<Eigen::Upper>().solve(y);
}

Eigen::VectorXd IncrementalQR::least_squares(const Eigen::VectorXd& y) const {
  Eigen::VectorXd qty = q().transpose() * y;
  return r().solve(qty);
}

Eigen::VectorXd IncrementalQR::leverage() const { return q().rowwise().squaredNorm(); }

}  // namespace varsep::sreg
