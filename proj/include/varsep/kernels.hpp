#pragma once

#include <cstddef>
#include <exception>

#include <Eigen/Dense>

#include "varsep/basis.hpp"

namespace varsep::kernels {

// Every data-parallel loop in the library has a serial reference and an
// OpenMP variant; both write disjoint per-index slots, so results match.
enum class Mode { Serial, Parallel };

Mode default_mode();
void set_default_mode(Mode mode);
int max_threads();

namespace serial {
void design_matrix(const basis::Basis& basis, const Eigen::MatrixXd& samples, Eigen::MatrixXd& out);
// out = phi^T r, column blocks of phi handled independently.
void transposed_product(const Eigen::MatrixXd& phi, const Eigen::MatrixXd& r, Eigen::MatrixXd& out);
}  // namespace serial

namespace omp {
void design_matrix(const basis::Basis& basis, const Eigen::MatrixXd& samples, Eigen::MatrixXd& out);
void transposed_product(const Eigen::MatrixXd& phi, const Eigen::MatrixXd& r, Eigen::MatrixXd& out);
}  // namespace omp

void design_matrix(const basis::Basis& basis, const Eigen::MatrixXd& samples, Eigen::MatrixXd& out,
                   Mode mode = default_mode());
void transposed_product(const Eigen::MatrixXd& phi, const Eigen::MatrixXd& r, Eigen::MatrixXd& out,
                        Mode mode = default_mode());

// Runs f(i) for i in [0, n). The first exception thrown by any iteration is
// rethrown after the loop.
template <class F>
void for_each(std::size_t n, F&& f, Mode mode = default_mode()) {
  if (mode == Mode::Serial || n < 2) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::exception_ptr err;
  const long count = static_cast<long>(n);
#pragma omp parallel for schedule(dynamic, 4)
  for (long i = 0; i < count; ++i) {
    try {
      f(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(varsep_for_each_error)
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
}

}  // namespace varsep::kernels
