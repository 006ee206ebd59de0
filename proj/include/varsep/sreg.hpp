#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "varsep/basis.hpp"

namespace varsep::sreg {

using Index = Eigen::Index;

struct SparseModel {
  Index n = 0;                // number of basis functions
  std::vector<Index> support;  // ascending
  Eigen::VectorXd values;     // aligned with support
  double lambda = 0.0;

  Eigen::VectorXd dense() const;
  double coeff(Index i) const;
  std::size_t nnz() const { return support.size(); }

  static SparseModel zero(Index n, double lambda = 0.0);
  // Sorts (ids, vals) by id.
  static SparseModel from_pairs(Index n, std::vector<Index> ids, const Eigen::VectorXd& vals, double lambda);
};

struct PathEntry {
  double lambda = 0.0;
  SparseModel model;
  Eigen::VectorXd signs;  // aligned with model.support
};

struct SparsePath {
  std::vector<PathEntry> entries;
  SparseModel final_model;  // least-squares refit on the last support
  double lambda_stop = 0.0;
  bool degenerate = false;  // some entering column was linearly dependent
  std::vector<Index> excluded;
};

struct NextLambda {
  double lambda = 0.0;
  Index index = -1;
  bool complete = false;  // no off-support column left
};

Eigen::VectorXd ols(const Eigen::MatrixXd& phi, const Eigen::VectorXd& z);

// Max absolute off-support correlation of the residual of `model`.
NextLambda next_lambda(const Eigen::MatrixXd& phi, const Eigen::VectorXd& z, const SparseModel& model);

struct IlarsOptions {
  std::size_t max_iterations = 0;  // 0: 8 * min(M, N) + 16
};

SparsePath ilars(const Eigen::MatrixXd& phi, const Eigen::VectorXd& z,
                 std::optional<double> lambda_stop = std::nullopt, const IlarsOptions& opts = {});

struct OmpOptions {
  std::size_t max_terms = std::numeric_limits<std::size_t>::max();
  double residual_tol = 0.0;  // relative to ||z||
};

SparsePath omp_path(const Eigen::MatrixXd& phi, const Eigen::VectorXd& z, const OmpOptions& opts = {});
SparseModel omp(const Eigen::MatrixXd& phi, const Eigen::VectorXd& z, const OmpOptions& opts = {});

struct LooEntry {
  SparseModel debiased;
  Eigen::VectorXd leverage;
  double error = std::numeric_limits<double>::infinity();
};

struct LooReport {
  std::vector<LooEntry> entries;
  std::size_t best = 0;
  bool all_non_evaluable = false;
};

LooReport loo_errors(const Eigen::MatrixXd& phi, const Eigen::VectorXd& z, const SparsePath& path);

struct FilarsResult {
  SparseModel model;
  SparsePath path;
  LooReport report;
  bool fallback = false;  // every path entry was non-evaluable
};

FilarsResult filars_detailed(const Eigen::MatrixXd& phi, const Eigen::VectorXd& z,
                             std::optional<double> lambda_stop = std::nullopt);
SparseModel filars(const Eigen::MatrixXd& phi, const Eigen::VectorXd& z,
                   std::optional<double> lambda_stop = std::nullopt);

Eigen::VectorXd predict(const SparseModel& model, const basis::Basis& basis, const Eigen::MatrixXd& samples);
double predict_one(const SparseModel& model, const basis::Basis& basis, std::span<const double> x);

}  // namespace varsep::sreg
