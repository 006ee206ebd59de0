#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace varsep::field {

using SparseMatrix = Eigen::SparseMatrix<double>;

// Uniform bilinear mesh of (0,1)^2; node (i,j) has index j*(nx+1)+i and
// coordinates (i/nx, j/ny). Dirichlet nodes are the y = 1 edge.
struct Grid {
  int nx = 0, ny = 0;
  std::vector<char> dirichlet;  // per node
  std::vector<int> dof;         // node -> free dof or -1
  std::vector<int> node_of;     // free dof -> node

  int num_nodes() const { return (nx + 1) * (ny + 1); }
  int num_free() const { return static_cast<int>(node_of.size()); }
  int node(int i, int j) const { return j * (nx + 1) + i; }
  double x(int n) const { return static_cast<double>(n % (nx + 1)) / nx; }
  double y(int n) const { return static_cast<double>(n / (nx + 1)) / ny; }
};

Grid build_grid(int nx, int ny);

// Nodal vector with zeros on Dirichlet nodes.
Eigen::VectorXd expand(const Grid& g, const Eigen::VectorXd& free_values);
Eigen::VectorXd restrict_to_free(const Grid& g, const Eigen::VectorXd& nodal);

// Trapezoid quadrature weights per node (sum to 1).
Eigen::VectorXd trapezoid_weights(const Grid& g);

struct KLExpansion {
  double mean = 0.0;
  Eigen::VectorXd eigenvalues;  // nonincreasing
  Eigen::MatrixXd modes;        // nodes x d, orthonormal in the weighted discrete L2 product
  bool truncated = false;       // fewer positive eigenvalues than requested

  int dim() const { return static_cast<int>(eigenvalues.size()); }
  Eigen::VectorXd realize(std::span<const double> xi) const;
};

// Squared-exponential covariance sigma2*exp(-dx^2/(2 lx^2) - dy^2/(2 ly^2)).
KLExpansion assemble_kl(double mean, double sigma2, double lx, double ly, const Grid& g, int d);

using CoefficientFn = std::function<void(std::span<const double> xi, std::span<double> theta)>;

struct AffineOperator {
  std::vector<SparseMatrix> matrices;  // identical sparsity patterns
  CoefficientFn coefficients;
  int param_dim = 0;

  std::size_t size() const { return matrices.size(); }
};

struct AffineRhs {
  std::vector<Eigen::VectorXd> vectors;
  CoefficientFn coefficients;
  int param_dim = 0;

  std::size_t size() const { return vectors.size(); }
};

// Stiffness with a nodal coefficient interpolated bilinearly, free dofs only.
SparseMatrix assemble_stiffness(const Grid& g, const Eigen::VectorXd& nodal_coefficient);
SparseMatrix assemble_mass(const Grid& g);
Eigen::VectorXd assemble_load(const Grid& g, const std::function<double(double, double)>& f);

// k^0 = 1 with A^0 the mean stiffness, k^p = xi_p with the scaled mode.
AffineOperator affine_operator_from_kl(const KLExpansion& kl, const Grid& g);
// f^1 = sin(xi_1 xi_d), b^1 = load of 2 exp(x1 + x2 + 3).
AffineRhs assemble_rhs(const Grid& g, int param_dim);

// Sum_p theta_p A^p on the shared pattern with a reused symbolic analysis.
class GalerkinSolver {
 public:
  explicit GalerkinSolver(const AffineOperator& op);
  GalerkinSolver(const GalerkinSolver& other);

  SparseMatrix matrix(std::span<const double> xi) const;
  Eigen::VectorXd solve(std::span<const double> xi, const Eigen::VectorXd& rhs);

 private:
  const AffineOperator* op_;
  SparseMatrix work_;
  std::vector<double> theta_;
  Eigen::SimplicialLLT<SparseMatrix> llt_;
};

Eigen::VectorXd assemble_rhs_at(const AffineRhs& rhs, std::span<const double> xi);
Eigen::VectorXd solve_deterministic(const AffineOperator& op, const AffineRhs& rhs, std::span<const double> xi);

// Discrete H1 inner product (mass + unit stiffness) on free dofs.
class VInnerProduct {
 public:
  explicit VInnerProduct(const Grid& g);
  explicit VInnerProduct(SparseMatrix x);

  const SparseMatrix& matrix() const { return x_; }
  Eigen::VectorXd riesz(const Eigen::VectorXd& functional) const;
  double inner(const Eigen::VectorXd& u, const Eigen::VectorXd& v) const { return u.dot(x_ * v); }
  double norm(const Eigen::VectorXd& u) const;
  // Columns W with W^T W equal to the V-Gram matrix of the Riesz representers of F.
  Eigen::MatrixXd whiten(const Eigen::MatrixXd& functionals) const;

 private:
  SparseMatrix x_;
  std::shared_ptr<Eigen::SimplicialLLT<SparseMatrix>> llt_;
};

// Relative discrete L2 norm weights for nodal errors (mass-lumped).
double l2_norm(const Grid& g, const Eigen::VectorXd& nodal);

void write_nodal_csv(const Grid& g, const std::vector<std::pair<std::string, Eigen::VectorXd>>& columns,
                     const std::string& path);

}  // namespace varsep::field
