#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "varsep/basis.hpp"
#include "varsep/field.hpp"
#include "varsep/sreg.hpp"
#include "varsep/tensor.hpp"

namespace varsep::nvs {

using InnerProduct = std::function<double(const Eigen::VectorXd&, const Eigen::VectorXd&)>;

// (u, v) = sum_n w_n u_n v_n
InnerProduct weighted_inner(Eigen::VectorXd weights);

struct GramSchmidtResult {
  Eigen::MatrixXd q;                  // orthonormal columns
  Eigen::MatrixXd r;                  // kept x input columns, input = q * r
  std::vector<std::size_t> dropped;   // near-dependent input columns
};

GramSchmidtResult gram_schmidt(const Eigen::MatrixXd& g, const InnerProduct& ip, double drop_tol = 1e-12);

// ---------------------------------------------------------------------------
// Separation of a field-valued function G(x_n, xi) given on grid nodes.

using NodalFunction = std::function<double(int node, std::span<const double> xi)>;

enum class AnchorNorm { V, Sup };

struct NvsFunctionOptions {
  double tolerance = 0.0;     // on the mean squared residual norm over the candidates
  std::size_t max_terms = 20;
  AnchorNorm norm = AnchorNorm::V;
};

class SeparatedFunction {
 public:
  SeparatedFunction() = default;
  SeparatedFunction(NodalFunction f, int num_nodes, int param_dim);

  std::size_t terms() const { return static_cast<std::size_t>(pivots_.rows()); }
  int num_nodes() const { return num_nodes_; }
  int param_dim() const { return param_dim_; }
  const Eigen::MatrixXd& modes() const { return g_; }
  const Eigen::MatrixXd& anchors() const { return anchors_; }
  const std::vector<int>& anchor_nodes() const { return anchor_nodes_; }
  // Mean squared residual norm over the remaining candidates, entry 0 before any term.
  const std::vector<double>& residual_history() const { return history_; }
  bool converged() const { return converged_; }

  // First `count` factors by the interpolation recursion.
  Eigen::VectorXd zeta(std::span<const double> xi, std::size_t count) const;
  Eigen::VectorXd zeta(std::span<const double> xi) const { return zeta(xi, terms()); }
  Eigen::VectorXd field(std::span<const double> xi) const;
  Eigen::VectorXd exact(std::span<const double> xi) const;

  // Replaces the modes by a V-orthonormal set; factors are mixed accordingly.
  GramSchmidtResult orthonormalize(const InnerProduct& ip);
  const Eigen::MatrixXd& mixing() const { return mix_; }
  const Eigen::MatrixXd& pivots() const { return pivots_; }

  static SeparatedFunction from_parts(NodalFunction f, int num_nodes, int param_dim, Eigen::MatrixXd g,
                                      Eigen::MatrixXd pivots, Eigen::MatrixXd anchors, std::vector<int> anchor_nodes,
                                      Eigen::MatrixXd mix, std::vector<double> history, bool converged);

 private:
  friend SeparatedFunction nvs_function(NodalFunction, int, const Eigen::VectorXd&, const Eigen::MatrixXd&,
                                        const NvsFunctionOptions&);

  NodalFunction f_;
  int num_nodes_ = 0, param_dim_ = 0;
  Eigen::MatrixXd g_;          // nodes x N
  Eigen::MatrixXd pivots_;     // (k, i) = g_i(xbar_k), unit-free lower triangle
  Eigen::MatrixXd anchors_;    // N x d
  Eigen::MatrixXd mix_;        // empty, or the Gram-Schmidt factor applied to zeta
  std::vector<int> anchor_nodes_;
  std::vector<double> history_;
  bool converged_ = false;
};

// Greedy separation over the candidate rows; weights define the V-norm on nodes.
SeparatedFunction nvs_function(NodalFunction f, int num_nodes, const Eigen::VectorXd& weights,
                               const Eigen::MatrixXd& candidates, const NvsFunctionOptions& opts);

// ---------------------------------------------------------------------------
// Separation of an affinely parametrized elliptic problem.

// Riesz representers of the residual pieces with their V-Gram matrix.
class ResidualEstimator {
 public:
  ResidualEstimator() = default;
  ResidualEstimator(const field::VInnerProduct& v, const std::vector<Eigen::VectorXd>& rhs_vectors,
                    std::size_t operator_terms);

  // Adds the representers of -a^p(g, .) for a new mode g.
  void append_term(const field::VInnerProduct& v, const std::vector<field::SparseMatrix>& matrices,
                   const Eigen::VectorXd& g);

  std::size_t terms() const { return terms_; }
  std::size_t rhs_terms() const { return mb_; }
  std::size_t operator_terms() const { return ma_; }
  std::size_t columns(std::size_t k) const { return mb_ + k * ma_; }

  const Eigen::MatrixXd& representers() const { return reps_; }  // [C_q | L_1^p | L_2^p | ...]
  const Eigen::MatrixXd& gram() const { return gram_; }
  const Eigen::MatrixXd& factor() const { return u_; }          // gram = factor^T factor

  // Residual norm with the first k modes weighted by zeta[0..k).
  double estimate(std::span<const double> theta, std::span<const double> phi, std::span<const double> zeta,
                  std::size_t k) const;
  // Same value through the expanded quadratic form on the Gram matrix.
  double estimate_gram(std::span<const double> theta, std::span<const double> phi, std::span<const double> zeta,
                       std::size_t k) const;

  static ResidualEstimator from_parts(std::size_t mb, std::size_t ma, std::size_t terms, Eigen::MatrixXd reps,
                                      Eigen::MatrixXd gram, Eigen::MatrixXd u);

 private:
  Eigen::VectorXd coefficients(std::span<const double> theta, std::span<const double> phi,
                               std::span<const double> zeta, std::size_t k) const;

  std::size_t mb_ = 0, ma_ = 0, terms_ = 0;
  Eigen::MatrixXd reps_, gram_;
  Eigen::MatrixXd w_, u_;  // whitened representers and their triangular factor
  Eigen::MatrixXd functionals_;
};

struct NvsSpdeOptions {
  double tolerance = 0.0;           // on the largest estimator value over the candidates
  std::size_t max_terms = 5;
  std::vector<double> first_anchor;  // drawn from `dist` when empty
  basis::Distribution dist = basis::Distribution::uniform(1);
  std::uint64_t seed = 0;
};

struct SpdeStep {
  double max_estimate = 0.0;   // over remaining candidates after the step
  double mean_estimate = 0.0;
  std::size_t selected = 0;    // candidate row chosen as the next anchor
};

class SeparatedSolution {
 public:
  std::size_t terms() const { return static_cast<std::size_t>(g_.cols()); }
  const Eigen::MatrixXd& modes() const { return g_; }  // free dofs x N
  const Eigen::MatrixXd& anchors() const { return anchors_; }
  const Eigen::MatrixXd& rhs_pairings() const { return bg_; }        // (k, q) = b^q(g_k)
  const Eigen::MatrixXd& operator_pairings() const { return agg_; }  // column p is vec of a^p(g_i, g_j)
  const ResidualEstimator& estimator() const { return est_; }
  const std::vector<SpdeStep>& steps() const { return steps_; }
  bool converged() const { return converged_; }
  int param_dim() const { return param_dim_; }
  std::size_t operator_terms() const { return ma_; }
  std::size_t rhs_terms() const { return mb_; }

  void coefficients(std::span<const double> xi, std::span<double> theta, std::span<double> phi) const;
  // First `count` factors from the closed-form recursion, sharing one set of coefficient values.
  Eigen::VectorXd zeta(std::span<const double> xi, std::size_t count) const;
  Eigen::VectorXd zeta(std::span<const double> xi) const { return zeta(xi, terms()); }
  double a_pair(std::size_t i, std::size_t j, std::span<const double> theta) const;

  // Residual norm after `k` terms at xi, with exact or supplied factors.
  double residual(std::span<const double> xi, std::size_t k) const;
  double residual(std::span<const double> xi, std::span<const double> zeta, std::size_t k) const;

  Eigen::VectorXd field(std::span<const double> xi) const { return g_ * zeta(xi); }

  static SeparatedSolution from_parts(field::CoefficientFn op_coeff, field::CoefficientFn rhs_coeff,
                                      std::size_t ma, std::size_t mb, int param_dim, Eigen::MatrixXd g,
                                      Eigen::MatrixXd anchors, Eigen::MatrixXd bg, Eigen::MatrixXd agg,
                                      ResidualEstimator est);

 private:
  friend SeparatedSolution nvs_spde(const field::AffineOperator&, const field::AffineRhs&,
                                    const field::VInnerProduct&, const Eigen::MatrixXd&, const NvsSpdeOptions&);

  field::CoefficientFn op_coeff_, rhs_coeff_;
  std::size_t ma_ = 0, mb_ = 0;
  int param_dim_ = 0;
  Eigen::MatrixXd g_, anchors_, bg_, agg_;
  ResidualEstimator est_;
  std::vector<SpdeStep> steps_;
  bool converged_ = false;
};

// k-th factor from its predecessors (zero-based k): numerator and denominator of the Galerkin
// condition tested against g_k.
double zeta_next(const SeparatedSolution& s, std::size_t k, std::span<const double> theta,
                 std::span<const double> phi, std::span<const double> previous, std::span<const double> xi);

SeparatedSolution nvs_spde(const field::AffineOperator& op, const field::AffineRhs& rhs,
                           const field::VInnerProduct& v, const Eigen::MatrixXd& candidates,
                           const NvsSpdeOptions& opts);

// ---------------------------------------------------------------------------
// Independent surrogates of the factors.

struct ZetaSurrogate {
  enum class Kind { Sparse, Hierarchical };
  Kind kind = Kind::Sparse;
  std::shared_ptr<const basis::Basis> basis;  // Sparse
  sreg::SparseModel model;                     // Sparse
  tensor::HierApprox hier;                     // Hierarchical
  double validation_error = 0.0;               // relative RMS on held-out samples
  bool flagged = false;
  std::size_t evaluations = 0;

  double eval(std::span<const double> xi) const;
};

// Evaluates a list of surrogates sharing feature computations per point.
class SurrogateSet {
 public:
  SurrogateSet() = default;
  explicit SurrogateSet(std::vector<ZetaSurrogate> terms);

  std::size_t size() const { return terms_.size(); }
  const std::vector<ZetaSurrogate>& terms() const { return terms_; }
  const ZetaSurrogate& operator[](std::size_t i) const { return terms_[i]; }

  void eval(std::span<const double> xi, std::span<double> out) const;
  Eigen::VectorXd eval(std::span<const double> xi) const;
  Eigen::MatrixXd eval(const Eigen::MatrixXd& points) const;  // rows: points, cols: terms

 private:
  struct GroupPlan {
    basis::SubsetEvaluator features;  // union of factor supports
  };
  std::vector<ZetaSurrogate> terms_;
  std::shared_ptr<const tensor::GroupSplit> split_;  // shared by every hierarchical term
  std::vector<GroupPlan> groups_;
  std::shared_ptr<const basis::Basis> basis_;        // shared by every sparse term
  basis::SubsetEvaluator sparse_union_;
  std::vector<std::vector<std::size_t>> sparse_pos_;  // per term, positions in the union
};

// zetas(xi, count) returns the first `count` exact factors.
using ZetaFunction = std::function<Eigen::VectorXd(std::span<const double>, std::size_t)>;

struct DecoupleOptions {
  enum class Method { Filars, Hslrta };
  Method method = Method::Filars;
  basis::Distribution dist = basis::Distribution::uniform(1);
  int degree = 3;
  std::size_t train = 1000;                    // FILARS training samples
  std::vector<int> groups;                     // HSLRTA split
  tensor::HslrtaOptions hslrta;                // seed is overridden per term
  std::size_t validation = 200;
  double flag_threshold = std::numeric_limits<double>::infinity();
  std::uint64_t seed = 0;
};

SurrogateSet decouple_zetas(const ZetaFunction& zetas, std::size_t n, const DecoupleOptions& opts);

Eigen::VectorXd eval_separated(const SeparatedSolution& s, std::span<const double> xi,
                               const SurrogateSet* surrogates = nullptr);
Eigen::VectorXd eval_separated(const SeparatedFunction& s, std::span<const double> xi,
                               const SurrogateSet* surrogates = nullptr);

}  // namespace varsep::nvs
