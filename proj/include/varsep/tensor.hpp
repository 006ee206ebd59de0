#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "varsep/basis.hpp"

namespace varsep::tensor {

// Consecutive coordinate groups, each with its own total-degree basis.
class GroupSplit {
 public:
  GroupSplit(std::vector<int> dims, basis::Distribution::Kind kind, int degree,
             std::size_t cap = basis::default_basis_cap);

  std::size_t num_groups() const { return dims_.size(); }
  int dim(std::size_t k) const { return dims_[k]; }
  int offset(std::size_t k) const { return offsets_[k]; }
  int total_dim() const { return offsets_.back() + dims_.back(); }
  int degree() const { return degree_; }
  basis::Distribution::Kind kind() const { return kind_; }
  basis::Distribution dist(std::size_t k) const { return {kind_, dims_[k]}; }
  basis::Distribution full_dist() const { return {kind_, total_dim()}; }
  const basis::Basis& basis(std::size_t k) const { return *bases_[k]; }
  const std::vector<int>& dims() const { return dims_; }

  // The first j groups, sharing bases with this split.
  std::shared_ptr<const GroupSplit> prefix(std::size_t j) const;

 private:
  GroupSplit() = default;
  std::vector<int> dims_, offsets_;
  basis::Distribution::Kind kind_ = basis::Distribution::Kind::Uniform;
  int degree_ = 0;
  std::vector<std::shared_ptr<const basis::Basis>> bases_;
};

// Full basis vectors of every group at one point, shared by all factors.
struct GroupFeatures {
  std::vector<Eigen::VectorXd> groups;
};

GroupFeatures features(const GroupSplit& split, std::span<const double> x);

struct SparseFactor {
  std::vector<std::size_t> support;
  std::vector<double> values;

  double eval(const Eigen::VectorXd& group_features) const;
  double eval(const basis::Basis& b, std::span<const double> xk) const;
  std::size_t nnz() const { return support.size(); }
};

struct RankOneTerm {
  std::vector<SparseFactor> factors;  // one per group
  double eval(const GroupFeatures& f) const;
};

struct RankMApprox {
  std::shared_ptr<const GroupSplit> split;
  std::vector<RankOneTerm> terms;
  std::vector<double> weights;
  bool anchors_exhausted = false;  // stopped after failed re-anchoring
  bool budget_exhausted = false;

  std::size_t rank() const { return terms.size(); }
  double eval(const GroupFeatures& f) const;
};

// Node of the linear dimension tree over the first `groups` groups.
struct HierNode {
  std::size_t groups = 0;
  SparseFactor leaf;                 // groups == 1
  std::vector<HierNode> inner;       // over groups-1 groups
  std::vector<SparseFactor> outer;   // over group index groups-1
  std::vector<double> weights;

  double eval(const GroupFeatures& f) const;
  std::size_t num_factors() const;
};

struct HierApprox {
  std::shared_ptr<const GroupSplit> split;
  HierNode root;
  std::vector<std::size_t> requested_ranks;
  std::vector<std::size_t> achieved_ranks;  // max rank reached per level
  bool partial = false;                     // budget ran out
  std::size_t evaluations = 0;

  double eval(const GroupFeatures& f) const { return root.eval(f); }
};

double eval_low_rank(const RankMApprox& a, std::span<const double> x);
double eval_low_rank(const HierApprox& a, std::span<const double> x);
Eigen::VectorXd eval_low_rank(const RankMApprox& a, const Eigen::MatrixXd& points);
Eigen::VectorXd eval_low_rank(const HierApprox& a, const Eigen::MatrixXd& points);

using Target = std::function<double(std::span<const double>)>;

// Counting wrapper around a black-box function with an optional budget.
class Evaluator {
 public:
  explicit Evaluator(Target f, bool concurrent = false,
                     std::size_t budget = std::numeric_limits<std::size_t>::max());

  double operator()(std::span<const double> x);
  // Evaluates every row; throws BudgetExhausted before any call if the rows
  // do not fit in the remaining budget.
  Eigen::VectorXd batch(const Eigen::MatrixXd& points);

  std::size_t calls() const { return calls_; }
  std::size_t budget() const { return budget_; }
  std::size_t remaining() const { return budget_ - calls_; }
  bool concurrent() const { return concurrent_; }

 private:
  Target f_;
  bool concurrent_;
  std::size_t budget_;
  std::size_t calls_ = 0;
};

// Batch target over the coordinates of a split (rows are points).
using BatchTarget = std::function<Eigen::VectorXd(const Eigen::MatrixXd&)>;

BatchTarget as_batch(Evaluator& ev);

// Full points equal to `anchor` except in group k, taken from group_points.
Eigen::MatrixXd fiber_points(const GroupSplit& split, std::size_t k, std::span<const double> anchor,
                             const Eigen::MatrixXd& group_points);
basis::SampleSet fiber_samples(const GroupSplit& split, std::size_t k, std::span<const double> anchor,
                               std::size_t count, std::uint64_t seed);

// Per-group fiber coordinates and design matrices, shared across ranks.
struct FiberDesign {
  std::vector<Eigen::MatrixXd> points;
  std::vector<Eigen::MatrixXd> phi;
};

FiberDesign make_fiber_design(const GroupSplit& split, const std::vector<std::size_t>& counts, std::uint64_t seed);

struct RankOneFit {
  RankOneTerm term;
  double anchor_product = 0.0;
  bool degenerate = false;
};

// Fits one term from fiber values z[k] (one vector per group) at `anchor`.
RankOneFit sparse_rank_one(const GroupSplit& split, const FiberDesign& design, std::span<const double> anchor,
                           const std::vector<Eigen::VectorXd>& z);

struct RankMOptions {
  std::size_t max_rank = 1;
  double tolerance = 0.0;
  std::vector<std::size_t> fiber_counts;  // per group
  std::uint64_t seed = 0;
  std::size_t validation_size = 200;
  std::size_t max_reanchor = 3;
};

struct RankMTrace {
  // Per accepted term: fiber residual norm before and after the term.
  std::vector<double> fiber_before, fiber_after;
  std::vector<double> epsilon;
};

RankMApprox sparse_rank_m(const BatchTarget& target, std::shared_ptr<const GroupSplit> split,
                          const RankMOptions& opts, RankMTrace* trace = nullptr);

struct WeightCorrection {
  std::vector<double> weights;
  bool kept_unit = false;
};

WeightCorrection correct_weights(const RankMApprox& approx, const Eigen::MatrixXd& points,
                                 const Eigen::VectorXd& values);

struct HslrtaOptions {
  std::vector<std::size_t> ranks;         // m_1 (outermost) .. m_{r-1} (two-group level)
  std::vector<std::size_t> fiber_counts;  // per group
  double tolerance = 0.0;
  std::uint64_t seed = 0;
  std::size_t validation_size = 200;
  std::size_t max_reanchor = 3;
  std::size_t anchor_candidates = 32;
};

HierApprox hslrta(Evaluator& evaluator, std::shared_ptr<const GroupSplit> split, const HslrtaOptions& opts);

HierNode to_hier(const RankMApprox& a);

}  // namespace varsep::tensor
