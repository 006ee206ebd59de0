#include "varsep/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "varsep/errors.hpp"
#include "varsep/kernels.hpp"
#include "varsep/sreg.hpp"

namespace varsep::tensor {

GroupSplit::GroupSplit(std::vector<int> dims, basis::Distribution::Kind kind, int degree, std::size_t cap)
    : dims_(std::move(dims)), kind_(kind), degree_(degree) {
  if (dims_.empty()) throw ConfigError("group split: no groups");
  int off = 0;
  const auto family = basis::matching_family({kind, 1});
  std::vector<std::pair<int, std::shared_ptr<const basis::Basis>>> made;
  for (int d : dims_) {
    if (d < 1) throw ConfigError("group split: group dimension must be >= 1");
    offsets_.push_back(off);
    off += d;
    auto it = std::find_if(made.begin(), made.end(), [d](const auto& p) { return p.first == d; });
    if (it == made.end()) {
      made.emplace_back(d, std::make_shared<const basis::Basis>(family, d, degree, cap));
      it = made.end() - 1;
    }
    bases_.push_back(it->second);
  }
}

std::shared_ptr<const GroupSplit> GroupSplit::prefix(std::size_t j) const {
  if (j < 1 || j > dims_.size()) throw std::out_of_range("GroupSplit::prefix");
  std::shared_ptr<GroupSplit> p(new GroupSplit());
  p->dims_.assign(dims_.begin(), dims_.begin() + j);
  p->offsets_.assign(offsets_.begin(), offsets_.begin() + j);
  p->kind_ = kind_;
  p->degree_ = degree_;
  p->bases_.assign(bases_.begin(), bases_.begin() + j);
  return p;
}

GroupFeatures features(const GroupSplit& split, std::span<const double> x) {
  if (static_cast<int>(x.size()) != split.total_dim())
    throw DimensionMismatch("features: point dim " + std::to_string(x.size()) + " != " +
                            std::to_string(split.total_dim()));
  GroupFeatures f;
  f.groups.resize(split.num_groups());
  for (std::size_t k = 0; k < split.num_groups(); ++k) {
    const auto& b = split.basis(k);
    f.groups[k].resize(static_cast<Eigen::Index>(b.size()));
    b.eval_all(x.subspan(split.offset(k), split.dim(k)), {f.groups[k].data(), b.size()});
  }
  return f;
}

double SparseFactor::eval(const Eigen::VectorXd& g) const {
  double s = 0.0;
  for (std::size_t k = 0; k < support.size(); ++k) s += values[k] * g[static_cast<Eigen::Index>(support[k])];
  return s;
}

double SparseFactor::eval(const basis::Basis& b, std::span<const double> xk) const {
  if (support.empty()) return 0.0;
  std::vector<double> vals(support.size());
  b.eval_subset(xk, support, vals);
  double s = 0.0;
  for (std::size_t k = 0; k < vals.size(); ++k) s += values[k] * vals[k];
  return s;
}

double RankOneTerm::eval(const GroupFeatures& f) const {
  double v = 1.0;
  for (std::size_t k = 0; k < factors.size(); ++k) v *= factors[k].eval(f.groups[k]);
  return v;
}

double RankMApprox::eval(const GroupFeatures& f) const {
  double s = 0.0;
  for (std::size_t i = 0; i < terms.size(); ++i) s += weights[i] * terms[i].eval(f);
  return s;
}

double HierNode::eval(const GroupFeatures& f) const {
  if (groups == 1) return leaf.eval(f.groups[0]);
  double s = 0.0;
  for (std::size_t i = 0; i < inner.size(); ++i)
    s += weights[i] * inner[i].eval(f) * outer[i].eval(f.groups[groups - 1]);
  return s;
}

std::size_t HierNode::num_factors() const {
  if (groups == 1) return 1;
  std::size_t n = outer.size();
  for (const auto& c : inner) n += c.num_factors();
  return n;
}

double eval_low_rank(const RankMApprox& a, std::span<const double> x) {
  if (a.terms.empty()) return 0.0;
  return a.eval(features(*a.split, x));
}

double eval_low_rank(const HierApprox& a, std::span<const double> x) {
  if (a.root.groups == 0) return 0.0;
  return a.eval(features(*a.split, x));
}

namespace {

template <class A>
Eigen::VectorXd eval_rows(const A& a, const Eigen::MatrixXd& points) {
  Eigen::VectorXd out(points.rows());
  kernels::for_each(static_cast<std::size_t>(points.rows()), [&](std::size_t i) {
    Eigen::VectorXd row = points.row(static_cast<Eigen::Index>(i)).transpose();
    out[static_cast<Eigen::Index>(i)] = eval_low_rank(a, std::span<const double>(row.data(), row.size()));
  });
  return out;
}

SparseFactor to_factor(const sreg::SparseModel& m, double scale = 1.0) {
  SparseFactor f;
  f.support.assign(m.support.begin(), m.support.end());
  f.values.resize(m.support.size());
  for (std::size_t k = 0; k < m.support.size(); ++k) f.values[k] = scale * m.values[static_cast<Eigen::Index>(k)];
  return f;
}

double rms(const Eigen::VectorXd& v) { return v.size() ? std::sqrt(v.squaredNorm() / v.size()) : 0.0; }

std::vector<double> row_vec(const Eigen::MatrixXd& m, Eigen::Index i) {
  std::vector<double> v(m.cols());
  for (Eigen::Index c = 0; c < m.cols(); ++c) v[c] = m(i, c);
  return v;
}

std::vector<GroupFeatures> features_rows(const GroupSplit& split, const Eigen::MatrixXd& points) {
  std::vector<GroupFeatures> out(points.rows());
  kernels::for_each(out.size(), [&](std::size_t i) {
    auto v = row_vec(points, static_cast<Eigen::Index>(i));
    out[i] = features(split, v);
  });
  return out;
}

}  // namespace

Eigen::VectorXd eval_low_rank(const RankMApprox& a, const Eigen::MatrixXd& points) { return eval_rows(a, points); }
Eigen::VectorXd eval_low_rank(const HierApprox& a, const Eigen::MatrixXd& points) { return eval_rows(a, points); }

Evaluator::Evaluator(Target f, bool concurrent, std::size_t budget)
    : f_(std::move(f)), concurrent_(concurrent), budget_(budget) {}

double Evaluator::operator()(std::span<const double> x) {
  if (calls_ >= budget_) throw BudgetExhausted("evaluation budget of " + std::to_string(budget_) + " exhausted");
  ++calls_;
  return f_(x);
}

Eigen::VectorXd Evaluator::batch(const Eigen::MatrixXd& points) {
  const std::size_t n = static_cast<std::size_t>(points.rows());
  if (n > remaining())
    throw BudgetExhausted("evaluation budget of " + std::to_string(budget_) + " exhausted");
  Eigen::VectorXd out(points.rows());
  auto one = [&](std::size_t i) {
    auto v = row_vec(points, static_cast<Eigen::Index>(i));
    out[static_cast<Eigen::Index>(i)] = f_(v);
  };
  kernels::for_each(n, one, concurrent_ ? kernels::default_mode() : kernels::Mode::Serial);
  calls_ += n;
  return out;
}

BatchTarget as_batch(Evaluator& ev) {
  return [&ev](const Eigen::MatrixXd& pts) { return ev.batch(pts); };
}

Eigen::MatrixXd fiber_points(const GroupSplit& split, std::size_t k, std::span<const double> anchor,
                             const Eigen::MatrixXd& group_points) {
  if (group_points.cols() != split.dim(k)) throw DimensionMismatch("fiber_points: group dimension mismatch");
  Eigen::MatrixXd pts(group_points.rows(), split.total_dim());
  for (Eigen::Index i = 0; i < pts.rows(); ++i)
    for (int c = 0; c < split.total_dim(); ++c) pts(i, c) = anchor[c];
  pts.middleCols(split.offset(k), split.dim(k)) = group_points;
  return pts;
}

basis::SampleSet fiber_samples(const GroupSplit& split, std::size_t k, std::span<const double> anchor,
                               std::size_t count, std::uint64_t seed) {
  auto g = basis::draw_samples(split.dist(k), count, seed);
  basis::SampleSet s;
  s.seed = seed;
  s.points = fiber_points(split, k, anchor, g.points);
  return s;
}

FiberDesign make_fiber_design(const GroupSplit& split, const std::vector<std::size_t>& counts, std::uint64_t seed) {
  if (counts.size() != split.num_groups())
    throw ConfigError("fiber counts: expected " + std::to_string(split.num_groups()) + " entries");
  FiberDesign d;
  for (std::size_t k = 0; k < split.num_groups(); ++k) {
    if (counts[k] < 1) throw ConfigError("fiber counts must be >= 1");
    d.points.push_back(basis::draw_samples(split.dist(k), counts[k], basis::derive_seed(seed, k)).points);
    d.phi.push_back(basis::design_matrix(split.basis(k), d.points.back()));
  }
  return d;
}

RankOneFit sparse_rank_one(const GroupSplit& split, const FiberDesign& design, std::span<const double> anchor,
                           const std::vector<Eigen::VectorXd>& z) {
  const std::size_t r = split.num_groups();
  if (z.size() != r) throw DimensionMismatch("sparse_rank_one: one fiber vector per group expected");
  RankOneFit fit;
  fit.term.factors.resize(r);
  kernels::for_each(r - 1, [&](std::size_t k) { fit.term.factors[k] = to_factor(sreg::filars(design.phi[k], z[k])); });
  double prod = 1.0, scale = 1.0;
  for (std::size_t k = 0; k + 1 < r; ++k) {
    prod *= fit.term.factors[k].eval(split.basis(k), anchor.subspan(split.offset(k), split.dim(k)));
    scale *= z[k].size() ? z[k].cwiseAbs().maxCoeff() : 0.0;
  }
  fit.anchor_product = prod;
  if (!std::isfinite(prod) || std::abs(prod) < 1e-10 * scale || prod == 0.0) {
    fit.degenerate = true;
    return fit;
  }
  const Eigen::MatrixXd scaled = design.phi[r - 1] * prod;
  fit.term.factors[r - 1] = to_factor(sreg::filars(scaled, z[r - 1]));
  return fit;
}

RankMApprox sparse_rank_m(const BatchTarget& target, std::shared_ptr<const GroupSplit> split,
                          const RankMOptions& opts, RankMTrace* trace) {
  const std::size_t r = split->num_groups();
  RankMApprox approx;
  approx.split = split;
  const FiberDesign design = make_fiber_design(*split, opts.fiber_counts, basis::derive_seed(opts.seed, 1));
  std::vector<std::vector<GroupFeatures>> fiber_features(r);
  const auto vpts = basis::draw_samples(split->full_dist(), opts.validation_size, basis::derive_seed(opts.seed, 2));
  const auto vfeat = features_rows(*split, vpts.points);
  Eigen::VectorXd approx_v = Eigen::VectorXd::Zero(vpts.points.rows());
  std::uint64_t attempt = 0;

  auto eval_on = [](const auto& fn, const std::vector<GroupFeatures>& feats) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(feats.size()));
    for (std::size_t i = 0; i < feats.size(); ++i) out[static_cast<Eigen::Index>(i)] = fn.eval(feats[i]);
    return out;
  };

  for (std::size_t i = 0; i < opts.max_rank; ++i) {
    bool accepted = false;
    RankOneFit best;
    double before = 0.0, after = 0.0;
    for (std::size_t a = 0; a <= opts.max_reanchor && !accepted; ++a) {
      const auto anchor_set =
          basis::draw_samples(split->full_dist(), 1, basis::derive_seed(opts.seed, 1000 + attempt++));
      const auto anchor = row_vec(anchor_set.points, 0);
      std::vector<Eigen::VectorXd> z(r);
      for (std::size_t k = 0; k < r; ++k) {
        const Eigen::MatrixXd pts = fiber_points(*split, k, anchor, design.points[k]);
        fiber_features[k] = features_rows(*split, pts);
        try {
          z[k] = target(pts);
        } catch (const BudgetExhausted&) {
          approx.budget_exhausted = true;
          return approx;
        }
        z[k] -= eval_on(approx, fiber_features[k]);
      }
      RankOneFit fit = sparse_rank_one(*split, design, anchor, z);
      if (fit.degenerate) continue;
      double b2 = 0.0, a2 = 0.0;
      for (std::size_t k = 0; k < r; ++k) {
        const Eigen::VectorXd tv = eval_on(fit.term, fiber_features[k]);
        b2 += z[k].squaredNorm();
        a2 += (z[k] - tv).squaredNorm();
      }
      if (!(a2 <= b2 * (1.0 + 1e-12))) continue;
      before = std::sqrt(b2);
      after = std::sqrt(a2);
      best = std::move(fit);
      accepted = true;
    }
    if (!accepted) {
      approx.anchors_exhausted = true;
      break;
    }
    approx.terms.push_back(std::move(best.term));
    approx.weights.push_back(1.0);
    const Eigen::VectorXd term_v = eval_on(approx.terms.back(), vfeat);
    approx_v += term_v;
    const double denom = rms(approx_v);
    const double eps = denom > 0.0 ? rms(term_v) / denom : 0.0;
    if (trace) {
      trace->fiber_before.push_back(before);
      trace->fiber_after.push_back(after);
      trace->epsilon.push_back(eps);
    }
    if (eps < opts.tolerance) break;
  }
  return approx;
}

WeightCorrection correct_weights(const RankMApprox& approx, const Eigen::MatrixXd& points,
                                 const Eigen::VectorXd& values) {
  WeightCorrection out;
  const std::size_t m = approx.terms.size();
  out.weights.assign(m, 1.0);
  if (m == 0) return out;
  if (points.rows() < static_cast<Eigen::Index>(m)) throw ConfigError("correct_weights: fewer samples than terms");
  const auto feats = features_rows(*approx.split, points);
  Eigen::MatrixXd t(points.rows(), static_cast<Eigen::Index>(m));
  for (std::size_t q = 0; q < feats.size(); ++q)
    for (std::size_t i = 0; i < m; ++i) t(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(i)) = approx.terms[i].eval(feats[q]);
  if (!t.allFinite() || t.cwiseAbs().maxCoeff() == 0.0) {
    out.kept_unit = true;
    return out;
  }
  sreg::SparseModel beta;
  try {
    beta = sreg::filars(t, values);
  } catch (const NumericalError&) {
    out.kept_unit = true;
    return out;
  }
  const Eigen::VectorXd b = beta.dense();
  const Eigen::VectorXd unit = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(m));
  // never worse than the uncorrected weights on the fitting samples
  if ((values - t * b).squaredNorm() > (values - t * unit).squaredNorm()) {
    out.kept_unit = true;
    return out;
  }
  for (std::size_t i = 0; i < m; ++i) out.weights[i] = b[static_cast<Eigen::Index>(i)];
  return out;
}

HierNode to_hier(const RankMApprox& a) {
  HierNode node;
  const std::size_t r = a.split->num_groups();
  if (r == 1) {
    // a single-group "rank-m" collapses to one factor
    node.groups = 1;
    for (std::size_t i = 0; i < a.terms.size(); ++i) {
      const auto& f = a.terms[i].factors[0];
      for (std::size_t k = 0; k < f.support.size(); ++k) {
        auto it = std::find(node.leaf.support.begin(), node.leaf.support.end(), f.support[k]);
        if (it == node.leaf.support.end()) {
          node.leaf.support.push_back(f.support[k]);
          node.leaf.values.push_back(a.weights[i] * f.values[k]);
        } else {
          node.leaf.values[it - node.leaf.support.begin()] += a.weights[i] * f.values[k];
        }
      }
    }
    return node;
  }
  if (r != 2) throw ConfigError("to_hier: only one- and two-group approximations map to a tree node");
  node.groups = 2;
  for (std::size_t i = 0; i < a.terms.size(); ++i) {
    HierNode leaf;
    leaf.groups = 1;
    leaf.leaf = a.terms[i].factors[0];
    node.inner.push_back(std::move(leaf));
    node.outer.push_back(a.terms[i].factors[1]);
    node.weights.push_back(a.weights[i]);
  }
  return node;
}

namespace {

struct LevelState {
  const HslrtaOptions& opts;
  std::size_t r;
  std::vector<std::size_t>& achieved;
  bool exhausted = false;
};

HierNode build_level(const BatchTarget& target, std::shared_ptr<const GroupSplit> split, std::uint64_t seed,
                     LevelState& st) {
  const std::size_t j = split->num_groups();
  const std::size_t level = st.r - j;
  const std::size_t rank = st.opts.ranks[level];
  if (j == 2) {
    RankMOptions ro;
    ro.max_rank = rank;
    ro.tolerance = st.opts.tolerance;
    ro.fiber_counts.assign(st.opts.fiber_counts.begin(), st.opts.fiber_counts.begin() + 2);
    ro.seed = seed;
    ro.validation_size = st.opts.validation_size;
    ro.max_reanchor = st.opts.max_reanchor;
    RankMApprox a = sparse_rank_m(target, split, ro);
    if (a.budget_exhausted) st.exhausted = true;
    st.achieved[level] = std::max(st.achieved[level], a.rank());
    return to_hier(a);
  }

  HierNode node;
  node.groups = j;
  const std::size_t g = j - 1;
  auto inner_split = split->prefix(j - 1);
  const int xdim = inner_split->total_dim();
  const int ydim = split->dim(g);
  const auto ypts = basis::draw_samples(split->dist(g), st.opts.fiber_counts[g], basis::derive_seed(seed, 1)).points;
  const Eigen::MatrixXd phi_y = basis::design_matrix(split->basis(g), ypts);
  Eigen::MatrixXd y_feat(ypts.rows(), phi_y.cols());
  y_feat = phi_y;
  const auto vpts = basis::draw_samples(split->full_dist(), st.opts.validation_size, basis::derive_seed(seed, 2));
  const auto vfeat = features_rows(*split, vpts.points);
  Eigen::VectorXd node_v = Eigen::VectorXd::Zero(vpts.points.rows());
  std::uint64_t attempt = 0;

  for (std::size_t i = 0; i < rank; ++i) {
    bool accepted = false;
    HierNode inner_best;
    SparseFactor outer_best;
    for (std::size_t a = 0; a <= st.opts.max_reanchor && !accepted; ++a) {
      const std::uint64_t tag = attempt++;
      const auto yhat = row_vec(
          basis::draw_samples(split->dist(g), 1, basis::derive_seed(seed, 1000 + tag)).points, 0);
      Eigen::VectorXd yhat_feat(phi_y.cols());
      split->basis(g).eval_all(yhat, {yhat_feat.data(), static_cast<std::size_t>(yhat_feat.size())});

      // R_{i-1}(x, yhat) as a function of the inner groups
      const HierNode* nodep = &node;
      BatchTarget inner_target = [&, nodep](const Eigen::MatrixXd& xs) {
        Eigen::MatrixXd full(xs.rows(), xdim + ydim);
        full.leftCols(xdim) = xs;
        for (Eigen::Index q = 0; q < xs.rows(); ++q)
          for (int c = 0; c < ydim; ++c) full(q, xdim + c) = yhat[c];
        Eigen::VectorXd v = target(full);
        if (!nodep->inner.empty()) {
          const auto xf = features_rows(*inner_split, xs);
          for (std::size_t l = 0; l < nodep->inner.size(); ++l) {
            const double o = nodep->weights[l] * nodep->outer[l].eval(yhat_feat);
            for (Eigen::Index q = 0; q < xs.rows(); ++q) v[q] -= o * nodep->inner[l].eval(xf[q]);
          }
        }
        return v;
      };
      HierNode h = build_level(inner_target, inner_split, basis::derive_seed(seed, 2000 + tag), st);
      if (st.exhausted) return node;
      if (h.inner.empty() && h.groups > 1) break;  // inner residual vanished

      // outer anchor: the candidate with the largest inner value
      const auto cands = basis::draw_samples(inner_split->full_dist(), std::max<std::size_t>(1, st.opts.anchor_candidates),
                                             basis::derive_seed(seed, 3000 + tag));
      const auto cfeat = features_rows(*inner_split, cands.points);
      Eigen::Index best_c = 0;
      double hx = 0.0;
      for (std::size_t c = 0; c < cfeat.size(); ++c) {
        const double v = h.eval(cfeat[c]);
        if (std::abs(v) > std::abs(hx)) {
          hx = v;
          best_c = static_cast<Eigen::Index>(c);
        }
      }
      if (!std::isfinite(hx) || hx == 0.0) continue;
      const auto xhat = row_vec(cands.points, best_c);

      Eigen::MatrixXd full(ypts.rows(), xdim + ydim);
      for (Eigen::Index q = 0; q < ypts.rows(); ++q)
        for (int c = 0; c < xdim; ++c) full(q, c) = xhat[c];
      full.rightCols(ydim) = ypts;
      Eigen::VectorXd z;
      try {
        z = target(full);
      } catch (const BudgetExhausted&) {
        st.exhausted = true;
        return node;
      }
      const GroupFeatures& xf = cfeat[static_cast<std::size_t>(best_c)];
      for (std::size_t l = 0; l < node.inner.size(); ++l) {
        const double iv = node.weights[l] * node.inner[l].eval(xf);
        for (Eigen::Index q = 0; q < ypts.rows(); ++q) z[q] -= iv * node.outer[l].eval(Eigen::VectorXd(y_feat.row(q).transpose()));
      }
      const Eigen::MatrixXd scaled = phi_y * hx;
      SparseFactor o = to_factor(sreg::filars(scaled, z));
      Eigen::VectorXd fitted(ypts.rows());
      for (Eigen::Index q = 0; q < ypts.rows(); ++q) fitted[q] = hx * o.eval(Eigen::VectorXd(y_feat.row(q).transpose()));
      if (!((z - fitted).squaredNorm() <= z.squaredNorm() * (1.0 + 1e-12))) continue;
      inner_best = std::move(h);
      outer_best = std::move(o);
      accepted = true;
    }
    if (!accepted) break;
    node.inner.push_back(std::move(inner_best));
    node.outer.push_back(std::move(outer_best));
    node.weights.push_back(1.0);
    st.achieved[level] = std::max(st.achieved[level], node.inner.size());

    Eigen::VectorXd term_v(node_v.size());
    for (std::size_t q = 0; q < vfeat.size(); ++q)
      term_v[static_cast<Eigen::Index>(q)] = node.inner.back().eval(vfeat[q]) * node.outer.back().eval(vfeat[q].groups[g]);
    node_v += term_v;
    const double denom = rms(node_v);
    if ((denom > 0.0 ? rms(term_v) / denom : 0.0) < st.opts.tolerance) break;
  }
  return node;
}

}  // namespace

HierApprox hslrta(Evaluator& evaluator, std::shared_ptr<const GroupSplit> split, const HslrtaOptions& opts) {
  const std::size_t r = split->num_groups();
  if (r < 2) throw ConfigError("hslrta: at least two groups required");
  if (opts.ranks.size() != r - 1)
    throw ConfigError("hslrta: expected " + std::to_string(r - 1) + " per-level ranks");
  if (opts.fiber_counts.size() != r) throw ConfigError("hslrta: expected one fiber count per group");
  for (auto m : opts.ranks)
    if (m < 1) throw ConfigError("hslrta: ranks must be >= 1");
  HierApprox out;
  out.split = split;
  out.requested_ranks = opts.ranks;
  out.achieved_ranks.assign(r - 1, 0);
  LevelState st{opts, r, out.achieved_ranks};
  const std::size_t before = evaluator.calls();
  out.root = build_level(as_batch(evaluator), split, opts.seed, st);
  out.partial = st.exhausted;
  out.evaluations = evaluator.calls() - before;
  return out;
}

}  // namespace varsep::tensor
