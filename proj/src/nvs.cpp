#include "varsep/nvs.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "varsep/errors.hpp"
#include "varsep/kernels.hpp"

namespace varsep::nvs {

namespace {

std::span<const double> row_span(const Eigen::MatrixXd& m, Eigen::Index i, std::vector<double>& buf) {
  buf.resize(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index c = 0; c < m.cols(); ++c) buf[static_cast<std::size_t>(c)] = m(i, c);
  return buf;
}

std::string describe(std::span<const double> xi) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < xi.size() && i < 4; ++i) os << (i ? ", " : "") << xi[i];
  if (xi.size() > 4) os << ", ...";
  os << ")";
  return os.str();
}

// Triangular factor U with W^T W = U^T U. Householder on the whole matrix
// keeps U exact when columns are dependent.
Eigen::MatrixXd triangular_factor(const Eigen::MatrixXd& w) {
  const Eigen::Index m = w.cols();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(w);
  Eigen::MatrixXd u = Eigen::MatrixXd::Zero(m, m);
  const Eigen::Index r = std::min(m, w.rows());
  u.topRows(r) = qr.matrixQR().topRows(r).triangularView<Eigen::Upper>();
  return u;
}

}  // namespace

InnerProduct weighted_inner(Eigen::VectorXd weights) {
  return [w = std::move(weights)](const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
    return (w.array() * u.array() * v.array()).sum();
  };
}

GramSchmidtResult gram_schmidt(const Eigen::MatrixXd& g, const InnerProduct& ip, double drop_tol) {
  GramSchmidtResult out;
  std::vector<Eigen::VectorXd> qs;
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(g.cols(), g.cols());
  for (Eigen::Index j = 0; j < g.cols(); ++j) {
    Eigen::VectorXd v = g.col(j);
    const double original = std::sqrt(std::max(0.0, ip(v, v)));
    for (int pass = 0; pass < 2; ++pass)
      for (std::size_t i = 0; i < qs.size(); ++i) {
        const double c = ip(qs[i], v);
        v -= c * qs[i];
        r(static_cast<Eigen::Index>(i), j) += c;
      }
    const double n = std::sqrt(std::max(0.0, ip(v, v)));
    if (!(n > drop_tol * original) || original == 0.0) {
      out.dropped.push_back(static_cast<std::size_t>(j));
      continue;
    }
    r(static_cast<Eigen::Index>(qs.size()), j) = n;
    qs.push_back(v / n);
  }
  out.q.resize(g.rows(), static_cast<Eigen::Index>(qs.size()));
  for (std::size_t i = 0; i < qs.size(); ++i) out.q.col(static_cast<Eigen::Index>(i)) = qs[i];
  out.r = r.topRows(static_cast<Eigen::Index>(qs.size()));
  return out;
}

// ---------------------------------------------------------------------------

SeparatedFunction::SeparatedFunction(NodalFunction f, int num_nodes, int param_dim)
    : f_(std::move(f)), num_nodes_(num_nodes), param_dim_(param_dim), g_(num_nodes, 0), anchors_(0, param_dim) {}

SeparatedFunction SeparatedFunction::from_parts(NodalFunction f, int num_nodes, int param_dim, Eigen::MatrixXd g,
                                                Eigen::MatrixXd pivots, Eigen::MatrixXd anchors,
                                                std::vector<int> anchor_nodes, Eigen::MatrixXd mix,
                                                std::vector<double> history, bool converged) {
  const auto n = pivots.rows();
  const auto modes = mix.size() ? mix.rows() : n;
  if ((mix.size() && mix.cols() != n) || g.rows() != num_nodes || g.cols() != modes || pivots.cols() != n || anchors.rows() != n ||
      anchors.cols() != param_dim || static_cast<Eigen::Index>(anchor_nodes.size()) != n)
    throw DimensionMismatch("separated function: inconsistent parts");
  SeparatedFunction s(std::move(f), num_nodes, param_dim);
  s.g_ = std::move(g);
  s.pivots_ = std::move(pivots);
  s.anchors_ = std::move(anchors);
  s.anchor_nodes_ = std::move(anchor_nodes);
  s.mix_ = std::move(mix);
  s.history_ = std::move(history);
  s.converged_ = converged;
  return s;
}

Eigen::VectorXd SeparatedFunction::zeta(std::span<const double> xi, std::size_t count) const {
  if (count > terms()) throw DimensionMismatch("zeta: more factors requested than available");
  Eigen::VectorXd z(static_cast<Eigen::Index>(count));
  for (Eigen::Index k = 0; k < z.size(); ++k) {
    double v = f_(anchor_nodes_[static_cast<std::size_t>(k)], xi);
    for (Eigen::Index i = 0; i < k; ++i) v -= pivots_(k, i) * z[i];
    z[k] = v / pivots_(k, k);
  }
  return z;
}

Eigen::VectorXd SeparatedFunction::field(std::span<const double> xi) const {
  const Eigen::VectorXd z = zeta(xi);
  return mix_.size() ? Eigen::VectorXd(g_ * (mix_ * z)) : Eigen::VectorXd(g_ * z);
}

Eigen::VectorXd SeparatedFunction::exact(std::span<const double> xi) const {
  Eigen::VectorXd v(num_nodes_);
  for (int n = 0; n < num_nodes_; ++n) v[n] = f_(n, xi);
  return v;
}

GramSchmidtResult SeparatedFunction::orthonormalize(const InnerProduct& ip) {
  if (mix_.size()) throw ConfigError("orthonormalize: modes are already orthonormal");
  GramSchmidtResult gs = gram_schmidt(g_, ip);
  g_ = gs.q;
  mix_ = gs.r;
  return gs;
}

SeparatedFunction nvs_function(NodalFunction f, int num_nodes, const Eigen::VectorXd& weights,
                               const Eigen::MatrixXd& candidates, const NvsFunctionOptions& opts) {
  if (candidates.rows() == 0) throw ConfigError("nvs: empty candidate set");
  if (weights.size() != num_nodes) throw DimensionMismatch("nvs: weights must have one entry per node");
  const int d = static_cast<int>(candidates.cols());
  const Eigen::Index c = candidates.rows();
  SeparatedFunction s(f, num_nodes, d);

  Eigen::MatrixXd r(num_nodes, c);
  kernels::for_each(static_cast<std::size_t>(c), [&](std::size_t j) {
    std::vector<double> buf;
    auto xi = row_span(candidates, static_cast<Eigen::Index>(j), buf);
    for (int n = 0; n < num_nodes; ++n) r(n, static_cast<Eigen::Index>(j)) = f(n, xi);
  });
  if (!r.allFinite()) throw NumericalError("nvs: function is not finite on the candidate set");

  std::vector<char> active(static_cast<std::size_t>(c), 1);
  auto mean_residual = [&]() {
    double sum = 0.0;
    std::size_t count = 0;
    for (Eigen::Index j = 0; j < c; ++j)
      if (active[static_cast<std::size_t>(j)]) {
        sum += (weights.array() * r.col(j).array().square()).sum();
        ++count;
      }
    return count ? sum / static_cast<double>(count) : 0.0;
  };
  s.history_.push_back(mean_residual());

  std::vector<Eigen::VectorXd> modes;
  std::vector<int> nodes;
  std::vector<Eigen::Index> picked;
  while (modes.size() < opts.max_terms) {
    if (s.history_.back() < opts.tolerance) break;
    Eigen::Index best = -1;
    double best_norm = -1.0;
    for (Eigen::Index j = 0; j < c; ++j) {
      if (!active[static_cast<std::size_t>(j)]) continue;
      const double nrm = opts.norm == AnchorNorm::V ? (weights.array() * r.col(j).array().square()).sum()
                                                     : r.col(j).cwiseAbs().maxCoeff();
      if (nrm > best_norm) {
        best_norm = nrm;
        best = j;
      }
    }
    if (best < 0) break;
    Eigen::VectorXd g = r.col(best);
    Eigen::Index xbar = 0;
    const double peak = g.cwiseAbs().maxCoeff(&xbar);
    if (!(peak > 0.0)) {
      s.converged_ = true;
      break;
    }
    const Eigen::RowVectorXd z = r.row(xbar) / g[xbar];
    r.noalias() -= g * z;
    active[static_cast<std::size_t>(best)] = 0;
    modes.push_back(g);
    nodes.push_back(static_cast<int>(xbar));
    picked.push_back(best);
    s.history_.push_back(mean_residual());
  }

  const auto n = static_cast<Eigen::Index>(modes.size());
  s.g_.resize(num_nodes, n);
  s.anchors_.resize(n, d);
  s.pivots_ = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    s.g_.col(k) = modes[static_cast<std::size_t>(k)];
    s.anchors_.row(k) = candidates.row(picked[static_cast<std::size_t>(k)]);
  }
  for (Eigen::Index k = 0; k < n; ++k)
    for (Eigen::Index i = 0; i <= k; ++i) s.pivots_(k, i) = s.g_(nodes[static_cast<std::size_t>(k)], i);
  s.anchor_nodes_ = nodes;
  if (s.history_.back() < opts.tolerance) s.converged_ = true;
  return s;
}

// ---------------------------------------------------------------------------

ResidualEstimator::ResidualEstimator(const field::VInnerProduct& v, const std::vector<Eigen::VectorXd>& rhs_vectors,
                                     std::size_t operator_terms)
    : mb_(rhs_vectors.size()), ma_(operator_terms) {
  if (mb_ == 0) throw ConfigError("estimator: no right-hand side terms");
  const Eigen::Index n = v.matrix().rows();
  functionals_.resize(n, static_cast<Eigen::Index>(mb_));
  for (std::size_t q = 0; q < mb_; ++q) functionals_.col(static_cast<Eigen::Index>(q)) = rhs_vectors[q];
  reps_.resize(n, functionals_.cols());
  for (Eigen::Index q = 0; q < functionals_.cols(); ++q) reps_.col(q) = v.riesz(functionals_.col(q));
  gram_ = reps_.transpose() * functionals_;
  gram_ = 0.5 * (gram_ + gram_.transpose()).eval();
  w_ = v.whiten(functionals_);
  u_ = triangular_factor(w_);
}

void ResidualEstimator::append_term(const field::VInnerProduct& v, const std::vector<field::SparseMatrix>& matrices,
                                    const Eigen::VectorXd& g) {
  if (matrices.size() != ma_) throw DimensionMismatch("estimator: operator term count changed");
  if (w_.rows() != reps_.rows()) throw ConfigError("estimator: cannot extend a deserialized estimator");
  const Eigen::Index n = reps_.rows(), m = static_cast<Eigen::Index>(ma_);
  Eigen::MatrixXd fn(n, m), rn(n, m);
  for (Eigen::Index p = 0; p < m; ++p) {
    fn.col(p) = -(matrices[static_cast<std::size_t>(p)] * g);
    rn.col(p) = v.riesz(fn.col(p));
  }
  const Eigen::Index k = reps_.cols();
  Eigen::MatrixXd cross = reps_.transpose() * fn;
  Eigen::MatrixXd block = rn.transpose() * fn;
  Eigen::MatrixXd gram(k + m, k + m);
  gram.topLeftCorner(k, k) = gram_;
  gram.topRightCorner(k, m) = cross;
  gram.bottomLeftCorner(m, k) = cross.transpose();
  gram.bottomRightCorner(m, m) = 0.5 * (block + block.transpose());
  gram_.swap(gram);

  Eigen::MatrixXd reps(n, k + m), funcs(n, k + m);
  reps << reps_, rn;
  funcs << functionals_, fn;
  reps_.swap(reps);
  functionals_.swap(funcs);
  Eigen::MatrixXd w(n, k + m);
  w << w_, v.whiten(fn);
  w_.swap(w);
  u_ = triangular_factor(w_);
  ++terms_;
}

ResidualEstimator ResidualEstimator::from_parts(std::size_t mb, std::size_t ma, std::size_t terms, Eigen::MatrixXd reps,
                                                Eigen::MatrixXd gram, Eigen::MatrixXd u) {
  const auto cols = static_cast<Eigen::Index>(mb + terms * ma);
  if (reps.cols() != cols || gram.rows() != cols || gram.cols() != cols || u.rows() != cols || u.cols() != cols)
    throw DimensionMismatch("estimator: inconsistent parts");
  ResidualEstimator e;
  e.mb_ = mb;
  e.ma_ = ma;
  e.terms_ = terms;
  e.reps_ = std::move(reps);
  e.gram_ = std::move(gram);
  e.u_ = std::move(u);
  return e;
}

Eigen::VectorXd ResidualEstimator::coefficients(std::span<const double> theta, std::span<const double> phi,
                                                std::span<const double> zeta, std::size_t k) const {
  if (k > terms_) throw DimensionMismatch("estimator: more terms requested than built");
  if (theta.size() != ma_ || phi.size() != mb_ || zeta.size() < k)
    throw DimensionMismatch("estimator: coefficient sizes do not match");
  Eigen::VectorXd c(static_cast<Eigen::Index>(columns(k)));
  for (std::size_t q = 0; q < mb_; ++q) c[static_cast<Eigen::Index>(q)] = phi[q];
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t p = 0; p < ma_; ++p) c[static_cast<Eigen::Index>(mb_ + i * ma_ + p)] = zeta[i] * theta[p];
  return c;
}

double ResidualEstimator::estimate(std::span<const double> theta, std::span<const double> phi,
                                   std::span<const double> zeta, std::size_t k) const {
  const Eigen::VectorXd c = coefficients(theta, phi, zeta, k);
  const Eigen::Index n = c.size();
  return (u_.topLeftCorner(n, n).triangularView<Eigen::Upper>() * c).norm();
}

double ResidualEstimator::estimate_gram(std::span<const double> theta, std::span<const double> phi,
                                        std::span<const double> zeta, std::size_t k) const {
  const Eigen::VectorXd c = coefficients(theta, phi, zeta, k);
  const Eigen::Index n = c.size();
  const double val = c.dot(gram_.topLeftCorner(n, n) * c);
  if (val >= 0.0) return std::sqrt(val);
  const double scale = c.cwiseAbs().dot(gram_.topLeftCorner(n, n).cwiseAbs() * c.cwiseAbs());
  if (val > -1e-12 * scale) return 0.0;
  throw NumericalError("estimator: negative squared residual norm");
}

// ---------------------------------------------------------------------------

void SeparatedSolution::coefficients(std::span<const double> xi, std::span<double> theta,
                                     std::span<double> phi) const {
  if (static_cast<int>(xi.size()) != param_dim_) throw DimensionMismatch("solution: parameter dimension mismatch");
  op_coeff_(xi, theta);
  rhs_coeff_(xi, phi);
}

double zeta_next(const SeparatedSolution& s, std::size_t k, std::span<const double> theta,
                 std::span<const double> phi, std::span<const double> previous, std::span<const double> xi) {
  const auto n = static_cast<Eigen::Index>(s.terms());
  const auto kk = static_cast<Eigen::Index>(k);
  const Eigen::MatrixXd& bg = s.rhs_pairings();
  const Eigen::MatrixXd& agg = s.operator_pairings();
  double num = 0.0;
  for (Eigen::Index q = 0; q < bg.cols(); ++q) num += phi[static_cast<std::size_t>(q)] * bg(kk, q);
  for (Eigen::Index i = 0; i < kk; ++i) {
    double a = 0.0;
    for (Eigen::Index p = 0; p < agg.cols(); ++p) a += theta[static_cast<std::size_t>(p)] * agg(i + n * kk, p);
    num -= previous[static_cast<std::size_t>(i)] * a;
  }
  double den = 0.0;
  for (Eigen::Index p = 0; p < agg.cols(); ++p) den += theta[static_cast<std::size_t>(p)] * agg(kk + n * kk, p);
  if (!(den > 0.0)) throw NumericalError("non-coercive evaluation point xi = " + describe(xi));
  return num / den;
}

double SeparatedSolution::a_pair(std::size_t i, std::size_t j, std::span<const double> theta) const {
  const auto n = static_cast<Eigen::Index>(terms());
  double a = 0.0;
  for (Eigen::Index p = 0; p < agg_.cols(); ++p)
    a += theta[static_cast<std::size_t>(p)] * agg_(static_cast<Eigen::Index>(i) + n * static_cast<Eigen::Index>(j), p);
  return a;
}

Eigen::VectorXd SeparatedSolution::zeta(std::span<const double> xi, std::size_t count) const {
  if (count > terms()) throw DimensionMismatch("zeta: more factors requested than available");
  std::vector<double> theta(ma_), phi(mb_), z(count);
  coefficients(xi, theta, phi);
  for (std::size_t k = 0; k < count; ++k) z[k] = zeta_next(*this, k, theta, phi, z, xi);
  return Eigen::Map<Eigen::VectorXd>(z.data(), static_cast<Eigen::Index>(count));
}

double SeparatedSolution::residual(std::span<const double> xi, std::size_t k) const {
  const Eigen::VectorXd z = zeta(xi, k);
  return residual(xi, {z.data(), static_cast<std::size_t>(z.size())}, k);
}

double SeparatedSolution::residual(std::span<const double> xi, std::span<const double> zeta, std::size_t k) const {
  std::vector<double> theta(ma_), phi(mb_);
  coefficients(xi, theta, phi);
  return est_.estimate(theta, phi, zeta, k);
}

SeparatedSolution SeparatedSolution::from_parts(field::CoefficientFn op_coeff, field::CoefficientFn rhs_coeff,
                                                std::size_t ma, std::size_t mb, int param_dim, Eigen::MatrixXd g,
                                                Eigen::MatrixXd anchors, Eigen::MatrixXd bg, Eigen::MatrixXd agg,
                                                ResidualEstimator est) {
  const auto n = g.cols();
  if (anchors.rows() != n || anchors.cols() != param_dim || bg.rows() != n ||
      bg.cols() != static_cast<Eigen::Index>(mb) || agg.rows() != n * n || agg.cols() != static_cast<Eigen::Index>(ma))
    throw DimensionMismatch("separated solution: inconsistent parts");
  SeparatedSolution s;
  s.op_coeff_ = std::move(op_coeff);
  s.rhs_coeff_ = std::move(rhs_coeff);
  s.ma_ = ma;
  s.mb_ = mb;
  s.param_dim_ = param_dim;
  s.g_ = std::move(g);
  s.anchors_ = std::move(anchors);
  s.bg_ = std::move(bg);
  s.agg_ = std::move(agg);
  s.est_ = std::move(est);
  return s;
}

SeparatedSolution nvs_spde(const field::AffineOperator& op, const field::AffineRhs& rhs,
                           const field::VInnerProduct& v, const Eigen::MatrixXd& candidates,
                           const NvsSpdeOptions& opts) {
  const int d = op.param_dim;
  if (rhs.param_dim != d) throw DimensionMismatch("nvs: operator and rhs parameter dimensions differ");
  if (candidates.rows() > 0 && candidates.cols() != d) throw DimensionMismatch("nvs: candidate dimension mismatch");
  const std::size_t ma = op.size(), mb = rhs.size();
  const Eigen::Index nf = v.matrix().rows();

  SeparatedSolution s;
  s.op_coeff_ = op.coefficients;
  s.rhs_coeff_ = rhs.coefficients;
  s.ma_ = ma;
  s.mb_ = mb;
  s.param_dim_ = d;
  s.g_.resize(nf, 0);
  s.anchors_.resize(0, d);
  s.bg_.resize(0, static_cast<Eigen::Index>(mb));
  s.agg_.resize(0, static_cast<Eigen::Index>(ma));
  s.est_ = ResidualEstimator(v, rhs.vectors, ma);

  std::vector<double> anchor = opts.first_anchor;
  if (anchor.empty()) {
    auto draw = basis::draw_samples({opts.dist.kind, d}, 1, opts.seed);
    anchor.assign(draw.points.data(), draw.points.data() + d);
  }
  if (static_cast<int>(anchor.size()) != d) throw DimensionMismatch("nvs: first anchor dimension mismatch");

  field::GalerkinSolver solver(op);
  std::vector<Eigen::MatrixXd> ag(ma);  // A^p g_i, one column per mode
  for (auto& m : ag) m.resize(nf, 0);
  std::vector<char> active(static_cast<std::size_t>(candidates.rows()), 1);
  double first_norm = 0.0;
  std::vector<double> theta(ma), phi(mb);

  for (std::size_t k = 0; k < opts.max_terms; ++k) {
    s.coefficients(anchor, theta, phi);
    const Eigen::VectorXd z = s.zeta(anchor, k);
    Eigen::VectorXd r = Eigen::VectorXd::Zero(nf);
    for (std::size_t q = 0; q < mb; ++q) r += phi[q] * rhs.vectors[q];
    for (std::size_t p = 0; p < ma; ++p)
      if (k > 0) r.noalias() -= theta[p] * (ag[p] * z);
    const Eigen::VectorXd e = solver.solve(anchor, r);
    const double enorm = v.norm(e);
    if (k == 0) first_norm = enorm;
    if (!(enorm > 1e-13 * first_norm) || enorm == 0.0) {
      s.converged_ = true;
      break;
    }

    const auto n = static_cast<Eigen::Index>(k + 1);
    s.g_.conservativeResize(Eigen::NoChange, n);
    s.g_.col(n - 1) = e;
    s.anchors_.conservativeResize(n, Eigen::NoChange);
    for (int c = 0; c < d; ++c) s.anchors_(n - 1, c) = anchor[static_cast<std::size_t>(c)];
    for (std::size_t p = 0; p < ma; ++p) {
      ag[p].conservativeResize(Eigen::NoChange, n);
      ag[p].col(n - 1) = op.matrices[p] * e;
    }
    s.bg_.conservativeResize(n, Eigen::NoChange);
    for (std::size_t q = 0; q < mb; ++q) s.bg_(n - 1, static_cast<Eigen::Index>(q)) = rhs.vectors[q].dot(e);
    s.agg_.resize(n * n, static_cast<Eigen::Index>(ma));
    for (std::size_t p = 0; p < ma; ++p) {
      const Eigen::MatrixXd a = s.g_.transpose() * ag[p];
      const Eigen::MatrixXd sym = 0.5 * (a + a.transpose());
      s.agg_.col(static_cast<Eigen::Index>(p)) = Eigen::Map<const Eigen::VectorXd>(sym.data(), n * n);
    }
    s.est_.append_term(v, op.matrices, e);

    SpdeStep step;
    std::vector<double> est(static_cast<std::size_t>(candidates.rows()), -1.0);
    kernels::for_each(est.size(), [&](std::size_t j) {
      if (!active[j]) return;
      std::vector<double> buf;
      auto xi = row_span(candidates, static_cast<Eigen::Index>(j), buf);
      est[j] = s.residual(xi, k + 1);
    });
    std::size_t count = 0;
    double sum = 0.0;
    std::ptrdiff_t best = -1;
    for (std::size_t j = 0; j < est.size(); ++j) {
      if (!active[j]) continue;
      sum += est[j];
      ++count;
      if (best < 0 || est[j] > est[static_cast<std::size_t>(best)]) best = static_cast<std::ptrdiff_t>(j);
    }
    if (best >= 0) {
      step.max_estimate = est[static_cast<std::size_t>(best)];
      step.mean_estimate = sum / static_cast<double>(count);
      step.selected = static_cast<std::size_t>(best);
    }
    s.steps_.push_back(step);
    if (best < 0) break;
    if (step.max_estimate < opts.tolerance) {
      s.converged_ = true;
      break;
    }
    active[static_cast<std::size_t>(best)] = 0;
    for (int c = 0; c < d; ++c) anchor[static_cast<std::size_t>(c)] = candidates(best, c);
  }
  return s;
}

// ---------------------------------------------------------------------------

double ZetaSurrogate::eval(std::span<const double> xi) const {
  if (kind == Kind::Sparse) return sreg::predict_one(model, *basis, xi);
  return tensor::eval_low_rank(hier, xi);
}

namespace {

void collect_supports(const tensor::HierNode& node, std::vector<std::vector<std::size_t>>& groups) {
  if (node.groups == 0) return;
  if (node.groups == 1) {
    groups[0].insert(groups[0].end(), node.leaf.support.begin(), node.leaf.support.end());
    return;
  }
  for (const auto& c : node.inner) collect_supports(c, groups);
  for (const auto& o : node.outer)
    groups[node.groups - 1].insert(groups[node.groups - 1].end(), o.support.begin(), o.support.end());
}

void sort_unique(std::vector<std::size_t>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

}  // namespace

SurrogateSet::SurrogateSet(std::vector<ZetaSurrogate> terms) : terms_(std::move(terms)) {
  if (terms_.empty()) return;
  const bool all_hier = std::all_of(terms_.begin(), terms_.end(), [&](const ZetaSurrogate& t) {
    return t.kind == ZetaSurrogate::Kind::Hierarchical && t.hier.split == terms_[0].hier.split && t.hier.split;
  });
  const bool all_sparse = std::all_of(terms_.begin(), terms_.end(), [&](const ZetaSurrogate& t) {
    return t.kind == ZetaSurrogate::Kind::Sparse && t.basis == terms_[0].basis && t.basis;
  });
  if (all_hier) {
    split_ = terms_[0].hier.split;
    std::vector<std::vector<std::size_t>> supports(split_->num_groups());
    for (const auto& t : terms_) collect_supports(t.hier.root, supports);
    groups_.resize(supports.size());
    for (std::size_t k = 0; k < supports.size(); ++k) {
      sort_unique(supports[k]);
      groups_[k].features = basis::SubsetEvaluator(split_->basis(k), std::move(supports[k]));
    }
  } else if (all_sparse) {
    basis_ = terms_[0].basis;
    std::vector<std::size_t> all;
    for (const auto& t : terms_)
      for (auto i : t.model.support) all.push_back(static_cast<std::size_t>(i));
    sort_unique(all);
    for (const auto& t : terms_) {
      auto& pos = sparse_pos_.emplace_back();
      for (auto i : t.model.support)
        pos.push_back(static_cast<std::size_t>(std::lower_bound(all.begin(), all.end(), static_cast<std::size_t>(i)) -
                                               all.begin()));
    }
    sparse_union_ = basis::SubsetEvaluator(*basis_, std::move(all));
  }
}

void SurrogateSet::eval(std::span<const double> xi, std::span<double> out) const {
  if (out.size() != terms_.size()) throw DimensionMismatch("surrogates: output size mismatch");
  if (split_) {
    if (static_cast<int>(xi.size()) != split_->total_dim()) throw DimensionMismatch("surrogates: point dimension");
    thread_local tensor::GroupFeatures f;
    thread_local std::vector<double> vals;
    f.groups.resize(groups_.size());
    for (std::size_t k = 0; k < groups_.size(); ++k) {
      const auto& plan = groups_[k].features;
      f.groups[k].setZero(static_cast<Eigen::Index>(split_->basis(k).size()));
      vals.resize(plan.size());
      plan.eval(xi.subspan(static_cast<std::size_t>(split_->offset(k)), static_cast<std::size_t>(split_->dim(k))), vals);
      const auto& idx = plan.which();
      for (std::size_t j = 0; j < idx.size(); ++j) f.groups[k][static_cast<Eigen::Index>(idx[j])] = vals[j];
    }
    for (std::size_t i = 0; i < terms_.size(); ++i) out[i] = terms_[i].hier.eval(f);
    return;
  }
  if (basis_) {
    if (static_cast<int>(xi.size()) != basis_->dim()) throw DimensionMismatch("surrogates: point dimension");
    thread_local std::vector<double> vals;
    vals.resize(sparse_union_.size());
    sparse_union_.eval(xi, vals);
    for (std::size_t i = 0; i < terms_.size(); ++i) {
      const auto& m = terms_[i].model;
      const auto& pos = sparse_pos_[i];
      double s = 0.0;
      for (std::size_t j = 0; j < pos.size(); ++j) s += m.values[static_cast<Eigen::Index>(j)] * vals[pos[j]];
      out[i] = s;
    }
    return;
  }
  for (std::size_t i = 0; i < terms_.size(); ++i) out[i] = terms_[i].eval(xi);
}

Eigen::VectorXd SurrogateSet::eval(std::span<const double> xi) const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(terms_.size()));
  eval(xi, {out.data(), terms_.size()});
  return out;
}

Eigen::MatrixXd SurrogateSet::eval(const Eigen::MatrixXd& points) const {
  Eigen::MatrixXd out(points.rows(), static_cast<Eigen::Index>(terms_.size()));
  kernels::for_each(static_cast<std::size_t>(points.rows()), [&](std::size_t i) {
    std::vector<double> buf, res(terms_.size());
    eval(row_span(points, static_cast<Eigen::Index>(i), buf), res);
    for (std::size_t t = 0; t < res.size(); ++t) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = res[t];
  });
  return out;
}

SurrogateSet decouple_zetas(const ZetaFunction& zetas, std::size_t n, const DecoupleOptions& opts) {
  const int d = opts.dist.dim;
  auto exact_matrix = [&](const Eigen::MatrixXd& pts) {
    Eigen::MatrixXd z(pts.rows(), static_cast<Eigen::Index>(n));
    kernels::for_each(static_cast<std::size_t>(pts.rows()), [&](std::size_t i) {
      std::vector<double> buf;
      z.row(static_cast<Eigen::Index>(i)) = zetas(row_span(pts, static_cast<Eigen::Index>(i), buf), n).transpose();
    });
    return z;
  };

  std::vector<ZetaSurrogate> terms(n);
  if (opts.method == DecoupleOptions::Method::Filars) {
    auto b = std::make_shared<const basis::Basis>(basis::matching_family(opts.dist), d, opts.degree);
    auto train = basis::draw_samples(opts.dist, opts.train, basis::derive_seed(opts.seed, 10));
    const Eigen::MatrixXd z = exact_matrix(train.points);
    const Eigen::MatrixXd phi = basis::design_matrix(*b, train.points);
    for (std::size_t i = 0; i < n; ++i) {
      terms[i].kind = ZetaSurrogate::Kind::Sparse;
      terms[i].basis = b;
      terms[i].model = sreg::filars(phi, z.col(static_cast<Eigen::Index>(i)));
      terms[i].evaluations = opts.train;
    }
  } else {
    if (opts.groups.empty()) throw ConfigError("decouple: HSLRTA needs a group split");
    auto split = std::make_shared<const tensor::GroupSplit>(opts.groups, opts.dist.kind, opts.degree);
    if (split->total_dim() != d) throw DimensionMismatch("decouple: group split does not cover the parameters");
    for (std::size_t i = 0; i < n; ++i) {
      tensor::Evaluator ev([&zetas, i](std::span<const double> xi) { return zetas(xi, i + 1)[static_cast<Eigen::Index>(i)]; },
                           true);
      tensor::HslrtaOptions ho = opts.hslrta;
      ho.seed = basis::derive_seed(opts.seed, 100 + i);
      terms[i].kind = ZetaSurrogate::Kind::Hierarchical;
      terms[i].hier = tensor::hslrta(ev, split, ho);
      terms[i].evaluations = ev.calls();
    }
  }

  SurrogateSet set(std::move(terms));
  if (opts.validation > 0) {
    auto val = basis::draw_samples(opts.dist, opts.validation, basis::derive_seed(opts.seed, 20));
    const Eigen::MatrixXd z = exact_matrix(val.points);
    const Eigen::MatrixXd zh = set.eval(val.points);
    std::vector<ZetaSurrogate> t = set.terms();
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = static_cast<Eigen::Index>(i);
      const double ref = z.col(c).norm();
      const double err = (zh.col(c) - z.col(c)).norm();
      t[i].validation_error = ref > 0 ? err / ref : err;
      t[i].flagged = t[i].validation_error > opts.flag_threshold;
    }
    set = SurrogateSet(std::move(t));
  }
  return set;
}

Eigen::VectorXd eval_separated(const SeparatedSolution& s, std::span<const double> xi, const SurrogateSet* surrogates) {
  if (s.terms() == 0) return Eigen::VectorXd::Zero(s.modes().rows());
  if (!surrogates) return s.modes() * s.zeta(xi);
  if (surrogates->size() != s.terms()) throw DimensionMismatch("eval: surrogate count differs from term count");
  return s.modes() * surrogates->eval(xi);
}

Eigen::VectorXd eval_separated(const SeparatedFunction& s, std::span<const double> xi, const SurrogateSet* surrogates) {
  if (s.terms() == 0) return Eigen::VectorXd::Zero(s.num_nodes());
  if (!surrogates) return s.field(xi);
  if (surrogates->size() != s.terms()) throw DimensionMismatch("eval: surrogate count differs from term count");
  const Eigen::VectorXd z = surrogates->eval(xi);
  return s.mixing().size() ? Eigen::VectorXd(s.modes() * (s.mixing() * z)) : Eigen::VectorXd(s.modes() * z);
}

}  // namespace varsep::nvs
