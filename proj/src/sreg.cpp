#include "varsep/sreg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "varsep/errors.hpp"
#include "varsep/incremental_qr.hpp"
#include "varsep/kernels.hpp"

namespace varsep::sreg {

Eigen::VectorXd SparseModel::dense() const {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
  for (std::size_t k = 0; k < support.size(); ++k) v[support[k]] = values[k];
  return v;
}

double SparseModel::coeff(Index i) const {
  auto it = std::lower_bound(support.begin(), support.end(), i);
  if (it == support.end() || *it != i) return 0.0;
  return values[it - support.begin()];
}

SparseModel SparseModel::zero(Index n, double lambda) {
  SparseModel m;
  m.n = n;
  m.values.resize(0);
  m.lambda = lambda;
  return m;
}

SparseModel SparseModel::from_pairs(Index n, std::vector<Index> ids, const Eigen::VectorXd& vals, double lambda) {
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });
  SparseModel m;
  m.n = n;
  m.lambda = lambda;
  m.support.resize(ids.size());
  m.values.resize(static_cast<Index>(ids.size()));
  for (std::size_t k = 0; k < order.size(); ++k) {
    m.support[k] = ids[order[k]];
    m.values[static_cast<Index>(k)] = vals[static_cast<Index>(order[k])];
  }
  return m;
}

namespace {

void check_problem(const Eigen::MatrixXd& phi, const Eigen::VectorXd& z) {
  if (phi.rows() < 1 || phi.cols() < 1) throw DimensionMismatch("regression: empty design matrix");
  if (phi.rows() != z.size())
    throw DimensionMismatch("regression: design has " + std::to_string(phi.rows()) + " rows but z has " +
                            std::to_string(z.size()));
  if (!z.allFinite()) throw NumericalError("regression: non-finite observations");
}

Eigen::VectorXd correlations(const Eigen::MatrixXd& phi, const Eigen::VectorXd& r) {
  Eigen::MatrixXd out;
  kernels::transposed_product(phi, r, out);
  return out.col(0);
}

Eigen::VectorXd signs_of(const std::vector<double>& s) {
  return Eigen::Map<const Eigen::VectorXd>(s.data(), static_cast<Index>(s.size()));
}

}  // namespace

Eigen::VectorXd ols(const Eigen::MatrixXd& phi, const Eigen::VectorXd& z) {
  check_problem(phi, z);
  Eigen::MatrixXd g = phi.transpose() * phi;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(g);
  const Eigen::VectorXd d = ldlt.vectorD().cwiseAbs();
  if (ldlt.info() != Eigen::Success || d.minCoeff() < 1e-12 * d.maxCoeff())
    throw NumericalError("ols: normal equations are rank-deficient");
  return ldlt.solve(phi.transpose() * z);
}

NextLambda next_lambda(const Eigen::MatrixXd& phi, const Eigen::VectorXd& z, const SparseModel& model) {
  check_problem(phi, z);
  Eigen::VectorXd resid = z;
  for (std::size_t k = 0; k < model.support.size(); ++k)
    resid -= model.values[static_cast<Index>(k)] * phi.col(model.support[k]);
  const Eigen::VectorXd c = correlations(phi, resid);
  std::vector<char> on(phi.cols(), 0);
  for (Index i : model.support) on[i] = 1;
  NextLambda out;
  out.complete = true;
  for (Index i = 0; i < phi.cols(); ++i) {
    if (on[i]) continue;
    if (out.complete || std::abs(c[i]) > out.lambda) {
      out.lambda = std::abs(c[i]);
      out.index = i;
      out.complete = false;
    }
  }
  return out;
}

SparsePath ilars(const Eigen::MatrixXd& phi, const Eigen::VectorXd& z, std::optional<double> lambda_stop,
                 const IlarsOptions& opts) {
  check_problem(phi, z);
  const Index m = phi.rows(), n = phi.cols();
  const Index cap = std::min(m, n);
  const Eigen::VectorXd c0 = correlations(phi, z);
  Index first = 0;
  const double lam_max = c0.cwiseAbs().maxCoeff(&first);
  const double lam_stop = lambda_stop.value_or(1e-6 * lam_max);
  if (lam_stop < 0.0) throw std::invalid_argument("ilars: negative stopping lambda");

  SparsePath path;
  path.lambda_stop = lam_stop;
  path.final_model = SparseModel::zero(n, lam_max);
  if (lam_max == 0.0 || lam_max <= lam_stop) return path;

  IncrementalQR qr(m, cap);
  std::vector<double> sign;
  std::vector<char> active(n, 0), excluded(n, 0);
  double lam = lam_max;
  Index entering = first;
  double entering_sign = c0[first] > 0 ? 1.0 : -1.0;
  Index just_dropped = -1;
  const std::size_t max_iter = opts.max_iterations ? opts.max_iterations : 8 * static_cast<std::size_t>(cap) + 16;

  Eigen::VectorXd p, q;
  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    if (entering >= 0) {
      if (qr.append(phi.col(entering), entering)) {
        sign.push_back(entering_sign);
        active[entering] = 1;
      } else {
        excluded[entering] = 1;
        path.degenerate = true;
        path.excluded.push_back(entering);
        entering = -1;
      }
    }

    // Solution along the current support: v(l) = p - l q.
    for (;;) {
      p = qr.least_squares(z);
      q = qr.solve_normal(signs_of(sign));
      bool dropped = false;
      for (Index t = 0; t < qr.size(); ++t) {
        const Index id = qr.columns()[t];
        if (id == entering) continue;
        const double v = p[t] - lam * q[t];
        if (v * sign[t] < 0.0 || std::abs(v) < 1e-12) {
          qr.remove_at(t);
          sign.erase(sign.begin() + t);
          active[id] = 0;
          dropped = true;
          break;
        }
      }
      if (!dropped) break;
    }

    {
      Eigen::VectorXd v = p - lam * q;
      const Index pos = entering >= 0 ? qr.position_of(entering) : -1;
      if (pos >= 0) v[pos] = 0.0;
      PathEntry e;
      e.lambda = lam;
      std::vector<Index> ids = qr.columns();
      e.model = SparseModel::from_pairs(n, ids, v, lam);
      Eigen::VectorXd s = signs_of(sign);
      e.signs.resize(s.size());
      std::vector<std::size_t> order(ids.size());
      std::iota(order.begin(), order.end(), 0);
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });
      for (std::size_t k = 0; k < order.size(); ++k) e.signs[static_cast<Index>(k)] = s[static_cast<Index>(order[k])];
      path.entries.push_back(std::move(e));
    }
    entering = -1;

    if (lam <= lam_stop || qr.size() >= cap) break;
    Index open = 0;
    for (Index i = 0; i < n; ++i) open += (!active[i] && !excluded[i]);
    if (open == 0) break;

    // Correlations along the segment: c(l) = a + l b.
    Eigen::MatrixXd rhs(m, 2);
    const auto qmat = qr.q();
    rhs.col(0) = z - qmat * (qmat.transpose() * z);
    rhs.col(1) = qmat * (qr.r() * q);
    Eigen::MatrixXd ab;
    kernels::transposed_product(phi, rhs, ab);

    const double upper = lam * (1.0 - 1e-10);
    double best_enter = -1.0, best_enter_sign = 0.0;
    Index enter_idx = -1;
    for (Index i = 0; i < n; ++i) {
      if (active[i] || excluded[i]) continue;
      // A column that just left meets the boundary at the current lambda; only a later hit counts.
      const double limit = i == just_dropped ? lam * (1.0 - 1e-8) : upper;
      const double a = ab(i, 0), b = ab(i, 1);
      if (1.0 - b > 1e-14) {
        const double g = a / (1.0 - b);
        if (g > 0.0 && g < limit && g > best_enter) {
          best_enter = g;
          best_enter_sign = 1.0;
          enter_idx = i;
        }
      }
      if (1.0 + b > 1e-14) {
        const double g = -a / (1.0 + b);
        if (g > 0.0 && g < limit && g > best_enter) {
          best_enter = g;
          best_enter_sign = -1.0;
          enter_idx = i;
        }
      }
    }
    double best_cross = -1.0;
    Index cross_pos = -1;
    for (Index t = 0; t < qr.size(); ++t) {
      if (q[t] == 0.0) continue;
      const double g = p[t] / q[t];
      if (g > 0.0 && g < upper && g > best_cross) {
        best_cross = g;
        cross_pos = t;
      }
    }

    const double next = std::max(best_enter, best_cross);
    just_dropped = -1;
    if (next <= lam_stop) break;
    if (best_cross >= best_enter) {
      lam = best_cross;
      const Index id = qr.columns()[cross_pos];
      qr.remove_at(cross_pos);
      sign.erase(sign.begin() + cross_pos);
      active[id] = 0;
      just_dropped = id;
    } else {
      lam = best_enter;
      entering = enter_idx;
      entering_sign = best_enter_sign;
    }
  }

  const Eigen::VectorXd coef = qr.size() ? qr.least_squares(z) : Eigen::VectorXd();
  path.final_model = SparseModel::from_pairs(n, qr.columns(), coef, lam);
  return path;
}

SparsePath omp_path(const Eigen::MatrixXd& phi, const Eigen::VectorXd& z, const OmpOptions& opts) {
  check_problem(phi, z);
  const Index m = phi.rows(), n = phi.cols();
  const Index cap = std::min(m, n);
  IncrementalQR qr(m, cap);
  std::vector<char> active(n, 0), excluded(n, 0);
  SparsePath path;
  path.final_model = SparseModel::zero(n);
  Eigen::VectorXd r = z;
  const double znorm = z.norm();
  while (static_cast<std::size_t>(qr.size()) < opts.max_terms && qr.size() < cap) {
    if (r.norm() <= opts.residual_tol * znorm) break;
    const Eigen::VectorXd c = correlations(phi, r);
    Index pick = -1;
    double best = 0.0;
    for (Index i = 0; i < n; ++i) {
      if (active[i] || excluded[i]) continue;
      if (std::abs(c[i]) > best) {
        best = std::abs(c[i]);
        pick = i;
      }
    }
    if (pick < 0) break;
    if (!qr.append(phi.col(pick), pick)) {
      excluded[pick] = 1;
      path.degenerate = true;
      path.excluded.push_back(pick);
      continue;
    }
    active[pick] = 1;
    const Eigen::VectorXd coef = qr.least_squares(z);
    const auto qmat = qr.q();
    r = z - qmat * (qmat.transpose() * z);
    PathEntry e;
    e.lambda = best;
    e.model = SparseModel::from_pairs(n, qr.columns(), coef, best);
    e.signs = e.model.values.cwiseSign();
    path.final_model = e.model;
    path.entries.push_back(std::move(e));
  }
  return path;
}

SparseModel omp(const Eigen::MatrixXd& phi, const Eigen::VectorXd& z, const OmpOptions& opts) {
  return omp_path(phi, z, opts).final_model;
}

LooReport loo_errors(const Eigen::MatrixXd& phi, const Eigen::VectorXd& z, const SparsePath& path) {
  check_problem(phi, z);
  const Index m = phi.rows(), n = phi.cols();
  const double mean = z.mean();
  double sigma = std::sqrt((z.array() - mean).square().mean());
  if (sigma == 0.0) sigma = 1.0;

  IncrementalQR qr(m, std::min(m, n));
  LooReport rep;
  rep.entries.resize(path.entries.size());
  for (std::size_t j = 0; j < path.entries.size(); ++j) {
    const auto& target = path.entries[j].model.support;
    LooEntry& out = rep.entries[j];
    for (Index t = qr.size() - 1; t >= 0; --t)
      if (!std::binary_search(target.begin(), target.end(), qr.columns()[t])) qr.remove_at(t);
    bool ok = true;
    for (Index id : target)
      if (qr.position_of(id) < 0 && !qr.append(phi.col(id), id)) ok = false;
    if (!ok || qr.size() != static_cast<Index>(target.size())) {
      out.debiased = SparseModel::zero(n);
      continue;
    }
    Eigen::VectorXd fit = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd coef;
    if (qr.size() > 0) {
      const auto qmat = qr.q();
      fit = qmat * (qmat.transpose() * z);
      coef = qr.least_squares(z);
      out.leverage = qr.leverage();
    } else {
      out.leverage = Eigen::VectorXd::Zero(m);
    }
    out.debiased = SparseModel::from_pairs(n, qr.columns(), coef, path.entries[j].lambda);
    if (out.leverage.maxCoeff() >= 1.0 - 1e-10) continue;
    const Eigen::ArrayXd e = (z - fit).array() / ((1.0 - out.leverage.array()) * sigma);
    out.error = e.square().mean();
  }
  rep.all_non_evaluable = true;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < rep.entries.size(); ++j) {
    if (rep.entries[j].error < best) {
      best = rep.entries[j].error;
      rep.best = j;
      rep.all_non_evaluable = false;
    }
  }
  if (rep.all_non_evaluable && !rep.entries.empty()) rep.best = rep.entries.size() - 1;
  return rep;
}

FilarsResult filars_detailed(const Eigen::MatrixXd& phi, const Eigen::VectorXd& z,
                             std::optional<double> lambda_stop) {
  FilarsResult res;
  res.path = ilars(phi, z, lambda_stop);
  if (res.path.entries.empty()) {
    res.model = res.path.final_model;
    return res;
  }
  res.report = loo_errors(phi, z, res.path);
  res.fallback = res.report.all_non_evaluable;
  if (res.fallback) {
    res.model = res.path.final_model;
  } else {
    res.model = res.report.entries[res.report.best].debiased;
  }
  return res;
}

SparseModel filars(const Eigen::MatrixXd& phi, const Eigen::VectorXd& z, std::optional<double> lambda_stop) {
  return filars_detailed(phi, z, lambda_stop).model;
}

double predict_one(const SparseModel& model, const basis::Basis& basis, std::span<const double> x) {
  if (model.support.empty()) return 0.0;
  std::vector<double> vals(model.support.size());
  std::vector<std::size_t> which(model.support.begin(), model.support.end());
  basis.eval_subset(x, which, vals);
  double s = 0.0;
  for (std::size_t k = 0; k < vals.size(); ++k) s += model.values[static_cast<Index>(k)] * vals[k];
  return s;
}

Eigen::VectorXd predict(const SparseModel& model, const basis::Basis& basis, const Eigen::MatrixXd& samples) {
  if (samples.cols() != basis.dim()) throw DimensionMismatch("predict: sample dim does not match basis");
  if (model.n != static_cast<Index>(basis.size())) throw DimensionMismatch("predict: model size does not match basis");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(samples.rows());
  if (model.support.empty()) return out;
  kernels::for_each(static_cast<std::size_t>(samples.rows()), [&](std::size_t i) {
    std::vector<double> x(basis.dim());
    for (int c = 0; c < basis.dim(); ++c) x[c] = samples(static_cast<Index>(i), c);
    out[static_cast<Index>(i)] = predict_one(model, basis, x);
  });
  return out;
}

}  // namespace varsep::sreg
