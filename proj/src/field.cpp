#include "varsep/field.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "varsep/errors.hpp"

namespace varsep::field {

Grid build_grid(int nx, int ny) {
  if (nx < 2 || ny < 2) throw ConfigError("grid: nx and ny must be >= 2");
  Grid g;
  g.nx = nx;
  g.ny = ny;
  const int n = g.num_nodes();
  g.dirichlet.assign(n, 0);
  g.dof.assign(n, -1);
  for (int k = 0; k < n; ++k) {
    if (k / (nx + 1) == ny) {
      g.dirichlet[k] = 1;
    } else {
      g.dof[k] = static_cast<int>(g.node_of.size());
      g.node_of.push_back(k);
    }
  }
  return g;
}

Eigen::VectorXd expand(const Grid& g, const Eigen::VectorXd& free_values) {
  if (free_values.size() != g.num_free()) throw DimensionMismatch("expand: expected a free-dof vector");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(g.num_nodes());
  for (int d = 0; d < g.num_free(); ++d) out[g.node_of[d]] = free_values[d];
  return out;
}

Eigen::VectorXd restrict_to_free(const Grid& g, const Eigen::VectorXd& nodal) {
  if (nodal.size() != g.num_nodes()) throw DimensionMismatch("restrict_to_free: expected a nodal vector");
  Eigen::VectorXd out(g.num_free());
  for (int d = 0; d < g.num_free(); ++d) out[d] = nodal[g.node_of[d]];
  return out;
}

Eigen::VectorXd trapezoid_weights(const Grid& g) {
  Eigen::VectorXd w(g.num_nodes());
  for (int j = 0; j <= g.ny; ++j)
    for (int i = 0; i <= g.nx; ++i) {
      const double wx = (i == 0 || i == g.nx) ? 0.5 : 1.0;
      const double wy = (j == 0 || j == g.ny) ? 0.5 : 1.0;
      w[g.node(i, j)] = wx * wy / (static_cast<double>(g.nx) * g.ny);
    }
  return w;
}

double l2_norm(const Grid& g, const Eigen::VectorXd& nodal) {
  const Eigen::VectorXd w = trapezoid_weights(g);
  return std::sqrt((w.array() * nodal.array().square()).sum());
}

Eigen::VectorXd KLExpansion::realize(std::span<const double> xi) const {
  if (static_cast<int>(xi.size()) < dim()) throw DimensionMismatch("KL realize: too few parameters");
  Eigen::VectorXd k = Eigen::VectorXd::Constant(modes.rows(), mean);
  for (int i = 0; i < dim(); ++i) k += std::sqrt(eigenvalues[i]) * xi[i] * modes.col(i);
  return k;
}

namespace {

struct Eig1d {
  Eigen::VectorXd values;  // descending
  Eigen::MatrixXd modes;   // weighted-orthonormal, columns aligned with values
};

Eig1d kl_1d(int cells, double length) {
  const int n = cells + 1;
  const double h = 1.0 / cells;
  Eigen::VectorXd sw(n);
  for (int i = 0; i < n; ++i) sw[i] = std::sqrt((i == 0 || i == cells) ? 0.5 * h : h);
  Eigen::MatrixXd a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double t = (i - j) * h;
      a(i, j) = sw[i] * std::exp(-t * t / (2.0 * length * length)) * sw[j];
    }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
  Eig1d out;
  out.values = es.eigenvalues().reverse();
  out.modes = es.eigenvectors().rowwise().reverse();
  for (int c = 0; c < n; ++c) {
    out.modes.col(c).array() /= sw.array();
    Eigen::Index imax = 0;
    out.modes.col(c).cwiseAbs().maxCoeff(&imax);
    if (out.modes(imax, c) < 0) out.modes.col(c) *= -1.0;
  }
  return out;
}

}  // namespace

KLExpansion assemble_kl(double mean, double sigma2, double lx, double ly, const Grid& g, int d) {
  if (d < 1 || d > g.num_nodes()) throw ConfigError("KL: truncation must be in [1, node count]");
  if (sigma2 < 0 || lx <= 0 || ly <= 0) throw ConfigError("KL: invalid covariance parameters");
  KLExpansion kl;
  kl.mean = mean;
  const Eig1d ex = kl_1d(g.nx, lx), ey = kl_1d(g.ny, ly);
  struct Cand {
    double value;
    int a, b;
  };
  std::vector<Cand> cands;
  const int ka = std::min<int>(d, ex.values.size()), kb = std::min<int>(d, ey.values.size());
  for (int a = 0; a < ka; ++a)
    for (int b = 0; b < kb; ++b) cands.push_back({sigma2 * ex.values[a] * ey.values[b], a, b});
  std::stable_sort(cands.begin(), cands.end(), [](const Cand& p, const Cand& q) {
    if (p.value != q.value) return p.value > q.value;
    if (p.a != q.a) return p.a < q.a;
    return p.b < q.b;
  });
  int kept = 0;
  while (kept < d && kept < static_cast<int>(cands.size()) && cands[kept].value > 1e-14 * std::max(sigma2, 1e-300))
    ++kept;
  kl.truncated = kept < d;
  kl.eigenvalues.resize(kept);
  kl.modes.resize(g.num_nodes(), kept);
  for (int m = 0; m < kept; ++m) {
    kl.eigenvalues[m] = cands[m].value;
    for (int j = 0; j <= g.ny; ++j)
      for (int i = 0; i <= g.nx; ++i) kl.modes(g.node(i, j), m) = ex.modes(i, cands[m].a) * ey.modes(j, cands[m].b);
  }
  return kl;
}

namespace {

// Element-local data for Q1 on a uniform mesh with 2x2 Gauss quadrature.
struct Q1Local {
  // stiff[c] = sum_q N_c(q) grad N_a . grad N_b |J| w_q   (coefficient node c)
  std::array<Eigen::Matrix4d, 4> stiff;
  Eigen::Matrix4d mass;
  std::array<std::array<double, 4>, 4> shape;  // shape[q][a]
  std::array<std::array<double, 2>, 4> qpoint;  // reference coordinates
  double detj = 0.0;
};

Q1Local q1_local(double hx, double hy) {
  static const double sa[4] = {-1, 1, 1, -1}, sb[4] = {-1, -1, 1, 1};
  const double gp = 1.0 / std::sqrt(3.0);
  const double qs[4][2] = {{-gp, -gp}, {gp, -gp}, {gp, gp}, {-gp, gp}};
  Q1Local L;
  L.detj = hx * hy / 4.0;
  for (auto& m : L.stiff) m.setZero();
  L.mass.setZero();
  for (int q = 0; q < 4; ++q) {
    const double s = qs[q][0], t = qs[q][1];
    L.qpoint[q] = {s, t};
    double gx[4], gy[4];
    for (int a = 0; a < 4; ++a) {
      L.shape[q][a] = 0.25 * (1 + sa[a] * s) * (1 + sb[a] * t);
      gx[a] = 0.25 * sa[a] * (1 + sb[a] * t) * 2.0 / hx;
      gy[a] = 0.25 * sb[a] * (1 + sa[a] * s) * 2.0 / hy;
    }
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) {
        const double kab = (gx[a] * gx[b] + gy[a] * gy[b]) * L.detj;
        for (int c = 0; c < 4; ++c) L.stiff[c](a, b) += L.shape[q][c] * kab;
        L.mass(a, b) += L.shape[q][a] * L.shape[q][b] * L.detj;
      }
  }
  return L;
}

std::array<int, 4> element_nodes(const Grid& g, int i, int j) {
  return {g.node(i, j), g.node(i + 1, j), g.node(i + 1, j + 1), g.node(i, j + 1)};
}

// Free-dof sparsity pattern plus, per element, the value slot of each local pair.
struct Pattern {
  SparseMatrix shape;
  std::vector<int> slots;  // 16 per element, -1 when a dof is constrained
};

Pattern make_pattern(const Grid& g) {
  std::vector<Eigen::Triplet<double>> trips;
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) {
      auto nodes = element_nodes(g, i, j);
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) {
          const int r = g.dof[nodes[a]], c = g.dof[nodes[b]];
          if (r >= 0 && c >= 0) trips.emplace_back(r, c, 1.0);
        }
    }
  Pattern p;
  p.shape.resize(g.num_free(), g.num_free());
  p.shape.setFromTriplets(trips.begin(), trips.end());
  p.shape.makeCompressed();
  p.slots.assign(static_cast<std::size_t>(g.nx) * g.ny * 16, -1);
  const int* outer = p.shape.outerIndexPtr();
  const int* inner = p.shape.innerIndexPtr();
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) {
      auto nodes = element_nodes(g, i, j);
      const std::size_t e = static_cast<std::size_t>(j) * g.nx + i;
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) {
          const int r = g.dof[nodes[a]], c = g.dof[nodes[b]];
          if (r < 0 || c < 0) continue;
          const int* pos = std::lower_bound(inner + outer[c], inner + outer[c + 1], r);
          p.slots[e * 16 + a * 4 + b] = static_cast<int>(pos - inner);
        }
    }
  return p;
}

const Pattern& cached_pattern(const Grid& g) {
  thread_local int cached_nx = -1, cached_ny = -1;
  thread_local Pattern cached;
  if (cached_nx != g.nx || cached_ny != g.ny) {
    cached = make_pattern(g);
    cached_nx = g.nx;
    cached_ny = g.ny;
  }
  return cached;
}

}  // namespace

SparseMatrix assemble_stiffness(const Grid& g, const Eigen::VectorXd& k) {
  if (k.size() != g.num_nodes()) throw DimensionMismatch("assemble_stiffness: expected a nodal coefficient");
  const Pattern& p = cached_pattern(g);
  const Q1Local L = q1_local(1.0 / g.nx, 1.0 / g.ny);
  SparseMatrix a = p.shape;
  double* vals = a.valuePtr();
  std::fill(vals, vals + a.nonZeros(), 0.0);
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) {
      auto nodes = element_nodes(g, i, j);
      Eigen::Matrix4d ke = k[nodes[0]] * L.stiff[0] + k[nodes[1]] * L.stiff[1] + k[nodes[2]] * L.stiff[2] +
                           k[nodes[3]] * L.stiff[3];
      const std::size_t e = static_cast<std::size_t>(j) * g.nx + i;
      for (int a2 = 0; a2 < 4; ++a2)
        for (int b = 0; b < 4; ++b) {
          const int s = p.slots[e * 16 + a2 * 4 + b];
          if (s >= 0) vals[s] += ke(a2, b);
        }
    }
  return a;
}

SparseMatrix assemble_mass(const Grid& g) {
  const Pattern& p = cached_pattern(g);
  const Q1Local L = q1_local(1.0 / g.nx, 1.0 / g.ny);
  SparseMatrix m = p.shape;
  double* vals = m.valuePtr();
  std::fill(vals, vals + m.nonZeros(), 0.0);
  for (std::size_t e = 0; e < static_cast<std::size_t>(g.nx) * g.ny; ++e)
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) {
        const int s = p.slots[e * 16 + a * 4 + b];
        if (s >= 0) vals[s] += L.mass(a, b);
      }
  return m;
}

Eigen::VectorXd assemble_load(const Grid& g, const std::function<double(double, double)>& f) {
  const double hx = 1.0 / g.nx, hy = 1.0 / g.ny;
  const Q1Local L = q1_local(hx, hy);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(g.num_free());
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) {
      auto nodes = element_nodes(g, i, j);
      for (int q = 0; q < 4; ++q) {
        const double x = (i + 0.5 * (1 + L.qpoint[q][0])) * hx;
        const double y = (j + 0.5 * (1 + L.qpoint[q][1])) * hy;
        const double fq = f(x, y) * L.detj;
        for (int a = 0; a < 4; ++a) {
          const int d = g.dof[nodes[a]];
          if (d >= 0) b[d] += fq * L.shape[q][a];
        }
      }
    }
  return b;
}

AffineOperator affine_operator_from_kl(const KLExpansion& kl, const Grid& g) {
  if (kl.modes.rows() != g.num_nodes()) throw DimensionMismatch("affine operator: KL modes do not match the grid");
  AffineOperator op;
  op.param_dim = kl.dim();
  op.matrices.push_back(assemble_stiffness(g, Eigen::VectorXd::Constant(g.num_nodes(), kl.mean)));
  for (int p = 0; p < kl.dim(); ++p)
    op.matrices.push_back(assemble_stiffness(g, std::sqrt(kl.eigenvalues[p]) * kl.modes.col(p)));
  const int d = kl.dim();
  op.coefficients = [d](std::span<const double> xi, std::span<double> theta) {
    theta[0] = 1.0;
    for (int p = 0; p < d; ++p) theta[p + 1] = xi[p];
  };
  return op;
}

AffineRhs assemble_rhs(const Grid& g, int param_dim) {
  if (param_dim < 1) throw ConfigError("rhs: parameter dimension must be >= 1");
  AffineRhs rhs;
  rhs.param_dim = param_dim;
  rhs.vectors.push_back(assemble_load(g, [](double x, double y) { return 2.0 * std::exp(x + y + 3.0); }));
  const int last = param_dim - 1;
  rhs.coefficients = [last](std::span<const double> xi, std::span<double> theta) {
    theta[0] = std::sin(xi[0] * xi[last]);
  };
  return rhs;
}

GalerkinSolver::GalerkinSolver(const AffineOperator& op) : op_(&op), theta_(op.size()) {
  if (op.matrices.empty()) throw ConfigError("galerkin: empty operator");
  work_ = op.matrices[0];
  for (const auto& m : op.matrices)
    if (m.nonZeros() != work_.nonZeros() || m.rows() != work_.rows())
      throw DimensionMismatch("galerkin: affine matrices must share one sparsity pattern");
  llt_.analyzePattern(work_);
}

GalerkinSolver::GalerkinSolver(const GalerkinSolver& other) : op_(other.op_), work_(other.work_), theta_(other.theta_) {
  llt_.analyzePattern(work_);
}

SparseMatrix GalerkinSolver::matrix(std::span<const double> xi) const {
  std::vector<double> theta(op_->size());
  op_->coefficients(xi, theta);
  SparseMatrix a = op_->matrices[0];
  Eigen::Map<Eigen::VectorXd> v(a.valuePtr(), a.nonZeros());
  v *= theta[0];
  for (std::size_t p = 1; p < op_->size(); ++p)
    v += theta[p] * Eigen::Map<const Eigen::VectorXd>(op_->matrices[p].valuePtr(), a.nonZeros());
  return a;
}

namespace {
std::string describe(std::span<const double> xi) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < xi.size() && i < 4; ++i) os << (i ? ", " : "") << xi[i];
  if (xi.size() > 4) os << ", ...";
  os << ")";
  return os.str();
}
}  // namespace

Eigen::VectorXd GalerkinSolver::solve(std::span<const double> xi, const Eigen::VectorXd& rhs) {
  op_->coefficients(xi, theta_);
  const Eigen::Index nnz = work_.nonZeros();
  Eigen::Map<Eigen::VectorXd> v(work_.valuePtr(), nnz);
  v = theta_[0] * Eigen::Map<const Eigen::VectorXd>(op_->matrices[0].valuePtr(), nnz);
  for (std::size_t p = 1; p < op_->size(); ++p)
    v += theta_[p] * Eigen::Map<const Eigen::VectorXd>(op_->matrices[p].valuePtr(), nnz);
  llt_.factorize(work_);
  if (llt_.info() != Eigen::Success)
    throw NumericalError("stiffness matrix is not positive definite at xi = " + describe(xi));
  return llt_.solve(rhs);
}

Eigen::VectorXd assemble_rhs_at(const AffineRhs& rhs, std::span<const double> xi) {
  std::vector<double> theta(rhs.size());
  rhs.coefficients(xi, theta);
  Eigen::VectorXd b = theta[0] * rhs.vectors[0];
  for (std::size_t q = 1; q < rhs.size(); ++q) b += theta[q] * rhs.vectors[q];
  return b;
}

Eigen::VectorXd solve_deterministic(const AffineOperator& op, const AffineRhs& rhs, std::span<const double> xi) {
  GalerkinSolver s(op);
  return s.solve(xi, assemble_rhs_at(rhs, xi));
}

VInnerProduct::VInnerProduct(const Grid& g)
    : VInnerProduct(SparseMatrix(assemble_mass(g) + assemble_stiffness(g, Eigen::VectorXd::Ones(g.num_nodes())))) {}

VInnerProduct::VInnerProduct(SparseMatrix x) : x_(std::move(x)), llt_(std::make_shared<Eigen::SimplicialLLT<SparseMatrix>>()) {
  llt_->compute(x_);
  if (llt_->info() != Eigen::Success) throw NumericalError("V inner product matrix factorization failed");
}

Eigen::VectorXd VInnerProduct::riesz(const Eigen::VectorXd& functional) const {
  if (functional.size() != x_.rows()) throw DimensionMismatch("riesz: functional size mismatch");
  return llt_->solve(functional);
}

Eigen::MatrixXd VInnerProduct::whiten(const Eigen::MatrixXd& functionals) const {
  if (functionals.rows() != x_.rows()) throw DimensionMismatch("whiten: functional size mismatch");
  Eigen::MatrixXd w = llt_->permutationP() * functionals;
  llt_->matrixL().solveInPlace(w);
  return w;
}

double VInnerProduct::norm(const Eigen::VectorXd& u) const { return std::sqrt(std::max(0.0, inner(u, u))); }

void write_nodal_csv(const Grid& g, const std::vector<std::pair<std::string, Eigen::VectorXd>>& columns,
                     const std::string& path) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path);
  os << "x,y";
  for (const auto& c : columns) os << "," << c.first;
  os << "\n";
  os.precision(17);
  for (int n = 0; n < g.num_nodes(); ++n) {
    os << g.x(n) << "," << g.y(n);
    for (const auto& c : columns) os << "," << c.second[n];
    os << "\n";
  }
}

}  // namespace varsep::field
