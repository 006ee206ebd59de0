#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "varsep/errors.hpp"
#include "varsep/field.hpp"

using namespace varsep;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double pi = std::numbers::pi;

// Naive Q1 stiffness: coefficient interpolated at each Gauss point, assembled
// into a dense matrix over all nodes and then restricted.
MatrixXd naive_stiffness(const field::Grid& g, const VectorXd& k) {
  const int n = g.num_nodes();
  MatrixXd a = MatrixXd::Zero(n, n);
  const double hx = 1.0 / g.nx, hy = 1.0 / g.ny;
  const double gp[2] = {0.5 - 0.5 / std::sqrt(3.0), 0.5 + 0.5 / std::sqrt(3.0)};
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) {
      const int nodes[4] = {g.node(i, j), g.node(i + 1, j), g.node(i, j + 1), g.node(i + 1, j + 1)};
      for (double s : gp)
        for (double t : gp) {
          // local coordinates s,t in [0,1]; node order (0,0),(1,0),(0,1),(1,1)
          const double phi[4] = {(1 - s) * (1 - t), s * (1 - t), (1 - s) * t, s * t};
          const double dx[4] = {-(1 - t) / hx, (1 - t) / hx, -t / hx, t / hx};
          const double dy[4] = {-(1 - s) / hy, -s / hy, (1 - s) / hy, s / hy};
          double kq = 0.0;
          for (int c = 0; c < 4; ++c) kq += phi[c] * k[nodes[c]];
          for (int p = 0; p < 4; ++p)
            for (int q = 0; q < 4; ++q)
              a(nodes[p], nodes[q]) += kq * (dx[p] * dx[q] + dy[p] * dy[q]) * hx * hy / 4.0;
        }
    }
  MatrixXd r(g.num_free(), g.num_free());
  for (int p = 0; p < g.num_free(); ++p)
    for (int q = 0; q < g.num_free(); ++q) r(p, q) = a(g.node_of[p], g.node_of[q]);
  return r;
}

double mms_error(int n) {
  auto g = field::build_grid(n, n);
  auto exact = [](double x, double y) { return std::cos(pi * x) * std::cos(pi * y / 2); };
  VectorXd b = field::assemble_load(g, [&](double x, double y) { return 1.25 * pi * pi * exact(x, y); });
  Eigen::SimplicialLLT<field::SparseMatrix> llt(field::assemble_stiffness(g, VectorXd::Ones(g.num_nodes())));
  VectorXd u = field::expand(g, llt.solve(b));
  VectorXd e(g.num_nodes());
  for (int k = 0; k < g.num_nodes(); ++k) e[k] = u[k] - exact(g.x(k), g.y(k));
  return field::l2_norm(g, e);
}

}  // namespace

TEST_CASE("grid counts and dirichlet edge") {
  auto g = field::build_grid(4, 3);
  CHECK(g.num_nodes() == 20);
  CHECK(g.num_free() == 15);
  for (int n = 0; n < g.num_nodes(); ++n) CHECK((g.dirichlet[n] != 0) == (g.y(n) == 1.0));
  CHECK(field::trapezoid_weights(g).sum() == doctest::Approx(1.0));
  CHECK_THROWS_AS(field::build_grid(1, 4), ConfigError);
  VectorXd v = VectorXd::LinSpaced(g.num_free(), 1, 15);
  CHECK(field::restrict_to_free(g, field::expand(g, v)) == v);
}

TEST_CASE("manufactured solution converges at second order") {
  const double e8 = mms_error(8), e16 = mms_error(16), e32 = mms_error(32);
  CHECK(e8 / e16 == doctest::Approx(4.0).epsilon(0.15));
  CHECK(e16 / e32 == doctest::Approx(4.0).epsilon(0.1));
  CHECK(e32 < 2e-3);
}

TEST_CASE("zero load gives zero solution") {
  auto g = field::build_grid(6, 6);
  auto kl = field::assemble_kl(1.0, 0.1, 0.5, 0.5, g, 4);
  auto op = field::affine_operator_from_kl(kl, g);
  field::GalerkinSolver s(op);
  std::vector<double> xi = {0.3, -0.2, 0.5, 0.1};
  CHECK(s.solve(xi, VectorXd::Zero(g.num_free())).norm() == 0.0);
}

TEST_CASE("reflection x1 -> 1 - x1 is a symmetry of the deterministic problem") {
  auto g = field::build_grid(10, 10);
  VectorXd k(g.num_nodes());
  for (int n = 0; n < g.num_nodes(); ++n) k[n] = 1.0 + 0.5 * std::cos(2 * pi * g.x(n)) * g.y(n);
  Eigen::SimplicialLLT<field::SparseMatrix> llt(field::assemble_stiffness(g, k));
  VectorXd u = field::expand(g, llt.solve(field::assemble_load(g, [](double x, double y) {
                                 return std::exp(std::sin(pi * x)) * (1 + y);
                               })));
  for (int j = 0; j <= g.ny; ++j)
    for (int i = 0; i <= g.nx; ++i) CHECK(u[g.node(i, j)] == doctest::Approx(u[g.node(g.nx - i, j)]).epsilon(1e-10));
}

TEST_CASE("affine operator matches direct assembly") {
  auto g = field::build_grid(7, 5);
  auto kl = field::assemble_kl(2.0, 0.3, 0.4, 0.6, g, 6);
  auto op = field::affine_operator_from_kl(kl, g);
  REQUIRE(op.size() == 7);
  for (const auto& m : op.matrices) {
    MatrixXd d(m);
    CHECK((d - d.transpose()).norm() == doctest::Approx(0.0).epsilon(1e-14));
  }
  field::GalerkinSolver s(op);
  std::vector<double> zero(6, 0.0);
  MatrixXd a0(s.matrix(zero));
  CHECK((a0 - 2.0 * MatrixXd(field::assemble_stiffness(g, VectorXd::Ones(g.num_nodes())))).norm() < 1e-12);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int t = 0; t < 3; ++t) {
    std::vector<double> xi(6);
    for (auto& x : xi) x = u(rng);
    VectorXd kfield = kl.realize(xi);
    MatrixXd direct = naive_stiffness(g, kfield);
    MatrixXd affine(s.matrix(xi));
    CHECK((direct - affine).norm() <= 1e-10 * direct.norm());
  }
}

TEST_CASE("solver reuse across parameters matches fresh factorizations") {
  auto g = field::build_grid(8, 8);
  auto kl = field::assemble_kl(1.0, 0.2, 0.5, 0.5, g, 3);
  auto op = field::affine_operator_from_kl(kl, g);
  auto rhs = field::assemble_rhs(g, 3);
  field::GalerkinSolver s(op);
  field::GalerkinSolver copy(s);
  for (double a : {-1.0, 0.2, 0.9}) {
    std::vector<double> xi = {a, -a / 2, 0.7};
    VectorXd b = field::assemble_rhs_at(rhs, xi);
    CHECK(b.norm() > 0);
    MatrixXd dense(s.matrix(xi));
    VectorXd ref = dense.ldlt().solve(b);
    CHECK((s.solve(xi, b) - ref).norm() <= 1e-10 * ref.norm());
    CHECK((copy.solve(xi, b) - ref).norm() <= 1e-10 * ref.norm());
    CHECK((field::solve_deterministic(op, rhs, xi) - ref).norm() <= 1e-10 * ref.norm());
  }
}

TEST_CASE("rhs coefficient and load") {
  auto g = field::build_grid(4, 4);
  auto rhs = field::assemble_rhs(g, 5);
  std::vector<double> xi = {0.5, 0, 0, 0, -0.8};
  VectorXd b = field::assemble_rhs_at(rhs, xi);
  CHECK((b - std::sin(-0.4) * rhs.vectors[0]).norm() < 1e-14);
  // The load integrates 2 exp(x+y+3) against the partition of unity minus the Dirichlet row.
  const double total = 2 * std::exp(3.0) * (std::exp(1.0) - 1) * (std::exp(1.0) - 1);
  CHECK(rhs.vectors[0].sum() < total);
  CHECK(rhs.vectors[0].sum() > 0.8 * total);
}

TEST_CASE("non-positive coefficient is reported") {
  auto g = field::build_grid(4, 4);
  auto kl = field::assemble_kl(0.1, 1.0, 0.5, 0.5, g, 1);
  auto op = field::affine_operator_from_kl(kl, g);
  field::GalerkinSolver s(op);
  std::vector<double> xi = {-100.0};
  CHECK_THROWS_AS(s.solve(xi, VectorXd::Ones(g.num_free())), NumericalError);
}

TEST_CASE("KL expansion properties") {
  auto g = field::build_grid(12, 10);
  SUBCASE("zero variance has no modes") {
    auto kl = field::assemble_kl(1.0, 0.0, 0.5, 0.5, g, 4);
    CHECK(kl.dim() == 0);
    CHECK(kl.truncated);
  }
  auto kl = field::assemble_kl(1.0, 0.5, 0.3, 0.6, g, 8);
  REQUIRE(kl.dim() == 8);
  CHECK_FALSE(kl.truncated);
  VectorXd w = field::trapezoid_weights(g);
  MatrixXd gram = kl.modes.transpose() * w.asDiagonal() * kl.modes;
  CHECK((gram - MatrixXd::Identity(8, 8)).norm() < 1e-10);
  for (int i = 1; i < 8; ++i) CHECK(kl.eigenvalues[i] <= kl.eigenvalues[i - 1]);
  // trace of the weighted covariance operator is sigma^2
  CHECK(kl.eigenvalues.sum() <= 0.5 + 1e-12);
  CHECK(kl.eigenvalues.sum() > 0.4);

  SUBCASE("eigenpairs of the weighted covariance operator") {
    const int n = g.num_nodes();
    MatrixXd c(n, n);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        const double dx = g.x(a) - g.x(b), dy = g.y(a) - g.y(b);
        c(a, b) = 0.5 * std::exp(-dx * dx / (2 * 0.09) - dy * dy / (2 * 0.36));
      }
    for (int m = 0; m < 8; ++m) {
      VectorXd lhs = c * w.asDiagonal() * kl.modes.col(m);
      CHECK((lhs - kl.eigenvalues[m] * kl.modes.col(m)).norm() <= 1e-9 * kl.modes.col(m).norm());
    }
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(w.cwiseSqrt().asDiagonal() * c * w.cwiseSqrt().asDiagonal());
    VectorXd top = es.eigenvalues().reverse().head(8);
    CHECK((top - kl.eigenvalues).norm() < 1e-10);
  }

  SUBCASE("Monte Carlo covariance with standard normal parameters") {
    auto full = field::assemble_kl(1.0, 0.5, 0.8, 0.8, g, 30);
    std::mt19937_64 rng(11);
    std::normal_distribution<double> nd;
    const int a = g.node(2, 3), b = g.node(8, 6);
    double sab = 0, saa = 0;
    const int samples = 20000;
    std::vector<double> xi(full.dim());
    for (int s = 0; s < samples; ++s) {
      for (auto& x : xi) x = nd(rng);
      VectorXd k = full.realize(xi);
      sab += (k[a] - 1) * (k[b] - 1);
      saa += (k[a] - 1) * (k[a] - 1);
    }
    const double dx = g.x(a) - g.x(b), dy = g.y(a) - g.y(b);
    CHECK(sab / samples == doctest::Approx(0.5 * std::exp(-(dx * dx + dy * dy) / (2 * 0.64))).epsilon(0.1));
    CHECK(saa / samples == doctest::Approx(0.5).epsilon(0.1));
  }
}

TEST_CASE("Riesz representer on a tiny mesh") {
  auto g = field::build_grid(2, 2);
  field::VInnerProduct v(g);
  MatrixXd x(v.matrix());
  CHECK((x - x.transpose()).norm() < 1e-14);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  VectorXd ell(g.num_free());
  for (auto& e : ell) e = nd(rng);
  VectorXd r = v.riesz(ell);
  CHECK((x * r - ell).norm() < 1e-12);
  // dual norm: sup over v of ell(v)/|v|_V equals |r|_V
  const double dual = std::sqrt(ell.dot(x.ldlt().solve(ell)));
  CHECK(v.norm(r) == doctest::Approx(dual).epsilon(1e-12));
  for (int t = 0; t < 200; ++t) {
    VectorXd w(g.num_free());
    for (auto& e : w) e = nd(rng);
    CHECK(ell.dot(w) / v.norm(w) <= dual * (1 + 1e-12));
  }
  // unit constant in the mass-plus-stiffness norm: mass part only (ignoring Dirichlet row)
  VectorXd one = VectorXd::Ones(g.num_free());
  CHECK(v.inner(one, one) > 0);
}
