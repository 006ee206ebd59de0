#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "varsep/basis.hpp"
#include "varsep/errors.hpp"
#include "varsep/kernels.hpp"

using namespace varsep;
using basis::PolyFamily;

namespace {

// Independent oracles from the standard special functions.
double legendre_oracle(int n, double x) { return std::sqrt(2.0 * n + 1.0) * std::legendre(n, x); }

double hermite_oracle(int n, double x) {
  // probabilists' He_n(x) = 2^{-n/2} H_n(x / sqrt 2), normalized by sqrt(n!)
  const double he = std::pow(2.0, -0.5 * n) * std::hermite(n, x / std::sqrt(2.0));
  return he / std::sqrt(std::tgamma(n + 1.0));
}

std::size_t binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return static_cast<std::size_t>(std::llround(r));
}

}  // namespace

TEST_CASE("univariate examples") {
  CHECK(basis::eval_poly1d(PolyFamily::LegendreUniform, 0, 0.7) == 1.0);
  CHECK(basis::eval_poly1d(PolyFamily::LegendreUniform, 2, 1.0) == doctest::Approx(std::sqrt(5.0)).epsilon(1e-14));
  CHECK(basis::eval_poly1d(PolyFamily::HermiteGaussian, 2, 0.0) ==
        doctest::Approx(-1.0 / std::sqrt(2.0)).epsilon(1e-14));
}

TEST_CASE("univariate families match special-function oracles up to degree 30") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  double worst_l = 0.0, worst_h = 0.0;
  for (int k = 0; k < 100; ++k) {
    const double x = u(rng), y = g(rng);
    for (int n = 0; n <= 30; ++n) {
      const double l = basis::eval_poly1d(PolyFamily::LegendreUniform, n, x);
      worst_l = std::max(worst_l, std::abs(l - legendre_oracle(n, x)) / std::max(1.0, std::abs(l)));
      const double h = basis::eval_poly1d(PolyFamily::HermiteGaussian, n, y);
      worst_h = std::max(worst_h, std::abs(h - hermite_oracle(n, y)) / std::max(1.0, std::abs(h)));
    }
  }
  CHECK(worst_l <= 1e-12);
  CHECK(worst_h <= 1e-12);
}

TEST_CASE("total degree set sizes") {
  CHECK(basis::total_degree_set(3, 9).size() == 220);
  CHECK(basis::total_degree_set(32, 5).size() == 435897);
  CHECK(basis::total_degree_set(8, 5).size() == 1287);
  auto one = basis::total_degree_set(1, 0);
  REQUIRE(one.size() == 1);
  CHECK(one[0][0] == 0);
}

TEST_CASE("total degree set is exhaustive, distinct and graded") {
  for (int d = 1; d <= 8; ++d) {
    for (int p = 0; p <= 6; ++p) {
      auto set = basis::total_degree_set(d, p);
      REQUIRE(set.size() == binomial(d + p, d));
      std::set<std::vector<int>> seen;
      int prev = 0;
      for (std::size_t i = 0; i < set.size(); ++i) {
        std::vector<int> a(set[i].begin(), set[i].end());
        const int t = set.total_degree(i);
        CHECK(t <= p);
        CHECK(t >= prev);
        prev = t;
        seen.insert(a);
      }
      CHECK(seen.size() == set.size());
    }
  }
}

TEST_CASE("graded lexicographic order within a degree") {
  auto set = basis::total_degree_set(2, 2);
  const int expected[6][2] = {{0, 0}, {1, 0}, {0, 1}, {2, 0}, {1, 1}, {0, 2}};
  for (int i = 0; i < 6; ++i) {
    CHECK(set[i][0] == expected[i][0]);
    CHECK(set[i][1] == expected[i][1]);
  }
}

TEST_CASE("basis cap guards infeasible tensorization") {
  CHECK_THROWS_AS(basis::total_degree_set(32, 10), ConfigError);
  CHECK_THROWS_AS(basis::total_degree_set(6, 12, 1000), ConfigError);
}

TEST_CASE("samples: support, moments, determinism") {
  auto s = basis::draw_samples(basis::Distribution::uniform(6), 500, 42);
  CHECK(s.points.rows() == 500);
  CHECK(s.points.cols() == 6);
  CHECK(s.points.maxCoeff() <= 1.0);
  CHECK(s.points.minCoeff() >= -1.0);

  auto n = basis::draw_samples(basis::Distribution::normal(3), 1000, 7);
  for (int c = 0; c < 3; ++c) CHECK(std::abs(n.points.col(c).mean()) <= 4.0 / std::sqrt(1000.0));

  auto a = basis::draw_samples(basis::Distribution::uniform(2), 1, 0);
  auto b = basis::draw_samples(basis::Distribution::uniform(2), 1, 0);
  CHECK(a.points.rows() == 1);
  CHECK(a.points(0, 0) == b.points(0, 0));
  CHECK(a.points(0, 1) == b.points(0, 1));

  CHECK_THROWS_AS(basis::Distribution::parse("cauchy", 2), ConfigError);
}

TEST_CASE("design matrix entries") {
  basis::Basis b(PolyFamily::LegendreUniform, 1, 2);
  Eigen::MatrixXd x(1, 1);
  x << 0.0;
  auto phi = basis::design_matrix(b, x);
  CHECK(phi(0, 0) == 1.0);
  CHECK(phi(0, 1) == doctest::Approx(0.0));
  CHECK(phi(0, 2) == doctest::Approx(-std::sqrt(5.0) / 2.0).epsilon(1e-14));

  basis::Basis b3(PolyFamily::HermiteGaussian, 3, 4);
  auto s = basis::draw_samples(basis::Distribution::normal(3), 20, 1);
  auto p3 = basis::design_matrix(b3, s.points);
  CHECK(p3.col(0).isOnes());
  // column j equals the product of univariate oracle values
  for (std::size_t j = 0; j < b3.size(); ++j) {
    for (int i = 0; i < 20; ++i) {
      double v = 1.0;
      for (int c = 0; c < 3; ++c) v *= hermite_oracle(b3.indices()[j][c], s.points(i, c));
      CHECK(p3(i, static_cast<Eigen::Index>(j)) == doctest::Approx(v).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(basis::design_matrix(b3, Eigen::MatrixXd::Zero(2, 2)), DimensionMismatch);
}

TEST_CASE("design matrix Monte-Carlo orthonormality") {
  const int m = 100000;
  basis::Basis bl(PolyFamily::LegendreUniform, 2, 3);
  auto su = basis::draw_samples(basis::Distribution::uniform(2), m, 11);
  Eigen::MatrixXd pl = basis::design_matrix(bl, su.points);
  Eigen::MatrixXd gl = pl.transpose() * pl / m;
  CHECK((gl - Eigen::MatrixXd::Identity(gl.rows(), gl.cols())).cwiseAbs().maxCoeff() <= 0.05);

  basis::Basis bh(PolyFamily::HermiteGaussian, 2, 3);
  auto sn = basis::draw_samples(basis::Distribution::normal(2), m, 12);
  Eigen::MatrixXd ph = basis::design_matrix(bh, sn.points);
  Eigen::MatrixXd gh = ph.transpose() * ph / m;
  CHECK((gh - Eigen::MatrixXd::Identity(gh.rows(), gh.cols())).cwiseAbs().maxCoeff() <= 0.05);
}

TEST_CASE("design matrix is deterministic and mode independent") {
  basis::Basis b(PolyFamily::LegendreUniform, 6, 5);
  auto s = basis::draw_samples(basis::Distribution::uniform(6), 300, 5);
  Eigen::MatrixXd a, c;
  kernels::design_matrix(b, s.points, a, kernels::Mode::Serial);
  kernels::design_matrix(b, s.points, c, kernels::Mode::Parallel);
  CHECK(a == c);
  CHECK(basis::design_matrix(b, s.points) == a);
}

TEST_CASE("subset evaluator agrees with the product oracle") {
  basis::Basis b(PolyFamily::LegendreUniform, 8, 5);
  std::mt19937_64 rng(3);
  std::vector<std::size_t> which;
  for (std::size_t i = 0; i < b.size(); ++i)
    if (i == 0 || rng() % 5 == 0) which.push_back(i);
  which.push_back(which[which.size() / 2]);  // duplicates are allowed
  basis::SubsetEvaluator ev(b, which);
  CHECK(ev.size() == which.size());
  CHECK(ev.nodes() < which.size() * 8);
  auto s = basis::draw_samples(basis::Distribution::uniform(8), 10, 4);
  std::vector<double> out(which.size()), x(8);
  for (int i = 0; i < 10; ++i) {
    for (int c = 0; c < 8; ++c) x[static_cast<std::size_t>(c)] = s.points(i, c);
    ev.eval(x, out);
    for (std::size_t k = 0; k < which.size(); ++k) {
      double v = 1.0;
      for (int c = 0; c < 8; ++c) v *= legendre_oracle(b.indices()[which[k]][c], x[static_cast<std::size_t>(c)]);
      CHECK(out[k] == doctest::Approx(v).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(basis::SubsetEvaluator(b, {b.size()}), DimensionMismatch);
  CHECK_THROWS_AS(ev.eval(std::vector<double>(3), out), DimensionMismatch);
}
