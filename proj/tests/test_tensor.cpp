#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "varsep/errors.hpp"
#include "varsep/tensor.hpp"

using namespace varsep;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using Kind = basis::Distribution::Kind;

namespace {

std::shared_ptr<const tensor::GroupSplit> make_split(std::vector<int> dims, int degree) {
  return std::make_shared<const tensor::GroupSplit>(std::move(dims), Kind::Uniform, degree);
}

double max_error(const std::function<double(std::span<const double>)>& approx,
                 const std::function<double(std::span<const double>)>& exact, int dim, std::uint64_t seed) {
  auto pts = basis::draw_samples(basis::Distribution::uniform(dim), 100, seed);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < pts.points.rows(); ++i) {
    std::vector<double> x(dim);
    for (int c = 0; c < dim; ++c) x[c] = pts.points(i, c);
    worst = std::max(worst, std::abs(approx(x) - exact(x)));
  }
  return worst;
}

// Direct rank-one fit at a fixed anchor, evaluating fibers of f.
tensor::RankOneFit fit_once(const tensor::GroupSplit& split, const tensor::Target& f, std::vector<std::size_t> counts,
                            std::vector<double> anchor, tensor::FiberDesign* keep = nullptr) {
  auto design = tensor::make_fiber_design(split, counts, 5);
  std::vector<VectorXd> z;
  for (std::size_t k = 0; k < split.num_groups(); ++k) {
    MatrixXd pts = tensor::fiber_points(split, k, anchor, design.points[k]);
    VectorXd v(pts.rows());
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
      std::vector<double> x(pts.cols());
      for (Eigen::Index c = 0; c < pts.cols(); ++c) x[c] = pts(i, c);
      v[i] = f(x);
    }
    z.push_back(v);
  }
  auto fit = tensor::sparse_rank_one(split, design, anchor, z);
  if (keep) *keep = design;
  return fit;
}

double term_at(const tensor::GroupSplit& split, const tensor::RankOneTerm& t, std::span<const double> x) {
  return t.eval(tensor::features(split, x));
}

// Flat coefficient tensor of a hierarchical node over 1-d groups.
std::vector<double> flatten(const tensor::HierNode& node, std::size_t nb) {
  if (node.groups == 1) {
    std::vector<double> c(nb, 0.0);
    for (std::size_t k = 0; k < node.leaf.support.size(); ++k) c[node.leaf.support[k]] += node.leaf.values[k];
    return c;
  }
  std::size_t inner_len = 1;
  for (std::size_t g = 1; g < node.groups; ++g) inner_len *= nb;
  std::vector<double> out(inner_len * nb, 0.0);
  for (std::size_t i = 0; i < node.inner.size(); ++i) {
    auto in = flatten(node.inner[i], nb);
    std::vector<double> o(nb, 0.0);
    for (std::size_t k = 0; k < node.outer[i].support.size(); ++k) o[node.outer[i].support[k]] += node.outer[i].values[k];
    for (std::size_t a = 0; a < inner_len; ++a)
      for (std::size_t b = 0; b < nb; ++b) out[b * inner_len + a] += node.weights[i] * in[a] * o[b];
  }
  return out;
}

}  // namespace

TEST_CASE("fiber samples vary only the chosen group") {
  auto split = make_split({1, 1}, 2);
  std::vector<double> anchor = {0.3, -0.4};
  auto s = tensor::fiber_samples(*split, 0, anchor, 400, 9);
  CHECK((s.points.col(1).array() == -0.4).all());
  auto again = tensor::fiber_samples(*split, 0, anchor, 400, 9);
  CHECK(s.points == again.points);
  // Kolmogorov-Smirnov statistic against U[-1,1]
  std::vector<double> v(s.points.col(0).data(), s.points.col(0).data() + 400);
  std::sort(v.begin(), v.end());
  double ks = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double cdf = (v[i] + 1.0) / 2.0;
    ks = std::max({ks, std::abs(cdf - double(i) / 400), std::abs(cdf - double(i + 1) / 400)});
  }
  CHECK(ks <= 1.63 / std::sqrt(400.0));
}

TEST_CASE("rank-one recovers constants and separable products") {
  auto split = make_split({1, 1}, 3);
  auto c = fit_once(*split, [](std::span<const double>) { return 2.5; }, {10, 10}, {0.1, 0.2});
  REQUIRE_FALSE(c.degenerate);
  std::vector<double> x = {-0.7, 0.9};
  CHECK(std::abs(term_at(*split, c.term, x) - 2.5) <= 1e-10);

  auto f = [](std::span<const double> p) { return (1.0 + p[0]) * (2.0 + p[1]); };
  auto prod = fit_once(*split, f, {12, 12}, {0.5, -0.3});
  REQUIRE_FALSE(prod.degenerate);
  CHECK(max_error([&](std::span<const double> p) { return term_at(*split, prod.term, p); }, f, 2, 3) <= 1e-8);

  auto nonsep = fit_once(*split, [](std::span<const double> p) { return std::sin(p[0] + p[1]); }, {12, 12}, {0.2, 0.4});
  CHECK_FALSE(nonsep.degenerate);
  CHECK(nonsep.term.factors.size() == 2);
}

TEST_CASE("rank-one flags a degenerate anchor") {
  auto split = make_split({1, 1}, 2);
  // anchor where the first factor vanishes
  auto f = [](std::span<const double> p) { return p[0] * (1.0 + p[1]); };
  auto fit = fit_once(*split, f, {8, 8}, {0.0, 0.5});
  CHECK(fit.degenerate);
}

TEST_CASE("rank-m deflation recovers an exactly rank-2 polynomial") {
  auto split = make_split({1, 1}, 3);
  auto f = [](std::span<const double> p) { return (1 + p[0]) * (1 + p[1]) + p[0] * p[0] * p[1] * p[1]; };
  tensor::Evaluator ev(f);
  tensor::RankMOptions o;
  o.max_rank = 2;
  o.fiber_counts = {15, 15};
  o.seed = 4;
  tensor::RankMTrace trace;
  auto a = tensor::sparse_rank_m(tensor::as_batch(ev), split, o, &trace);
  CHECK(a.rank() == 2);
  CHECK(max_error([&](std::span<const double> p) { return tensor::eval_low_rank(a, p); }, f, 2, 8) <= 1e-6);
  for (std::size_t i = 0; i < trace.fiber_before.size(); ++i) CHECK(trace.fiber_after[i] <= trace.fiber_before[i]);
  CHECK(ev.calls() == 2 * 30);
}

TEST_CASE("rank-m with m = 1 is a single rank-one fit") {
  auto split = make_split({1, 2}, 3);
  auto f = [](std::span<const double> p) { return (0.5 + p[0] * p[0]) * (1.0 + p[1] - p[2]); };
  tensor::Evaluator ev(f);
  tensor::RankMOptions o;
  o.max_rank = 1;
  o.fiber_counts = {12, 20};
  o.seed = 2;
  auto a = tensor::sparse_rank_m(tensor::as_batch(ev), split, o);
  REQUIRE(a.rank() == 1);
  CHECK(max_error([&](std::span<const double> p) { return tensor::eval_low_rank(a, p); }, f, 3, 1) <= 1e-8);
}

TEST_CASE("evaluation is linear in the weights") {
  auto split = make_split({1, 1}, 3);
  auto f = [](std::span<const double> p) { return std::exp(0.3 * p[0] * p[1]) + p[0]; };
  tensor::Evaluator ev(f);
  tensor::RankMOptions o;
  o.max_rank = 3;
  o.fiber_counts = {15, 15};
  auto a = tensor::sparse_rank_m(tensor::as_batch(ev), split, o);
  a.weights = {0.5, -1.5, 2.0};
  a.weights.resize(a.rank());
  std::vector<double> x = {0.3, -0.8};
  auto feat = tensor::features(*split, x);
  double sum = 0.0;
  for (std::size_t i = 0; i < a.rank(); ++i) sum += a.weights[i] * a.terms[i].eval(feat);
  CHECK(std::abs(tensor::eval_low_rank(a, x) - sum) <= 1e-14 * std::max(1.0, std::abs(sum)));

  tensor::RankMApprox empty;
  empty.split = split;
  CHECK(tensor::eval_low_rank(empty, x) == 0.0);
}

TEST_CASE("weight correction") {
  auto split = make_split({1, 1}, 3);
  auto f = [](std::span<const double> p) { return (1 + p[0]) * (1 + p[1]) + p[0] * p[0] * p[1] * p[1]; };
  tensor::Evaluator ev(f);
  tensor::RankMOptions o;
  o.max_rank = 2;
  o.fiber_counts = {15, 15};
  auto a = tensor::sparse_rank_m(tensor::as_batch(ev), split, o);
  auto pts = basis::draw_samples(basis::Distribution::uniform(2), 100, 77).points;
  VectorXd vals(pts.rows());
  for (Eigen::Index i = 0; i < pts.rows(); ++i) vals[i] = f(std::vector<double>{pts(i, 0), pts(i, 1)});

  auto exact = tensor::correct_weights(a, pts, vals);
  for (double w : exact.weights) CHECK(std::abs(w - 1.0) <= 1e-8);

  auto dup = a;
  dup.terms.push_back(a.terms[1]);
  dup.weights.push_back(1.0);
  auto d = tensor::correct_weights(dup, pts, vals);
  CHECK(std::abs(d.weights[1] + d.weights[2] - 1.0) <= 1e-8);
  CHECK(std::abs(d.weights[0] - 1.0) <= 1e-8);

  // an inexact approximation: corrected error never exceeds the uncorrected one
  auto g = [](std::span<const double> p) { return std::cos(p[0] * p[1] * 2.0) + p[1]; };
  tensor::Evaluator ev2(g);
  o.max_rank = 2;
  auto b = tensor::sparse_rank_m(tensor::as_batch(ev2), split, o);
  VectorXd gv(pts.rows());
  for (Eigen::Index i = 0; i < pts.rows(); ++i) gv[i] = g(std::vector<double>{pts(i, 0), pts(i, 1)});
  auto corr = tensor::correct_weights(b, pts, gv);
  auto before = (gv - tensor::eval_low_rank(b, pts)).norm();
  b.weights = corr.weights;
  CHECK((gv - tensor::eval_low_rank(b, pts)).norm() <= before * (1 + 1e-12));
}

TEST_CASE("hslrta with two groups equals rank-m") {
  auto split = make_split({1, 1}, 4);
  auto f = [](std::span<const double> p) { return std::exp(p[0]) * (1 + p[1]) + p[1] * p[1]; };
  tensor::Evaluator e1(f), e2(f);
  tensor::HslrtaOptions h;
  h.ranks = {3};
  h.fiber_counts = {15, 15};
  h.seed = 6;
  auto hier = tensor::hslrta(e1, split, h);
  tensor::RankMOptions o;
  o.max_rank = 3;
  o.fiber_counts = {15, 15};
  o.seed = 6;
  auto rm = tensor::sparse_rank_m(tensor::as_batch(e2), split, o);
  CHECK(e1.calls() == e2.calls());
  auto pts = basis::draw_samples(basis::Distribution::uniform(2), 50, 1).points;
  CHECK((tensor::eval_low_rank(hier, pts) - tensor::eval_low_rank(rm, pts)).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("hslrta reproduces an additively separable polynomial") {
  auto split = make_split({2, 1, 2}, 4);
  auto f = [](std::span<const double> p) {
    return 1.0 + p[0] * p[1] + p[0] * p[0] + (p[2] * p[2] * p[2] - 0.5 * p[2]) + (p[3] - 2.0 * p[4] * p[4] * p[3]);
  };
  tensor::Evaluator ev(f);
  tensor::HslrtaOptions h;
  h.ranks = {2, 2};
  h.fiber_counts = {30, 10, 30};
  h.seed = 3;
  auto a = tensor::hslrta(ev, split, h);
  CHECK_FALSE(a.partial);
  CHECK(a.evaluations == ev.calls());
  CHECK(max_error([&](std::span<const double> p) { return tensor::eval_low_rank(a, p); }, f, 5, 12) <= 1e-6);
}

TEST_CASE("hslrta respects the evaluation budget") {
  auto split = make_split({1, 1, 1}, 3);
  auto f = [](std::span<const double> p) { return std::exp(p[0] * p[1] - p[2]); };
  tensor::Evaluator ev(f, false, 150);
  tensor::HslrtaOptions h;
  h.ranks = {3, 3};
  h.fiber_counts = {20, 20, 20};
  auto a = tensor::hslrta(ev, split, h);
  CHECK(a.partial);
  CHECK(ev.calls() <= 150);
  std::vector<double> x = {0.1, 0.2, 0.3};
  CHECK(std::isfinite(tensor::eval_low_rank(a, x)));
}

TEST_CASE("hierarchical evaluation matches its flat tensor expansion") {
  auto split = make_split({1, 1, 1}, 1);
  auto f = [](std::span<const double> p) { return 1.0 + p[0] + 2.0 * p[1] * p[2] - p[0] * p[2] + 0.5 * p[0] * p[1] * p[2]; };
  tensor::Evaluator ev(f);
  tensor::HslrtaOptions h;
  h.ranks = {2, 2};
  h.fiber_counts = {6, 6, 6};
  auto a = tensor::hslrta(ev, split, h);
  auto flat = flatten(a.root, 2);
  auto pts = basis::draw_samples(basis::Distribution::uniform(3), 20, 4).points;
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    double direct = 0.0;
    for (int c2 = 0; c2 < 2; ++c2)
      for (int c1 = 0; c1 < 2; ++c1)
        for (int c0 = 0; c0 < 2; ++c0)
          direct += flat[(c2 * 2 + c1) * 2 + c0] *
                    basis::eval_poly1d(basis::PolyFamily::LegendreUniform, c0, pts(i, 0)) *
                    basis::eval_poly1d(basis::PolyFamily::LegendreUniform, c1, pts(i, 1)) *
                    basis::eval_poly1d(basis::PolyFamily::LegendreUniform, c2, pts(i, 2));
    std::vector<double> x = {pts(i, 0), pts(i, 1), pts(i, 2)};
    CHECK(std::abs(tensor::eval_low_rank(a, x) - direct) <= 1e-12);
  }
}

TEST_CASE("hslrta argument validation") {
  auto split = make_split({1, 1, 1}, 2);
  tensor::Evaluator ev([](std::span<const double>) { return 1.0; });
  tensor::HslrtaOptions h;
  h.ranks = {2};
  h.fiber_counts = {5, 5, 5};
  CHECK_THROWS_AS(tensor::hslrta(ev, split, h), ConfigError);
}
