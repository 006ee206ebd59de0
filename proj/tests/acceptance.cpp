// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "lasso_oracle.hpp"
#include "varsep/bench.hpp"
#include "varsep/sreg.hpp"
#include "varsep/tensor.hpp"

using namespace varsep;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(const std::string& id, bool pass, const std::string& detail) {
  std::printf("criterion %-3s %s  %s\n", id.c_str(), pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

double since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

const bench::ResultRecord& find(const std::vector<bench::ResultRecord>& rs, const std::string& method) {
  for (const auto& r : rs)
    if (r.method == method) return r;
  throw std::runtime_error("no record for " + method);
}

MatrixXd gaussian(Eigen::Index m, Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  MatrixXd a(m, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < m; ++i) a(i, j) = g(rng);
  return a;
}

// ---------------------------------------------------------------------------

void rastrigin_filars() {
  auto cfg = bench::default_config("rastrigin");
  cfg.methods = {"FILARS"};
  cfg.degrees = {10};
  cfg.train = {500};
  cfg.repeats = 5;
  const auto t0 = Clock::now();
  const auto rs = bench::run_rastrigin(cfg, {false, false});
  const double t = since(t0);
  const double eps = find(rs, "FILARS").epsilon;
  report("1", eps <= 4e-3 && t <= 60.0, fmt("FILARS p=10 M=500, 5 seeds: eps=%.3e (<= 4e-3), %.1f s (<= 60 s)", eps, t));
}

bool rastrigin_omp_filars() {
  auto cfg = bench::default_config("rastrigin");
  cfg.methods = {"OMP", "FILARS"};
  cfg.degrees = {12};
  cfg.train = {620};
  const auto t0 = Clock::now();
  const auto rs = bench::run_rastrigin(cfg, {false, false});
  const double t = since(t0);
  const double omp = find(rs, "OMP").epsilon, fil = find(rs, "FILARS").epsilon;
  const bool ok = omp <= 3e-4 && fil <= 3e-4 && fil <= 3.0 * omp && t <= 120.0;
  report("2", ok,
         fmt("p=12 M=620: OMP eps=%.3e, FILARS eps=%.3e (both <= 3e-4, FILARS/OMP=%.2f <= 3), %.1f s (<= 120 s)", omp,
             fil, fil / omp, t));
  return ok;
}

void rastrigin_hslrta() {
  auto cfg = bench::default_config("rastrigin");
  cfg.methods = {"HSLRTA"};
  cfg.hslrta_degrees = {16};
  cfg.budget = 2000;
  const auto rs = bench::run_rastrigin(cfg, {false, false});
  const auto& r = find(rs, "HSLRTA");
  report("3", r.epsilon <= 1e-4 && r.evals <= 2000,
         fmt("HSLRTA groups (2,2,2) p=16: eps=%.3e (<= 1e-4), %.0f evaluations (<= 2000)", r.epsilon,
             static_cast<double>(r.evals)));
}

void loo_identity() {
  std::mt19937_64 rng(404);
  std::uniform_int_distribution<int> pick(0, 99), size(1, 30);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const MatrixXd phi = gaussian(40, 100, rng);
    const VectorXd z = gaussian(40, 1, rng);
    std::vector<Eigen::Index> s;
    const int want = size(rng);
    while (static_cast<int>(s.size()) < want) {
      const int c = pick(rng);
      if (std::find(s.begin(), s.end(), c) == s.end()) s.push_back(c);
    }
    sreg::SparsePath path;
    sreg::PathEntry e;
    e.model = sreg::SparseModel::from_pairs(100, s, VectorXd::Zero(want), 0.0);
    e.signs = VectorXd::Ones(want);
    path.entries.push_back(e);
    const auto rep = sreg::loo_errors(phi, z, path);
    const double sigma = std::sqrt((z.array() - z.mean()).square().mean());
    const auto& sup = path.entries[0].model.support;
    MatrixXd sub(40, static_cast<Eigen::Index>(sup.size()));
    for (std::size_t c = 0; c < sup.size(); ++c) sub.col(static_cast<Eigen::Index>(c)) = phi.col(sup[c]);
    const double brute = oracle::brute_loo(sub, z, sigma);
    worst = std::max(worst, std::abs(rep.entries[0].error - brute) / brute);
  }
  report("4", worst <= 1e-8, fmt("fast LOO vs refit LOO, 50 problems M=40 N=100: max rel diff %.2e (<= 1e-8)", worst));
}

void ilars_kkt() {
  std::mt19937_64 rng(505);
  double worst = 0.0;
  bool monotone = true;
  std::size_t points = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const MatrixXd phi = gaussian(40, 100, rng);
    const VectorXd z = gaussian(40, 1, rng);
    const auto path = sreg::ilars(phi, z);
    double prev = std::numeric_limits<double>::infinity();
    for (const auto& e : path.entries) {
      ++points;
      if (e.lambda > prev) monotone = false;
      prev = e.lambda;
      const VectorXd c = phi.transpose() * (z - phi * e.model.dense());
      std::vector<char> on(100, 0);
      for (std::size_t k = 0; k < e.model.support.size(); ++k) {
        on[static_cast<std::size_t>(e.model.support[k])] = 1;
        worst = std::max(worst, std::abs(c[e.model.support[k]] - e.lambda * e.signs[static_cast<Eigen::Index>(k)]));
      }
      for (Eigen::Index i = 0; i < 100; ++i)
        if (!on[static_cast<std::size_t>(i)]) worst = std::max(worst, std::abs(c[i]) - e.lambda);
    }
  }
  report("5", worst <= 1e-8 && monotone,
         fmt("ILARS subgradient conditions over %.0f path points: max violation %.2e (<= 1e-8), lambda non-increasing: ",
             static_cast<double>(points), worst) +
             (monotone ? "yes" : "no"));
}

// Product over groups of random polynomials written in monomials.
struct SeparableTarget {
  std::vector<int> dims;
  std::vector<std::vector<std::pair<std::vector<int>, double>>> polys;

  double operator()(std::span<const double> x) const {
    double prod = 1.0;
    int off = 0;
    for (std::size_t k = 0; k < dims.size(); ++k) {
      double s = 0.0;
      for (const auto& [exps, c] : polys[k]) {
        double m = c;
        for (int j = 0; j < dims[k]; ++j) m *= std::pow(x[off + j], exps[j]);
        s += m;
      }
      prod *= s;
      off += dims[k];
    }
    return prod;
  }
};

SeparableTarget random_target(std::mt19937_64& rng) {
  SeparableTarget t;
  const int r = 2 + static_cast<int>(rng() % 2);
  std::normal_distribution<double> g;
  for (int k = 0; k < r; ++k) {
    const int d = 1 + static_cast<int>(rng() % 2);
    const int deg = 1 + static_cast<int>(rng() % 4);
    t.dims.push_back(d);
    std::vector<std::pair<std::vector<int>, double>> poly;
    for (int a = 0; a <= deg; ++a)
      for (int b = 0; b <= (d == 2 ? deg - a : 0); ++b) {
        if (rng() % 3 == 0 && !(a == 0 && b == 0)) continue;
        std::vector<int> e = {a};
        if (d == 2) e.push_back(b);
        poly.emplace_back(e, g(rng));
      }
    t.polys.push_back(poly);
  }
  return t;
}

void rank_one_exactness() {
  std::mt19937_64 rng(606);
  double worst = 0.0;
  int skipped = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto target = random_target(rng);
    const auto split = std::make_shared<const tensor::GroupSplit>(target.dims, basis::Distribution::Kind::Uniform, 4);
    std::vector<std::size_t> counts;
    for (std::size_t k = 0; k < split->num_groups(); ++k) counts.push_back(3 * split->basis(k).size());
    const auto design = tensor::make_fiber_design(*split, counts, rng());
    const int dim = split->total_dim();
    const auto anchor_pts = basis::draw_samples(split->full_dist(), 1, rng()).points;
    std::vector<double> anchor(anchor_pts.data(), anchor_pts.data() + dim);
    if (std::abs(target(anchor)) <= 1e-6) {
      ++skipped;
      continue;
    }
    std::vector<VectorXd> z;
    for (std::size_t k = 0; k < split->num_groups(); ++k) {
      const MatrixXd pts = tensor::fiber_points(*split, k, anchor, design.points[k]);
      VectorXd v(pts.rows());
      std::vector<double> x(static_cast<std::size_t>(dim));
      for (Eigen::Index i = 0; i < pts.rows(); ++i) {
        for (int c = 0; c < dim; ++c) x[static_cast<std::size_t>(c)] = pts(i, c);
        v[i] = target(x);
      }
      z.push_back(v);
    }
    const auto fit = tensor::sparse_rank_one(*split, design, anchor, z);
    const auto test = basis::draw_samples(split->full_dist(), 100, rng()).points;
    std::vector<double> x(static_cast<std::size_t>(dim));
    for (Eigen::Index i = 0; i < test.rows(); ++i) {
      for (int c = 0; c < dim; ++c) x[static_cast<std::size_t>(c)] = test(i, c);
      worst = std::max(worst, std::abs(fit.term.eval(tensor::features(*split, x)) - target(x)));
    }
  }
  report("6", worst <= 1e-8,
         fmt("rank-one fits of 100 separable polynomials (%.0f skipped, |anchor| <= 1e-6): max pointwise error %.2e "
             "(<= 1e-8)",
             skipped, worst));
}

void sepfun() {
  const auto cfg = bench::default_config("sepfun");
  const auto t0 = Clock::now();
  const auto rep = bench::run_sepfun(cfg, {false, false});
  const double t = since(t0);
  report("7", rep.max_anchor_residual <= 1e-12,
         fmt("NVS on the separable-exponential field, %.0f steps: max relative residual at previous anchors %.2e "
             "(<= 1e-12)",
             static_cast<double>(find(rep.records, "NVS").n_terms), rep.max_anchor_residual));
  const double nvs = find(rep.records, "NVS").epsilon, fil = find(rep.records, "NVS+FILARS").epsilon;
  report("8", nvs <= 1e-3 && fil <= 1e-3 && t <= 600.0,
         fmt("50x50 grid, N=20, 1000 FILARS samples: NVS eps=%.3e, NVS+FILARS eps=%.3e (<= 1e-3), %.1f s (<= 600 s)",
             nvs, fil, t));
}

bool elliptic() {
  const auto cfg = bench::default_config("elliptic");
  const auto t0 = Clock::now();
  const auto rep = bench::run_elliptic(cfg, {false, false});
  const double t = since(t0);
  const double nvs = find(rep.records, "NVS").epsilon, hs = find(rep.records, "NVS+HSLRTA").epsilon;
  report("9a", rep.residual_drop >= 1e3,
         fmt("average residual N=1 over N=5: %.1f (>= 1e3)", rep.residual_drop));
  report("9b", nvs <= 2e-2 && hs <= 2e-2 && t <= 1800.0,
         fmt("NVS eps=%.3e, NVS+HSLRTA eps=%.3e (<= 2e-2) over 1e4 samples, %.1f s (<= 1800 s)", nvs, hs, t));
  report("9c", rep.max_estimator_mismatch <= 1e-10,
         fmt("estimator vs direct Riesz at 20 xi: max relative difference %.2e (<= 1e-10)", rep.max_estimator_mismatch));
  const double ratio = rep.fem_s / rep.surrogate_s;
  const bool ok = ratio >= 50.0;
  report("10", ok,
         fmt("per-sample time: FEM %.3e s, NVS+HSLRTA %.3e s, speedup %.1f (>= 50)", rep.fem_s, rep.surrogate_s, ratio));
  return ok;
}

}  // namespace

int main() {
  rastrigin_filars();
  const bool ratio2 = rastrigin_omp_filars();
  rastrigin_hslrta();
  loo_identity();
  ilars_kkt();
  rank_one_exactness();
  sepfun();
  const bool ratio10 = elliptic();
  report("11", ratio2 && ratio10,
         "CPU time checked only as ratios: FILARS/OMP accuracy at equal cost (2) and FEM/surrogate speedup (10)");
  std::printf("%s: %d failing criteria\n", failures ? "FAILED" : "ALL PASSED", failures);
  return failures ? 1 : 0;
}
