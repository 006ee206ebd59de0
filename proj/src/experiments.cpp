#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <numbers>
#include <sstream>

#include <omp.h>

#include "varsep/basis.hpp"
#include "varsep/bench.hpp"
#include "varsep/errors.hpp"
#include "varsep/field.hpp"
#include "varsep/kernels.hpp"
#include "varsep/nvs.hpp"
#include "varsep/serialize.hpp"
#include "varsep/sreg.hpp"
#include "varsep/tensor.hpp"

namespace varsep::bench {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::span<const double> row_of(const Eigen::MatrixXd& pts, Eigen::Index i, std::vector<double>& buf) {
  buf.resize(static_cast<std::size_t>(pts.cols()));
  for (Eigen::Index c = 0; c < pts.cols(); ++c) buf[static_cast<std::size_t>(c)] = pts(i, c);
  return buf;
}

bool has(const std::vector<std::string>& v, const std::string& s) { return std::find(v.begin(), v.end(), s) != v.end(); }

std::string out_path(const ExperimentConfig& cfg, const std::string& name) {
  std::filesystem::create_directories(cfg.out);
  return (std::filesystem::path(cfg.out) / name).string();
}

void log(const RunOptions& ro, const std::string& msg) {
  if (ro.verbose) std::cerr << msg << '\n';
}

// ---------------------------------------------------------------------------
// Regression methods shared by rastrigin and fit.

sreg::SparseModel fit_method(const std::string& method, const Eigen::MatrixXd& phi, const Eigen::VectorXd& z) {
  if (method == "OLS") {
    const Eigen::VectorXd v = sreg::ols(phi, z);
    std::vector<sreg::Index> ids(static_cast<std::size_t>(v.size()));
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<sreg::Index>(i);
    return sreg::SparseModel::from_pairs(phi.cols(), std::move(ids), v, 0.0);
  }
  if (method == "OMP") {
    const auto path = sreg::omp_path(phi, z);
    const auto report = sreg::loo_errors(phi, z, path);
    if (report.all_non_evaluable) return path.final_model;
    return report.entries[report.best].debiased;
  }
  // ILARS and FILARS
  return sreg::filars(phi, z);
}

io::json model_document(const basis::Basis& b, const sreg::SparseModel& m) {
  return {{"basis", io::to_json(b)}, {"model", io::to_json(m)}};
}

struct SurrogateBuild {
  nvs::SurrogateSet set;
  double seconds = 0.0;
  std::size_t evals = 0;
  std::size_t m = 0;
};

SurrogateBuild build_surrogates(const std::string& method, const ExperimentConfig& cfg, const nvs::ZetaFunction& zetas,
                                std::size_t n, const basis::Distribution& dist) {
  nvs::DecoupleOptions d;
  d.dist = dist;
  d.degree = cfg.degrees.at(0);
  d.seed = basis::derive_seed(cfg.seed, 3);
  SurrogateBuild out;
  if (method == "NVS+FILARS") {
    d.method = nvs::DecoupleOptions::Method::Filars;
    d.train = train_for(cfg, 0);
    out.m = d.train;
  } else {
    d.method = nvs::DecoupleOptions::Method::Hslrta;
    d.groups = cfg.groups;
    d.hslrta.ranks = cfg.ranks;
    d.hslrta.fiber_counts.assign(cfg.groups.size(), cfg.fibers);
    out.m = cfg.fibers;
  }
  const auto t0 = Clock::now();
  out.set = nvs::decouple_zetas(zetas, n, d);
  out.seconds = seconds_since(t0);
  if (d.method == nvs::DecoupleOptions::Method::Filars) {
    out.evals = d.train;
  } else {
    for (const auto& t : out.set.terms()) out.evals += t.evaluations;
  }
  return out;
}

// Nodes with the largest and the smallest positive variance.
std::pair<Eigen::Index, Eigen::Index> extreme_variance_nodes(const Eigen::VectorXd& var) {
  Eigen::Index hi = 0, lo = -1;
  for (Eigen::Index i = 0; i < var.size(); ++i) {
    if (var[i] > var[hi]) hi = i;
    if (var[i] > 0 && (lo < 0 || var[i] < var[lo])) lo = i;
  }
  return {hi, lo < 0 ? hi : lo};
}

void write_densities(const std::string& path, const std::vector<std::string>& methods,
                     const std::vector<std::array<std::vector<double>, 2>>& values, std::array<Eigen::Index, 2> nodes,
                     std::size_t bins) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << "method,location,node,value,density\n";
  out.precision(17);
  for (std::size_t m = 0; m < methods.size(); ++m) {
    for (int w = 0; w < 2; ++w) {
      const auto h = density_estimate(values[m][static_cast<std::size_t>(w)], bins);
      for (std::size_t b = 0; b < h.density.size(); ++b)
        out << methods[m] << ',' << (w == 0 ? "max_variance" : "min_variance") << ',' << nodes[static_cast<std::size_t>(w)]
            << ',' << h.center(b) << ',' << h.density[b] << '\n';
    }
  }
}

constexpr Eigen::Index chunk_size = 250;

}  // namespace

double rastrigin(std::span<const double> x) {
  double s = 10.0 * static_cast<double>(x.size());
  for (double v : x) s += v * v - 10.0 * std::cos(2.0 * std::numbers::pi * v);
  return s;
}

double separable_function(double x1, double x2, std::span<const double> xi) {
  return std::exp(-0.5 * (x1 * xi[0] + x2 * xi[1] + x1 * x2 * xi[2]));
}

// ---------------------------------------------------------------------------

std::vector<ResultRecord> run_rastrigin(const ExperimentConfig& cfg, const RunOptions& ro) {
  validate(cfg);
  const int d = 6;
  const auto dist = basis::Distribution::uniform(d);
  const std::string hash = config_hash(cfg);
  std::vector<ResultRecord> records;

  auto exact_values = [&](const Eigen::MatrixXd& pts) {
    Eigen::VectorXd w(pts.rows());
    std::vector<double> buf;
    for (Eigen::Index i = 0; i < pts.rows(); ++i) w[i] = rastrigin(row_of(pts, i, buf));
    return w;
  };
  auto score = [&](const Eigen::VectorXd& w, const Eigen::VectorXd& wh) {
    const auto e = relative_mean_error({w.data(), static_cast<std::size_t>(w.size())},
                                       {wh.data(), static_cast<std::size_t>(wh.size())});
    if (e.excluded > 0)
      std::cerr << "rastrigin: " << e.excluded << " test samples with w = 0 excluded from the error\n";
    return e.mean;
  };

  for (const auto& method : cfg.methods) {
    const bool hier = method == "HSLRTA";
    const auto& degrees = hier ? cfg.hslrta_degrees : cfg.degrees;
    for (std::size_t row = 0; row < degrees.size(); ++row) {
      const int p = degrees[row];
      ResultRecord rec{"rastrigin", method, p, 0, 0, 0.0, 0.0, 0.0, 0, cfg.seed, hash};
      std::vector<double> offline, online;
      double eps = 0.0;
      for (std::size_t rep = 0; rep < cfg.repeats; ++rep) {
        const std::uint64_t seed = cfg.seed + rep;
        const auto test = basis::draw_samples(dist, cfg.test, basis::derive_seed(seed, 2));
        const Eigen::VectorXd w = exact_values(test.points);
        Eigen::VectorXd wh;
        if (hier) {
          auto split = std::make_shared<const tensor::GroupSplit>(cfg.groups, dist.kind, p);
          tensor::Evaluator ev([](std::span<const double> x) { return rastrigin(x); }, true,
                               cfg.budget > 0 ? cfg.budget : std::numeric_limits<std::size_t>::max());
          tensor::HslrtaOptions ho;
          ho.ranks = cfg.ranks;
          ho.fiber_counts.assign(cfg.groups.size(), cfg.fibers);
          ho.tolerance = cfg.tolerance;
          ho.seed = basis::derive_seed(seed, 3);
          const auto t0 = Clock::now();
          const auto approx = tensor::hslrta(ev, split, ho);
          offline.push_back(seconds_since(t0));
          online.push_back(median_time(cfg.timing_repeats, [&] { wh = tensor::eval_low_rank(approx, test.points); }) /
                           static_cast<double>(cfg.test));
          rec.evals = std::max(rec.evals, ev.calls());
          rec.m = rec.evals;
          if (ro.write_files && rep + 1 == cfg.repeats)
            io::write_document(out_path(cfg, "rastrigin_hslrta_p" + std::to_string(p) + ".json"), "hier_approx",
                               io::to_json(approx));
        } else {
          const std::size_t m = train_for(cfg, row);
          const auto train = basis::draw_samples(dist, m, basis::derive_seed(seed, 1));
          const Eigen::VectorXd z = exact_values(train.points);
          const auto t0 = Clock::now();
          const basis::Basis b(basis::PolyFamily::LegendreUniform, d, p);
          const Eigen::MatrixXd phi = basis::design_matrix(b, train.points);
          const auto model = fit_method(method, phi, z);
          offline.push_back(seconds_since(t0));
          online.push_back(median_time(cfg.timing_repeats, [&] { wh = sreg::predict(model, b, test.points); }) /
                           static_cast<double>(cfg.test));
          rec.m = m;
          rec.evals = m;
          rec.n_terms = std::max(rec.n_terms, model.nnz());
          if (ro.write_files && rep + 1 == cfg.repeats)
            io::write_document(out_path(cfg, "rastrigin_" + method + "_p" + std::to_string(p) + ".json"),
                               "sparse_model", model_document(b, model));
        }
        eps += score(w, wh);
      }
      rec.epsilon = eps / static_cast<double>(cfg.repeats);
      auto median = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        const std::size_t n = v.size();
        return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
      };
      rec.offline_s = median(offline);
      rec.online_s_per_sample = median(online);
      log(ro, "rastrigin " + method + " p=" + std::to_string(p) + " eps=" + std::to_string(rec.epsilon));
      records.push_back(rec);
    }
  }
  if (ro.write_files) write_results(records, out_path(cfg, "rastrigin_results.csv"));
  return records;
}

// ---------------------------------------------------------------------------

SepfunReport run_sepfun(const ExperimentConfig& cfg, const RunOptions& ro) {
  validate(cfg);
  const auto dist = basis::Distribution::normal(3);
  const std::string hash = config_hash(cfg);
  const auto grid = field::build_grid(cfg.grid, cfg.grid);
  const int nodes = grid.num_nodes();
  const Eigen::VectorXd w = field::trapezoid_weights(grid);
  std::vector<double> xs(static_cast<std::size_t>(nodes)), ys(static_cast<std::size_t>(nodes));
  for (int n = 0; n < nodes; ++n) {
    xs[static_cast<std::size_t>(n)] = grid.x(n);
    ys[static_cast<std::size_t>(n)] = grid.y(n);
  }
  nvs::NodalFunction f = [xs, ys](int n, std::span<const double> xi) {
    return separable_function(xs[static_cast<std::size_t>(n)], ys[static_cast<std::size_t>(n)], xi);
  };
  auto exact_field = [&](std::span<const double> xi) {
    Eigen::VectorXd g(nodes);
    for (int n = 0; n < nodes; ++n) g[n] = f(n, xi);
    return g;
  };
  auto wnorm = [&](const Eigen::VectorXd& v) { return std::sqrt(v.cwiseAbs2().dot(w)); };

  SepfunReport rep;
  const auto candidates = basis::draw_samples(dist, cfg.candidates, basis::derive_seed(cfg.seed, 1)).points;
  nvs::NvsFunctionOptions opts;
  opts.tolerance = cfg.tolerance;
  opts.max_terms = cfg.terms;
  auto t0 = Clock::now();
  const auto s = nvs::nvs_function(f, nodes, w, candidates, opts);
  const double nvs_s = seconds_since(t0);
  const std::size_t n_terms = s.terms();
  log(ro, "sepfun: " + std::to_string(n_terms) + " terms in " + std::to_string(nvs_s) + " s");

  // Interpolation at previous anchors after every step.
  for (std::size_t k = 1; k <= n_terms; ++k) {
    for (std::size_t j = 0; j < k; ++j) {
      std::vector<double> buf;
      const auto xi = row_of(s.anchors(), static_cast<Eigen::Index>(j), buf);
      const Eigen::VectorXd exact = exact_field(xi);
      const Eigen::VectorXd approx = s.modes().leftCols(static_cast<Eigen::Index>(k)) * s.zeta(xi, k);
      rep.max_anchor_residual = std::max(rep.max_anchor_residual, wnorm(exact - approx) / wnorm(exact));
    }
  }

  std::vector<std::string> methods = {"NVS"};
  std::vector<SurrogateBuild> builds;
  nvs::ZetaFunction zetas = [&s](std::span<const double> xi, std::size_t c) { return s.zeta(xi, c); };
  for (const auto& m : cfg.methods) {
    if (m == "NVS") continue;
    builds.push_back(build_surrogates(m, cfg, zetas, n_terms, dist));
    methods.push_back(m);
    log(ro, "sepfun: " + m + " surrogates in " + std::to_string(builds.back().seconds) + " s");
  }
  const std::size_t nm = methods.size();
  auto factors = [&](std::size_t m, std::span<const double> xi) {
    return m == 0 ? s.zeta(xi) : builds[m - 1].set.eval(xi);
  };

  // Average squared residual norm with N - 1 terms over fresh samples.
  {
    const auto pts = basis::draw_samples(dist, cfg.residual_samples, basis::derive_seed(cfg.seed, 5)).points;
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_terms), static_cast<Eigen::Index>(nm));
    std::vector<Eigen::MatrixXd> per(static_cast<std::size_t>(pts.rows()));
    kernels::for_each(static_cast<std::size_t>(pts.rows()), [&](std::size_t i) {
      std::vector<double> buf;
      const auto xi = row_of(pts, static_cast<Eigen::Index>(i), buf);
      const Eigen::VectorXd exact = exact_field(xi);
      per[i].resize(static_cast<Eigen::Index>(n_terms), static_cast<Eigen::Index>(nm));
      for (std::size_t m = 0; m < nm; ++m) {
        const Eigen::VectorXd z = factors(m, xi);
        Eigen::VectorXd r = exact;
        for (std::size_t n = 0; n < n_terms; ++n) {
          per[i](static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m)) = r.cwiseAbs2().dot(w);
          r -= z[static_cast<Eigen::Index>(n)] * s.modes().col(static_cast<Eigen::Index>(n));
        }
      }
    });
    for (const auto& p : per) acc += p;
    acc /= static_cast<double>(pts.rows());
    rep.residuals.methods = methods;
    for (std::size_t n = 0; n < n_terms; ++n) {
      ResidualRow row{n + 1, {}};
      for (std::size_t m = 0; m < nm; ++m) row.values.push_back(acc(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m)));
      rep.residuals.rows.push_back(std::move(row));
    }
  }

  // Test errors, moments and point densities.
  const auto test = basis::draw_samples(dist, cfg.test, basis::derive_seed(cfg.seed, 4)).points;
  std::vector<double> err_sum(nm, 0.0);
  std::vector<FieldMoments> moments(nm + 1, FieldMoments(nodes));
  std::array<Eigen::Index, 2> probe{0, 0};
  std::vector<std::array<std::vector<double>, 2>> probe_values(nm + 1);
  for (Eigen::Index start = 0; start < test.rows(); start += chunk_size) {
    const Eigen::Index len = std::min(chunk_size, test.rows() - start);
    std::vector<Eigen::MatrixXd> fields(nm + 1, Eigen::MatrixXd(nodes, len));
    Eigen::MatrixXd errs(len, static_cast<Eigen::Index>(nm));
    kernels::for_each(static_cast<std::size_t>(len), [&](std::size_t i) {
      std::vector<double> buf;
      const auto c = static_cast<Eigen::Index>(i);
      const auto xi = row_of(test, start + c, buf);
      fields[0].col(c) = exact_field(xi);
      const double ref = wnorm(fields[0].col(c));
      for (std::size_t m = 0; m < nm; ++m) {
        fields[m + 1].col(c) = s.modes() * factors(m, xi);
        errs(c, static_cast<Eigen::Index>(m)) = wnorm(fields[m + 1].col(c) - fields[0].col(c)) / ref;
      }
    });
    for (Eigen::Index c = 0; c < len; ++c) {
      for (std::size_t m = 0; m < nm; ++m) err_sum[m] += errs(c, static_cast<Eigen::Index>(m));
      for (std::size_t m = 0; m <= nm; ++m) moments[m].add(fields[m].col(c));
    }
    if (start == 0) {
      const auto [hi, lo] = extreme_variance_nodes(moments[0].variance());
      probe = {hi, lo};
    }
    for (std::size_t m = 0; m <= nm; ++m)
      for (int k = 0; k < 2; ++k)
        for (Eigen::Index c = 0; c < len; ++c)
          probe_values[m][static_cast<std::size_t>(k)].push_back(fields[m](probe[static_cast<std::size_t>(k)], c));
  }

  // Online timings over a fixed subset.
  const Eigen::Index nt = std::min<Eigen::Index>(static_cast<Eigen::Index>(cfg.timing_samples), test.rows());
  auto per_sample = [&](const std::function<double(std::span<const double>)>& run) {
    double sink = 0.0;
    const double t = median_time(cfg.timing_repeats, [&] {
      std::vector<double> buf;
      for (Eigen::Index i = 0; i < nt; ++i) sink += run(row_of(test, i, buf));
    });
    if (!std::isfinite(sink)) throw NumericalError("sepfun: non-finite value during timing");
    return t / static_cast<double>(nt);
  };
  std::vector<double> online(nm);
  online[0] = per_sample([&](std::span<const double> xi) { return s.field(xi)[0]; });
  for (std::size_t m = 1; m < nm; ++m)
    online[m] = per_sample([&](std::span<const double> xi) { return nvs::eval_separated(s, xi, &builds[m - 1].set)[0]; });

  for (std::size_t m = 0; m < nm; ++m) {
    ResultRecord r{"sepfun", methods[m], 0, cfg.candidates, n_terms, err_sum[m] / static_cast<double>(test.rows()),
                   nvs_s, online[m], cfg.candidates, cfg.seed, hash};
    if (m > 0) {
      r.p = cfg.degrees[0];
      r.m = builds[m - 1].m;
      r.offline_s = nvs_s + builds[m - 1].seconds;
      r.evals = cfg.candidates + builds[m - 1].evals;
    }
    rep.records.push_back(r);
  }

  if (ro.write_files) {
    write_results(rep.records, out_path(cfg, "sepfun_results.csv"));
    write_residual_table(rep.residuals, out_path(cfg, "sepfun_residuals.csv"));
    std::vector<std::string> all = {"reference"};
    all.insert(all.end(), methods.begin(), methods.end());
    std::vector<std::pair<std::string, Eigen::VectorXd>> cols;
    for (std::size_t m = 0; m <= nm; ++m) {
      cols.emplace_back("mean_" + all[m], moments[m].mean());
      cols.emplace_back("variance_" + all[m], moments[m].variance());
    }
    field::write_nodal_csv(grid, cols, out_path(cfg, "sepfun_fields.csv"));
    write_densities(out_path(cfg, "sepfun_densities.csv"), all, probe_values, probe, cfg.density_bins);
    const io::json meta = {{"grid", cfg.grid}, {"config_hash", hash}};
    io::write_document(out_path(cfg, "sepfun_separated.json"), "separated_function", io::to_json(s), meta);
    for (std::size_t m = 1; m < nm; ++m)
      io::write_document(out_path(cfg, "sepfun_surrogates_" + methods[m] + ".json"), "surrogate_set",
                         io::to_json(builds[m - 1].set), meta);
  }
  return rep;
}

// ---------------------------------------------------------------------------

EllipticReport run_elliptic(const ExperimentConfig& cfg, const RunOptions& ro) {
  validate(cfg);
  const std::string hash = config_hash(cfg);
  const auto grid = field::build_grid(cfg.grid, cfg.grid);
  const auto kl = field::assemble_kl(8.0, 3.0, 0.5, 0.5, grid, cfg.kl_dims);
  if (kl.truncated)
    std::cerr << "elliptic: only " << kl.dim() << " positive covariance eigenvalues; using d = " << kl.dim() << '\n';
  const int d = kl.dim();
  const auto dist = basis::Distribution::uniform(d);
  const auto op = field::affine_operator_from_kl(kl, grid);
  const auto rhs = field::assemble_rhs(grid, d);
  const field::VInnerProduct v(grid);

  EllipticReport rep;
  const auto candidates = basis::draw_samples(dist, cfg.candidates, basis::derive_seed(cfg.seed, 1)).points;
  nvs::NvsSpdeOptions opts;
  opts.tolerance = cfg.tolerance;
  opts.max_terms = cfg.terms;
  opts.dist = dist;
  opts.seed = basis::derive_seed(cfg.seed, 2);
  auto t0 = Clock::now();
  const auto s = nvs::nvs_spde(op, rhs, v, candidates, opts);
  const double nvs_s = seconds_since(t0);
  const std::size_t n_terms = s.terms();
  log(ro, "elliptic: " + std::to_string(n_terms) + " terms in " + std::to_string(nvs_s) + " s");

  std::vector<std::string> methods = {"NVS"};
  std::vector<SurrogateBuild> builds;
  nvs::ZetaFunction zetas = [&s](std::span<const double> xi, std::size_t c) { return s.zeta(xi, c); };
  for (const auto& m : cfg.methods) {
    if (m == "NVS" || m == "FEM") continue;
    builds.push_back(build_surrogates(m, cfg, zetas, n_terms, dist));
    methods.push_back(m);
    log(ro, "elliptic: " + m + " surrogates in " + std::to_string(builds.back().seconds) + " s");
  }
  const std::size_t nm = methods.size();
  auto factors = [&](std::size_t m, std::span<const double> xi) {
    return m == 0 ? s.zeta(xi) : builds[m - 1].set.eval(xi);
  };

  const int threads = std::max(1, kernels::max_threads());
  std::vector<field::GalerkinSolver> solvers(static_cast<std::size_t>(threads), field::GalerkinSolver(op));
  auto fem = [&](std::span<const double> xi) {
    auto& solver = solvers[static_cast<std::size_t>(omp_get_thread_num()) % solvers.size()];
    return solver.solve(xi, field::assemble_rhs_at(rhs, xi));
  };

  // Estimator against direct Riesz solves of the residual.
  {
    const auto pts = basis::draw_samples(dist, 20, basis::derive_seed(cfg.seed, 6)).points;
    field::GalerkinSolver solver(op);
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
      std::vector<double> buf;
      const auto xi = row_of(pts, i, buf);
      const Eigen::VectorXd z = s.zeta(xi);
      const field::SparseMatrix a = solver.matrix(xi);
      const Eigen::VectorXd b = field::assemble_rhs_at(rhs, xi);
      for (std::size_t k = 0; k <= n_terms; ++k) {
        const auto kk = static_cast<Eigen::Index>(k);
        const Eigen::VectorXd r = b - a * (s.modes().leftCols(kk) * z.head(kk));
        const double direct = v.norm(v.riesz(r));
        const double est = s.residual(xi, k);
        rep.max_estimator_mismatch = std::max(rep.max_estimator_mismatch, std::abs(est - direct) / direct);
      }
    }
  }

  // Average squared residual with N - 1 terms over fresh samples.
  {
    const auto pts = basis::draw_samples(dist, cfg.residual_samples, basis::derive_seed(cfg.seed, 5)).points;
    std::vector<Eigen::MatrixXd> per(static_cast<std::size_t>(pts.rows()));
    kernels::for_each(static_cast<std::size_t>(pts.rows()), [&](std::size_t i) {
      std::vector<double> buf;
      const auto xi = row_of(pts, static_cast<Eigen::Index>(i), buf);
      per[i].resize(static_cast<Eigen::Index>(n_terms), static_cast<Eigen::Index>(nm));
      for (std::size_t m = 0; m < nm; ++m) {
        const Eigen::VectorXd z = factors(m, xi);
        for (std::size_t n = 0; n < n_terms; ++n) {
          const double r = s.residual(xi, {z.data(), n_terms}, n);
          per[i](static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m)) = r * r;
        }
      }
    });
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_terms), static_cast<Eigen::Index>(nm));
    for (const auto& p : per) acc += p;
    acc /= static_cast<double>(pts.rows());
    rep.residuals.methods = methods;
    for (std::size_t n = 0; n < n_terms; ++n) {
      ResidualRow row{n + 1, {}};
      for (std::size_t m = 0; m < nm; ++m) row.values.push_back(acc(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m)));
      rep.residuals.rows.push_back(std::move(row));
    }
    rep.residual_drop = acc(0, 0) / acc(static_cast<Eigen::Index>(n_terms) - 1, 0);
  }

  // Test errors against the FEM reference, moments and point densities.
  const auto test = basis::draw_samples(dist, cfg.test, basis::derive_seed(cfg.seed, 4)).points;
  const int free = grid.num_free();
  std::vector<double> err_sum(nm, 0.0);
  std::vector<FieldMoments> moments(nm + 1, FieldMoments(grid.num_nodes()));
  std::array<Eigen::Index, 2> probe{0, 0};
  std::vector<std::array<std::vector<double>, 2>> probe_values(nm + 1);
  for (Eigen::Index start = 0; start < test.rows(); start += chunk_size) {
    const Eigen::Index len = std::min(chunk_size, test.rows() - start);
    std::vector<Eigen::MatrixXd> fields(nm + 1, Eigen::MatrixXd(free, len));
    Eigen::MatrixXd errs(len, static_cast<Eigen::Index>(nm));
    kernels::for_each(static_cast<std::size_t>(len), [&](std::size_t i) {
      std::vector<double> buf;
      const auto c = static_cast<Eigen::Index>(i);
      const auto xi = row_of(test, start + c, buf);
      fields[0].col(c) = fem(xi);
      const double ref = field::l2_norm(grid, field::expand(grid, fields[0].col(c)));
      for (std::size_t m = 0; m < nm; ++m) {
        fields[m + 1].col(c) = s.modes() * factors(m, xi);
        errs(c, static_cast<Eigen::Index>(m)) =
            field::l2_norm(grid, field::expand(grid, fields[m + 1].col(c) - fields[0].col(c))) / ref;
      }
    });
    for (Eigen::Index c = 0; c < len; ++c) {
      for (std::size_t m = 0; m < nm; ++m) err_sum[m] += errs(c, static_cast<Eigen::Index>(m));
      for (std::size_t m = 0; m <= nm; ++m) moments[m].add(field::expand(grid, fields[m].col(c)));
    }
    if (start == 0) {
      const auto [hi, lo] = extreme_variance_nodes(moments[0].variance());
      probe = {hi, lo};
    }
    for (std::size_t m = 0; m <= nm; ++m)
      for (int k = 0; k < 2; ++k) {
        const int dof = grid.dof[static_cast<std::size_t>(probe[static_cast<std::size_t>(k)])];
        for (Eigen::Index c = 0; c < len; ++c) probe_values[m][static_cast<std::size_t>(k)].push_back(fields[m](dof, c));
      }
  }

  // Serial per-sample timings.
  const Eigen::Index nt = std::min<Eigen::Index>(static_cast<Eigen::Index>(cfg.timing_samples), test.rows());
  auto per_sample = [&](const std::function<double(std::span<const double>)>& run) {
    double sink = 0.0;
    const double t = median_time(cfg.timing_repeats, [&] {
      std::vector<double> buf;
      for (Eigen::Index i = 0; i < nt; ++i) sink += run(row_of(test, i, buf));
    });
    if (!std::isfinite(sink)) throw NumericalError("elliptic: non-finite value during timing");
    return t / static_cast<double>(nt);
  };
  field::GalerkinSolver timing_solver(op);
  rep.fem_s = per_sample([&](std::span<const double> xi) { return timing_solver.solve(xi, field::assemble_rhs_at(rhs, xi))[0]; });
  std::vector<double> online(nm);
  online[0] = per_sample([&](std::span<const double> xi) { return s.field(xi)[0]; });
  for (std::size_t m = 1; m < nm; ++m)
    online[m] = per_sample([&](std::span<const double> xi) { return nvs::eval_separated(s, xi, &builds[m - 1].set)[0]; });
  for (std::size_t m = 1; m < nm; ++m)
    if (methods[m] == "NVS+HSLRTA") rep.surrogate_s = online[m];
  if (rep.surrogate_s == 0.0 && nm > 1) rep.surrogate_s = online[1];

  if (has(cfg.methods, "FEM"))
    rep.records.push_back({"elliptic", "FEM", 0, 0, 0, 0.0, 0.0, rep.fem_s, static_cast<std::size_t>(test.rows()),
                           cfg.seed, hash});
  for (std::size_t m = 0; m < nm; ++m) {
    if (m == 0 && !has(cfg.methods, "NVS")) continue;
    ResultRecord r{"elliptic", methods[m], 0, cfg.candidates, n_terms, err_sum[m] / static_cast<double>(test.rows()),
                   nvs_s, online[m], n_terms, cfg.seed, hash};
    if (m > 0) {
      r.p = cfg.degrees[0];
      r.m = builds[m - 1].m;
      r.offline_s = nvs_s + builds[m - 1].seconds;
      r.evals = builds[m - 1].evals;
    }
    rep.records.push_back(r);
  }

  if (ro.write_files) {
    write_results(rep.records, out_path(cfg, "elliptic_results.csv"));
    write_residual_table(rep.residuals, out_path(cfg, "elliptic_residuals.csv"));
    std::vector<std::string> all = {"FEM"};
    all.insert(all.end(), methods.begin(), methods.end());
    std::vector<std::pair<std::string, Eigen::VectorXd>> cols;
    for (std::size_t m = 0; m <= nm; ++m) {
      cols.emplace_back("mean_" + all[m], moments[m].mean());
      cols.emplace_back("variance_" + all[m], moments[m].variance());
    }
    field::write_nodal_csv(grid, cols, out_path(cfg, "elliptic_fields.csv"));
    write_densities(out_path(cfg, "elliptic_densities.csv"), all, probe_values, probe, cfg.density_bins);
    const io::json meta = {{"grid", cfg.grid}, {"kl_dims", d}, {"mean", 8.0}, {"variance", 3.0},
                           {"correlation_length", 0.5}, {"config_hash", hash}};
    io::write_document(out_path(cfg, "elliptic_solution.json"), "separated_solution", io::to_json(s), meta);
    for (std::size_t m = 1; m < nm; ++m)
      io::write_document(out_path(cfg, "elliptic_surrogates_" + methods[m] + ".json"), "surrogate_set",
                         io::to_json(builds[m - 1].set), meta);
  }
  return rep;
}

// ---------------------------------------------------------------------------

std::vector<ResultRecord> run_fit(const ExperimentConfig& cfg, const RunOptions& ro) {
  validate(cfg);
  std::ifstream in(cfg.input);
  if (!in) throw ConfigError("cannot read input " + cfg.input);
  std::string line;
  std::vector<std::vector<double>> rows;
  std::size_t width = 0;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> vals;
    std::stringstream ss(line);
    std::string item;
    bool numeric = true;
    while (std::getline(ss, item, ',')) {
      try {
        std::size_t used = 0;
        vals.push_back(std::stod(item, &used));
        if (item.find_first_not_of(" \t", used) != std::string::npos) numeric = false;
      } catch (const std::exception&) {
        numeric = false;
      }
    }
    if (!numeric) {
      if (rows.empty() && lineno == 1) continue;  // header
      throw ConfigError(cfg.input + ":" + std::to_string(lineno) + ": non-numeric value");
    }
    if (width == 0) width = vals.size();
    if (vals.size() != width || width < 2)
      throw ConfigError(cfg.input + ":" + std::to_string(lineno) + ": expected " + std::to_string(width) + " columns");
    rows.push_back(std::move(vals));
  }
  if (rows.size() <= cfg.test) throw ConfigError("fit: not enough rows for " + std::to_string(cfg.test) + " test samples");
  const int d = static_cast<int>(width) - 1;
  const auto total = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index m = total - static_cast<Eigen::Index>(cfg.test);
  Eigen::MatrixXd x(total, d);
  Eigen::VectorXd y(total);
  for (Eigen::Index i = 0; i < total; ++i) {
    for (int c = 0; c < d; ++c) x(i, c) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
    y[i] = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(d)];
  }
  const auto dist = basis::Distribution::parse(cfg.distribution, d);
  const std::string hash = config_hash(cfg);
  std::vector<ResultRecord> records;
  for (const auto& method : cfg.methods) {
    for (int p : cfg.degrees) {
      const auto t0 = Clock::now();
      const basis::Basis b(basis::matching_family(dist), d, p);
      const Eigen::MatrixXd phi = basis::design_matrix(b, x.topRows(m));
      const auto model = fit_method(method, phi, y.head(m));
      const double offline = seconds_since(t0);
      const Eigen::MatrixXd eval_x = cfg.test > 0 ? Eigen::MatrixXd(x.bottomRows(total - m)) : Eigen::MatrixXd(x);
      const Eigen::VectorXd eval_y = cfg.test > 0 ? Eigen::VectorXd(y.tail(total - m)) : Eigen::VectorXd(y);
      Eigen::VectorXd pred;
      const double online = median_time(cfg.timing_repeats, [&] { pred = sreg::predict(model, b, eval_x); }) /
                            static_cast<double>(eval_x.rows());
      const auto e = relative_mean_error({eval_y.data(), static_cast<std::size_t>(eval_y.size())},
                                         {pred.data(), static_cast<std::size_t>(pred.size())});
      if (e.excluded > 0) std::cerr << "fit: " << e.excluded << " samples with zero target excluded from the error\n";
      records.push_back({"fit", method, p, static_cast<std::size_t>(m), model.nnz(), e.mean, offline, online,
                         static_cast<std::size_t>(m), cfg.seed, hash});
      log(ro, "fit " + method + " p=" + std::to_string(p) + " nnz=" + std::to_string(model.nnz()));
      if (ro.write_files)
        io::write_document(out_path(cfg, "fit_" + method + "_p" + std::to_string(p) + ".json"), "sparse_model",
                           model_document(b, model), {{"distribution", cfg.distribution}});
    }
  }
  if (ro.write_files) write_results(records, out_path(cfg, "fit_results.csv"));
  return records;
}

}  // namespace varsep::bench
