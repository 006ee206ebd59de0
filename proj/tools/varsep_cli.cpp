#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "varsep/bench.hpp"
#include "varsep/errors.hpp"

using namespace varsep;

namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::vector<std::string> methods;
  std::optional<int> degree;
  std::optional<std::size_t> train;
  std::optional<int> grid;
  std::optional<std::string> input;
  bool verbose = false;
};

void add_common(CLI::App* sub, Overrides& o) {
  sub->add_option("--config", o.config, "key = value configuration file");
  sub->add_option("--seed", o.seed, "base random seed");
  sub->add_option("--out", o.out, "output directory");
  sub->add_option("--method", o.methods, "method tag(s), e.g. FILARS or NVS+HSLRTA")->delimiter(',');
  sub->add_option("--degree", o.degree, "polynomial degree");
  sub->add_option("--train", o.train, "training samples");
  sub->add_option("--grid", o.grid, "cells per axis");
  sub->add_flag("-v,--verbose", o.verbose, "progress messages on stderr");
}

bench::ExperimentConfig resolve(const std::string& experiment, const Overrides& o) {
  bench::ExperimentConfig cfg = o.config.empty() ? bench::default_config(experiment) : bench::read_config(o.config);
  if (cfg.experiment != experiment)
    throw ConfigError("config file is for '" + cfg.experiment + "', not '" + experiment + "'");
  if (o.seed) cfg.seed = *o.seed;
  if (o.out) cfg.out = *o.out;
  if (!o.methods.empty()) cfg.methods = o.methods;
  if (o.degree) {
    cfg.degrees = {*o.degree};
    cfg.hslrta_degrees = {*o.degree};
  }
  if (o.train) cfg.train = {*o.train};
  if (o.grid) cfg.grid = *o.grid;
  if (o.input) cfg.input = *o.input;
  if (cfg.train.size() > 1 && cfg.train.size() != cfg.degrees.size()) cfg.train.resize(1);
  bench::validate(cfg);
  return cfg;
}

void print(const std::vector<bench::ResultRecord>& records) {
  std::cout << bench::results_header << '\n';
  for (const auto& r : records)
    std::cout << r.experiment << ',' << r.method << ',' << r.p << ',' << r.m << ',' << r.n_terms << ',' << r.epsilon
              << ',' << r.offline_s << ',' << r.online_s_per_sample << ',' << r.evals << ',' << r.seed << ','
              << r.config_hash << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Separated-representation surrogates: experiments and regression fits"};
  app.require_subcommand(1);
  Overrides o;
  auto* rastrigin = app.add_subcommand("rastrigin", "sparse regression on the 6-d Rastrigin function");
  auto* sepfun = app.add_subcommand("sepfun", "separation of a parametric field with 3 normal parameters");
  auto* elliptic = app.add_subcommand("elliptic", "separation of the random-coefficient elliptic problem");
  auto* fit = app.add_subcommand("fit", "sparse polynomial regression on a CSV of samples (x1..xd,y)");
  for (auto* sub : {rastrigin, sepfun, elliptic, fit}) add_common(sub, o);
  fit->add_option("--input", o.input, "CSV file with columns x1..xd,y");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    bench::RunOptions ro;
    ro.verbose = o.verbose;
    if (rastrigin->parsed()) {
      print(bench::run_rastrigin(resolve("rastrigin", o), ro));
    } else if (sepfun->parsed()) {
      const auto rep = bench::run_sepfun(resolve("sepfun", o), ro);
      print(rep.records);
      std::cout << "max relative residual at previous anchors: " << rep.max_anchor_residual << '\n';
    } else if (elliptic->parsed()) {
      const auto rep = bench::run_elliptic(resolve("elliptic", o), ro);
      print(rep.records);
      std::cout << "average residual drop from N=1 to N=" << rep.residuals.rows.size() << ": " << rep.residual_drop
                << "\nestimator vs direct Riesz, max relative difference: " << rep.max_estimator_mismatch
                << "\nFEM / surrogate time per sample: " << rep.fem_s / rep.surrogate_s << '\n';
    } else if (fit->parsed()) {
      print(bench::run_fit(resolve("fit", o), ro));
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const DimensionMismatch& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
