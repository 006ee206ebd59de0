#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "varsep/bench.hpp"
#include "varsep/errors.hpp"

using namespace varsep;

namespace {

std::string temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("varsep_bench_" + name);
  std::filesystem::remove_all(p);
  return p.string();
}

}  // namespace

TEST_CASE("configs round trip through text") {
  for (const char* tag : {"rastrigin", "sepfun", "elliptic", "fit"}) {
    auto cfg = bench::default_config(tag);
    if (cfg.experiment == "fit") cfg.input = "data.csv";
    cfg.tolerance = 1.0 / 3.0;
    auto back = bench::parse_config(bench::format_config(cfg));
    CHECK(back == cfg);
    CHECK(bench::config_hash(back) == bench::config_hash(cfg));
    CHECK_NOTHROW(bench::validate(cfg));
  }
  CHECK_THROWS_AS(bench::default_config("nope"), ConfigError);
}

TEST_CASE("config parsing reports every problem") {
  const std::string text =
      "experiment = rastrigin  # comment\n"
      "degrees = 4, 6\n"
      "train = 100, 200\n"
      "frobnicate = 3\n"
      "seed = twelve\n"
      "no equals sign here\n";
  try {
    bench::parse_config(text);
    FAIL("expected a ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("frobnicate") != std::string::npos);
    CHECK(msg.find("seed") != std::string::npos);
    CHECK(msg.find("line 6") != std::string::npos);
  }
  auto cfg = bench::parse_config("experiment = rastrigin\ndegrees = 4, 6\ntrain = 100, 200\n");
  CHECK(cfg.degrees == std::vector<int>{4, 6});
  CHECK(bench::train_for(cfg, 1) == 200);
}

TEST_CASE("config validation") {
  auto cfg = bench::default_config("rastrigin");
  cfg.methods = {"NVS"};
  CHECK_THROWS_AS(bench::validate(cfg), ConfigError);

  cfg = bench::default_config("rastrigin");
  cfg.groups = {3, 2};
  cfg.ranks = {2};
  try {
    bench::validate(cfg);
    FAIL("expected a ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("sum to 5") != std::string::npos);
  }

  cfg = bench::default_config("elliptic");
  cfg.ranks = {2, 2};
  CHECK_THROWS_AS(bench::validate(cfg), ConfigError);

  cfg = bench::default_config("fit");
  CHECK_THROWS_AS(bench::validate(cfg), ConfigError);  // no input
}

TEST_CASE("config hash ignores the output directory") {
  auto a = bench::default_config("sepfun");
  auto b = a;
  b.out = "elsewhere";
  CHECK(bench::config_hash(a) == bench::config_hash(b));
  CHECK(bench::config_hash(a).size() == 16);
  b.seed = 2;
  CHECK(bench::config_hash(a) != bench::config_hash(b));
}

TEST_CASE("results CSV round trip") {
  std::vector<bench::ResultRecord> rows(2);
  rows[0] = {"rastrigin", "FILARS", 10, 500, 0, 6.25e-4, 1.5, 2.0e-6, 500, 1, "0123456789abcdef"};
  rows[1] = {"elliptic", "NVS+HSLRTA", 5, 200, 5, 1.0 / 3.0, 12.0, 2.1e-5, 32800, 7, "fedcba9876543210"};
  const std::string dir = temp_dir("csv");
  std::filesystem::create_directories(dir);
  const std::string path = dir + "/r.csv";
  bench::write_results(rows, path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == bench::results_header);
  CHECK(bench::read_results(path) == rows);

  std::ofstream(path) << "a,b\n";
  CHECK_THROWS_AS(bench::read_results(path), ConfigError);
  std::ofstream(path) << bench::results_header << "\nx,y,1\n";
  CHECK_THROWS_AS(bench::read_results(path), ConfigError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("relative mean error skips vanishing references") {
  std::vector<double> exact = {2.0, -4.0, 0.0, 1e-20};
  std::vector<double> approx = {2.2, -3.0, 5.0, 1.0};
  auto e = bench::relative_mean_error(exact, approx);
  CHECK(e.used == 2);
  CHECK(e.excluded == 2);
  CHECK(e.mean == doctest::Approx((0.1 + 0.25) / 2).epsilon(1e-14));
  CHECK_THROWS_AS(bench::relative_mean_error(exact, std::vector<double>{1.0}), DimensionMismatch);
}

TEST_CASE("histogram densities") {
  SUBCASE("constant data") {
    std::vector<double> v(10, 3.5);
    auto h = bench::density_estimate(v, 40);
    REQUIRE(h.density.size() == 1);
    CHECK(h.center(0) == 3.5);
    CHECK(h.mass() == doctest::Approx(1.0).epsilon(1e-14));
  }
  SUBCASE("standard normal draws") {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> n01;
    const std::size_t count = 200000;
    std::vector<double> v(count);
    for (auto& x : v) x = n01(rng);
    const std::size_t bins = 40;
    auto h = bench::density_estimate(v, bins);
    CHECK(std::abs(h.mass() - 1.0) < 1e-12);
    // Binomial standard error of each bin's density, against the bin average of the normal pdf.
    for (std::size_t b = 0; b < bins; ++b) {
      const double a = h.lo + static_cast<double>(b) * h.width;
      const double p = 0.5 * (std::erf((a + h.width) / std::numbers::sqrt2) - std::erf(a / std::numbers::sqrt2));
      const double expected = p / h.width;
      const double sigma = std::sqrt(p * (1 - p) / static_cast<double>(count)) / h.width;
      CHECK(std::abs(h.density[b] - expected) <= 4.0 * sigma + 1e-12);
    }
  }
  CHECK_THROWS_AS(bench::density_estimate(std::vector<double>{}, 5), DimensionMismatch);
  CHECK_THROWS_AS(bench::density_estimate(std::vector<double>{1.0}, 0), ConfigError);
}

TEST_CASE("field moments agree with two-pass formulas") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<Eigen::VectorXd> data;
  bench::FieldMoments m;
  for (int i = 0; i < 50; ++i) {
    Eigen::VectorXd v(3);
    v << 1e6 + u(rng), u(rng), 5.0;
    data.push_back(v);
    m.add(v);
  }
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(3), var = Eigen::VectorXd::Zero(3);
  for (const auto& v : data) mean += v / 50.0;
  for (const auto& v : data) var += (v - mean).cwiseAbs2() / 49.0;
  CHECK(m.count() == 50);
  CHECK((m.mean() - mean).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((m.variance() - var).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(m.variance()[2] == 0.0);
  CHECK_THROWS_AS(m.add(Eigen::VectorXd::Zero(2)), DimensionMismatch);
}

TEST_CASE("median timing") {
  int calls = 0;
  const double t = bench::median_time(5, [&] { ++calls; });
  CHECK(calls == 5);
  CHECK(t >= 0.0);
}

TEST_CASE("test functions") {
  std::vector<double> zero(6, 0.0), half(6, 0.5);
  CHECK(bench::rastrigin(zero) == 0.0);
  CHECK(bench::rastrigin(half) == doctest::Approx(121.5).epsilon(1e-14));
  std::vector<double> xi = {0.3, -1.2, 2.0};
  CHECK(bench::separable_function(0.0, 0.0, xi) == 1.0);
  CHECK(bench::separable_function(1.0, 1.0, xi) == doctest::Approx(std::exp(-0.55)).epsilon(1e-14));
}

TEST_CASE("regression fit on a CSV file") {
  const std::string dir = temp_dir("fit");
  std::filesystem::create_directories(dir);
  const std::string csv = dir + "/data.csv";
  {
    std::ofstream out(csv);
    out.precision(17);
    out << "x1,x2,y\n";
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int i = 0; i < 140; ++i) {
      const double a = u(rng), b = u(rng);
      out << a << ',' << b << ',' << (1 + 2 * a - 0.5 * a * b + 0.25 * b * b * b) << '\n';
    }
  }
  auto cfg = bench::default_config("fit");
  cfg.input = csv;
  cfg.test = 40;
  cfg.out = dir + "/out";
  auto rows = bench::run_fit(cfg);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].m == 100);
  CHECK(rows[0].epsilon < 1e-6);
  CHECK(std::filesystem::exists(cfg.out + "/fit_results.csv"));
  CHECK(bench::read_results(cfg.out + "/fit_results.csv") == rows);

  cfg.input = dir + "/missing.csv";
  CHECK_THROWS_AS(bench::run_fit(cfg), ConfigError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("small separable-function run writes its outputs") {
  auto cfg = bench::default_config("sepfun");
  cfg.grid = 10;
  cfg.terms = 6;
  cfg.candidates = 100;
  cfg.train = {150};
  cfg.degrees = {5};
  cfg.test = 200;
  cfg.timing_samples = 10;
  cfg.timing_repeats = 1;
  cfg.out = temp_dir("sepfun");
  auto rep = bench::run_sepfun(cfg);
  REQUIRE(rep.records.size() == cfg.methods.size());
  CHECK(rep.max_anchor_residual < 1e-12);
  REQUIRE(rep.residuals.rows.size() == 6);
  for (std::size_t i = 1; i < rep.residuals.rows.size(); ++i)
    CHECK(rep.residuals.rows[i].values[0] <= rep.residuals.rows[i - 1].values[0] * (1 + 1e-9));
  for (const auto& r : rep.records) CHECK(r.epsilon < 0.05);
  CHECK(std::filesystem::exists(cfg.out + "/sepfun_results.csv"));
  CHECK(std::filesystem::exists(cfg.out + "/sepfun_residuals.csv"));
  std::filesystem::remove_all(cfg.out);
}
