#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace varsep::bench {

// ---------------------------------------------------------------------------
// Configuration: flat key = value text, '#' starts a comment.

struct ExperimentConfig {
  std::string experiment = "rastrigin";  // rastrigin | sepfun | elliptic | fit
  std::vector<std::string> methods;      // OLS OMP ILARS FILARS HSLRTA NVS NVS+FILARS NVS+HSLRTA
  std::vector<int> degrees;              // polynomial degree per table row
  std::vector<std::size_t> train;        // samples per degree, or one value for all
  std::size_t test = 1000;
  std::size_t repeats = 1;               // seeds seed, seed+1, ... averaged
  std::uint64_t seed = 1;
  std::string distribution = "uniform";  // fit only
  std::string input;                     // fit only: CSV with columns x1..xd,y

  // HSLRTA
  std::vector<int> hslrta_degrees;
  std::vector<int> groups;
  std::vector<std::size_t> ranks;
  std::size_t fibers = 100;              // per group
  std::size_t budget = 0;                // evaluator calls, 0 for none

  // Separation
  int grid = 50;
  int kl_dims = 32;
  std::size_t terms = 20;
  std::size_t candidates = 500;         // greedy training set
  std::size_t residual_samples = 500;   // fresh samples behind the residual-vs-N table
  double tolerance = 0.0;

  std::size_t timing_samples = 200;
  std::size_t timing_repeats = 5;
  std::size_t density_bins = 60;
  std::string out = "results";

  bool operator==(const ExperimentConfig&) const = default;
};

// Defaults for one experiment tag; unknown tags are a ConfigError.
ExperimentConfig default_config(const std::string& experiment);

// Reads overrides on top of the defaults of the file's `experiment` key.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig read_config(const std::string& path);
std::string format_config(const ExperimentConfig& cfg);
void write_config(const ExperimentConfig& cfg, const std::string& path);

// Throws ConfigError listing every problem found.
void validate(const ExperimentConfig& cfg);

// FNV-1a of the canonical text, without the output directory.
std::string config_hash(const ExperimentConfig& cfg);

std::size_t train_for(const ExperimentConfig& cfg, std::size_t row);

// ---------------------------------------------------------------------------
// Results

struct ResultRecord {
  std::string experiment, method;
  int p = 0;
  std::size_t m = 0;
  std::size_t n_terms = 0;
  double epsilon = 0.0;
  double offline_s = 0.0;
  double online_s_per_sample = 0.0;
  std::size_t evals = 0;
  std::uint64_t seed = 0;
  std::string config_hash;

  bool operator==(const ResultRecord&) const = default;
};

inline constexpr const char* results_header =
    "experiment,method,p,M,N_terms,epsilon,offline_s,online_s_per_sample,evals,seed,config_hash";

void write_results(const std::vector<ResultRecord>& records, const std::string& path);
std::vector<ResultRecord> read_results(const std::string& path);

struct ResidualRow {
  std::size_t n = 0;
  std::vector<double> values;  // one per method
};

struct ResidualTable {
  std::vector<std::string> methods;
  std::vector<ResidualRow> rows;
};

void write_residual_table(const ResidualTable& table, const std::string& path);

// ---------------------------------------------------------------------------
// Metrics

// (1/N) sum |w - w_hat| / |w| over samples with |w| > floor; the rest are counted.
struct PointwiseError {
  double mean = 0.0;
  std::size_t used = 0, excluded = 0;
};
PointwiseError relative_mean_error(std::span<const double> exact, std::span<const double> approx,
                                   double floor = 1e-14);

struct Histogram {
  double lo = 0.0, width = 0.0;
  std::vector<double> density;  // integrates to one over [lo, lo + bins * width]

  double center(std::size_t b) const { return lo + (static_cast<double>(b) + 0.5) * width; }
  double mass() const;
};

// Constant data gets a single bin of unit width centred on the value.
Histogram density_estimate(std::span<const double> values, std::size_t bins);

// Median over `repeats` runs of the wall-clock time of `run`, in seconds.
double median_time(std::size_t repeats, const std::function<void()>& run);

// Running mean and variance per node (Welford).
class FieldMoments {
 public:
  explicit FieldMoments(Eigen::Index size = 0);
  void add(const Eigen::VectorXd& v);
  std::size_t count() const { return n_; }
  const Eigen::VectorXd& mean() const { return mean_; }
  Eigen::VectorXd variance() const;  // unbiased

 private:
  std::size_t n_ = 0;
  Eigen::VectorXd mean_, m2_;
};

// ---------------------------------------------------------------------------
// Experiments

double rastrigin(std::span<const double> x);
// G(x, xi) = exp(-(x1 xi1 + x2 xi2 + x1 x2 xi3) / 2)
double separable_function(double x1, double x2, std::span<const double> xi);

struct SepfunReport {
  std::vector<ResultRecord> records;
  ResidualTable residuals;
  double max_anchor_residual = 0.0;  // relative, over all steps and previous anchors
};

struct EllipticReport {
  std::vector<ResultRecord> records;
  ResidualTable residuals;
  double residual_drop = 0.0;          // exact-factor table, first row over last
  double max_estimator_mismatch = 0.0;  // relative, estimator vs direct Riesz
  double fem_s = 0.0, surrogate_s = 0.0;
};

struct RunOptions {
  bool write_files = true;  // CSV and surrogate files under cfg.out
  bool verbose = false;
};

std::vector<ResultRecord> run_rastrigin(const ExperimentConfig& cfg, const RunOptions& ro = {});
SepfunReport run_sepfun(const ExperimentConfig& cfg, const RunOptions& ro = {});
EllipticReport run_elliptic(const ExperimentConfig& cfg, const RunOptions& ro = {});
std::vector<ResultRecord> run_fit(const ExperimentConfig& cfg, const RunOptions& ro = {});

}  // namespace varsep::bench
