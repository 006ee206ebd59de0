#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "varsep/bench.hpp"
#include "varsep/errors.hpp"

namespace varsep::bench {

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

void write_results(const std::vector<ResultRecord>& records, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << results_header << '\n';
  for (const auto& r : records) {
    out << r.experiment << ',' << r.method << ',' << r.p << ',' << r.m << ',' << r.n_terms << ',' << fmt(r.epsilon)
        << ',' << fmt(r.offline_s) << ',' << fmt(r.online_s_per_sample) << ',' << r.evals << ',' << r.seed << ','
        << r.config_hash << '\n';
  }
}

std::vector<ResultRecord> read_results(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path);
  std::string line;
  if (!std::getline(in, line) || line != results_header) throw ConfigError(path + ": unexpected results header");
  std::vector<ResultRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 11) throw ConfigError(path + ": expected 11 columns, got " + std::to_string(f.size()));
    ResultRecord r;
    r.experiment = f[0];
    r.method = f[1];
    r.p = std::stoi(f[2]);
    r.m = std::stoull(f[3]);
    r.n_terms = std::stoull(f[4]);
    r.epsilon = std::stod(f[5]);
    r.offline_s = std::stod(f[6]);
    r.online_s_per_sample = std::stod(f[7]);
    r.evals = std::stoull(f[8]);
    r.seed = std::stoull(f[9]);
    r.config_hash = f[10];
    out.push_back(std::move(r));
  }
  return out;
}

void write_residual_table(const ResidualTable& table, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << "N";
  for (const auto& m : table.methods) out << ',' << m;
  out << '\n';
  for (const auto& row : table.rows) {
    out << row.n;
    for (double v : row.values) out << ',' << fmt(v);
    out << '\n';
  }
}

PointwiseError relative_mean_error(std::span<const double> exact, std::span<const double> approx, double floor) {
  if (exact.size() != approx.size()) throw DimensionMismatch("relative_mean_error: size mismatch");
  PointwiseError e;
  for (std::size_t i = 0; i < exact.size(); ++i) {
    if (std::abs(exact[i]) <= floor) {
      ++e.excluded;
      continue;
    }
    e.mean += std::abs(exact[i] - approx[i]) / std::abs(exact[i]);
    ++e.used;
  }
  if (e.used > 0) e.mean /= static_cast<double>(e.used);
  return e;
}

double Histogram::mass() const {
  double s = 0.0;
  for (double d : density) s += d * width;
  return s;
}

Histogram density_estimate(std::span<const double> values, std::size_t bins) {
  if (values.empty()) throw DimensionMismatch("density_estimate: no values");
  if (bins == 0) throw ConfigError("density_estimate: bins must be positive");
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, hi = *hi_it;
  Histogram h;
  const double n = static_cast<double>(values.size());
  if (!(hi > lo)) {
    h.lo = lo - 0.5;
    h.width = 1.0;
    h.density = {1.0};
    return h;
  }
  h.lo = lo;
  h.width = (hi - lo) / static_cast<double>(bins);
  std::vector<std::size_t> counts(bins, 0);
  for (double v : values) {
    auto b = static_cast<std::size_t>((v - lo) / h.width);
    ++counts[std::min(b, bins - 1)];
  }
  h.density.resize(bins);
  for (std::size_t b = 0; b < bins; ++b) h.density[b] = static_cast<double>(counts[b]) / (n * h.width);
  return h;
}

double median_time(std::size_t repeats, const std::function<void()>& run) {
  std::vector<double> t;
  for (std::size_t r = 0; r < std::max<std::size_t>(repeats, 1); ++r) {
    const auto a = std::chrono::steady_clock::now();
    run();
    t.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - a).count());
  }
  std::sort(t.begin(), t.end());
  const std::size_t n = t.size();
  return n % 2 ? t[n / 2] : 0.5 * (t[n / 2 - 1] + t[n / 2]);
}

FieldMoments::FieldMoments(Eigen::Index size) : mean_(Eigen::VectorXd::Zero(size)), m2_(Eigen::VectorXd::Zero(size)) {}

void FieldMoments::add(const Eigen::VectorXd& v) {
  if (n_ == 0 && mean_.size() == 0) {
    mean_ = Eigen::VectorXd::Zero(v.size());
    m2_ = Eigen::VectorXd::Zero(v.size());
  }
  if (v.size() != mean_.size()) throw DimensionMismatch("field moments: size mismatch");
  ++n_;
  const Eigen::VectorXd delta = v - mean_;
  mean_ += delta / static_cast<double>(n_);
  m2_ += delta.cwiseProduct(v - mean_);
}

Eigen::VectorXd FieldMoments::variance() const {
  if (n_ < 2) return Eigen::VectorXd::Zero(mean_.size());
  return m2_ / static_cast<double>(n_ - 1);
}

}  // namespace varsep::bench
