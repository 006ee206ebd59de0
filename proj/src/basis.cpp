#include "varsep/basis.hpp"

#include <algorithm>
#include <map>
#include <cmath>
#include <stdexcept>
#include <limits>
#include <random>

#include "varsep/errors.hpp"
#include "varsep/kernels.hpp"

namespace varsep::basis {

const char* family_name(PolyFamily f) {
  return f == PolyFamily::LegendreUniform ? "legendre" : "hermite";
}

PolyFamily parse_family(const std::string& name) {
  if (name == "legendre") return PolyFamily::LegendreUniform;
  if (name == "hermite") return PolyFamily::HermiteGaussian;
  throw ConfigError("unknown polynomial family '" + name + "'");
}

void eval_poly1d_all(PolyFamily family, int n, double x, double* out) {
  out[0] = 1.0;
  if (n == 0) return;
  if (family == PolyFamily::LegendreUniform) {
    // classical P_k first, then scale by sqrt(2k+1)
    double pm1 = 1.0, p = x;
    out[1] = p;
    for (int k = 1; k < n; ++k) {
      const double next = ((2.0 * k + 1.0) * x * p - k * pm1) / (k + 1.0);
      pm1 = p;
      p = next;
      out[k + 1] = p;
    }
    for (int k = 1; k <= n; ++k) out[k] *= std::sqrt(2.0 * k + 1.0);
  } else {
    out[1] = x;
    for (int k = 1; k < n; ++k)
      out[k + 1] = (x * out[k] - std::sqrt(static_cast<double>(k)) * out[k - 1]) / std::sqrt(k + 1.0);
  }
}

double eval_poly1d(PolyFamily family, int n, double x) {
  if (n < 0) throw std::invalid_argument("eval_poly1d: negative degree");
  std::vector<double> vals(n + 1);
  eval_poly1d_all(family, n, x, vals.data());
  return vals[n];
}

std::size_t total_degree_count(int dim, int max_degree) {
  // binomial(d+p, min(d,p)) with overflow saturation
  const std::uint64_t n = static_cast<std::uint64_t>(dim) + max_degree;
  std::uint64_t k = std::min<std::uint64_t>(dim, max_degree);
  unsigned __int128 acc = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    acc = acc * (n - k + i) / i;
    if (acc > std::numeric_limits<std::size_t>::max()) return std::numeric_limits<std::size_t>::max();
  }
  return static_cast<std::size_t>(acc);
}

namespace {

// All compositions of `remaining` into slots [c, d), lexicographically descending.
void compositions(int c, int d, int remaining, std::vector<std::uint8_t>& cur, std::vector<std::uint8_t>& out) {
  if (c == d - 1) {
    cur[c] = static_cast<std::uint8_t>(remaining);
    out.insert(out.end(), cur.begin(), cur.end());
    return;
  }
  for (int v = remaining; v >= 0; --v) {
    cur[c] = static_cast<std::uint8_t>(v);
    compositions(c + 1, d, remaining - v, cur, out);
  }
}

}  // namespace

MultiIndexSet::MultiIndexSet(int dim, int max_degree, std::size_t cap) : dim_(dim), max_degree_(max_degree) {
  if (dim < 1) throw std::invalid_argument("total_degree_set: dim must be >= 1");
  if (max_degree < 0 || max_degree > 255) throw std::invalid_argument("total_degree_set: degree out of range");
  const std::size_t count = total_degree_count(dim, max_degree);
  if (count > cap)
    throw ConfigError("basis of dim " + std::to_string(dim) + " degree " + std::to_string(max_degree) + " has " +
                      std::to_string(count) + " functions, above the cap " + std::to_string(cap));
  data_.reserve(count * dim);
  std::vector<std::uint8_t> cur(dim, 0);
  for (int t = 0; t <= max_degree; ++t) compositions(0, dim, t, cur, data_);
}

int MultiIndexSet::total_degree(std::size_t i) const {
  int s = 0;
  for (auto a : (*this)[i]) s += a;
  return s;
}

MultiIndexSet total_degree_set(int dim, int max_degree, std::size_t cap) {
  return MultiIndexSet(dim, max_degree, cap);
}

Basis::Basis(PolyFamily family, MultiIndexSet indices) : family_(family), indices_(std::move(indices)) {}

Basis::Basis(PolyFamily family, int dim, int max_degree, std::size_t cap)
    : family_(family), indices_(dim, max_degree, cap) {}

void Basis::univariate_table(std::span<const double> x, Eigen::MatrixXd& table) const {
  if (static_cast<int>(x.size()) != dim())
    throw DimensionMismatch("basis: point dim " + std::to_string(x.size()) + " != " + std::to_string(dim()));
  table.resize(max_degree() + 1, dim());
  for (int c = 0; c < dim(); ++c) eval_poly1d_all(family_, max_degree(), x[c], table.col(c).data());
}

double Basis::eval(std::size_t i, std::span<const double> x) const {
  auto alpha = indices_[i];
  double v = 1.0;
  for (int c = 0; c < dim(); ++c)
    if (alpha[c] != 0) v *= eval_poly1d(family_, alpha[c], x[c]);
  return v;
}

void Basis::eval_all(std::span<const double> x, std::span<double> out) const {
  Eigen::MatrixXd table;
  univariate_table(x, table);
  const int d = dim();
  const double* t = table.data();
  const std::size_t stride = static_cast<std::size_t>(table.rows());
  for (std::size_t i = 0; i < size(); ++i) {
    auto alpha = indices_[i];
    double v = 1.0;
    for (int c = 0; c < d; ++c) v *= t[c * stride + alpha[c]];
    out[i] = v;
  }
}

void Basis::eval_subset(std::span<const double> x, std::span<const std::size_t> which,
                        std::span<double> out) const {
  Eigen::MatrixXd table;
  univariate_table(x, table);
  const int d = dim();
  const double* t = table.data();
  const std::size_t stride = static_cast<std::size_t>(table.rows());
  for (std::size_t k = 0; k < which.size(); ++k) {
    auto alpha = indices_[which[k]];
    double v = 1.0;
    for (int c = 0; c < d; ++c) v *= t[c * stride + alpha[c]];
    out[k] = v;
  }
}

SubsetEvaluator::SubsetEvaluator(const Basis& basis, std::vector<std::size_t> which)
    : family_(basis.family()), dim_(basis.dim()), max_degree_(basis.max_degree()), which_(std::move(which)) {
  std::map<std::pair<int, int>, int> children;  // (parent, entry) -> node
  leaf_.reserve(which_.size());
  for (std::size_t i : which_) {
    if (i >= basis.size()) throw DimensionMismatch("subset evaluator: index out of range");
    auto alpha = basis.indices()[i];
    int node = -1;
    for (int c = 0; c < dim_; ++c) {
      if (alpha[c] == 0) continue;
      const int entry = c * (max_degree_ + 1) + alpha[c];
      auto [it, inserted] = children.try_emplace({node, entry}, static_cast<int>(parent_.size()));
      if (inserted) {
        parent_.push_back(node);
        entry_.push_back(entry);
      }
      node = it->second;
    }
    leaf_.push_back(node);
  }
}

void SubsetEvaluator::eval(std::span<const double> x, std::span<double> out) const {
  if (static_cast<int>(x.size()) != dim_) throw DimensionMismatch("subset evaluator: point dimension mismatch");
  if (out.size() != which_.size()) throw DimensionMismatch("subset evaluator: output size mismatch");
  thread_local std::vector<double> table, prod;
  table.resize(static_cast<std::size_t>(dim_) * (max_degree_ + 1));
  for (int c = 0; c < dim_; ++c) eval_poly1d_all(family_, max_degree_, x[c], table.data() + c * (max_degree_ + 1));
  prod.resize(parent_.size());
  for (std::size_t n = 0; n < parent_.size(); ++n) {
    const double t = table[static_cast<std::size_t>(entry_[n])];
    prod[n] = parent_[n] < 0 ? t : prod[static_cast<std::size_t>(parent_[n])] * t;
  }
  for (std::size_t k = 0; k < leaf_.size(); ++k) out[k] = leaf_[k] < 0 ? 1.0 : prod[static_cast<std::size_t>(leaf_[k])];
}

Distribution Distribution::parse(const std::string& tag, int d) {
  if (tag == "uniform") return uniform(d);
  if (tag == "normal") return normal(d);
  throw ConfigError("unknown distribution tag '" + tag + "'");
}

std::string Distribution::tag() const { return kind == Kind::Uniform ? "uniform" : "normal"; }

bool Distribution::in_support(double x) const {
  if (!std::isfinite(x)) return false;
  return kind == Kind::Normal || (x >= -1.0 && x <= 1.0);
}

PolyFamily matching_family(const Distribution& dist) {
  return dist.kind == Distribution::Kind::Uniform ? PolyFamily::LegendreUniform : PolyFamily::HermiteGaussian;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t x = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

void fill_samples(const Distribution& dist, std::uint64_t seed, Eigen::Ref<Eigen::MatrixXd> out) {
  std::mt19937_64 rng(seed);
  if (dist.kind == Distribution::Kind::Uniform) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (Eigen::Index i = 0; i < out.rows(); ++i)
      for (Eigen::Index c = 0; c < out.cols(); ++c) out(i, c) = u(rng);
  } else {
    std::normal_distribution<double> g(0.0, 1.0);
    for (Eigen::Index i = 0; i < out.rows(); ++i)
      for (Eigen::Index c = 0; c < out.cols(); ++c) out(i, c) = g(rng);
  }
}

SampleSet draw_samples(const Distribution& dist, std::size_t count, std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("draw_samples: count must be >= 1");
  SampleSet s;
  s.seed = seed;
  s.points.resize(static_cast<Eigen::Index>(count), dist.dim);
  fill_samples(dist, seed, s.points);
  return s;
}

Eigen::MatrixXd design_matrix(const Basis& basis, const Eigen::MatrixXd& samples) {
  Eigen::MatrixXd out;
  kernels::design_matrix(basis, samples, out);
  return out;
}

}  // namespace varsep::basis
