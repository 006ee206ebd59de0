#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace varsep::basis {

enum class PolyFamily { LegendreUniform, HermiteGaussian };

const char* family_name(PolyFamily f);
PolyFamily parse_family(const std::string& name);

// Orthonormal univariate polynomial of degree n at x.
double eval_poly1d(PolyFamily family, int n, double x);

// Values of degrees 0..n at x written to out[0..n].
void eval_poly1d_all(PolyFamily family, int n, double x, double* out);

inline constexpr std::size_t default_basis_cap = 2000000;

// Total-degree multi-index set, graded lexicographic order: by total degree,
// then lexicographically descending on the leading coordinates.
class MultiIndexSet {
 public:
  MultiIndexSet() = default;
  MultiIndexSet(int dim, int max_degree, std::size_t cap = default_basis_cap);

  int dim() const { return dim_; }
  int max_degree() const { return max_degree_; }
  std::size_t size() const { return dim_ == 0 ? 0 : data_.size() / dim_; }

  std::span<const std::uint8_t> operator[](std::size_t i) const {
    return {data_.data() + i * dim_, static_cast<std::size_t>(dim_)};
  }
  int total_degree(std::size_t i) const;

 private:
  int dim_ = 0;
  int max_degree_ = 0;
  std::vector<std::uint8_t> data_;
};

MultiIndexSet total_degree_set(int dim, int max_degree, std::size_t cap = default_basis_cap);

// Exact binomial(d+p, d), saturating at SIZE_MAX.
std::size_t total_degree_count(int dim, int max_degree);

class Basis {
 public:
  Basis() = default;
  Basis(PolyFamily family, MultiIndexSet indices);
  Basis(PolyFamily family, int dim, int max_degree, std::size_t cap = default_basis_cap);

  PolyFamily family() const { return family_; }
  int dim() const { return indices_.dim(); }
  int max_degree() const { return indices_.max_degree(); }
  std::size_t size() const { return indices_.size(); }
  const MultiIndexSet& indices() const { return indices_; }

  // Univariate table: table(c, n) = phi_n(x_c), n = 0..max_degree.
  void univariate_table(std::span<const double> x, Eigen::MatrixXd& table) const;

  double eval(std::size_t i, std::span<const double> x) const;
  // All basis functions at one point.
  void eval_all(std::span<const double> x, std::span<double> out) const;
  // Selected basis functions at one point.
  void eval_subset(std::span<const double> x, std::span<const std::size_t> which,
                   std::span<double> out) const;

 private:
  PolyFamily family_ = PolyFamily::LegendreUniform;
  MultiIndexSet indices_;
};

// Evaluates a fixed subset of a basis through a prefix tree over the nonzero
// entries of the multi-indices, so shared partial products are computed once.
class SubsetEvaluator {
 public:
  SubsetEvaluator() = default;
  SubsetEvaluator(const Basis& basis, std::vector<std::size_t> which);

  const std::vector<std::size_t>& which() const { return which_; }
  std::size_t size() const { return which_.size(); }
  std::size_t nodes() const { return parent_.size(); }
  // out[k] = phi_{which[k]}(x)
  void eval(std::span<const double> x, std::span<double> out) const;

 private:
  PolyFamily family_ = PolyFamily::LegendreUniform;
  int dim_ = 0, max_degree_ = 0;
  std::vector<std::size_t> which_;
  std::vector<int> parent_;  // -1 for children of the root
  std::vector<int> entry_;   // offset into the univariate table
  std::vector<int> leaf_;    // per output, node index or -1 for the constant
};

struct Distribution {
  enum class Kind { Uniform, Normal };
  Kind kind = Kind::Uniform;
  int dim = 1;

  static Distribution uniform(int d) { return {Kind::Uniform, d}; }
  static Distribution normal(int d) { return {Kind::Normal, d}; }
  // Accepts "uniform" and "normal"; anything else is a ConfigError.
  static Distribution parse(const std::string& tag, int d);
  std::string tag() const;
  bool in_support(double x) const;
};

PolyFamily matching_family(const Distribution& dist);

struct SampleSet {
  Eigen::MatrixXd points;  // M x d, row-major sense: one sample per row
  std::uint64_t seed = 0;

  std::size_t size() const { return static_cast<std::size_t>(points.rows()); }
  int dim() const { return static_cast<int>(points.cols()); }
};

// Independent stream seed derived from a base seed (splitmix64 mixing).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

SampleSet draw_samples(const Distribution& dist, std::size_t count, std::uint64_t seed);

// Fills a block of rows with draws from dist; used for fibers.
void fill_samples(const Distribution& dist, std::uint64_t seed, Eigen::Ref<Eigen::MatrixXd> out);

Eigen::MatrixXd design_matrix(const Basis& basis, const Eigen::MatrixXd& samples);

}  // namespace varsep::basis
