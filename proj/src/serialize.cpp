#include "varsep/serialize.hpp"

#include <cmath>
#include <fstream>
#include <map>

#include "varsep/errors.hpp"

namespace varsep::io {

namespace {

// JSON has no inf/nan; those are stored as strings.
json number(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

double number_from(const json& j) {
  if (j.is_number()) return j.get<double>();
  const auto s = j.get<std::string>();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  throw ConfigError("serialized number expected, got '" + s + "'");
}

const char* kind_tag(basis::Distribution::Kind k) { return k == basis::Distribution::Kind::Uniform ? "uniform" : "normal"; }

basis::Distribution::Kind kind_from(const std::string& s) { return basis::Distribution::parse(s, 1).kind; }

json factor_json(const tensor::SparseFactor& f) { return {{"support", f.support}, {"values", f.values}}; }

tensor::SparseFactor factor_from(const json& j) {
  tensor::SparseFactor f;
  f.support = j.at("support").get<std::vector<std::size_t>>();
  f.values = j.at("values").get<std::vector<double>>();
  if (f.support.size() != f.values.size()) throw ConfigError("sparse factor: support and values differ in length");
  return f;
}

json node_json(const tensor::HierNode& n) {
  json j = {{"groups", n.groups}};
  if (n.groups == 1) {
    j["leaf"] = factor_json(n.leaf);
    return j;
  }
  j["weights"] = n.weights;
  j["inner"] = json::array();
  j["outer"] = json::array();
  for (const auto& c : n.inner) j["inner"].push_back(node_json(c));
  for (const auto& f : n.outer) j["outer"].push_back(factor_json(f));
  return j;
}

tensor::HierNode node_from(const json& j) {
  tensor::HierNode n;
  n.groups = j.at("groups").get<std::size_t>();
  if (n.groups == 1) {
    n.leaf = factor_from(j.at("leaf"));
    return n;
  }
  n.weights = j.at("weights").get<std::vector<double>>();
  for (const auto& c : j.at("inner")) n.inner.push_back(node_from(c));
  for (const auto& f : j.at("outer")) n.outer.push_back(factor_from(f));
  if (n.inner.size() != n.weights.size() || n.outer.size() != n.weights.size())
    throw ConfigError("hierarchical node: inconsistent term counts");
  return n;
}

json estimator_json(const nvs::ResidualEstimator& e) {
  return {{"rhs_terms", e.rhs_terms()},     {"operator_terms", e.operator_terms()}, {"terms", e.terms()},
          {"representers", to_json(e.representers())}, {"gram", to_json(e.gram())}, {"factor", to_json(e.factor())}};
}

}  // namespace

json to_json(const Eigen::MatrixXd& m) {
  json data = json::array();
  for (Eigen::Index i = 0; i < m.size(); ++i) data.push_back(number(m.data()[i]));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(data.size()) != rows * cols)
    throw ConfigError("matrix: data length does not match its shape");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = number_from(data[static_cast<std::size_t>(i)]);
  return m;
}

json to_json(const basis::Basis& b) {
  return {{"family", basis::family_name(b.family())}, {"dim", b.dim()}, {"degree", b.max_degree()}};
}

std::shared_ptr<const basis::Basis> basis_from_json(const json& j) {
  return std::make_shared<const basis::Basis>(basis::parse_family(j.at("family").get<std::string>()),
                                              j.at("dim").get<int>(), j.at("degree").get<int>());
}

json to_json(const sreg::SparseModel& m) {
  std::vector<double> values(m.values.data(), m.values.data() + m.values.size());
  return {{"n", m.n}, {"support", m.support}, {"values", values}, {"lambda", number(m.lambda)}};
}

sreg::SparseModel sparse_model_from_json(const json& j) {
  sreg::SparseModel m;
  m.n = j.at("n").get<sreg::Index>();
  m.support = j.at("support").get<std::vector<sreg::Index>>();
  const auto values = j.at("values").get<std::vector<double>>();
  if (values.size() != m.support.size()) throw ConfigError("sparse model: support and values differ in length");
  m.values = Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
  m.lambda = number_from(j.at("lambda"));
  return m;
}

json to_json(const tensor::GroupSplit& s) {
  return {{"dims", s.dims()}, {"distribution", kind_tag(s.kind())}, {"degree", s.degree()}};
}

std::shared_ptr<const tensor::GroupSplit> split_from_json(const json& j) {
  return std::make_shared<const tensor::GroupSplit>(j.at("dims").get<std::vector<int>>(),
                                                    kind_from(j.at("distribution").get<std::string>()),
                                                    j.at("degree").get<int>());
}

json to_json(const tensor::RankMApprox& a) {
  json terms = json::array();
  for (const auto& t : a.terms) {
    json factors = json::array();
    for (const auto& f : t.factors) factors.push_back(factor_json(f));
    terms.push_back(std::move(factors));
  }
  return {{"split", a.split ? to_json(*a.split) : json()},
          {"weights", a.weights},
          {"terms", std::move(terms)},
          {"anchors_exhausted", a.anchors_exhausted},
          {"budget_exhausted", a.budget_exhausted}};
}

tensor::RankMApprox rank_m_from_json(const json& j) {
  tensor::RankMApprox a;
  if (!j.at("split").is_null()) a.split = split_from_json(j.at("split"));
  a.weights = j.at("weights").get<std::vector<double>>();
  for (const auto& t : j.at("terms")) {
    tensor::RankOneTerm term;
    for (const auto& f : t) term.factors.push_back(factor_from(f));
    if (a.split && term.factors.size() != a.split->num_groups()) throw ConfigError("rank-one term: wrong factor count");
    a.terms.push_back(std::move(term));
  }
  if (a.weights.size() != a.terms.size()) throw ConfigError("rank-m approximation: weights and terms differ");
  a.anchors_exhausted = j.at("anchors_exhausted").get<bool>();
  a.budget_exhausted = j.at("budget_exhausted").get<bool>();
  return a;
}

json to_json(const tensor::HierApprox& a) {
  return {{"split", a.split ? to_json(*a.split) : json()},
          {"root", node_json(a.root)},
          {"requested_ranks", a.requested_ranks},
          {"achieved_ranks", a.achieved_ranks},
          {"partial", a.partial},
          {"evaluations", a.evaluations}};
}

tensor::HierApprox hier_from_json(const json& j) {
  tensor::HierApprox a;
  if (!j.at("split").is_null()) a.split = split_from_json(j.at("split"));
  a.root = node_from(j.at("root"));
  a.requested_ranks = j.at("requested_ranks").get<std::vector<std::size_t>>();
  a.achieved_ranks = j.at("achieved_ranks").get<std::vector<std::size_t>>();
  a.partial = j.at("partial").get<bool>();
  a.evaluations = j.at("evaluations").get<std::size_t>();
  return a;
}

json to_json(const nvs::SurrogateSet& s) {
  json terms = json::array();
  for (const auto& t : s.terms()) {
    json jt = {{"validation_error", number(t.validation_error)},
               {"flagged", t.flagged},
               {"evaluations", t.evaluations}};
    if (t.kind == nvs::ZetaSurrogate::Kind::Sparse) {
      jt["kind"] = "sparse";
      jt["basis"] = t.basis ? to_json(*t.basis) : json();
      jt["model"] = to_json(t.model);
    } else {
      jt["kind"] = "hierarchical";
      jt["hier"] = to_json(t.hier);
    }
    terms.push_back(std::move(jt));
  }
  return {{"terms", std::move(terms)}};
}

nvs::SurrogateSet surrogates_from_json(const json& j) {
  std::map<std::string, std::shared_ptr<const basis::Basis>> bases;
  std::map<std::string, std::shared_ptr<const tensor::GroupSplit>> splits;
  std::vector<nvs::ZetaSurrogate> terms;
  for (const auto& jt : j.at("terms")) {
    nvs::ZetaSurrogate t;
    t.validation_error = number_from(jt.at("validation_error"));
    t.flagged = jt.at("flagged").get<bool>();
    t.evaluations = jt.at("evaluations").get<std::size_t>();
    const auto kind = jt.at("kind").get<std::string>();
    if (kind == "sparse") {
      t.kind = nvs::ZetaSurrogate::Kind::Sparse;
      const auto& jb = jt.at("basis");
      if (!jb.is_null()) {
        auto& b = bases[jb.dump()];
        if (!b) b = basis_from_json(jb);
        t.basis = b;
      }
      t.model = sparse_model_from_json(jt.at("model"));
    } else if (kind == "hierarchical") {
      t.kind = nvs::ZetaSurrogate::Kind::Hierarchical;
      const auto& jh = jt.at("hier");
      t.hier = hier_from_json(jh);
      if (t.hier.split) {
        auto& sp = splits[jh.at("split").dump()];
        if (!sp) sp = t.hier.split;
        t.hier.split = sp;
      }
    } else {
      throw ConfigError("surrogate: unknown kind '" + kind + "'");
    }
    terms.push_back(std::move(t));
  }
  return nvs::SurrogateSet(std::move(terms));
}

json to_json(const nvs::SeparatedSolution& s) {
  return {{"param_dim", s.param_dim()},
          {"operator_terms", s.operator_terms()},
          {"rhs_terms", s.rhs_terms()},
          {"modes", to_json(s.modes())},
          {"anchors", to_json(s.anchors())},
          {"rhs_pairings", to_json(s.rhs_pairings())},
          {"operator_pairings", to_json(s.operator_pairings())},
          {"estimator", estimator_json(s.estimator())}};
}

nvs::SeparatedSolution solution_from_json(const json& j, field::CoefficientFn op_coeff, field::CoefficientFn rhs_coeff) {
  const auto& je = j.at("estimator");
  auto est = nvs::ResidualEstimator::from_parts(
      je.at("rhs_terms").get<std::size_t>(), je.at("operator_terms").get<std::size_t>(),
      je.at("terms").get<std::size_t>(), matrix_from_json(je.at("representers")), matrix_from_json(je.at("gram")),
      matrix_from_json(je.at("factor")));
  return nvs::SeparatedSolution::from_parts(
      std::move(op_coeff), std::move(rhs_coeff), j.at("operator_terms").get<std::size_t>(),
      j.at("rhs_terms").get<std::size_t>(), j.at("param_dim").get<int>(), matrix_from_json(j.at("modes")),
      matrix_from_json(j.at("anchors")), matrix_from_json(j.at("rhs_pairings")),
      matrix_from_json(j.at("operator_pairings")), std::move(est));
}

json to_json(const nvs::SeparatedFunction& s) {
  json history = json::array();
  for (double h : s.residual_history()) history.push_back(number(h));
  return {{"num_nodes", s.num_nodes()},
          {"param_dim", s.param_dim()},
          {"modes", to_json(s.modes())},
          {"pivots", to_json(s.pivots())},
          {"anchors", to_json(s.anchors())},
          {"anchor_nodes", s.anchor_nodes()},
          {"mixing", to_json(s.mixing())},
          {"residual_history", std::move(history)},
          {"converged", s.converged()}};
}

nvs::SeparatedFunction function_from_json(const json& j, nvs::NodalFunction f) {
  std::vector<double> history;
  for (const auto& h : j.at("residual_history")) history.push_back(number_from(h));
  return nvs::SeparatedFunction::from_parts(
      std::move(f), j.at("num_nodes").get<int>(), j.at("param_dim").get<int>(), matrix_from_json(j.at("modes")),
      matrix_from_json(j.at("pivots")), matrix_from_json(j.at("anchors")),
      j.at("anchor_nodes").get<std::vector<int>>(), matrix_from_json(j.at("mixing")), std::move(history),
      j.at("converged").get<bool>());
}

void write_document(const std::string& path, const std::string& kind, const json& payload, const json& metadata) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  const json doc = {{"format_version", format_version}, {"kind", kind}, {"metadata", metadata}, {"payload", payload}};
  out << doc.dump() << '\n';
  if (!out) throw ConfigError("write failed: " + path);
}

json read_document(const std::string& path, const std::string& kind) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  if (!doc.contains("format_version") || doc["format_version"] != format_version)
    throw ConfigError(path + ": unsupported format version");
  if (doc.value("kind", "") != kind)
    throw ConfigError(path + ": expected a '" + kind + "' document, found '" + doc.value("kind", "") + "'");
  return doc;
}

}  // namespace varsep::io
