#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>

#include "varsep/bench.hpp"
#include "varsep/errors.hpp"

namespace varsep::bench {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <class T>
T parse_number(const std::string& s) {
  T v{};
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ConfigError("'" + s + "' is not a valid number");
  return v;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    if constexpr (std::is_same_v<T, std::string>)
      s += v[i];
    else
      s += std::to_string(v[i]);
  }
  return s;
}

template <class T>
std::vector<T> parse_list(const std::string& s) {
  std::vector<T> out;
  for (const auto& item : split_list(s)) out.push_back(parse_number<T>(item));
  return out;
}

struct Field {
  const char* key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

#define VARSEP_STR(name) \
  Field { #name, [](const ExperimentConfig& c) { return c.name; }, [](ExperimentConfig& c, const std::string& v) { c.name = v; } }
#define VARSEP_NUM(name, T)                                                             \
  Field {                                                                              \
    #name, [](const ExperimentConfig& c) { return std::to_string(c.name); },           \
        [](ExperimentConfig& c, const std::string& v) { c.name = parse_number<T>(v); } \
  }
#define VARSEP_LIST(name, T)                                                         \
  Field {                                                                           \
    #name, [](const ExperimentConfig& c) { return join(c.name); },                  \
        [](ExperimentConfig& c, const std::string& v) { c.name = parse_list<T>(v); } \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      VARSEP_STR(experiment),
      Field{"methods", [](const ExperimentConfig& c) { return join(c.methods); },
            [](ExperimentConfig& c, const std::string& v) { c.methods = split_list(v); }},
      VARSEP_LIST(degrees, int),
      VARSEP_LIST(train, std::size_t),
      VARSEP_NUM(test, std::size_t),
      VARSEP_NUM(repeats, std::size_t),
      VARSEP_NUM(seed, std::uint64_t),
      VARSEP_STR(distribution),
      VARSEP_STR(input),
      VARSEP_LIST(hslrta_degrees, int),
      VARSEP_LIST(groups, int),
      VARSEP_LIST(ranks, std::size_t),
      VARSEP_NUM(fibers, std::size_t),
      VARSEP_NUM(budget, std::size_t),
      VARSEP_NUM(grid, int),
      VARSEP_NUM(kl_dims, int),
      VARSEP_NUM(terms, std::size_t),
      VARSEP_NUM(candidates, std::size_t),
      VARSEP_NUM(residual_samples, std::size_t),
      Field{"tolerance", [](const ExperimentConfig& c) { return format_double(c.tolerance); },
            [](ExperimentConfig& c, const std::string& v) { c.tolerance = parse_number<double>(v); }},
      VARSEP_NUM(timing_samples, std::size_t),
      VARSEP_NUM(timing_repeats, std::size_t),
      VARSEP_NUM(density_bins, std::size_t),
      VARSEP_STR(out),
  };
  return f;
}

#undef VARSEP_STR
#undef VARSEP_NUM
#undef VARSEP_LIST

const std::vector<std::string>& allowed_methods(const std::string& experiment) {
  static const std::vector<std::string> rastrigin = {"OLS", "OMP", "ILARS", "FILARS", "HSLRTA"};
  static const std::vector<std::string> fit = {"OLS", "OMP", "ILARS", "FILARS"};
  static const std::vector<std::string> sepfun = {"NVS", "NVS+FILARS", "NVS+HSLRTA"};
  static const std::vector<std::string> elliptic = {"FEM", "NVS", "NVS+FILARS", "NVS+HSLRTA"};
  if (experiment == "rastrigin") return rastrigin;
  if (experiment == "fit") return fit;
  if (experiment == "sepfun") return sepfun;
  return elliptic;
}

}  // namespace

ExperimentConfig default_config(const std::string& experiment) {
  ExperimentConfig c;
  c.experiment = experiment;
  if (experiment == "rastrigin") {
    c.methods = {"OMP", "FILARS", "HSLRTA"};
    c.degrees = {8, 10, 12};
    c.train = {320, 500, 620};
    c.test = 1000;
    c.hslrta_degrees = {12, 14, 16};
    c.groups = {2, 2, 2};
    c.ranks = {2, 2};
    c.fibers = 200;
    c.budget = 2000;
  } else if (experiment == "sepfun") {
    c.methods = {"NVS", "NVS+FILARS"};
    c.degrees = {9};
    c.train = {1000};
    c.test = 10000;
    c.terms = 20;
    c.groups = {1, 1, 1};
    c.ranks = {2, 2};
  } else if (experiment == "elliptic") {
    c.methods = {"FEM", "NVS", "NVS+HSLRTA"};
    c.degrees = {5};
    c.train = {1000};
    c.test = 10000;
    c.terms = 5;
    c.candidates = 2000;
    c.groups = {8, 8, 8, 8};
    c.ranks = {2, 2, 2};
    c.fibers = 200;
  } else if (experiment == "fit") {
    c.methods = {"FILARS"};
    c.degrees = {3};
    c.test = 0;
  } else {
    throw ConfigError("unknown experiment '" + experiment + "' (expected rastrigin, sepfun, elliptic or fit)");
  }
  return c;
}

ExperimentConfig parse_config(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::vector<std::string> problems;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      problems.push_back("line " + std::to_string(lineno) + ": expected key = value");
      continue;
    }
    entries.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  std::string experiment = "rastrigin";
  for (const auto& [k, v] : entries)
    if (k == "experiment") experiment = v;
  ExperimentConfig cfg = default_config(experiment);
  for (const auto& [k, v] : entries) {
    const auto& fs = fields();
    auto it = std::find_if(fs.begin(), fs.end(), [&](const Field& f) { return k == f.key; });
    if (it == fs.end()) {
      problems.push_back("unknown key '" + k + "'");
      continue;
    }
    try {
      it->set(cfg, v);
    } catch (const ConfigError& e) {
      problems.push_back("key '" + k + "': " + e.what());
    }
  }
  if (!problems.empty()) {
    std::string msg = "invalid config:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ConfigError(msg);
  }
  return cfg;
}

ExperimentConfig read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string format_config(const ExperimentConfig& cfg) {
  std::string s;
  for (const auto& f : fields()) s += std::string(f.key) + " = " + f.get(cfg) + "\n";
  return s;
}

void write_config(const ExperimentConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config " + path);
  out << format_config(cfg);
}

void validate(const ExperimentConfig& cfg) {
  std::vector<std::string> problems;
  const auto& allowed = allowed_methods(cfg.experiment);
  if (cfg.methods.empty()) problems.push_back("methods: empty");
  for (const auto& m : cfg.methods)
    if (std::find(allowed.begin(), allowed.end(), m) == allowed.end())
      problems.push_back("method '" + m + "' is not valid for experiment '" + cfg.experiment + "'");
  auto uses = [&](const std::string& m) { return std::find(cfg.methods.begin(), cfg.methods.end(), m) != cfg.methods.end(); };
  if (cfg.degrees.empty()) problems.push_back("degrees: empty");
  for (int p : cfg.degrees)
    if (p < 0) problems.push_back("degrees: negative degree");
  if (cfg.experiment != "fit" && cfg.train.size() != 1 && cfg.train.size() != cfg.degrees.size())
    problems.push_back("train: give one value or one per degree");
  for (auto m : cfg.train)
    if (m == 0) problems.push_back("train: counts must be positive");
  if (cfg.experiment != "fit" && cfg.test == 0) problems.push_back("test: must be positive");
  if (cfg.repeats == 0) problems.push_back("repeats: must be positive");
  if (cfg.timing_repeats == 0) problems.push_back("timing_repeats: must be positive");
  if (cfg.density_bins == 0) problems.push_back("density_bins: must be positive");
  if (cfg.distribution != "uniform" && cfg.distribution != "normal")
    problems.push_back("distribution: expected uniform or normal");
  if (cfg.experiment == "fit" && cfg.input.empty()) problems.push_back("input: required for fit");
  const bool hier = uses("HSLRTA") || uses("NVS+HSLRTA");
  if (hier) {
    const int dim = cfg.experiment == "rastrigin" ? 6 : cfg.experiment == "sepfun" ? 3 : cfg.kl_dims;
    const int total = std::accumulate(cfg.groups.begin(), cfg.groups.end(), 0);
    if (cfg.groups.size() < 2) problems.push_back("groups: need at least two groups");
    if (total != dim)
      problems.push_back("groups: dimensions sum to " + std::to_string(total) + ", expected " + std::to_string(dim));
    if (cfg.groups.size() >= 2 && cfg.ranks.size() != cfg.groups.size() - 1)
      problems.push_back("ranks: expected one rank per level (" + std::to_string(cfg.groups.size() - 1) + ")");
    if (cfg.fibers == 0) problems.push_back("fibers: must be positive");
    if (uses("HSLRTA") && cfg.hslrta_degrees.empty()) problems.push_back("hslrta_degrees: empty");
  }
  if (cfg.experiment == "sepfun" || cfg.experiment == "elliptic") {
    if (cfg.grid < 2) problems.push_back("grid: must be at least 2");
    if (cfg.terms == 0) problems.push_back("terms: must be positive");
    if (cfg.candidates == 0) problems.push_back("candidates: must be positive");
    if (cfg.residual_samples == 0) problems.push_back("residual_samples: must be positive");
    if (cfg.tolerance < 0) problems.push_back("tolerance: must be non-negative");
    if (cfg.timing_samples == 0) problems.push_back("timing_samples: must be positive");
  }
  if (cfg.experiment == "elliptic" && (cfg.kl_dims < 2 || cfg.kl_dims > (cfg.grid + 1) * (cfg.grid + 1)))
    problems.push_back("kl_dims: must be between 2 and the node count");
  if (!problems.empty()) {
    std::string msg = "invalid config:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ConfigError(msg);
  }
}

std::string config_hash(const ExperimentConfig& cfg) {
  ExperimentConfig c = cfg;
  c.out.clear();
  const std::string text = format_config(c);
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::size_t train_for(const ExperimentConfig& cfg, std::size_t row) {
  if (cfg.train.empty()) return 0;
  return cfg.train.size() == 1 ? cfg.train[0] : cfg.train.at(row);
}

}  // namespace varsep::bench
