#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "bilevel/bench.hpp"

namespace bilevel::bench {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& v) {
  if (v.empty()) throw std::invalid_argument("empty value");
  char* end = nullptr;
  errno = 0;
  const double x = std::strtod(v.c_str(), &end);
  if (end != v.c_str() + v.size() || errno == ERANGE)
    throw std::invalid_argument("'" + v + "' is not a number");
  return x;
}

std::int64_t parse_int(const std::string& v) {
  if (v.empty()) throw std::invalid_argument("empty value");
  char* end = nullptr;
  errno = 0;
  const long long x = std::strtoll(v.c_str(), &end, 10);
  if (end != v.c_str() + v.size() || errno == ERANGE)
    throw std::invalid_argument("'" + v + "' is not an integer");
  return x;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::invalid_argument("'" + v + "' is not a boolean");
}

std::vector<double> parse_list(const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(trim(item)));
  return out;
}

using Setter = std::function<void(const std::string&)>;

std::map<std::string, Setter> run_keys(RunConfig& c) {
  return {
      {"trials", [&c](const std::string& v) { c.trials = static_cast<int>(parse_int(v)); }},
      {"record_every", [&c](const std::string& v) { c.record_every = parse_int(v); }},
      {"output", [&c](const std::string& v) { c.output_path = v; }},
      {"seed", [&c](const std::string& v) { c.seed = static_cast<std::uint64_t>(parse_int(v)); }},
      {"timing", [&c](const std::string& v) { c.timing = parse_bool(v); }},
  };
}

std::map<std::string, Setter> problem_keys(ProblemParams& p) {
  auto idx = [](Index& field) { return [&field](const std::string& v) { field = parse_int(v); }; };
  return {
      {"name", [&p](const std::string& v) { p.name = v; }},
      {"dim", idx(p.dim)},
      {"n", idx(p.n)},
      {"d", idx(p.d)},
      {"reg_true", [&p](const std::string& v) { p.reg_true = parse_double(v); }},
      {"n_train", idx(p.n_train)},
      {"n_val", idx(p.n_val)},
      {"n_test", idx(p.n_test)},
      {"n_poison", idx(p.n_poison)},
      {"noise_frac", [&p](const std::string& v) { p.noise_frac = parse_double(v); }},
      {"dim_u", idx(p.dim_u)},
      {"dim_v", idx(p.dim_v)},
  };
}

std::map<std::string, Setter> solver_keys(SolverSpec& s) {
  PenaltyConfig& c = s.cfg;
  auto dbl = [](double& field) {
    return [&field](const std::string& v) { field = parse_double(v); };
  };
  return {
      {"name", [&s](const std::string& v) { s.name = v; }},
      {"label", [&s](const std::string& v) { s.label = v; }},
      {"K", [&c](const std::string& v) { c.K = parse_int(v); }},
      {"T", [&c](const std::string& v) { c.T = static_cast<int>(parse_int(v)); }},
      {"sigma0", dbl(c.sigma0)},
      {"rho0", dbl(c.rho0)},
      {"gamma0", dbl(c.gamma0)},
      {"eps0", dbl(c.eps0)},
      {"lambda0", dbl(c.lambda0)},
      {"nu0", dbl(c.nu0)},
      {"c_gamma", dbl(c.c_gamma)},
      {"c_eps", dbl(c.c_eps)},
      {"c_lambda", dbl(c.c_lambda)},
      {"c_step", dbl(c.c_step)},
      {"while_cap", [&c](const std::string& v) { c.while_cap = static_cast<int>(parse_int(v)); }},
      {"multiplier_updates", [&c](const std::string& v) { c.multiplier_updates = parse_bool(v); }},
      {"stepper", [&c](const std::string& v) { c.stepper = stepper_from_string(v); }},
      {"reg_lambda", dbl(c.reg_lambda)},
      {"linear_solver",
       [&c](const std::string& v) { c.linear_solver = linear_solver_from_string(v); }},
      {"T_lin", [&c](const std::string& v) { c.T_lin = static_cast<int>(parse_int(v)); }},
      // box = problem | none | lo,hi
      {"box",
       [&s](const std::string& v) {
         if (v == "problem") {
           s.use_problem_box = true;
           s.cfg.box.reset();
           return;
         }
         s.use_problem_box = false;
         if (v == "none") {
           s.cfg.box.reset();
           return;
         }
         const auto xs = parse_list(v);
         if (xs.size() != 2) throw std::invalid_argument("box needs 'lo,hi'");
         s.cfg.box = BoxBounds{xs[0], xs[1]};
       }},
  };
}

}  // namespace

const std::vector<std::string>& solver_names() {
  static const std::vector<std::string> names = {"penalty", "penalty_aug", "gd",
                                                 "rmd",     "fmd",         "approxgrad"};
  return names;
}

bool is_penalty_solver(const std::string& name) {
  return name == "penalty" || name == "penalty_aug";
}

RunConfig parse_config(std::istream& in, const std::string& source) {
  RunConfig cfg;
  std::string section;
  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& msg) -> ConfigError {
    return ConfigError(source + ":" + std::to_string(lineno) + ": " + msg, lineno);
  };

  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') throw fail("unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section == "solver") {
        cfg.solvers.emplace_back();
      } else if (section != "run" && section != "problem" && section != "sweep") {
        throw fail("unknown section [" + section + "]");
      }
      continue;
    }

    const auto eq = line.find('=');
    if (eq == std::string::npos) throw fail("expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) throw fail("key '" + key + "' outside any section");

    std::map<std::string, Setter> keys;
    if (section == "run") keys = run_keys(cfg);
    if (section == "problem") keys = problem_keys(cfg.problem);
    if (section == "solver") keys = solver_keys(cfg.solvers.back());
    if (section == "sweep") {
      keys = {{"axis", [&cfg](const std::string& v) { cfg.sweep_axis = v; }},
              {"values", [&cfg](const std::string& v) { cfg.sweep_values = parse_list(v); }}};
    }
    const auto it = keys.find(key);
    if (it == keys.end()) throw fail("unknown key '" + key + "' in [" + section + "]");
    try {
      it->second(value);
    } catch (const std::exception& e) {
      throw fail("bad value for '" + key + "': " + e.what());
    }
  }
  for (auto& s : cfg.solvers)
    if (s.label.empty()) s.label = s.name;
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  return parse_config(in, path);
}

void RunConfig::validate() const {
  const auto& names = problem_names();
  if (std::find(names.begin(), names.end(), problem.name) == names.end())
    throw ConfigError("problem.name: unknown problem '" + problem.name + "'");
  if (trials < 1) throw ConfigError("run.trials must be >= 1");
  if (record_every < 0) throw ConfigError("run.record_every must be >= 1");
  if (output_path.empty()) throw ConfigError("run.output must not be empty");
  if (solvers.empty()) throw ConfigError("no [solver] section");
  const bool constrained = problem.name == "constrained";
  for (std::size_t i = 0; i < solvers.size(); ++i) {
    const SolverSpec& s = solvers[i];
    const std::string where = "solver #" + std::to_string(i + 1) + " (" + s.label + ")";
    const auto& sn = solver_names();
    if (std::find(sn.begin(), sn.end(), s.name) == sn.end())
      throw ConfigError(where + ": unknown solver '" + s.name + "'");
    if (constrained && !is_penalty_solver(s.name))
      throw ConfigError(where + ": the constrained problem needs a penalty solver");
    if (record_every > s.cfg.K)
      throw ConfigError(where + ": record_every exceeds K");
    PenaltyConfig c = s.cfg;
    c.record_every = record_every == 0 ? c.K : record_every;
    try {
      c.validate();
    } catch (const ContractViolation& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
}

}  // namespace bilevel::bench
