// bilevel run|sweep|compare|check
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bilevel/bench.hpp"

using namespace bilevel;
using namespace bilevel::bench;

namespace {

struct Overrides {
  std::string config;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<int> trials;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "run config file")->required();
  cmd->add_option("--out", o.out, "output CSV path");
  cmd->add_option("--seed", o.seed, "base seed");
  cmd->add_option("--trials", o.trials, "number of trials");
  cmd->add_flag("--quiet", o.quiet, "no progress output");
}

RunConfig load(const Overrides& o) {
  RunConfig cfg = load_config(o.config);
  if (o.out) cfg.output_path = *o.out;
  if (o.seed) cfg.seed = *o.seed;
  if (o.trials) cfg.trials = *o.trials;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bilevel optimisation benchmarks"};
  app.require_subcommand(1);

  Overrides o;
  auto* run = app.add_subcommand("run", "run every trial of every [solver] and write the trace CSV");
  add_common(run, o);

  auto* sweep = app.add_subcommand("sweep", "repeat the run over values of one hyperparameter");
  add_common(sweep, o);
  std::string axis;
  std::vector<double> values;
  sweep->add_option("--axis", axis, "T | gamma0 | lambda0 | eps0");
  sweep->add_option("--values", values, "comma separated values")->delimiter(',');

  auto* compare = app.add_subcommand("compare", "run two or more solvers on the same trials");
  add_common(compare, o);

  auto* check = app.add_subcommand("check", "numerical self-checks for one problem");
  std::string problem, level;
  std::uint64_t check_seed = 0;
  check->add_option("problem", problem, "problem name")->required();
  check->add_option("level", level, "oracle | hypergrad | lemma3 | kkt")->required();
  check->add_option("--seed", check_seed, "instance seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  const CommandOptions opts{o.quiet};
  try {
    if (*run) return cmd_run(load(o), std::cout, std::cerr, opts);
    if (*compare) return cmd_compare(load(o), std::cout, std::cerr, opts);
    if (*sweep) {
      RunConfig cfg = load(o);
      if (axis.empty()) axis = cfg.sweep_axis;
      if (values.empty() && !sweep->count("--values")) values = cfg.sweep_values;
      return cmd_sweep(cfg, axis, values, std::cout, std::cerr, opts);
    }
    if (*check) {
      ProblemParams pp;
      pp.name = problem;
      return cmd_check(pp, level, check_seed, std::cout, std::cerr);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  }
  return kConfigError;
}
