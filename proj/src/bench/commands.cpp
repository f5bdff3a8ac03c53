#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "bilevel/bench.hpp"
#include "bilevel/hypergrad.hpp"

namespace bilevel::bench {
namespace {

template <class Body>
int guarded(std::ostream& err, Body&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const ContractViolation& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const CapabilityError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const SolverAbort& e) {
    err << "numeric abort: " << e.what() << " (iteration " << e.iteration() << ")\n";
    return kNumericAbort;
  } catch (const std::exception& e) {
    err << "numeric abort: " << e.what() << '\n';
    return kNumericAbort;
  }
}

// Files are written only once every run has finished, so a failed run leaves nothing behind.
void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << text;
  if (!out) throw ConfigError("write failed for '" + path + "'");
}

std::string trace_text(const std::vector<SolverRun>& runs, bool timing) {
  std::ostringstream os;
  write_trace_csv(os, runs, timing);
  return os.str();
}

void log_summary(std::ostream& log, const SummaryRow& r) {
  log << std::left << std::setw(14) << r.label;
  if (!r.axis.empty()) log << ' ' << r.axis << '=' << format_double(r.value);
  log << "  metric " << std::scientific << std::setprecision(3) << r.metric_mean << " +- "
      << r.metric_sd << " (median " << r.metric_median << ")  wall " << std::fixed
      << std::setprecision(3) << r.wall_mean << " s  hvp " << r.n_hvp << "  jvp " << r.n_jvp
      << "  peak " << r.peak_stored_vecs << '\n';
  log << std::defaultfloat;
}

std::vector<SolverRun> run_all(const RunConfig& cfg) {
  std::vector<SolverRun> runs;
  for (const SolverSpec& s : cfg.solvers) runs.push_back(run_solver(cfg, s));
  return runs;
}

std::string axis_tag(const std::string& axis, double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "_%s%g", axis.c_str(), value);
  return buf;
}

}  // namespace

int cmd_run(const RunConfig& cfg, std::ostream& log, std::ostream& err,
            const CommandOptions& opts) {
  return guarded(err, [&] {
    cfg.validate();
    const auto runs = run_all(cfg);
    write_file(cfg.output_path, trace_text(runs, cfg.timing));
    if (!opts.quiet) {
      for (const auto& r : runs) log_summary(log, summarize(r, cfg.timing));
      log << "wrote " << cfg.output_path << '\n';
    }
    return static_cast<int>(kOk);
  });
}

int cmd_sweep(RunConfig cfg, const std::string& axis, const std::vector<double>& values,
              std::ostream& log, std::ostream& err, const CommandOptions& opts) {
  return guarded(err, [&] {
    cfg.validate();
    if (axis != "T" && axis != "gamma0" && axis != "lambda0" && axis != "eps0")
      throw ConfigError("sweep axis must be one of T, gamma0, lambda0, eps0 (got '" + axis + "')");
    if (values.empty()) throw ConfigError("sweep values list is empty");
    for (const SolverSpec& s : cfg.solvers) {
      if ((axis == "gamma0" || axis == "eps0") && !is_penalty_solver(s.name))
        throw ConfigError("axis " + axis + " does not apply to solver '" + s.label + "'");
      if (axis == "lambda0" && s.name != "penalty_aug")
        throw ConfigError("axis lambda0 needs penalty_aug, not '" + s.label + "'");
    }
    for (double x : values) {
      if (axis == "T" && (x < 1 || x != std::floor(x)))
        throw ConfigError("sweep value " + format_double(x) + " is not a valid T");
    }

    std::vector<std::pair<std::string, std::string>> files;
    std::vector<SummaryRow> rows;
    for (double x : values) {
      RunConfig c = cfg;
      for (SolverSpec& s : c.solvers) {
        if (axis == "T") s.cfg.T = static_cast<int>(x);
        if (axis == "gamma0") s.cfg.gamma0 = x;
        if (axis == "lambda0") s.cfg.lambda0 = x;
        if (axis == "eps0") s.cfg.eps0 = x;
      }
      c.validate();
      const auto runs = run_all(c);
      files.emplace_back(with_suffix(cfg.output_path, axis_tag(axis, x)),
                         trace_text(runs, cfg.timing));
      for (const auto& r : runs) {
        SummaryRow row = summarize(r, cfg.timing);
        row.axis = axis;
        row.value = x;
        if (!opts.quiet) log_summary(log, row);
        rows.push_back(std::move(row));
      }
    }
    std::ostringstream summary;
    write_summary_csv(summary, rows);
    files.emplace_back(with_suffix(cfg.output_path, "_summary"), summary.str());
    for (const auto& [path, text] : files) write_file(path, text);
    if (!opts.quiet) log << "wrote " << files.size() << " files\n";
    return static_cast<int>(kOk);
  });
}

int cmd_compare(const RunConfig& cfg, std::ostream& log, std::ostream& err,
                const CommandOptions& opts) {
  return guarded(err, [&] {
    cfg.validate();
    if (cfg.solvers.size() < 2) throw ConfigError("compare needs at least two [solver] sections");
    const auto runs = run_all(cfg);
    std::vector<SummaryRow> rows;
    for (const auto& r : runs) rows.push_back(summarize(r, cfg.timing));
    std::ostringstream summary;
    write_summary_csv(summary, rows);
    const std::string summary_path = with_suffix(cfg.output_path, "_summary");
    const std::string trace = trace_text(runs, cfg.timing);
    write_file(cfg.output_path, trace);
    write_file(summary_path, summary.str());
    if (!opts.quiet) {
      for (const auto& row : rows) log_summary(log, row);
      log << "wrote " << cfg.output_path << " and " << summary_path << '\n';
    }
    return static_cast<int>(kOk);
  });
}

namespace {

constexpr int kCheckPoints = 5;
constexpr double kOracleTol = 1e-4;
constexpr double kHypergradTol = 1e-4;
constexpr double kLemma3Tol = 1e-6;
constexpr double kKktTol = 1e-3;

// Step for plain GD on g near v: 2 / (L + mu) from the dense Hessian when
// available, else 1 / L from power iteration on Hessian-vector products.
double gd_rate(const ProblemOracle& o, const Point& p) {
  if (o.hess_vv_g) {
    const Eigen::SelfAdjointEigenSolver<RealMat> es(o.hess_vv_g(p));
    const double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
    return lo > 0 ? 2.0 / (hi + lo) : 1.0 / hi;
  }
  RealVec x = RealVec::Ones(o.dim_v).normalized();
  double lam = 1;
  for (int i = 0; i < 100; ++i) {
    const RealVec y = o.hvp_vv_g(p, x);
    lam = y.norm();
    x = y / lam;
  }
  return 1.0 / (1.05 * lam);
}

int check_hypergrad(const ProblemInstance& inst, std::uint64_t seed, std::ostream& log,
                    std::ostream& err) {
  const ProblemOracle& o = inst.oracle;
  const bool declared_singular = inst.projector.size() > 0;
  double worst = 0;
  for (int i = 0; i < kCheckPoints; ++i) {
    const Point start = inst.init_sampler(derive_seed(RngSeed{seed}, 200 + i));
    const RealVec v_star = solve_lower_level(o, start.u, start.v, 1e-10);
    const Point p{start.u, v_star};
    RealVec exact;
    try {
      exact = exact_hypergrad(o, p);
    } catch (const SingularityError& e) {
      if (declared_singular) {
        log << inst.name << " hypergrad: singular lower level as designed (cond "
            << std::scientific << e.condition() << std::defaultfloat << "), expected failure\n";
        return kOk;
      }
      err << inst.name << " hypergrad: unexpected singularity: " << e.what() << '\n';
      return kCheckFailed;
    }
    const double rate = gd_rate(o, p);
    std::vector<std::pair<std::string, RealVec>> est;
    est.emplace_back("exact", exact);
    est.emplace_back("fd", fd_hypergrad(o, p.u, 1e-10, 1e-5, v_star));
    est.emplace_back("rmd", rmd_hypergrad(o, p.u, v_star, 500, rate).hypergrad);
    if (o.has_dense() && o.dim_u * o.dim_v <= kFmdMaxState)
      est.emplace_back("fmd", fmd_hypergrad(o, p.u, v_star, 500, rate).hypergrad);
    ApproxGradOptions ag;
    ag.v_stepper = StepperKind::kPlainGd;
    ag.rho = rate;
    ag.linear_solver = LinearSolver::kConjugateGradient;
    ag.T_lin = static_cast<int>(4 * o.dim_v);
    ApproxGradState st;
    est.emplace_back("approxgrad", approxgrad_hypergrad(o, p.u, v_star, ag, st).hypergrad);

    for (std::size_t a = 0; a < est.size(); ++a) {
      for (std::size_t b = a + 1; b < est.size(); ++b) {
        const double e = relative_error(est[a].second, est[b].second);
        worst = std::max(worst, e);
        if (e > kHypergradTol) {
          err << inst.name << " hypergrad: " << est[a].first << " vs " << est[b].first
              << " relative error " << e << " > " << kHypergradTol << " at point " << i << '\n';
          return kCheckFailed;
        }
      }
    }
  }
  if (declared_singular) {
    err << inst.name << " hypergrad: expected a singular lower level\n";
    return kCheckFailed;
  }
  log << inst.name << " hypergrad: max pairwise relative error " << worst << '\n';
  return kOk;
}

}  // namespace

int cmd_check(const ProblemParams& problem, const std::string& level, std::uint64_t seed,
              std::ostream& log, std::ostream& err) {
  return guarded(err, [&]() -> int {
    const auto& names = problem_names();
    if (std::find(names.begin(), names.end(), problem.name) == names.end())
      throw ConfigError("unknown problem '" + problem.name + "'");
    const ProblemInstance inst = make_problem(problem, RngSeed{seed});
    const ProblemOracle& o = inst.oracle;

    if (level == "oracle") {
      double worst = 0;
      for (int i = 0; i < kCheckPoints; ++i) {
        const Point p = inst.init_sampler(derive_seed(RngSeed{seed}, 100 + i));
        const FdReport r = fd_check_oracle(o, p);
        worst = std::max(worst, r.max());
        if (r.max() > kOracleTol) {
          err << inst.name << " oracle: point " << i << ": " << r.describe() << '\n';
          return kCheckFailed;
        }
      }
      log << inst.name << " oracle: max finite-difference error " << worst << '\n';
      return kOk;
    }
    if (level == "hypergrad") {
      if (o.has_constraints()) throw ConfigError("hypergrad check needs an unconstrained problem");
      return check_hypergrad(inst, seed, log, err);
    }
    if (level == "lemma3") {
      if (o.has_constraints()) throw ConfigError("lemma3 check needs an unconstrained problem");
      if (inst.projector.size() > 0) {
        // The statement needs an invertible lower-level Hessian.
        log << inst.name << " lemma3: singular lower level as designed, expected failure\n";
        return kOk;
      }
      double worst = 0;
      for (int i = 0; i < kCheckPoints; ++i) {
        const Point p = inst.init_sampler(derive_seed(RngSeed{seed}, 300 + i));
        for (double gamma : {0.1, 1.0, 10.0, 1000.0}) {
          const double e = verify_lemma3(o, p.u, gamma, 1e-10, p.v);
          worst = std::max(worst, e);
          if (e > kLemma3Tol) {
            err << inst.name << " lemma3: relative error " << e << " > " << kLemma3Tol
                << " at point " << i << ", gamma " << gamma << '\n';
            return kCheckFailed;
          }
        }
      }
      log << inst.name << " lemma3: max relative error " << worst << '\n';
      return kOk;
    }
    if (level == "kkt") {
      PenaltyConfig cfg;
      cfg.box = inst.box;
      cfg.record_every = cfg.K;
      const RngSeed s{seed};
      const SolveResult r = penalty_solve(o, inst.init_sampler(derive_seed(s, 101)), cfg);
      const KKTReport k = kkt_residual(o, r.point, r.final_params.gamma);
      log << inst.name << " kkt: feasibility " << k.feasibility << ", stationarity "
          << k.stationarity << ", jacobian rank " << k.jacobian_rank << '/'
          << k.constraint_count << '\n';
      if (k.feasibility > kKktTol || k.stationarity > kKktTol) {
        err << inst.name << " kkt: residual above " << kKktTol << '\n';
        return kCheckFailed;
      }
      return kOk;
    }
    throw ConfigError("unknown check level '" + level + "' (oracle, hypergrad, lemma3, kkt)");
  });
}

}  // namespace bilevel::bench
