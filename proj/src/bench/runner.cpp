#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <ostream>
#include <thread>

#include "bilevel/bench.hpp"

namespace bilevel::bench {

RngSeed trial_seed(const RunConfig& cfg, int trial) {
  return RngSeed{cfg.seed + static_cast<std::uint64_t>(trial)};
}

Point trial_init(const ProblemInstance& inst, RngSeed trial) {
  return inst.init_sampler(derive_seed(trial, 101));
}

SolveResult solve(const ProblemInstance& inst, const SolverSpec& spec, const Point& init,
                  RngSeed seed) {
  PenaltyConfig c = spec.cfg;
  c.seed = seed;
  if (spec.use_problem_box) c.box = inst.box;
  RunHooks hooks;
  hooks.metric = inst.metric;
  if (spec.name == "penalty") return penalty_solve(inst.oracle, init, c, hooks);
  if (spec.name == "penalty_aug") return penalty_aug_solve(inst.oracle, init, c, hooks);
  if (spec.name == "gd") return gd_alternating(inst.oracle, init, c, hooks);
  return outer_loop(inst.oracle, estimator_from_string(spec.name), init, c, hooks);
}

int worker_count() {
  if (const char* env = std::getenv("BILEVEL_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

SolverRun run_solver(const RunConfig& cfg, const SolverSpec& spec) {
  SolverRun run;
  run.spec = spec;
  run.spec.cfg.record_every = cfg.record_every == 0 ? spec.cfg.K : cfg.record_every;
  run.trials.resize(cfg.trials);
  std::vector<std::exception_ptr> errors(cfg.trials);

  std::atomic<int> next{0};
  auto work = [&] {
    for (int t = next++; t < cfg.trials; t = next++) {
      try {
        const RngSeed s = trial_seed(cfg, t);
        const ProblemInstance inst = make_problem(cfg.problem, s);
        TrialOutcome& out = run.trials[t];
        out.trial = t;
        out.result = solve(inst, run.spec, trial_init(inst, s), s);
        const Point& p = out.result.point;
        out.final_metric = inst.metric ? inst.metric(p) : inst.oracle.eval_f(p);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    }
  };
  const int n_workers = std::min(worker_count(), cfg.trials);
  if (n_workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n_workers; ++i) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }

  // Report the lowest failing trial so diagnostics do not depend on scheduling.
  for (int t = 0; t < cfg.trials; ++t) {
    if (!errors[t]) continue;
    try {
      std::rethrow_exception(errors[t]);
    } catch (const SolverAbort& e) {
      throw SolverAbort(spec.label + ", trial " + std::to_string(t) + ": " + e.what(),
                        e.iteration(), e.trace());
    }
  }
  return run;
}

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

double round_ms(double seconds) { return std::round(seconds * 1000.0) / 1000.0; }

std::string with_suffix(const std::string& path, const std::string& suffix) {
  const auto slash = path.find_last_of('/');
  const auto dot = path.find_last_of('.');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash))
    return path + suffix;
  return path.substr(0, dot) + suffix + path.substr(dot);
}

void write_trace_csv(std::ostream& out, const std::vector<SolverRun>& runs, bool timing) {
  out << "solver,trial,k,wall_seconds,gamma,eps,lambda,f,g,grad_u_norm,grad_v_norm,feas_norm,"
         "distance,n_hvp,n_jvp,peak_stored_vecs\n";
  for (const SolverRun& run : runs) {
    for (const TrialOutcome& t : run.trials) {
      for (const TraceRecord& r : t.result.trace.records) {
        out << run.spec.label << ',' << t.trial << ',' << r.k << ','
            << format_double(timing ? round_ms(r.wall_seconds) : 0.0) << ','
            << format_double(r.gamma) << ',' << format_double(r.eps) << ','
            << format_double(r.lambda) << ',' << format_double(r.f) << ',' << format_double(r.g)
            << ',' << format_double(r.grad_u_norm) << ',' << format_double(r.grad_v_norm) << ','
            << format_double(r.feas_norm) << ',' << format_double(r.distance) << ','
            << r.counters.n_hvp << ',' << r.counters.n_jvp << ','
            << r.counters.peak_stored_vecs << '\n';
      }
    }
  }
}

SummaryRow summarize(const SolverRun& run, bool timing) {
  SummaryRow row;
  row.label = run.spec.label;
  row.trials = static_cast<int>(run.trials.size());
  std::vector<double> metric;
  double wall = 0;
  for (const TrialOutcome& t : run.trials) {
    metric.push_back(t.final_metric);
    const auto& recs = t.result.trace.records;
    if (timing && !recs.empty()) wall += round_ms(recs.back().wall_seconds);
    row.n_hvp += t.result.counters.n_hvp;
    row.n_jvp += t.result.counters.n_jvp;
    row.peak_stored_vecs = std::max(row.peak_stored_vecs, t.result.counters.peak_stored_vecs);
  }
  const double n = static_cast<double>(metric.size());
  double sum = 0;
  for (double m : metric) sum += m;
  row.metric_mean = sum / n;
  double ss = 0;
  for (double m : metric) ss += (m - row.metric_mean) * (m - row.metric_mean);
  row.metric_sd = metric.size() > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
  std::sort(metric.begin(), metric.end());
  const std::size_t mid = metric.size() / 2;
  row.metric_median = metric.size() % 2 ? metric[mid] : 0.5 * (metric[mid - 1] + metric[mid]);
  row.wall_mean = wall / n;
  row.wall_per_update = row.wall_mean / static_cast<double>(run.spec.cfg.K);
  return row;
}

void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows) {
  out << "solver,axis,value,trials,metric_mean,metric_sd,metric_median,wall_mean,"
         "wall_per_update,n_hvp,n_jvp,peak_stored_vecs\n";
  for (const SummaryRow& r : rows) {
    out << r.label << ',' << r.axis << ',' << (r.axis.empty() ? "" : format_double(r.value))
        << ',' << r.trials << ',' << format_double(r.metric_mean) << ','
        << format_double(r.metric_sd) << ',' << format_double(r.metric_median) << ','
        << format_double(r.wall_mean) << ',' << format_double(r.wall_per_update) << ','
        << r.n_hvp << ',' << r.n_jvp << ',' << r.peak_stored_vecs << '\n';
  }
}

}  // namespace bilevel::bench
