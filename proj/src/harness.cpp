#include "cpdyn/harness.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <numbers>
#include <stdexcept>

namespace cpdyn {

StarterStrategy resolved_starter(const Scenario& sc) {
  if (sc.starter) return *sc.starter;
  switch (sc.method) {
    case MethodId::Tsm2:
      return StarterStrategy::Tsm1Start;
    default:
      return StarterStrategy::ReferenceStart;
  }
}

namespace {

long steps_for(double t_end, double h) {
  // Largest n with n h <= t_end, with slack for the decimal stepsizes the
  // experiments use; at least one step.
  const long n = static_cast<long>(std::floor(t_end / h + 1e-9));
  if (n < 1)
    throw std::invalid_argument("run_scenario: t_end shorter than one step");
  return n;
}

void validate(const Scenario& sc) {
  if (!(sc.h > 0.0))
    throw std::invalid_argument("run_scenario: h must be positive");
  if (!(sc.t_end > 0.0))
    throw std::invalid_argument("run_scenario: t_end must be positive");
  if (sc.sample_every && *sc.sample_every < 1)
    throw std::invalid_argument("run_scenario: sample_every must be >= 1");
  if (sc.momentum_a_scale && !std::isfinite(*sc.momentum_a_scale))
    throw std::invalid_argument("run_scenario: momentum_a_scale must be finite");
}

void accumulate(SolverStats& stats, const SolveReport& rep) {
  ++stats.steps;
  stats.total_iterations += rep.iterations;
  stats.max_iterations = std::max(stats.max_iterations, rep.iterations);
  stats.max_residual = std::max(stats.max_residual, rep.final_residual);
}

[[noreturn]] void rethrow_with_step(const NonConvergenceError& e, long step,
                                    double h) {
  NonConvergenceError out(std::string(e.what()) + " at step " +
                              std::to_string(step) + " (t = " +
                              std::to_string(step * h) + ")",
                          e.last_iterate, e.residual, e.iterations);
  out.step_index = step;
  throw out;
}

//! Drive one trajectory and hand every grid point (k, x_k, v_k),
//! k = 0..n_steps in order, to the sink.  Velocities follow each scheme's
//! own convention; for the grid-point schemes the central difference needs
//! x_{k+1}, so one extra position beyond t_end is computed internally.
void integrate_endpoints(
    const Scenario& sc, const FieldModel& model, long n_steps,
    SolverStats& stats, double& max_h_b_over_eps,
    const std::function<void(long, const Vec3&, const Vec3&)>& emit) {
  const double h = sc.h;
  auto track_field = [&](const Vec3& x) {
    // Diagnostic only; skip points where the model is undefined.
    if (model.singular_set_guard && model.singular_set_guard(x)) return;
    max_h_b_over_eps = std::max(
        max_h_b_over_eps, h * norm(model.magnetic_field(x)) / model.eps);
  };
  auto emit_tracked = [&](long k, const Vec3& x, const Vec3& v) {
    track_field(x);
    emit(k, x, v);
  };

  const ParticleState init{0.0, sc.x0, sc.v0};
  switch (sc.method) {
    case MethodId::Tsm1:
    case MethodId::Tsm1Avf:
    case MethodId::Rk4Ref: {
      ParticleState s = init;
      emit_tracked(0, s.x, s.v);
      for (long k = 1; k <= n_steps; ++k) {
        try {
          if (sc.method == MethodId::Rk4Ref) {
            s = reference_solve(s, h, s.t + h, model);
          } else {
            StepResult r =
                sc.method == MethodId::Tsm1
                    ? tsm1_step(s, h, model, sc.solver)
                    : tsm1_avf_step(s, h, model, sc.solver, sc.avf_quad_order);
            accumulate(stats, r.report);
            s = r.state;
          }
        } catch (const NonConvergenceError& e) {
          rethrow_with_step(e, k, h);
        }
        emit_tracked(k, s.x, s.v);
      }
      return;
    }
    case MethodId::Tsm2: {
      emit_tracked(0, init.x, init.v);
      TwoStepState ts;
      try {
        ts = make_starter(init, h, model, resolved_starter(sc), sc.solver);
      } catch (const NonConvergenceError& e) {
        rethrow_with_step(e, 1, h);
      }
      emit_tracked(1, ts.x_curr, ts.v_curr);
      for (long k = 2; k <= n_steps; ++k) {
        try {
          TwoStepResult r = tsm2_step(ts, h, model, sc.solver);
          accumulate(stats, r.report);
          ts = r.state;
        } catch (const NonConvergenceError& e) {
          rethrow_with_step(e, k, h);
        }
        emit_tracked(k, ts.x_curr, ts.v_curr);
      }
      return;
    }
    case MethodId::Boris:
    case MethodId::Varm: {
      emit_tracked(0, init.x, init.v);
      TwoStepState ts;
      try {
        ts = make_starter(init, h, model, resolved_starter(sc), sc.solver);
      } catch (const NonConvergenceError& e) {
        rethrow_with_step(e, 1, h);
      }
      // ts holds (x_{k-1}, x_k); each step yields x_{k+1} together with the
      // central-difference velocity at x_k, so grid point k is emitted one
      // step late.
      for (long k = 1; k <= n_steps; ++k) {
        TwoStepState next;
        try {
          if (sc.method == MethodId::Boris) {
            next = boris_step(ts, h, model);
          } else {
            TwoStepResult r = varm_step(ts, h, model, sc.solver);
            accumulate(stats, r.report);
            next = r.state;
          }
        } catch (const NonConvergenceError& e) {
          rethrow_with_step(e, k + 1, h);
        }
        emit_tracked(k, ts.x_curr, next.v_curr);
        ts = next;
      }
      return;
    }
  }
  throw std::logic_error("integrate_endpoints: bad MethodId");
}

//! Running drift record for one observable, fed every sample in stream
//! order.  A single undefined sample marks the whole quantity undefined.
class QuantityAccumulator {
 public:
  QuantityAccumulator(long count, long window)
      : first_end_(window), last_begin_(count - window) {}

  void add(long idx, const std::optional<double>& value) {
    if (!value) {
      undefined_ = true;
      return;
    }
    if (undefined_) return;
    if (!has_baseline_) {
      baseline_ = *value;
      has_baseline_ = true;
    }
    const double dev = std::abs(*value - baseline_);
    max_abs_dev_ = std::max(max_abs_dev_, dev);
    final_dev_ = *value - baseline_;
    if (idx < first_end_) first_max_ = std::max(first_max_, dev);
    if (idx >= last_begin_) last_max_ = std::max(last_max_, dev);
  }

  QuantityDrift finish() const {
    QuantityDrift d;
    d.defined = has_baseline_ && !undefined_;
    if (!d.defined) return d;
    d.baseline = baseline_;
    d.max_abs_dev = max_abs_dev_;
    d.final_dev = final_dev_;
    d.first_window_max = first_max_;
    d.last_window_max = last_max_;
    return d;
  }

 private:
  long first_end_;
  long last_begin_;
  bool undefined_ = false;
  bool has_baseline_ = false;
  double baseline_ = 0.0;
  double max_abs_dev_ = 0.0;
  double final_dev_ = 0.0;
  double first_max_ = 0.0;
  double last_max_ = 0.0;
};

class DriftAccumulator {
 public:
  explicit DriftAccumulator(long count)
      : window_(std::max(1L, count / 10)),
        e_(count, window_),
        m_(count, window_),
        i_(count, window_),
        hh_(count, window_),
        ih_(count, window_) {}

  void add(long idx, const ObservableSample& s) {
    e_.add(idx, s.E);
    m_.add(idx, s.M);
    i_.add(idx, s.I);
    hh_.add(idx, s.H_h);
    ih_.add(idx, s.I_h);
  }

  DriftMetrics finish() const {
    return {e_.finish(), m_.finish(), i_.finish(), hh_.finish(), ih_.finish()};
  }

 private:
  long window_;
  QuantityAccumulator e_, m_, i_, hh_, ih_;
};

}  // namespace

RunOutput run_scenario(const Scenario& sc) {
  validate(sc);
  FieldModel model = make_builtin(sc.field, sc.eps);
  if (sc.momentum_a_scale) model.momentum_a_scale = *sc.momentum_a_scale;

  const long n_steps = steps_for(sc.t_end, sc.h);
  const long n_mid = n_steps;
  const long stride =
      sc.sample_every ? *sc.sample_every : std::max(1L, (n_mid + 99999) / 100000);

  RunOutput out;
  out.scenario = sc;
  out.total_midpoints = n_mid;
  out.resolved_sample_every = stride;
  out.samples.reserve(static_cast<std::size_t>(n_mid / stride + 1));

  DriftAccumulator drift(n_mid);
  DriftAccumulator endpoint_drift(n_steps + 1);

  const auto t_start = std::chrono::steady_clock::now();

  ParticleState prev;
  bool has_prev = false;
  auto consume = [&](long k, const Vec3& x, const Vec3& v) {
    if (sc.endpoint_observables) {
      const MidpointState grid{k * sc.h, x, v};
      const ObservableSample obs = compute_sample(grid, model, sc.h);
      endpoint_drift.add(k, obs);
      if (k % stride == 0) out.endpoint_samples.push_back({grid, obs});
    }
    const ParticleState cur{k * sc.h, x, v};
    if (has_prev) {
      const long m = k - 1;
      MidpointState ms = midpoint_state(prev, cur);
      ms.t_mid = (m + 0.5) * sc.h;  // time from the integer index, not sums
      const ObservableSample obs = compute_sample(ms, model, sc.h);
      drift.add(m, obs);
      if (m % stride == 0) out.samples.push_back({ms, obs});
    }
    prev = cur;
    has_prev = true;
  };

  integrate_endpoints(sc, model, n_steps, out.solver_stats,
                      out.stepsize.max_h_b_over_eps, consume);

  out.drift = drift.finish();
  if (sc.endpoint_observables) out.endpoint_drift = endpoint_drift.finish();

  // Weakest form of the strong-field stepsize restriction (shortest
  // conservation horizon): h |b| / eps below 2 tan(pi/8).
  out.stepsize.threshold = 2.0 * std::tan(std::numbers::pi / 8.0);
  out.stepsize.satisfied =
      out.stepsize.max_h_b_over_eps <= out.stepsize.threshold;

  out.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  return out;
}

double fit_loglog_slope(const std::vector<ConvergencePoint>& points) {
  if (points.size() < 2)
    throw std::invalid_argument("fit_loglog_slope: need at least two points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& p : points) {
    if (!(p.h > 0.0))
      throw std::invalid_argument("fit_loglog_slope: h must be positive");
    const double lx = std::log(p.h);
    const double ly = std::log(std::max(p.error, 1e-300));
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double n = static_cast<double>(points.size());
  const double denom = n * sxx - sx * sx;
  if (denom == 0.0)
    throw std::invalid_argument("fit_loglog_slope: h values are all equal");
  return (n * sxy - sx * sy) / denom;
}

ConvergenceStudy convergence_study(const Scenario& sc,
                                   const std::vector<double>& h_list,
                                   double t_short, double h_ref) {
  if (h_list.empty())
    throw std::invalid_argument("convergence_study: empty h list");
  if (!(t_short > 0.0))
    throw std::invalid_argument("convergence_study: t_short must be positive");

  FieldModel model = make_builtin(sc.field, sc.eps);
  const ParticleState init{0.0, sc.x0, sc.v0};
  const ParticleState ref = reference_solve(init, h_ref, t_short, model);

  ConvergenceStudy study;
  study.points.reserve(h_list.size());
  for (const double h : h_list) {
    if (!(h > 0.0))
      throw std::invalid_argument("convergence_study: h must be positive");
    Scenario run = sc;
    run.h = h;
    run.t_end = t_short;
    const long n_steps = steps_for(t_short, h);
    if (std::abs(n_steps * h - t_short) > 1e-9 * std::max(1.0, t_short))
      throw std::invalid_argument(
          "convergence_study: t_short must be an integer multiple of every h");
    SolverStats stats;
    double hb = 0.0;
    Vec3 x_final;
    integrate_endpoints(run, model, n_steps, stats, hb,
                        [&](long k, const Vec3& x, const Vec3&) {
                          if (k == n_steps) x_final = x;
                        });
    study.points.push_back({h, norm(x_final - ref.x)});
  }
  study.slope = fit_loglog_slope(study.points);
  return study;
}

ComparisonTable compare_methods(const std::vector<Scenario>& scenarios) {
  if (scenarios.empty())
    throw std::invalid_argument("compare_methods: empty scenario list");
  const Scenario& first = scenarios.front();
  for (const Scenario& sc : scenarios) {
    const bool compatible = sc.field == first.field && sc.eps == first.eps &&
                            sc.h == first.h && sc.t_end == first.t_end &&
                            sc.x0 == first.x0 && sc.v0 == first.v0;
    if (!compatible)
      throw std::invalid_argument(
          "compare_methods: scenarios must share field, eps, h, t_end and "
          "initial data (method '" +
          to_string(sc.method) + "' differs)");
  }
  ComparisonTable table;
  table.rows.reserve(scenarios.size());
  for (const Scenario& sc : scenarios)
    table.rows.push_back({sc.method, run_scenario(sc)});
  return table;
}

}  // namespace cpdyn
