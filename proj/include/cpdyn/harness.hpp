#ifndef CPDYN_HARNESS_HPP
#define CPDYN_HARNESS_HPP

#include <optional>
#include <string>
#include <vector>

#include "cpdyn/field_models.hpp"
#include "cpdyn/integrators.hpp"
#include "cpdyn/observables.hpp"

namespace cpdyn {

//! Complete, deterministic description of one experiment run.  There is no
//! random state anywhere in a run: identical scenarios produce bit-identical
//! sample streams.
struct Scenario {
  BuiltinFieldId field = ExperimentFieldParams{};
  double eps = 1.0;
  MethodId method = MethodId::Tsm1;
  double h = 0.1;
  double t_end = 1.0;
  Vec3 x0{0.0, 1.0, 0.1};
  Vec3 v0{0.09, 0.05, 0.20};
  //! Starter for the two-step schemes; empty selects the per-method default
  //! (tsm1 for the midpoint variational scheme, reference for the
  //! grid-point schemes).
  std::optional<StarterStrategy> starter;
  SolverSettings solver;
  //! Decimation stride for stored samples; empty picks the smallest stride
  //! keeping at most 100000 stored samples.  Drift metrics always scan the
  //! full stream regardless of decimation.
  std::optional<long> sample_every;
  //! Also compute observables at grid points (t = n h).  Off by default:
  //! every long-time statement tracked here lives at midpoints; the
  //! grid-point series exists for diagnostics such as the exact-energy
  //! property of the averaged-force scheme.
  bool endpoint_observables = false;
  int avf_quad_order = 5;
  //! Override for the vector-potential scale in the momentum observable;
  //! empty keeps the model default 1/eps.
  std::optional<double> momentum_a_scale;

  bool operator==(const Scenario&) const = default;
};

StarterStrategy resolved_starter(const Scenario& sc);

//! Drift record of a single observable over a run: deviations are measured
//! against the first sample of the series (the earliest midpoint), matching
//! the form of the long-time conservation statements.
struct QuantityDrift {
  bool defined = false;
  double baseline = 0.0;
  double max_abs_dev = 0.0;
  double final_dev = 0.0;
  //! Largest deviations inside the first and last 10% of the run, for
  //! no-secular-trend checks.
  double first_window_max = 0.0;
  double last_window_max = 0.0;
};

struct DriftMetrics {
  QuantityDrift E;
  QuantityDrift M;
  QuantityDrift I;
  QuantityDrift H_h;
  QuantityDrift I_h;
};

struct SolverStats {
  long steps = 0;            // steps involving an implicit solve
  long total_iterations = 0;
  int max_iterations = 0;
  double max_residual = 0.0;
};

//! Diagnostic for the strong-field stepsize restriction: the theory wants
//! 2 tan(xi_max/2) = h max|b|/eps below a threshold that depends on how
//! long the modified invariants must survive; reported at the weakest
//! (shortest-horizon) level, never enforced.
struct StepsizeConditionReport {
  double max_h_b_over_eps = 0.0;
  double threshold = 0.0;
  bool satisfied = false;
};

struct SampleRecord {
  MidpointState mid;
  ObservableSample obs;
};

struct RunOutput {
  Scenario scenario;
  std::vector<SampleRecord> samples;  // decimated midpoint series
  long total_midpoints = 0;
  long resolved_sample_every = 1;
  DriftMetrics drift;
  SolverStats solver_stats;
  StepsizeConditionReport stepsize;
  double wall_time_seconds = 0.0;
  //! Grid-point series and drift, present when endpoint_observables is set.
  std::vector<SampleRecord> endpoint_samples;
  std::optional<DriftMetrics> endpoint_drift;
};

//! Integrate one scenario and collect midpoint observables and drift.
//! Throws std::invalid_argument for malformed scenarios; NonConvergenceError
//! (with step_index filled in) and SingularRegionError propagate out of the
//! steppers.
RunOutput run_scenario(const Scenario& sc);

struct ConvergencePoint {
  double h = 0.0;
  double error = 0.0;
};

struct ConvergenceStudy {
  std::vector<ConvergencePoint> points;
  double slope = 0.0;  // fitted log-log slope of error against h
};

//! Least-squares slope of log(error) against log(h).
double fit_loglog_slope(const std::vector<ConvergencePoint>& points);

//! Global position error |x_method(t_short) - x_ref(t_short)| per stepsize,
//! with the reference computed by reference_solve at step h_ref.
ConvergenceStudy convergence_study(const Scenario& sc,
                                   const std::vector<double>& h_list,
                                   double t_short, double h_ref = 1e-3);

struct ComparisonRow {
  MethodId method = MethodId::Tsm1;
  RunOutput output;
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;
};

//! Run several scenarios that differ only in method (and solver/starter
//! choices) and align their drift metrics.  Scenarios disagreeing in field,
//! eps, h, t_end or initial data are rejected.
ComparisonTable compare_methods(const std::vector<Scenario>& scenarios);

}  // namespace cpdyn

#endif
