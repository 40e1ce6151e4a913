#ifndef CPDYN_CLI_HPP
#define CPDYN_CLI_HPP

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "cpdyn/harness.hpp"

namespace cpdyn {

inline constexpr const char* kArtifactVersion = "cpdyn 0.1.0";

//! Shortest decimal representation that parses back to the same double.
std::string format_double(double value);

//! Strict full-string double parse; throws std::invalid_argument.
double parse_double(const std::string& text);

//! Scenario text is a flat key = value format, one pair per line, dotted
//! keys for nested settings ('solver.tol = 1e-13'), '#' starting a comment
//! line.  Unknown keys are rejected.  format_scenario emits exactly this
//! format, and parse(format(sc)) == sc.
Scenario parse_scenario_text(const std::string& text);
Scenario parse_scenario_file(const std::string& path);
std::string format_scenario(const Scenario& sc);

//! Midpoint series as CSV: '#' metadata lines carrying the scenario, solver
//! statistics and artifact version, then the fixed header
//! t,x1,x2,x3,v1,v2,v3,E,M,I,xi,Hh,Ih.  Undefined observables become empty
//! cells.  All numbers round-trip bit-exactly.
void emit_csv(const RunOutput& out, const std::string& path);

//! Inverse of the data part of emit_csv.
std::vector<SampleRecord> parse_series_csv(const std::string& path);

//! Drift metrics as CSV, one row per observable.
void emit_drift_csv(const RunOutput& out, const std::string& path);

struct SvgSeries {
  std::string name;
  std::vector<std::pair<double, double>> points;  // (t, value)
};

//! Minimal standalone line chart: one polyline per series, legend, axis
//! labels.  The plot region is a nested svg whose viewBox spans the time
//! range and the value range padded by 10% on each side, so the data
//! coordinates are recoverable from the file.
void emit_svg(const std::vector<SvgSeries>& series, const std::string& path,
              const std::string& title = "", const std::string& y_label = "");

//! Field-consistency checks plus a quick invariant suite; one line per
//! check to the stream.  Returns true when everything passed.
bool run_verification(std::ostream& log);

//! Full command-line entry: subcommands run, converge, compare, verify.
//! Returns the process exit code: 0 success, 1 scenario/output error,
//! 2 non-convergence or singular-set entry, 3 verification failure,
//! 64 usage error.
int run_cli(const std::vector<std::string>& args);
int parse_and_dispatch(int argc, const char* const* argv);

}  // namespace cpdyn

#endif
