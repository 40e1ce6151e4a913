#include "cpdyn/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <variant>

#include "CLI11.hpp"

namespace cpdyn {

namespace {

//! Flag-level mistakes (unknown names, malformed values) that should end in
//! a usage message and exit code 64 rather than a scenario error.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string::size_type start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

}  // namespace

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& text) {
  const std::string t = trim(text);
  const char* begin = t.data();
  if (!t.empty() && t.front() == '+') ++begin;  // from_chars rejects '+'
  double v = 0.0;
  const auto res = std::from_chars(begin, t.data() + t.size(), v);
  if (res.ec != std::errc{} || res.ptr != t.data() + t.size())
    throw std::invalid_argument("not a number: '" + text + "'");
  return v;
}

namespace {

long parse_long(const std::string& text) {
  const std::string t = trim(text);
  long v = 0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (res.ec != std::errc{} || res.ptr != t.data() + t.size())
    throw std::invalid_argument("not an integer: '" + text + "'");
  return v;
}

bool parse_bool(const std::string& text) {
  const std::string t = trim(text);
  if (t == "true" || t == "1") return true;
  if (t == "false" || t == "0") return false;
  throw std::invalid_argument("not a boolean: '" + text + "'");
}

std::vector<double> parse_number_list(const std::string& text,
                                      std::size_t expected = 0) {
  std::vector<double> out;
  for (const std::string& part : split(text, ','))
    out.push_back(parse_double(part));
  if (expected != 0 && out.size() != expected)
    throw std::invalid_argument("expected " + std::to_string(expected) +
                                " comma-separated numbers in '" + text + "'");
  return out;
}

Vec3 parse_vec3(const std::string& text) {
  const auto v = parse_number_list(text, 3);
  return {v[0], v[1], v[2]};
}

std::string format_vec3(const Vec3& v) {
  return format_double(v.x) + "," + format_double(v.y) + "," +
         format_double(v.z);
}

Mat3 parse_mat3(const std::string& text) {
  const auto v = parse_number_list(text, 9);
  Mat3 m;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m.m[i][j] = v[3 * i + j];
  return m;
}

std::string format_mat3(const Mat3& m) {
  std::string out;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      if (i || j) out += ",";
      out += format_double(m.m[i][j]);
    }
  return out;
}

std::string field_kind(const BuiltinFieldId& id) {
  if (std::holds_alternative<ExperimentFieldParams>(id)) return "experiment";
  if (std::holds_alternative<ConstantFieldParams>(id)) return "constant";
  if (std::holds_alternative<QuadraticPotentialParams>(id)) return "quadratic";
  return "free";
}

}  // namespace

Scenario parse_scenario_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("scenario line " + std::to_string(lineno) +
                                  ": expected 'key = value', got '" + t + "'");
    kv[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));  // last value wins
  }

  auto take = [&kv](const char* key) -> std::optional<std::string> {
    const auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    std::string v = it->second;
    kv.erase(it);
    return v;
  };

  Scenario sc;
  const std::string kind = take("field").value_or("experiment");
  if (kind == "experiment") {
    ExperimentFieldParams p;
    if (const auto v = take("field.singular_floor"))
      p.singular_floor = parse_double(*v);
    sc.field = p;
  } else if (kind == "constant") {
    ConstantFieldParams p;
    if (const auto v = take("field.b")) p.b = parse_vec3(*v);
    sc.field = p;
  } else if (kind == "quadratic") {
    QuadraticPotentialParams p;
    if (const auto v = take("field.Q")) p.Q = parse_mat3(*v);
    if (const auto v = take("field.q")) p.q = parse_vec3(*v);
    if (const auto v = take("field.b")) p.b = parse_vec3(*v);
    sc.field = p;
  } else if (kind == "free") {
    sc.field = FreeFieldParams{};
  } else {
    throw std::invalid_argument("unknown field '" + kind +
                                "' (expected experiment, constant, quadratic "
                                "or free)");
  }

  if (const auto v = take("eps")) sc.eps = parse_double(*v);
  if (const auto v = take("method")) sc.method = method_from_string(*v);
  if (const auto v = take("h")) sc.h = parse_double(*v);
  if (const auto v = take("t_end")) sc.t_end = parse_double(*v);
  if (const auto v = take("x0")) sc.x0 = parse_vec3(*v);
  if (const auto v = take("v0")) sc.v0 = parse_vec3(*v);
  if (const auto v = take("starter")) sc.starter = starter_from_string(*v);
  if (const auto v = take("solver.tol")) sc.solver.tol = parse_double(*v);
  if (const auto v = take("solver.max_iter"))
    sc.solver.max_iter = static_cast<int>(parse_long(*v));
  if (const auto v = take("solver.damping")) sc.solver.damping = parse_double(*v);
  if (const auto v = take("sample_every")) sc.sample_every = parse_long(*v);
  if (const auto v = take("endpoint_observables"))
    sc.endpoint_observables = parse_bool(*v);
  if (const auto v = take("avf_quad_order"))
    sc.avf_quad_order = static_cast<int>(parse_long(*v));
  if (const auto v = take("momentum_a_scale"))
    sc.momentum_a_scale = parse_double(*v);

  if (!kv.empty())
    throw std::invalid_argument("unknown or inapplicable scenario key '" +
                                kv.begin()->first + "'");
  return sc;
}

Scenario parse_scenario_file(const std::string& path) {
  std::ifstream f(path);
  if (!f)
    throw std::invalid_argument("cannot read scenario file '" + path + "'");
  std::ostringstream buf;
  buf << f.rdbuf();
  try {
    return parse_scenario_text(buf.str());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
}

std::string format_scenario(const Scenario& sc) {
  std::string out;
  out += "field = " + field_kind(sc.field) + "\n";
  if (const auto* p = std::get_if<ExperimentFieldParams>(&sc.field)) {
    out += "field.singular_floor = " + format_double(p->singular_floor) + "\n";
  } else if (const auto* p = std::get_if<ConstantFieldParams>(&sc.field)) {
    out += "field.b = " + format_vec3(p->b) + "\n";
  } else if (const auto* p = std::get_if<QuadraticPotentialParams>(&sc.field)) {
    out += "field.Q = " + format_mat3(p->Q) + "\n";
    out += "field.q = " + format_vec3(p->q) + "\n";
    out += "field.b = " + format_vec3(p->b) + "\n";
  }
  out += "eps = " + format_double(sc.eps) + "\n";
  out += "method = " + to_string(sc.method) + "\n";
  out += "h = " + format_double(sc.h) + "\n";
  out += "t_end = " + format_double(sc.t_end) + "\n";
  out += "x0 = " + format_vec3(sc.x0) + "\n";
  out += "v0 = " + format_vec3(sc.v0) + "\n";
  if (sc.starter) out += "starter = " + to_string(*sc.starter) + "\n";
  out += "solver.tol = " + format_double(sc.solver.tol) + "\n";
  out += "solver.max_iter = " + std::to_string(sc.solver.max_iter) + "\n";
  out += "solver.damping = " + format_double(sc.solver.damping) + "\n";
  if (sc.sample_every)
    out += "sample_every = " + std::to_string(*sc.sample_every) + "\n";
  out += std::string("endpoint_observables = ") +
         (sc.endpoint_observables ? "true" : "false") + "\n";
  out += "avf_quad_order = " + std::to_string(sc.avf_quad_order) + "\n";
  if (sc.momentum_a_scale)
    out += "momentum_a_scale = " + format_double(*sc.momentum_a_scale) + "\n";
  return out;
}

namespace {

constexpr const char* kCsvHeader = "t,x1,x2,x3,v1,v2,v3,E,M,I,xi,Hh,Ih";

std::string opt_cell(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string{};
}

void write_metadata(std::ostream& f, const RunOutput& out) {
  f << "# " << kArtifactVersion << "\n";
  std::istringstream sc(format_scenario(out.scenario));
  std::string line;
  while (std::getline(sc, line)) f << "# " << line << "\n";
  f << "# total_midpoints = " << out.total_midpoints << "\n";
  f << "# sample_every_resolved = " << out.resolved_sample_every << "\n";
  f << "# solver_steps = " << out.solver_stats.steps << "\n";
  f << "# solver_total_iterations = " << out.solver_stats.total_iterations
    << "\n";
  f << "# solver_max_iterations = " << out.solver_stats.max_iterations << "\n";
  f << "# solver_max_residual = "
    << format_double(out.solver_stats.max_residual) << "\n";
  f << "# stepsize_max_h_b_over_eps = "
    << format_double(out.stepsize.max_h_b_over_eps) << "\n";
  f << "# stepsize_threshold = " << format_double(out.stepsize.threshold)
    << "\n";
  f << "# stepsize_satisfied = "
    << (out.stepsize.satisfied ? "true" : "false") << "\n";
  f << "# wall_time_seconds = " << format_double(out.wall_time_seconds)
    << "\n";
}

}  // namespace

void emit_csv(const RunOutput& out, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_metadata(f, out);
  f << kCsvHeader << "\n";
  for (const SampleRecord& r : out.samples) {
    f << format_double(r.mid.t_mid) << ',' << format_double(r.mid.x_mid.x)
      << ',' << format_double(r.mid.x_mid.y) << ','
      << format_double(r.mid.x_mid.z) << ',' << format_double(r.mid.v_mid.x)
      << ',' << format_double(r.mid.v_mid.y) << ','
      << format_double(r.mid.v_mid.z) << ',' << format_double(r.obs.E) << ','
      << opt_cell(r.obs.M) << ',' << opt_cell(r.obs.I) << ','
      << opt_cell(r.obs.xi) << ',' << opt_cell(r.obs.H_h) << ','
      << opt_cell(r.obs.I_h) << "\n";
  }
  f.flush();
  if (!f) throw std::runtime_error("I/O failure while writing '" + path + "'");
}

std::vector<SampleRecord> parse_series_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("cannot read series file '" + path + "'");
  std::vector<SampleRecord> out;
  std::string line;
  bool saw_header = false;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    if (!saw_header) {
      if (line != kCsvHeader)
        throw std::invalid_argument(path + ": unexpected header '" + line +
                                    "'");
      saw_header = true;
      continue;
    }
    const auto cells = split(line, ',');
    if (cells.size() != 13)
      throw std::invalid_argument(path + ": expected 13 cells, got " +
                                  std::to_string(cells.size()));
    auto opt = [&](int i) -> std::optional<double> {
      if (trim(cells[i]).empty()) return std::nullopt;
      return parse_double(cells[i]);
    };
    SampleRecord r;
    r.mid.t_mid = parse_double(cells[0]);
    r.mid.x_mid = {parse_double(cells[1]), parse_double(cells[2]),
                   parse_double(cells[3])};
    r.mid.v_mid = {parse_double(cells[4]), parse_double(cells[5]),
                   parse_double(cells[6])};
    r.obs.t_mid = r.mid.t_mid;
    r.obs.E = parse_double(cells[7]);
    r.obs.M = opt(8);
    r.obs.I = opt(9);
    r.obs.xi = opt(10);
    r.obs.H_h = opt(11);
    r.obs.I_h = opt(12);
    out.push_back(r);
  }
  if (!saw_header)
    throw std::invalid_argument(path + ": no header line found");
  return out;
}

namespace {

void drift_row(std::ostream& f, const char* name, const QuantityDrift& d) {
  f << name << ',' << (d.defined ? "true" : "false");
  if (d.defined) {
    f << ',' << format_double(d.baseline) << ',' << format_double(d.max_abs_dev)
      << ',' << format_double(d.final_dev) << ','
      << format_double(d.first_window_max) << ','
      << format_double(d.last_window_max);
  } else {
    f << ",,,,,";
  }
  f << "\n";
}

}  // namespace

void emit_drift_csv(const RunOutput& out, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_metadata(f, out);
  f << "quantity,defined,baseline,max_abs_dev,final_dev,first_window_max,"
       "last_window_max\n";
  drift_row(f, "E", out.drift.E);
  drift_row(f, "M", out.drift.M);
  drift_row(f, "I", out.drift.I);
  drift_row(f, "Hh", out.drift.H_h);
  drift_row(f, "Ih", out.drift.I_h);
  if (out.endpoint_drift) {
    drift_row(f, "E_endpoint", out.endpoint_drift->E);
    drift_row(f, "M_endpoint", out.endpoint_drift->M);
    drift_row(f, "I_endpoint", out.endpoint_drift->I);
    drift_row(f, "Hh_endpoint", out.endpoint_drift->H_h);
    drift_row(f, "Ih_endpoint", out.endpoint_drift->I_h);
  }
  f.flush();
  if (!f) throw std::runtime_error("I/O failure while writing '" + path + "'");
}

namespace {

std::string xml_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (const char c : s) {
    switch (c) {
      case '&':
        out += "&amp;";
        break;
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

constexpr const char* kSeriesColors[] = {"#1f77b4", "#d62728", "#2ca02c",
                                         "#9467bd", "#ff7f0e", "#8c564b",
                                         "#17becf", "#7f7f7f"};

}  // namespace

void emit_svg(const std::vector<SvgSeries>& series, const std::string& path,
              const std::string& title, const std::string& y_label) {
  if (series.empty())
    throw std::invalid_argument("emit_svg: empty series list");
  double tmin = 0, tmax = 0, ymin = 0, ymax = 0;
  bool first = true;
  for (const SvgSeries& s : series) {
    if (s.points.empty())
      throw std::invalid_argument("emit_svg: series '" + s.name +
                                  "' has no points");
    for (const auto& [t, v] : s.points) {
      if (!std::isfinite(t) || !std::isfinite(v))
        throw std::invalid_argument("emit_svg: non-finite point in series '" +
                                    s.name + "'");
      if (first) {
        tmin = tmax = t;
        ymin = ymax = v;
        first = false;
      } else {
        tmin = std::min(tmin, t);
        tmax = std::max(tmax, t);
        ymin = std::min(ymin, v);
        ymax = std::max(ymax, v);
      }
    }
  }
  if (tmax == tmin) {
    tmin -= 0.5;
    tmax += 0.5;
  }
  // Value axis padded by 10% of the data range on each side.
  const double pad =
      ymax > ymin ? 0.1 * (ymax - ymin) : 0.1 * std::max(1.0, std::abs(ymax));
  const double y_top = ymax + pad;
  const double y_span = (ymax - ymin) + 2.0 * pad;
  const double t_span = tmax - tmin;

  const int width = 960, height = 540;
  const int left = 70, right = 170, top = 40, bottom = 60;
  const int plot_w = width - left - right;
  const int plot_h = height - top - bottom;

  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
    << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " "
    << height << "\" font-family=\"sans-serif\" font-size=\"13\">\n";
  f << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!title.empty())
    f << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" "
         "font-size=\"16\">"
      << xml_escape(title) << "</text>\n";
  f << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << plot_w
    << "\" height=\"" << plot_h << "\" fill=\"none\" stroke=\"#888\"/>\n";

  // Plot region: a nested svg in data coordinates, value axis flipped so
  // larger values sit higher.  Its viewBox records the padded ranges.
  f << "<svg x=\"" << left << "\" y=\"" << top << "\" width=\"" << plot_w
    << "\" height=\"" << plot_h << "\" viewBox=\"" << format_double(tmin)
    << " 0 " << format_double(t_span) << " " << format_double(y_span)
    << "\" preserveAspectRatio=\"none\">\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    f << "<polyline fill=\"none\" stroke=\""
      << kSeriesColors[i % std::size(kSeriesColors)]
      << "\" stroke-width=\"1.5\" vector-effect=\"non-scaling-stroke\" "
         "points=\"";
    bool first_pt = true;
    for (const auto& [t, v] : series[i].points) {
      if (!first_pt) f << ' ';
      f << format_double(t) << ',' << format_double(y_top - v);
      first_pt = false;
    }
    f << "\"/>\n";
  }
  f << "</svg>\n";

  // Axis annotations: data-range endpoints at the plot corners.
  f << "<text x=\"" << left << "\" y=\"" << height - bottom + 18
    << "\" text-anchor=\"middle\">" << format_double(tmin) << "</text>\n";
  f << "<text x=\"" << left + plot_w << "\" y=\"" << height - bottom + 18
    << "\" text-anchor=\"middle\">" << format_double(tmax) << "</text>\n";
  f << "<text x=\"" << left - 6 << "\" y=\"" << top + 5
    << "\" text-anchor=\"end\">" << format_double(y_top) << "</text>\n";
  f << "<text x=\"" << left - 6 << "\" y=\"" << top + plot_h
    << "\" text-anchor=\"end\">" << format_double(ymin - pad) << "</text>\n";
  f << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 16
    << "\" text-anchor=\"middle\">t</text>\n";
  if (!y_label.empty())
    f << "<text x=\"16\" y=\"" << top + plot_h / 2
      << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
      << top + plot_h / 2 << ")\">" << xml_escape(y_label) << "</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const int ly = top + 14 + 20 * static_cast<int>(i);
    f << "<line x1=\"" << left + plot_w + 12 << "\" y1=\"" << ly - 4
      << "\" x2=\"" << left + plot_w + 34 << "\" y2=\"" << ly - 4
      << "\" stroke=\"" << kSeriesColors[i % std::size(kSeriesColors)]
      << "\" stroke-width=\"2\"/>\n";
    f << "<text x=\"" << left + plot_w + 40 << "\" y=\"" << ly << "\">"
      << xml_escape(series[i].name) << "</text>\n";
  }
  f << "</svg>\n";
  f.flush();
  if (!f) throw std::runtime_error("I/O failure while writing '" + path + "'");
}

namespace {

struct CheckLog {
  std::ostream& out;
  bool all_ok = true;

  void check(const std::string& name, bool ok, const std::string& detail) {
    out << (ok ? "ok:   " : "FAIL: ") << name;
    if (!detail.empty()) out << " (" << detail << ")";
    out << "\n";
    all_ok = all_ok && ok;
  }
};

std::vector<Vec3> sample_box_points(std::size_t count, double lo, double hi,
                                    double min_axis_distance,
                                    unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<Vec3> pts;
  pts.reserve(count);
  while (pts.size() < count) {
    const Vec3 p{u(rng), u(rng), u(rng)};
    if (std::sqrt(p.x * p.x + p.y * p.y) < min_axis_distance) continue;
    pts.push_back(p);
  }
  return pts;
}

}  // namespace

bool run_verification(std::ostream& log) {
  CheckLog c{log};

  {
    const FieldModel m = make_builtin(ExperimentFieldParams{}, 1.0);
    const auto pts = sample_box_points(100, -2.0, 2.0, 0.1, 20240817u);
    const auto rep = verify_consistency(m, pts, 1e-5, 1e-6);
    c.check("field consistency: experiment", rep.passed,
            "max curl dev " + format_double(rep.max_curl_deviation) +
                ", max grad dev " + format_double(rep.max_grad_deviation) +
                ", " + std::to_string(rep.checked) + " points");
  }
  {
    const FieldModel m =
        make_builtin(ConstantFieldParams{{0.3, -0.2, 0.9}}, 1.0);
    const auto pts = sample_box_points(20, -3.0, 3.0, 0.0, 7u);
    const auto rep = verify_consistency(m, pts, 1e-5, 1e-9);
    c.check("field consistency: constant", rep.passed,
            "max curl dev " + format_double(rep.max_curl_deviation));
  }
  {
    QuadraticPotentialParams qp;
    qp.Q.m[0][0] = 2.0;
    qp.Q.m[1][1] = 0.5;
    qp.Q.m[2][2] = 1.0;
    qp.Q.m[0][1] = qp.Q.m[1][0] = 0.25;
    qp.q = {0.1, -0.2, 0.3};
    qp.b = {0.2, -0.1, 0.9};
    const FieldModel m = make_builtin(qp, 1.0);
    const auto pts = sample_box_points(20, -3.0, 3.0, 0.0, 11u);
    const auto rep = verify_consistency(m, pts, 1e-5, 1e-8);
    c.check("field consistency: quadratic", rep.passed,
            "max grad dev " + format_double(rep.max_grad_deviation));
  }
  {
    std::mt19937 rng(424242u);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
      const Vec3 t{u(rng), u(rng), u(rng)};
      const Vec3 r{u(rng), u(rng), u(rng)};
      const Vec3 v = solve_cross_linear(t, r);
      worst = std::max(worst,
                       norm(v + cross(t, v) - r) / (1.0 + norm(r)));
    }
    c.check("cross-linear solve round-trip", worst <= 1e-14,
            "max scaled residual " + format_double(worst));
  }
  {
    const FieldModel m = make_builtin(ExperimentFieldParams{}, 1.0);
    const SolverSettings st;
    const double h = 0.05;
    std::mt19937 rng(99u);
    std::uniform_real_distribution<double> ux(0.5, 1.5);
    std::uniform_real_distribution<double> uv(-0.3, 0.3);
    double worst = 0.0;
    for (int i = 0; i < 5; ++i) {
      const ParticleState s{0.0, {ux(rng), ux(rng), uv(rng)},
                            {uv(rng), uv(rng), uv(rng)}};
      for (const bool avf : {false, true}) {
        const StepResult fwd = avf ? tsm1_avf_step(s, h, m, st)
                                   : tsm1_step(s, h, m, st);
        const StepResult back = avf ? tsm1_avf_step(fwd.state, -h, m, st)
                                    : tsm1_step(fwd.state, -h, m, st);
        worst = std::max(worst, norm(back.state.x - s.x) +
                                    norm(back.state.v - s.v));
      }
    }
    c.check("symmetric step inverse", worst <= 10.0 * st.tol,
            "max |step(-h) o step(h) - id| = " + format_double(worst));
  }
  {
    const FieldModel m = make_builtin(ConstantFieldParams{{0.0, 0.0, 1.0}}, 1.0);
    const SolverSettings st;
    const double h = 0.1;
    ParticleState one{0.0, {0.0, 1.0, 0.1}, {0.09, 0.05, 0.20}};
    TwoStepState two =
        make_starter(one, h, m, StarterStrategy::Tsm1Start, st);
    ParticleState s1 = tsm1_step(one, h, m, st).state;
    double worst = norm(two.x_curr - s1.x);
    for (int k = 2; k <= 1000; ++k) {
      two = tsm2_step(two, h, m, st).state;
      s1 = tsm1_step(s1, h, m, st).state;
      worst = std::max(worst, norm(two.x_curr - s1.x));
    }
    c.check("constant-field scheme equivalence", worst <= 100.0 * st.tol,
            "max |x_two-step - x_midpoint| = " + format_double(worst));
  }
  {
    Scenario sc;
    sc.field = QuadraticPotentialParams{};
    sc.eps = 1.0;
    sc.method = MethodId::Tsm1;
    sc.h = 0.1;
    sc.t_end = 1000.0;
    sc.x0 = {0.0, 1.0, 0.1};
    sc.v0 = {0.09, 0.05, 0.20};
    sc.endpoint_observables = true;
    const RunOutput out = run_scenario(sc);
    const double dev = out.endpoint_drift->E.max_abs_dev;
    c.check("quadratic-potential exact energy", dev <= 1e-10,
            "grid-point energy drift " + format_double(dev) + " over " +
                std::to_string(out.total_midpoints) + " steps");
  }
  {
    const auto rep =
        modified_invariant_expansion_check({0.5, 0.25, 0.1, 0.01});
    c.check("modified-invariant expansion", rep.passed,
            "max ratio deviations " + format_double(rep.max_energy_ratio_dev) +
                ", " + format_double(rep.max_moment_ratio_dev));
  }

  log << (c.all_ok ? "verification passed" : "verification FAILED") << "\n";
  return c.all_ok;
}

namespace {

namespace fs = std::filesystem;

struct ScenarioFlags {
  std::optional<std::string> scenario_file;
  std::optional<std::string> field;
  std::optional<std::string> method;
  std::optional<std::string> starter;
  std::optional<std::string> x0, v0, b, q, Q;
  std::optional<double> eps, h, t_end, solver_tol, solver_damping;
  std::optional<double> singular_floor, momentum_a_scale;
  std::optional<int> solver_max_iter, avf_quad_order;
  std::optional<long> sample_every;
  bool endpoint_observables = false;
};

void add_scenario_options(CLI::App* cmd, ScenarioFlags& fl) {
  cmd->add_option("--scenario", fl.scenario_file,
                  "scenario file (flat key = value lines); flags override");
  cmd->add_option("--field", fl.field,
                  "field model: experiment|constant|quadratic|free");
  cmd->add_option("--eps", fl.eps, "field strength parameter (1/eps scaling)");
  cmd->add_option("--method", fl.method,
                  "tsm1|tsm1-avf|tsm2|boris|varm|rk4ref");
  cmd->add_option("--h", fl.h, "stepsize");
  cmd->add_option("--t-end", fl.t_end, "integration horizon");
  cmd->add_option("--x0", fl.x0, "initial position a,b,c");
  cmd->add_option("--v0", fl.v0, "initial velocity a,b,c");
  cmd->add_option("--starter", fl.starter,
                  "two-step starter: tsm1|reference");
  cmd->add_option("--solver-tol", fl.solver_tol, "fixed-point tolerance");
  cmd->add_option("--solver-max-iter", fl.solver_max_iter,
                  "fixed-point iteration cap");
  cmd->add_option("--solver-damping", fl.solver_damping,
                  "fixed-point damping in (0,1]");
  cmd->add_option("--sample-every", fl.sample_every,
                  "store every n-th midpoint sample (default: auto)");
  cmd->add_flag("--endpoint-observables", fl.endpoint_observables,
                "also record grid-point observables");
  cmd->add_option("--avf-quad-order", fl.avf_quad_order,
                  "quadrature order for tsm1-avf");
  cmd->add_option("--momentum-a-scale", fl.momentum_a_scale,
                  "override the vector-potential scale in the momentum");
  cmd->add_option("--b", fl.b, "magnetic field a,b,c (constant/quadratic)");
  cmd->add_option("--Q", fl.Q, "quadratic potential matrix, 9 values");
  cmd->add_option("--q", fl.q, "quadratic potential linear term a,b,c");
  cmd->add_option("--singular-floor", fl.singular_floor,
                  "guard radius^2 of the experiment field axis");
}

Scenario build_scenario(const ScenarioFlags& fl) {
  Scenario sc;
  if (fl.scenario_file) sc = parse_scenario_file(*fl.scenario_file);
  try {
    if (fl.field) {
      if (*fl.field == "experiment") {
        if (!std::holds_alternative<ExperimentFieldParams>(sc.field))
          sc.field = ExperimentFieldParams{};
      } else if (*fl.field == "constant") {
        if (!std::holds_alternative<ConstantFieldParams>(sc.field))
          sc.field = ConstantFieldParams{};
      } else if (*fl.field == "quadratic") {
        if (!std::holds_alternative<QuadraticPotentialParams>(sc.field))
          sc.field = QuadraticPotentialParams{};
      } else if (*fl.field == "free") {
        sc.field = FreeFieldParams{};
      } else {
        throw std::invalid_argument(
            "unknown field '" + *fl.field +
            "' (expected experiment, constant, quadratic or free)");
      }
    }
    if (fl.b) {
      if (auto* p = std::get_if<ConstantFieldParams>(&sc.field))
        p->b = parse_vec3(*fl.b);
      else if (auto* p = std::get_if<QuadraticPotentialParams>(&sc.field))
        p->b = parse_vec3(*fl.b);
      else
        throw std::invalid_argument(
            "--b applies only to constant or quadratic fields");
    }
    if (fl.Q) {
      if (auto* p = std::get_if<QuadraticPotentialParams>(&sc.field))
        p->Q = parse_mat3(*fl.Q);
      else
        throw std::invalid_argument("--Q applies only to quadratic fields");
    }
    if (fl.q) {
      if (auto* p = std::get_if<QuadraticPotentialParams>(&sc.field))
        p->q = parse_vec3(*fl.q);
      else
        throw std::invalid_argument("--q applies only to quadratic fields");
    }
    if (fl.singular_floor) {
      if (auto* p = std::get_if<ExperimentFieldParams>(&sc.field))
        p->singular_floor = *fl.singular_floor;
      else
        throw std::invalid_argument(
            "--singular-floor applies only to the experiment field");
    }
    if (fl.method) sc.method = method_from_string(*fl.method);
    if (fl.starter) sc.starter = starter_from_string(*fl.starter);
    if (fl.x0) sc.x0 = parse_vec3(*fl.x0);
    if (fl.v0) sc.v0 = parse_vec3(*fl.v0);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (fl.eps) sc.eps = *fl.eps;
  if (fl.h) sc.h = *fl.h;
  if (fl.t_end) sc.t_end = *fl.t_end;
  if (fl.solver_tol) sc.solver.tol = *fl.solver_tol;
  if (fl.solver_max_iter) sc.solver.max_iter = *fl.solver_max_iter;
  if (fl.solver_damping) sc.solver.damping = *fl.solver_damping;
  if (fl.sample_every) sc.sample_every = *fl.sample_every;
  if (fl.endpoint_observables) sc.endpoint_observables = true;
  if (fl.avf_quad_order) sc.avf_quad_order = *fl.avf_quad_order;
  if (fl.momentum_a_scale) sc.momentum_a_scale = *fl.momentum_a_scale;
  return sc;
}

std::string default_out_dir() {
  if (const char* env = std::getenv("CPDYN_OUT_DIR"); env && *env) return env;
  return ".";
}

void print_drift_line(std::ostream& os, const char* name,
                      const QuantityDrift& d) {
  if (!d.defined) return;
  os << "  " << name << ": max |dev| " << format_double(d.max_abs_dev)
     << ", final " << format_double(d.final_dev) << "\n";
}

std::vector<SvgSeries> deviation_series(
    const std::vector<ComparisonRow>& rows,
    const std::function<std::optional<double>(const ObservableSample&)>& get) {
  std::vector<SvgSeries> series;
  for (const ComparisonRow& row : rows) {
    SvgSeries s;
    s.name = to_string(row.method);
    std::optional<double> base;
    for (const SampleRecord& r : row.output.samples) {
      const auto v = get(r.obs);
      if (!v) return {};  // quantity undefined for this method; skip plot
      if (!base) base = *v;
      s.points.emplace_back(r.mid.t_mid, std::abs(*v - *base));
    }
    if (s.points.empty()) return {};
    series.push_back(std::move(s));
  }
  return series;
}

int do_run(const ScenarioFlags& fl, const std::string& out_dir, bool svg) {
  const Scenario sc = build_scenario(fl);
  const RunOutput out = run_scenario(sc);
  fs::create_directories(out_dir);
  const std::string series_path = (fs::path(out_dir) / "series.csv").string();
  const std::string drift_path = (fs::path(out_dir) / "drift.csv").string();
  emit_csv(out, series_path);
  emit_drift_csv(out, drift_path);
  std::cout << to_string(sc.method) << ": " << out.total_midpoints
            << " steps, h = " << format_double(sc.h)
            << ", t_end = " << format_double(sc.t_end)
            << ", wall time " << format_double(out.wall_time_seconds)
            << " s\n";
  print_drift_line(std::cout, "E", out.drift.E);
  print_drift_line(std::cout, "M", out.drift.M);
  print_drift_line(std::cout, "I", out.drift.I);
  print_drift_line(std::cout, "Hh", out.drift.H_h);
  print_drift_line(std::cout, "Ih", out.drift.I_h);
  std::cout << "wrote " << series_path << ", " << drift_path << "\n";
  if (svg) {
    SvgSeries s;
    s.name = to_string(sc.method);
    double base = 0.0;
    bool first = true;
    for (const SampleRecord& r : out.samples) {
      if (first) {
        base = r.obs.E;
        first = false;
      }
      s.points.emplace_back(r.mid.t_mid, std::abs(r.obs.E - base));
    }
    const std::string svg_path =
        (fs::path(out_dir) / "energy_error.svg").string();
    emit_svg({s}, svg_path, "energy error", "|E - E(t0)|");
    std::cout << "wrote " << svg_path << "\n";
  }
  return 0;
}

int do_converge(const ScenarioFlags& fl, const std::string& out_dir,
                const std::string& h_list_text, double t_short, double h_ref) {
  const Scenario sc = build_scenario(fl);
  std::vector<double> h_list;
  try {
    h_list = parse_number_list(h_list_text);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const ConvergenceStudy study = convergence_study(sc, h_list, t_short, h_ref);
  fs::create_directories(out_dir);
  const std::string path = (fs::path(out_dir) / "convergence.csv").string();
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  f << "# " << kArtifactVersion << "\n";
  std::istringstream meta(format_scenario(sc));
  std::string line;
  while (std::getline(meta, line)) f << "# " << line << "\n";
  f << "# t_short = " << format_double(t_short) << "\n";
  f << "# h_ref = " << format_double(h_ref) << "\n";
  f << "# slope = " << format_double(study.slope) << "\n";
  f << "h,error\n";
  for (const ConvergencePoint& p : study.points)
    f << format_double(p.h) << ',' << format_double(p.error) << "\n";
  f.flush();
  if (!f) throw std::runtime_error("I/O failure while writing '" + path + "'");
  std::cout << to_string(sc.method) << " fitted order: "
            << format_double(study.slope) << "\n";
  for (const ConvergencePoint& p : study.points)
    std::cout << "  h = " << format_double(p.h) << "  error = "
              << format_double(p.error) << "\n";
  std::cout << "wrote " << path << "\n";
  return 0;
}

int do_compare(const ScenarioFlags& fl, const std::string& out_dir,
               const std::string& methods_text, bool svg) {
  const Scenario base = build_scenario(fl);
  std::vector<Scenario> scenarios;
  for (const std::string& name : split(methods_text, ',')) {
    Scenario sc = base;
    try {
      sc.method = method_from_string(trim(name));
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    scenarios.push_back(sc);
  }
  const ComparisonTable table = compare_methods(scenarios);
  fs::create_directories(out_dir);
  const std::string path = (fs::path(out_dir) / "compare.csv").string();
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  f << "# " << kArtifactVersion << "\n";
  std::istringstream meta(format_scenario(base));
  std::string line;
  while (std::getline(meta, line)) f << "# " << line << "\n";
  f << "method,quantity,defined,baseline,max_abs_dev,final_dev,"
       "first_window_max,last_window_max\n";
  for (const ComparisonRow& row : table.rows) {
    const auto emit_row = [&](const char* name, const QuantityDrift& d) {
      f << to_string(row.method) << ',';
      drift_row(f, name, d);
    };
    emit_row("E", row.output.drift.E);
    emit_row("M", row.output.drift.M);
    emit_row("I", row.output.drift.I);
    emit_row("Hh", row.output.drift.H_h);
    emit_row("Ih", row.output.drift.I_h);
  }
  f.flush();
  if (!f) throw std::runtime_error("I/O failure while writing '" + path + "'");
  for (const ComparisonRow& row : table.rows) {
    std::cout << to_string(row.method) << ":\n";
    print_drift_line(std::cout, "E", row.output.drift.E);
    print_drift_line(std::cout, "M", row.output.drift.M);
    print_drift_line(std::cout, "Hh", row.output.drift.H_h);
    print_drift_line(std::cout, "Ih", row.output.drift.I_h);
  }
  std::cout << "wrote " << path << "\n";
  if (svg) {
    struct PlotDef {
      const char* file;
      const char* title;
      const char* ylabel;
      std::function<std::optional<double>(const ObservableSample&)> get;
    };
    const PlotDef plots[] = {
        {"energy_error.svg", "energy error", "|E - E(t0)|",
         [](const ObservableSample& s) { return std::optional<double>(s.E); }},
        {"momentum_error.svg", "momentum error", "|M - M(t0)|",
         [](const ObservableSample& s) { return s.M; }},
        {"modified_energy_error.svg", "modified energy error",
         "|Hh - Hh(t0)|", [](const ObservableSample& s) { return s.H_h; }},
        {"modified_moment_error.svg", "modified moment error",
         "|Ih - Ih(t0)|", [](const ObservableSample& s) { return s.I_h; }},
    };
    for (const PlotDef& plot : plots) {
      const auto series = deviation_series(table.rows, plot.get);
      if (series.empty()) continue;
      const std::string svg_path = (fs::path(out_dir) / plot.file).string();
      emit_svg(series, svg_path, plot.title, plot.ylabel);
      std::cout << "wrote " << svg_path << "\n";
    }
  }
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"charged-particle dynamics: symmetric and variational "
               "integrators with long-time conservation diagnostics"};
  app.set_help_flag("--help", "print help and exit");
  app.require_subcommand(1);

  ScenarioFlags run_fl, conv_fl, cmp_fl;
  std::string run_out = default_out_dir(), conv_out = default_out_dir(),
              cmp_out = default_out_dir();
  bool run_svg = false, cmp_svg = false;
  std::string h_list_text = "0.1,0.05,0.025,0.0125";
  double t_short = 10.0, h_ref = 1e-3;
  std::string methods_text = "tsm1,tsm2,boris,varm";

  CLI::App* run_cmd =
      app.add_subcommand("run", "integrate one scenario, write series + drift");
  add_scenario_options(run_cmd, run_fl);
  run_cmd->add_option("--out", run_out, "output directory");
  run_cmd->add_flag("--emit-svg", run_svg, "also write an energy-error plot");

  CLI::App* conv_cmd =
      app.add_subcommand("converge", "global-error convergence study");
  add_scenario_options(conv_cmd, conv_fl);
  conv_cmd->add_option("--out", conv_out, "output directory");
  conv_cmd->add_option("--h-list", h_list_text, "comma-separated stepsizes");
  conv_cmd->add_option("--t-short", t_short, "study horizon");
  conv_cmd->add_option("--h-ref", h_ref, "reference integrator stepsize");

  CLI::App* cmp_cmd = app.add_subcommand(
      "compare", "run several methods on one scenario, align drifts");
  add_scenario_options(cmp_cmd, cmp_fl);
  cmp_cmd->add_option("--out", cmp_out, "output directory");
  cmp_cmd->add_option("--methods", methods_text, "comma-separated methods");
  cmp_cmd->add_flag("--emit-svg", cmp_svg, "also write drift plots");

  CLI::App* verify_cmd = app.add_subcommand(
      "verify", "field consistency + invariant quick-suite");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 64;
  }

  try {
    if (app.got_subcommand(run_cmd)) return do_run(run_fl, run_out, run_svg);
    if (app.got_subcommand(conv_cmd))
      return do_converge(conv_fl, conv_out, h_list_text, t_short, h_ref);
    if (app.got_subcommand(cmp_cmd))
      return do_compare(cmp_fl, cmp_out, methods_text, cmp_svg);
    if (app.got_subcommand(verify_cmd))
      return run_verification(std::cout) ? 0 : 3;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n"
              << "run with --help for usage\n";
    return 64;
  } catch (const NonConvergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const SingularRegionError& e) {
    std::cerr << "error: " << e.what() << " at position ("
              << format_double(e.position.x) << ", "
              << format_double(e.position.y) << ", "
              << format_double(e.position.z) << ")\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

int parse_and_dispatch(int argc, const char* const* argv) {
  std::vector<std::string> args;
  args.reserve(argc > 0 ? argc - 1 : 0);
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args);
}

}  // namespace cpdyn
