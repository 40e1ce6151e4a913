#include "cpdyn/integrators.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace cpdyn {

MethodId method_from_string(const std::string& name) {
  if (name == "tsm1") return MethodId::Tsm1;
  if (name == "tsm1-avf") return MethodId::Tsm1Avf;
  if (name == "tsm2") return MethodId::Tsm2;
  if (name == "boris") return MethodId::Boris;
  if (name == "varm") return MethodId::Varm;
  if (name == "rk4ref") return MethodId::Rk4Ref;
  throw std::invalid_argument("unknown method '" + name +
                              "' (expected tsm1, tsm1-avf, tsm2, boris, varm "
                              "or rk4ref)");
}

std::string to_string(MethodId id) {
  switch (id) {
    case MethodId::Tsm1:
      return "tsm1";
    case MethodId::Tsm1Avf:
      return "tsm1-avf";
    case MethodId::Tsm2:
      return "tsm2";
    case MethodId::Boris:
      return "boris";
    case MethodId::Varm:
      return "varm";
    case MethodId::Rk4Ref:
      return "rk4ref";
  }
  throw std::logic_error("to_string: bad MethodId");
}

StarterStrategy starter_from_string(const std::string& name) {
  if (name == "tsm1") return StarterStrategy::Tsm1Start;
  if (name == "reference") return StarterStrategy::ReferenceStart;
  throw std::invalid_argument("unknown starter '" + name +
                              "' (expected tsm1 or reference)");
}

std::string to_string(StarterStrategy s) {
  return s == StarterStrategy::Tsm1Start ? "tsm1" : "reference";
}

std::vector<QuadNode> gauss_legendre_01(int order) {
  if (order < 2 || order > 32)
    throw std::invalid_argument("gauss_legendre_01: order must be in [2, 32]");
  const int n = order;
  std::vector<QuadNode> out(n);
  // Roots of the Legendre polynomial P_n on [-1, 1] by Newton iteration;
  // the cosine guess brackets each root well for the orders allowed here.
  for (int i = 0; i < n; ++i) {
    double x = std::cos(std::numbers::pi * (4.0 * i + 3.0) / (4.0 * n + 2.0));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 1; k < n; ++k) {
        const double p2 = ((2.0 * k + 1.0) * x * p1 - k * p0) / (k + 1.0);
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    out[i].node = 0.5 * (1.0 + x);
    out[i].weight = 1.0 / ((1.0 - x * x) * dp * dp);
  }
  // The cosine guesses run right to left; store nodes ascending.
  for (int i = 0, j = n - 1; i < j; ++i, --j) std::swap(out[i], out[j]);
  return out;
}

namespace {

//! Shared core of tsm1_step and tsm1_avf_step: fixed point on the midpoint
//! position, with the velocity update solved exactly per iterate.
template <class ForceAtMid>
StepResult midpoint_scheme_step(const ParticleState& s, double h,
                                const FieldModel& model,
                                const SolverSettings& settings,
                                ForceAtMid&& force_at_mid, const char* who) {
  if (h == 0.0)
    throw std::invalid_argument(std::string(who) + ": h must be nonzero");
  const double half_h_over_eps = 0.5 * h / model.eps;
  auto mid_velocity = [&](const Vec3& x_mid) {
    // v_mid - (h/2eps) v_mid x b = v_n + (h/2) f, i.e. (I + [t]x) v_mid = r
    // with t = (h/2eps) b(x_mid).
    const Vec3 t = half_h_over_eps * model.magnetic_field(x_mid);
    const Vec3 r = s.v + 0.5 * h * force_at_mid(x_mid);
    return solve_cross_linear(t, r);
  };
  auto map = [&](const Vec3& x_mid) {
    return s.x + 0.5 * h * mid_velocity(x_mid);
  };
  auto [x_mid, report] = solve_fixed_point(map, s.x + 0.5 * h * s.v, settings);
  const Vec3 v_mid = mid_velocity(x_mid);
  ParticleState next;
  next.t = s.t + h;
  next.x = s.x + h * v_mid;
  next.v = 2.0 * v_mid - s.v;
  return {next, report};
}

}  // namespace

StepResult tsm1_step(const ParticleState& s, double h, const FieldModel& model,
                     const SolverSettings& settings) {
  return midpoint_scheme_step(
      s, h, model, settings,
      [&](const Vec3& x_mid) { return model.force(x_mid); }, "tsm1_step");
}

StepResult tsm1_avf_step(const ParticleState& s, double h,
                         const FieldModel& model,
                         const SolverSettings& settings, int quad_order) {
  const auto quad = gauss_legendre_01(quad_order);
  auto averaged_force = [&](const Vec3& x_mid) {
    const Vec3 chord = 2.0 * (x_mid - s.x);  // x_{n+1} - x_n at this iterate
    Vec3 acc;
    for (const auto& q : quad) acc += q.weight * model.force(s.x + q.node * chord);
    return acc;
  };
  return midpoint_scheme_step(s, h, model, settings, averaged_force,
                              "tsm1_avf_step");
}

TwoStepResult tsm2_step(const TwoStepState& ts, double h,
                        const FieldModel& model,
                        const SolverSettings& settings) {
  if (h == 0.0) throw std::invalid_argument("tsm2_step: h must be nonzero");
  const double inv_eps = 1.0 / model.eps;
  const Vec3 mid_prev = 0.5 * (ts.x_prev + ts.x_curr);
  const Vec3 d_prev = ts.x_curr - ts.x_prev;
  // Trailing-interval terms do not change during the solve.
  const Vec3 jad_prev =
      model.vector_potential_jacobian(mid_prev).transpose_mul(d_prev);
  const Vec3 a_prev = model.vector_potential(mid_prev);
  const Vec3 f_prev = model.force(mid_prev);
  const Vec3 predictor = 2.0 * ts.x_curr - ts.x_prev;

  auto map = [&](const Vec3& x_next) {
    const Vec3 mid = 0.5 * (ts.x_curr + x_next);
    const Vec3 d = x_next - ts.x_curr;
    const Vec3 jad = model.vector_potential_jacobian(mid).transpose_mul(d);
    const Vec3 a = model.vector_potential(mid);
    const Vec3 f = model.force(mid);
    return predictor + 0.5 * h * inv_eps * (jad + jad_prev) -
           h * inv_eps * (a - a_prev) + 0.5 * h * h * (f + f_prev);
  };
  auto [x_next, report] = solve_fixed_point(map, predictor, settings);

  TwoStepState next;
  next.x_prev = ts.x_curr;
  next.x_curr = x_next;
  next.v_curr = (2.0 / h) * (x_next - ts.x_curr) - ts.v_curr;
  next.t_curr = ts.t_curr + h;
  return {next, report};
}

Vec3 tsm2_interval_momentum(const Vec3& x_prev, const Vec3& x_curr, double h,
                            const FieldModel& model) {
  if (h == 0.0)
    throw std::invalid_argument("tsm2_interval_momentum: h must be nonzero");
  const double inv_eps = 1.0 / model.eps;
  const Vec3 mid = 0.5 * (x_prev + x_curr);
  const Vec3 d = x_curr - x_prev;
  return d / h +
         0.5 * inv_eps * model.vector_potential_jacobian(mid).transpose_mul(d) +
         inv_eps * model.vector_potential(mid) + 0.5 * h * model.force(mid);
}

std::pair<PhasePoint, SolveReport> tsm2_canonical_step(
    const PhasePoint& s, double h, const FieldModel& model,
    const SolverSettings& settings) {
  if (h == 0.0)
    throw std::invalid_argument("tsm2_canonical_step: h must be nonzero");
  const double inv_eps = 1.0 / model.eps;
  // The leading discrete Legendre transform of the step functional
  //   |d|^2/(2h) + a(mid) . d / eps - h u(mid),  d = x_next - x, mid their mean,
  // fixes x_next implicitly through
  //   d/h = p + (1/2eps) Ja^T(mid) d - a(mid)/eps + (h/2) f(mid).
  auto map = [&](const Vec3& x_next) {
    const Vec3 mid = 0.5 * (s.x + x_next);
    const Vec3 d = x_next - s.x;
    return s.x +
           h * (s.p +
                0.5 * inv_eps *
                    model.vector_potential_jacobian(mid).transpose_mul(d) -
                inv_eps * model.vector_potential(mid) +
                0.5 * h * model.force(mid));
  };
  const Vec3 guess =
      s.x + h * (s.p - inv_eps * model.vector_potential(s.x));
  auto [x_next, report] = solve_fixed_point(map, guess, settings);
  // The trailing transform is exactly the momentum closing the interval.
  return {PhasePoint{x_next, tsm2_interval_momentum(s.x, x_next, h, model)},
          report};
}

TwoStepState boris_step(const TwoStepState& ts, double h,
                        const FieldModel& model) {
  if (h == 0.0) throw std::invalid_argument("boris_step: h must be nonzero");
  // The recursion is linear in x_next:
  //   (I + [t]x) x_next = 2 x_curr - x_prev + t x x_prev + h^2 f(x_curr)
  // with t = (h/2eps) b(x_curr).
  const Vec3 t = (0.5 * h / model.eps) * model.magnetic_field(ts.x_curr);
  const Vec3 r = 2.0 * ts.x_curr - ts.x_prev + cross(t, ts.x_prev) +
                 h * h * model.force(ts.x_curr);
  const Vec3 x_next = solve_cross_linear(t, r);

  TwoStepState next;
  next.x_prev = ts.x_curr;
  next.x_curr = x_next;
  // Central difference: the velocity at the grid point being left behind.
  next.v_curr = (x_next - ts.x_prev) / (2.0 * h);
  next.t_curr = ts.t_curr + h;
  return next;
}

TwoStepResult varm_step(const TwoStepState& ts, double h,
                        const FieldModel& model,
                        const SolverSettings& settings) {
  if (h == 0.0) throw std::invalid_argument("varm_step: h must be nonzero");
  const double half_h_over_eps = 0.5 * h / model.eps;
  const Mat3 ja = model.vector_potential_jacobian(ts.x_curr);
  const Vec3 a_prev = model.vector_potential(ts.x_prev);
  const Vec3 base =
      2.0 * ts.x_curr - ts.x_prev + h * h * model.force(ts.x_curr);
  auto map = [&](const Vec3& x_next) {
    return base + half_h_over_eps * (ja.transpose_mul(x_next - ts.x_prev) -
                                     (model.vector_potential(x_next) - a_prev));
  };
  auto [x_next, report] =
      solve_fixed_point(map, 2.0 * ts.x_curr - ts.x_prev, settings);

  TwoStepState next;
  next.x_prev = ts.x_curr;
  next.x_curr = x_next;
  next.v_curr = (x_next - ts.x_prev) / (2.0 * h);
  next.t_curr = ts.t_curr + h;
  return {next, report};
}

ParticleState reference_solve(const ParticleState& s0, double h_ref,
                              double t_end, const FieldModel& model) {
  if (!(h_ref > 0.0))
    throw std::invalid_argument("reference_solve: h_ref must be positive");
  const double span = t_end - s0.t;
  if (span < 0.0)
    throw std::invalid_argument("reference_solve: t_end precedes start time");
  if (span == 0.0) return s0;
  const long n = std::max(1L, std::lround(std::ceil(span / h_ref - 1e-9)));
  const double h = span / n;

  auto accel = [&](const Vec3& x, const Vec3& v) {
    return cross(v, model.magnetic_field(x)) / model.eps + model.force(x);
  };
  Vec3 x = s0.x, v = s0.v;
  for (long k = 0; k < n; ++k) {
    const Vec3 k1x = v;
    const Vec3 k1v = accel(x, v);
    const Vec3 k2x = v + 0.5 * h * k1v;
    const Vec3 k2v = accel(x + 0.5 * h * k1x, k2x);
    const Vec3 k3x = v + 0.5 * h * k2v;
    const Vec3 k3v = accel(x + 0.5 * h * k2x, k3x);
    const Vec3 k4x = v + h * k3v;
    const Vec3 k4v = accel(x + h * k3x, k4x);
    x += (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
    v += (h / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
  }
  return {t_end, x, v};
}

TwoStepState make_starter(const ParticleState& s0, double h,
                          const FieldModel& model, StarterStrategy strategy,
                          const SolverSettings& settings) {
  if (!(h > 0.0))
    throw std::invalid_argument("make_starter: h must be positive");
  ParticleState s1;
  if (strategy == StarterStrategy::Tsm1Start) {
    s1 = tsm1_step(s0, h, model, settings).state;
  } else {
    s1 = reference_solve(s0, h / 100.0, s0.t + h, model);
  }
  return TwoStepState{s0.x, s1.x, s1.v, s1.t};
}

}  // namespace cpdyn
