#include "cpdyn/observables.hpp"

#include <cmath>
#include <stdexcept>

namespace cpdyn {

MidpointState midpoint_state(const ParticleState& a, const ParticleState& b) {
  return {0.5 * (a.t + b.t), 0.5 * (a.x + b.x), 0.5 * (a.v + b.v)};
}

ObservableSample compute_sample(const MidpointState& ms,
                                const FieldModel& model, double h) {
  ObservableSample s;
  s.t_mid = ms.t_mid;
  s.E = 0.5 * norm2(ms.v_mid) + model.scalar_potential(ms.x_mid);

  if (model.symmetry_generator) {
    const Vec3 p = ms.v_mid + model.momentum_a_scale *
                                  model.vector_potential(ms.x_mid);
    s.M = dot(p, model.symmetry_generator->mul(ms.x_mid));
  }

  const Vec3 b = model.magnetic_field(ms.x_mid);
  const double nb = norm(b);
  if (nb > 0.0) {
    const Vec3 v_perp = cross(ms.v_mid, b) / nb;
    const double moment = 0.5 * norm2(v_perp) / nb;
    const double theta = 0.5 * h * nb / model.eps;  // tan(xi/2)
    const double xi = 2.0 * std::atan(theta);
    // xi csc xi has limit 1 at xi = 0 (the h -> 0 limit of the run).
    const double xi_csc_xi = xi == 0.0 ? 1.0 : xi / std::sin(xi);
    s.I = moment;
    s.xi = xi;
    s.H_h = s.E + (xi_csc_xi - 1.0) * moment * nb;
    s.I_h = (1.0 + theta * theta) * moment;
  }
  return s;
}

double gyrophase_rate(const Vec3& x, const FieldModel& model, double h) {
  if (h == 0.0)
    throw std::invalid_argument("gyrophase_rate: h must be nonzero");
  const double eta = h / model.eps;
  return (2.0 / eta) * std::atan(0.5 * eta * norm(model.magnetic_field(x)));
}

ExpansionCheckReport modified_invariant_expansion_check(
    const std::vector<double>& xi_values) {
  ExpansionCheckReport rep;
  rep.samples.reserve(xi_values.size());
  bool all_ok = !xi_values.empty();
  for (const double xi : xi_values) {
    if (!(xi > 0.0) || xi > 0.5)
      throw std::invalid_argument(
          "modified_invariant_expansion_check: xi values must lie in (0, 0.5]");
    ExpansionCheckSample s;
    s.xi = xi;
    const double xi2 = xi * xi;
    s.energy_ratio = (xi / std::sin(xi) - 1.0) / (xi2 / 6.0);
    const double sec_half = 1.0 / std::cos(0.5 * xi);
    s.moment_ratio = (sec_half * sec_half - 1.0) / (xi2 / 4.0);
    const double dev_e = std::abs(s.energy_ratio - 1.0);
    const double dev_m = std::abs(s.moment_ratio - 1.0);
    s.within_bound = dev_e <= 0.5 * xi2 && dev_m <= 0.5 * xi2;
    rep.max_energy_ratio_dev = std::max(rep.max_energy_ratio_dev, dev_e);
    rep.max_moment_ratio_dev = std::max(rep.max_moment_ratio_dev, dev_m);
    all_ok = all_ok && s.within_bound;
    rep.samples.push_back(s);
  }
  rep.passed = all_ok;
  return rep;
}

}  // namespace cpdyn
