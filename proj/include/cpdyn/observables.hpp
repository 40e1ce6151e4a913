#ifndef CPDYN_OBSERVABLES_HPP
#define CPDYN_OBSERVABLES_HPP

#include <optional>
#include <vector>

#include "cpdyn/field_models.hpp"
#include "cpdyn/integrators.hpp"
#include "cpdyn/vec3.hpp"

namespace cpdyn {

//! Half-step state ((x_n + x_{n+1})/2, (v_n + v_{n+1})/2): the long-time
//! conservation statements for the symmetric schemes all hold at these
//! points, not at the grid points themselves.
struct MidpointState {
  double t_mid = 0.0;
  Vec3 x_mid;
  Vec3 v_mid;
};

MidpointState midpoint_state(const ParticleState& a, const ParticleState& b);

//! Conserved and nearly-conserved quantities at one midpoint state.
//! E is always defined.  M needs a symmetry generator on the model;
//! I, xi, H_h and I_h need |b(x_mid)| > 0.  Missing prerequisites leave
//! the corresponding fields empty rather than faking values.
struct ObservableSample {
  double t_mid = 0.0;
  double E = 0.0;                // |v|^2 / 2 + u(x)
  std::optional<double> M;       // (v + scale a(x))^T S x
  std::optional<double> I;       // |v_perp|^2 / (2 |b|), v_perp = v x b / |b|
  std::optional<double> xi;      // 2 arctan(h |b| / (2 eps))
  std::optional<double> H_h;     // E + (xi csc xi - 1) I |b|
  std::optional<double> I_h;     // (1 + (h |b| / (2 eps))^2) I
};

//! Evaluate all observables at a midpoint state for a run of stepsize h.
//! I_h uses the algebraic form of sec^2(xi/2) to avoid trigonometric
//! roundoff.
ObservableSample compute_sample(const MidpointState& ms,
                                const FieldModel& model, double h);

//! Effective gyration frequency of the discrete flow, defined through
//! tan(h phi_dot / (2 eps)) = h |b(x)| / (2 eps); tends to |b(x)| as the
//! resolution h/eps of the gyration improves.
double gyrophase_rate(const Vec3& x, const FieldModel& model, double h);

//! Leading deformation coefficients of the modified invariants:
//! H_h - E = c ξ² I |b| + O(ξ⁴) and I_h - I = c' ξ² I + O(ξ⁴) with
//! c = 1/6, c' = 1/4 for the variational midpoint schemes here, against
//! 5/12 and 1/2 for the grid-point variational scheme.
inline constexpr double kEnergyDeformationCoeff = 1.0 / 6.0;
inline constexpr double kMomentDeformationCoeff = 1.0 / 4.0;
inline constexpr double kVarmEnergyDeformationCoeff = 5.0 / 12.0;
inline constexpr double kVarmMomentDeformationCoeff = 1.0 / 2.0;

struct ExpansionCheckSample {
  double xi = 0.0;
  double energy_ratio = 0.0;  // (xi csc xi - 1) / (xi^2 / 6)
  double moment_ratio = 0.0;  // (sec^2(xi/2) - 1) / (xi^2 / 4)
  bool within_bound = false;  // both ratios within xi^2/2 of 1
};

struct ExpansionCheckReport {
  std::vector<ExpansionCheckSample> samples;
  double max_energy_ratio_dev = 0.0;
  double max_moment_ratio_dev = 0.0;
  bool passed = false;
};

//! Numerically confirm the small-xi expansions
//!   xi csc xi - 1   = xi^2/6 + O(xi^4),
//!   sec^2(xi/2) - 1 = xi^2/4 + O(xi^4)
//! on the given xi values, which must lie in (0, 0.5].  Each sample must
//! have both ratios within xi^2/2 of 1 for the report to pass.
ExpansionCheckReport modified_invariant_expansion_check(
    const std::vector<double>& xi_values);

}  // namespace cpdyn

#endif
