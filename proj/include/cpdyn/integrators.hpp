#ifndef CPDYN_INTEGRATORS_HPP
#define CPDYN_INTEGRATORS_HPP

#include <string>
#include <utility>

#include "cpdyn/field_models.hpp"
#include "cpdyn/implicit_solvers.hpp"
#include "cpdyn/vec3.hpp"

namespace cpdyn {

struct ParticleState {
  double t = 0.0;
  Vec3 x;
  Vec3 v;
};

//! Window of a position two-step recursion.  For the midpoint-based schemes
//! v_curr is the velocity at x_curr; the grid-point schemes (boris_step,
//! varm_step) can only form the central difference one index behind, so
//! there v_curr is the velocity belonging to x_prev.
struct TwoStepState {
  Vec3 x_prev;
  Vec3 x_curr;
  Vec3 v_curr;
  double t_curr = 0.0;
};

//! Point of the canonical one-step form of the variational scheme,
//! with conjugate momentum p = v + a(x)/eps up to O(h^2).
struct PhasePoint {
  Vec3 x;
  Vec3 p;
};

enum class MethodId { Tsm1, Tsm1Avf, Tsm2, Boris, Varm, Rk4Ref };

MethodId method_from_string(const std::string& name);
std::string to_string(MethodId id);

enum class StarterStrategy { Tsm1Start, ReferenceStart };

StarterStrategy starter_from_string(const std::string& name);
std::string to_string(StarterStrategy s);

struct StepResult {
  ParticleState state;
  SolveReport report;
};

struct TwoStepResult {
  TwoStepState state;
  SolveReport report;
};

//! One step of the symmetric midpoint scheme: with x_mid and v_mid the
//! arithmetic means of consecutive positions and velocities,
//!   x_{n+1} = x_n + h v_mid,
//!   v_{n+1} = v_n + h v_mid x b(x_mid)/eps + h f(x_mid).
//! The midpoint position is found by fixed-point iteration; for given
//! x_mid the velocity update is the exactly solvable cross-linear system.
//! h may be negative (used by the time-symmetry checks) but not zero.
StepResult tsm1_step(const ParticleState& s, double h, const FieldModel& model,
                     const SolverSettings& settings);

//! Midpoint scheme with the pointwise force replaced by its average along
//! the chord from x_n to x_{n+1} (Gauss-Legendre quadrature of the given
//! order).  Coincides with tsm1_step when the scalar potential is
//! quadratic, and conserves the energy exactly for any potential.
StepResult tsm1_avf_step(const ParticleState& s, double h,
                         const FieldModel& model,
                         const SolverSettings& settings, int quad_order = 5);

//! One step of the variational two-step scheme
//!   x_{n+1} - 2 x_n + x_{n-1} =
//!       h/(2 eps) Ja^T(x_{n+1/2}) (x_{n+1} - x_n)
//!     + h/(2 eps) Ja^T(x_{n-1/2}) (x_n - x_{n-1})
//!     - h/eps (a(x_{n+1/2}) - a(x_{n-1/2}))
//!     + h^2/2 (f(x_{n+1/2}) + f(x_{n-1/2})),
//! with Ja the Jacobian of a, solved for x_{n+1} by fixed-point iteration
//! from the guess 2 x_n - x_{n-1}.  Velocities follow from
//! (v_n + v_{n+1})/2 = (x_{n+1} - x_n)/h.
TwoStepResult tsm2_step(const TwoStepState& ts, double h,
                        const FieldModel& model,
                        const SolverSettings& settings);

//! Canonical (x, p) form of the variational scheme, obtained from the
//! discrete Legendre transforms of its generating step functional.  The
//! induced one-step map is exactly symplectic; consecutive steps reproduce
//! the two-step recursion of tsm2_step.
std::pair<PhasePoint, SolveReport> tsm2_canonical_step(
    const PhasePoint& s, double h, const FieldModel& model,
    const SolverSettings& settings);

//! Momentum closing the interval (x_prev, x_curr) of the variational
//! scheme, i.e. the value p_curr such that tsm2_canonical_step from
//! (x_curr, p_curr) continues the trajectory.
Vec3 tsm2_interval_momentum(const Vec3& x_prev, const Vec3& x_curr, double h,
                            const FieldModel& model);

//! Classical grid-point scheme
//!   x_{n+1} - 2 x_n + x_{n-1} =
//!       h/2 (x_{n+1} - x_{n-1}) x b(x_n)/eps + h^2 f(x_n),
//! solved exactly through the cross-linear solve.  The returned v_curr is
//! the central difference (x_{n+1} - x_{n-1})/(2h), the velocity at the
//! PREVIOUS grid point (x_prev of the returned state).
TwoStepState boris_step(const TwoStepState& ts, double h,
                        const FieldModel& model);

//! Variational grid-point scheme, the discrete Euler-Lagrange recursion of
//! the trapezoidal discrete Lagrangian
//!   L_d(x_n, x_{n+1}) = |d|^2/(2h) + (a(x_n) + a(x_{n+1}))^T d/(2 eps)
//!                       - h (u(x_n) + u(x_{n+1}))/2,   d = x_{n+1} - x_n:
//!   x_{n+1} - 2 x_n + x_{n-1} =
//!       h/(2 eps) Ja^T(x_n) (x_{n+1} - x_{n-1})
//!     - h/(2 eps) (a(x_{n+1}) - a(x_{n-1})) + h^2 f(x_n),
//! solved by fixed-point iteration.  For constant b the magnetic terms
//! collapse to h/(2 eps) (x_{n+1} - x_{n-1}) x b and the recursion is the
//! boris_step one.  Velocity convention as boris_step.
TwoStepResult varm_step(const TwoStepState& ts, double h,
                        const FieldModel& model,
                        const SolverSettings& settings);

//! Classical fourth-order Runge-Kutta reference integration of
//! (x', v') = (v, v x b(x)/eps + f(x)) from s0.t to t_end with steps of
//! size at most h_ref (the span divides evenly).
ParticleState reference_solve(const ParticleState& s0, double h_ref,
                              double t_end, const FieldModel& model);

//! Produce the second point needed by the two-step schemes: either one
//! step of tsm1_step, or a reference solve with step h/100.  Both leave
//! the second-order accuracy of the two-step schemes intact.
TwoStepState make_starter(const ParticleState& s0, double h,
                          const FieldModel& model, StarterStrategy strategy,
                          const SolverSettings& settings);

struct QuadNode {
  double node;    // in [0, 1]
  double weight;  // weights sum to 1
};

//! Gauss-Legendre nodes and weights on [0, 1], exact for polynomials of
//! degree 2n - 1.  Order must be in [2, 32].
std::vector<QuadNode> gauss_legendre_01(int order);

}  // namespace cpdyn

#endif
