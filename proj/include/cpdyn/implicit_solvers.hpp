#ifndef CPDYN_IMPLICIT_SOLVERS_HPP
#define CPDYN_IMPLICIT_SOLVERS_HPP

#include <stdexcept>
#include <string>
#include <utility>

#include "cpdyn/vec3.hpp"

namespace cpdyn {

struct SolverSettings {
  double tol = 1e-13;    // absolute residual tolerance on |z - map(z)|
  int max_iter = 100;    // map evaluations before giving up
  double damping = 1.0;  // z <- (1-d) z + d map(z); 1 is plain iteration

  bool operator==(const SolverSettings&) const = default;
};

struct SolveReport {
  int iterations = 0;
  double final_residual = 0.0;
  bool converged = false;
};

//! Thrown when a fixed-point iteration exhausts max_iter or produces a
//! non-finite iterate.  Carries the last iterate so callers can report
//! where the solve got stuck; the harness fills in step_index.
class NonConvergenceError : public std::runtime_error {
 public:
  NonConvergenceError(const std::string& msg, const Vec3& last, double res,
                      int iters)
      : std::runtime_error(msg),
        last_iterate(last),
        residual(res),
        iterations(iters) {}

  Vec3 last_iterate;
  double residual;
  int iterations;
  long step_index = -1;
};

//! Solve v + t x v = r exactly.  The matrix I + [t]x has determinant
//! 1 + |t|^2 > 0, so the solution always exists and is unique:
//!   v = (r - t x r + (t . r) t) / (1 + |t|^2).
inline Vec3 solve_cross_linear(const Vec3& t, const Vec3& r) {
  const Vec3 num = r - cross(t, r) + dot(t, r) * t;
  return num / (1.0 + norm2(t));
}

//! Damped fixed-point iteration z <- (1-d) z + d map(z).
//!
//! Convergence is declared at the first iterate z_k whose residual
//! |z_k - map(z_k)| is at or below settings.tol.  The returned point is
//! then polished by two further map applications: for a contraction with
//! factor L each application shrinks the remaining error by L, so the
//! returned point sits within about L^2 tol of the true fixed point.
//! Without the polish the stopping bias of roughly tol per step is
//! systematic and accumulates linearly over long runs.  The reported
//! residual is the last one measured and still satisfies the bound.
//!
//! Throws NonConvergenceError when max_iter is exhausted or an iterate
//! stops being finite.
template <class MapFn>
std::pair<Vec3, SolveReport> solve_fixed_point(MapFn&& map, const Vec3& guess,
                                               const SolverSettings& settings) {
  if (!(settings.tol > 0.0))
    throw std::invalid_argument("solve_fixed_point: tol must be positive");
  if (settings.max_iter < 1)
    throw std::invalid_argument("solve_fixed_point: max_iter must be >= 1");
  if (!(settings.damping > 0.0) || settings.damping > 1.0)
    throw std::invalid_argument("solve_fixed_point: damping must be in (0, 1]");

  Vec3 z = guess;
  double residual = 0.0;
  for (int k = 1; k <= settings.max_iter; ++k) {
    const Vec3 image = map(z);
    if (!is_finite(image))
      throw NonConvergenceError("solve_fixed_point: iterate diverged", z,
                                residual, k);
    residual = norm(image - z);
    Vec3 next = (1.0 - settings.damping) * z + settings.damping * image;
    if (residual <= settings.tol) {
      int evals = k;
      for (int polish = 0; polish < 2; ++polish) {
        const Vec3 refined = map(next);
        ++evals;
        if (!is_finite(refined))
          throw NonConvergenceError("solve_fixed_point: iterate diverged",
                                    next, residual, evals);
        const double r = norm(refined - next);
        if (r >= residual) break;
        residual = r;
        next = refined;
      }
      return {next, SolveReport{evals, residual, true}};
    }
    z = next;
  }
  throw NonConvergenceError(
      "solve_fixed_point: no convergence within max_iter (residual " +
          std::to_string(residual) + ")",
      z, residual, settings.max_iter);
}

}  // namespace cpdyn

#endif
