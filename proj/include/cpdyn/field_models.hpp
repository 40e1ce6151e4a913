#ifndef CPDYN_FIELD_MODELS_HPP
#define CPDYN_FIELD_MODELS_HPP

#include <cstddef>
#include <functional>
#include <optional>
#include <stdexcept>
#include <variant>
#include <vector>

#include "cpdyn/vec3.hpp"

namespace cpdyn {

//! Thrown when a field evaluation lands in the model's singular set
//! (for example the cylinder axis of the rotationally symmetric model).
class SingularRegionError : public std::runtime_error {
 public:
  SingularRegionError(const std::string& msg, const Vec3& where)
      : std::runtime_error(msg), position(where) {}

  Vec3 position;
};

//! Electromagnetic environment of a run: vector potential a with Jacobian,
//! the magnetic field b = curl a, scalar potential u with force f = -grad u,
//! and the scaling parameter eps multiplying 1/eps b in the equations of
//! motion.  Treat instances as immutable once built.
struct FieldModel {
  double eps = 1.0;

  std::function<Vec3(const Vec3&)> vector_potential;
  //! Jacobian of the vector potential, entry (i, j) = d a_i / d x_j.
  std::function<Mat3(const Vec3&)> vector_potential_jacobian;
  std::function<Vec3(const Vec3&)> magnetic_field;
  std::function<double(const Vec3&)> scalar_potential;
  std::function<Vec3(const Vec3&)> force;

  //! Skew generator S of a rotational symmetry satisfying
  //! u(exp(tau S) x) = u(x) and exp(-tau S) a(exp(tau S) x) = a(x); absent
  //! when the model has no such symmetry, in which case the momentum
  //! observable is undefined.
  std::optional<Mat3> symmetry_generator;

  //! True where the model is undefined.  Evaluators of guarded models throw
  //! SingularRegionError there; consistency checks skip such points.
  std::function<bool(const Vec3&)> singular_set_guard;

  //! Scale on the vector potential inside the momentum observable
  //! (v + scale * a(x))^T S x.  Builtins default it to 1/eps.
  double momentum_a_scale = 1.0;
};

struct ConstantFieldParams {
  Vec3 b{0.0, 0.0, 1.0};

  bool operator==(const ConstantFieldParams&) const = default;
};

//! Rotationally symmetric benchmark field: b = (0, 0, r) with
//! r = sqrt(x^2 + y^2), a = (r/3) (-y, x, 0), u = 1 / (100 r).
struct ExperimentFieldParams {
  double singular_floor = 1e-12;  // guard radius on x^2 + y^2

  bool operator==(const ExperimentFieldParams&) const = default;
};

//! Constant magnetic field b with quadratic potential
//! u = x^T Q x / 2 + q . x; Q must be symmetric.
struct QuadraticPotentialParams {
  Mat3 Q = Mat3::identity();
  Vec3 q{};
  Vec3 b{0.0, 0.0, 1.0};

  bool operator==(const QuadraticPotentialParams&) const = default;
};

struct FreeFieldParams {
  bool operator==(const FreeFieldParams&) const = default;
};

using BuiltinFieldId = std::variant<ConstantFieldParams, ExperimentFieldParams,
                                    QuadraticPotentialParams, FreeFieldParams>;

//! Build one of the builtin models.  Throws std::invalid_argument for
//! eps <= 0 or a non-symmetric Q.
FieldModel make_builtin(const BuiltinFieldId& id, double eps);

//! Replace the Jacobian with a central finite difference of the vector
//! potential (step 1e-6 * max(1, |x|) per coordinate).  Convenience for
//! user-supplied models without an analytic Jacobian.
FieldModel with_fd_jacobian(FieldModel model);

struct ConsistencyReport {
  double max_curl_deviation = 0.0;  // |curl_fd a - b| over checked points
  double max_grad_deviation = 0.0;  // |grad_fd u + f| over checked points
  std::size_t checked = 0;
  std::vector<std::size_t> skipped;  // indices inside the singular set
  double tol = 0.0;
  bool passed = false;
};

//! Check b = curl a and f = -grad u by central differences at the given
//! points.  Points whose difference stencil touches the singular set are
//! skipped and flagged.  Deviations converge as O(fd_step^2) away from
//! roundoff.
ConsistencyReport verify_consistency(const FieldModel& model,
                                     const std::vector<Vec3>& points,
                                     double fd_step, double tol);

}  // namespace cpdyn

#endif
