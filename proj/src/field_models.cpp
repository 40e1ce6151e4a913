#include "cpdyn/field_models.hpp"

#include <cmath>
#include <utility>

namespace cpdyn {

namespace {

FieldModel make_constant_field(const ConstantFieldParams& p, double eps) {
  const Vec3 b = p.b;
  FieldModel m;
  m.eps = eps;
  m.momentum_a_scale = 1.0 / eps;
  // a = -x x b / 2 satisfies curl a = b for constant b.
  m.vector_potential = [b](const Vec3& x) { return -0.5 * cross(x, b); };
  m.vector_potential_jacobian = [j = 0.5 * Mat3::cross_matrix(b)](const Vec3&) {
    return j;
  };
  m.magnetic_field = [b](const Vec3&) { return b; };
  m.scalar_potential = [](const Vec3&) { return 0.0; };
  m.force = [](const Vec3&) { return Vec3{}; };
  const double nb = norm(b);
  if (nb > 0.0) {
    // Rotations about the field axis leave the model invariant.  The
    // generator is S x = x cross (b/|b|), which reduces to
    // S x = (y, -x, 0) for b along the z axis.
    m.symmetry_generator = Mat3::cross_matrix(-(1.0 / nb) * b);
  }
  return m;
}

FieldModel make_experiment_field(const ExperimentFieldParams& p, double eps) {
  if (!(p.singular_floor > 0.0))
    throw std::invalid_argument(
        "make_builtin: singular_floor must be positive");
  const double floor2 = p.singular_floor;
  FieldModel m;
  m.eps = eps;
  m.momentum_a_scale = 1.0 / eps;
  m.singular_set_guard = [floor2](const Vec3& x) {
    return x.x * x.x + x.y * x.y < floor2;
  };
  auto guarded_r = [floor2](const Vec3& x) {
    const double r2 = x.x * x.x + x.y * x.y;
    if (r2 < floor2)
      throw SingularRegionError(
          "experiment field evaluated on its singular axis", x);
    return std::sqrt(r2);
  };
  m.vector_potential = [guarded_r](const Vec3& x) {
    const double r = guarded_r(x);
    return Vec3{-r * x.y / 3.0, r * x.x / 3.0, 0.0};
  };
  m.vector_potential_jacobian = [guarded_r](const Vec3& x) {
    const double r = guarded_r(x);
    Mat3 j;
    j.m[0][0] = -x.x * x.y / (3.0 * r);
    j.m[0][1] = -(r + x.y * x.y / r) / 3.0;
    j.m[1][0] = (r + x.x * x.x / r) / 3.0;
    j.m[1][1] = x.x * x.y / (3.0 * r);
    return j;
  };
  m.magnetic_field = [guarded_r](const Vec3& x) {
    return Vec3{0.0, 0.0, guarded_r(x)};
  };
  m.scalar_potential = [guarded_r](const Vec3& x) {
    return 0.01 / guarded_r(x);
  };
  m.force = [guarded_r](const Vec3& x) {
    const double r = guarded_r(x);
    const double s = 0.01 / (r * r * r);
    return Vec3{s * x.x, s * x.y, 0.0};
  };
  Mat3 s;  // generator of rotation about the z axis, S x = (y, -x, 0)
  s.m[0][1] = 1.0;
  s.m[1][0] = -1.0;
  m.symmetry_generator = s;
  return m;
}

FieldModel make_quadratic_field(const QuadraticPotentialParams& p,
                                double eps) {
  for (int i = 0; i < 3; ++i)
    for (int j = i + 1; j < 3; ++j)
      if (p.Q.m[i][j] != p.Q.m[j][i])
        throw std::invalid_argument("make_builtin: Q must be symmetric");
  FieldModel m = make_constant_field(ConstantFieldParams{p.b}, eps);
  const Mat3 Q = p.Q;
  const Vec3 q = p.q;
  m.scalar_potential = [Q, q](const Vec3& x) {
    return 0.5 * dot(x, Q * x) + dot(q, x);
  };
  m.force = [Q, q](const Vec3& x) { return -(Q * x) - q; };
  // A generic quadratic potential breaks the rotational symmetry of the
  // constant-field part, so no generator is advertised.
  m.symmetry_generator.reset();
  return m;
}

FieldModel make_free_field(double eps) {
  FieldModel m;
  m.eps = eps;
  m.momentum_a_scale = 1.0 / eps;
  m.vector_potential = [](const Vec3&) { return Vec3{}; };
  m.vector_potential_jacobian = [](const Vec3&) { return Mat3{}; };
  m.magnetic_field = [](const Vec3&) { return Vec3{}; };
  m.scalar_potential = [](const Vec3&) { return 0.0; };
  m.force = [](const Vec3&) { return Vec3{}; };
  return m;
}

}  // namespace

FieldModel make_builtin(const BuiltinFieldId& id, double eps) {
  if (!(eps > 0.0))
    throw std::invalid_argument("make_builtin: eps must be positive");
  return std::visit(
      [eps](const auto& p) -> FieldModel {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, ConstantFieldParams>)
          return make_constant_field(p, eps);
        else if constexpr (std::is_same_v<T, ExperimentFieldParams>)
          return make_experiment_field(p, eps);
        else if constexpr (std::is_same_v<T, QuadraticPotentialParams>)
          return make_quadratic_field(p, eps);
        else
          return make_free_field(eps);
      },
      id);
}

FieldModel with_fd_jacobian(FieldModel model) {
  auto a = model.vector_potential;
  model.vector_potential_jacobian = [a](const Vec3& x) {
    const double step = 1e-6 * std::max(1.0, norm(x));
    Mat3 j;
    for (int c = 0; c < 3; ++c) {
      Vec3 dl = x, dr = x;
      (c == 0 ? dl.x : c == 1 ? dl.y : dl.z) -= step;
      (c == 0 ? dr.x : c == 1 ? dr.y : dr.z) += step;
      const Vec3 col = (a(dr) - a(dl)) / (2.0 * step);
      j.m[0][c] = col.x;
      j.m[1][c] = col.y;
      j.m[2][c] = col.z;
    }
    return j;
  };
  return model;
}

namespace {

Vec3 shifted(const Vec3& x, int coord, double delta) {
  Vec3 r = x;
  (coord == 0 ? r.x : coord == 1 ? r.y : r.z) += delta;
  return r;
}

}  // namespace

ConsistencyReport verify_consistency(const FieldModel& model,
                                     const std::vector<Vec3>& points,
                                     double fd_step, double tol) {
  if (!(fd_step > 0.0))
    throw std::invalid_argument("verify_consistency: fd_step must be positive");
  if (!(tol > 0.0))
    throw std::invalid_argument("verify_consistency: tol must be positive");

  ConsistencyReport rep;
  rep.tol = tol;
  auto guarded = [&](const Vec3& x) {
    return model.singular_set_guard && model.singular_set_guard(x);
  };

  for (std::size_t i = 0; i < points.size(); ++i) {
    const Vec3& p = points[i];
    bool skip = guarded(p);
    for (int c = 0; c < 3 && !skip; ++c)
      skip = guarded(shifted(p, c, fd_step)) || guarded(shifted(p, c, -fd_step));
    if (skip) {
      rep.skipped.push_back(i);
      continue;
    }

    Mat3 ja;  // finite-difference Jacobian of the vector potential
    Vec3 grad_u;
    for (int c = 0; c < 3; ++c) {
      const Vec3 xp = shifted(p, c, fd_step);
      const Vec3 xm = shifted(p, c, -fd_step);
      const Vec3 da = (model.vector_potential(xp) - model.vector_potential(xm)) /
                      (2.0 * fd_step);
      ja.m[0][c] = da.x;
      ja.m[1][c] = da.y;
      ja.m[2][c] = da.z;
      const double du = (model.scalar_potential(xp) -
                         model.scalar_potential(xm)) /
                        (2.0 * fd_step);
      (c == 0 ? grad_u.x : c == 1 ? grad_u.y : grad_u.z) = du;
    }
    const Vec3 curl{ja.m[2][1] - ja.m[1][2], ja.m[0][2] - ja.m[2][0],
                    ja.m[1][0] - ja.m[0][1]};
    rep.max_curl_deviation = std::max(
        rep.max_curl_deviation, norm(curl - model.magnetic_field(p)));
    rep.max_grad_deviation =
        std::max(rep.max_grad_deviation, norm(grad_u + model.force(p)));
    ++rep.checked;
  }

  rep.passed = rep.checked > 0 && rep.max_curl_deviation <= tol &&
               rep.max_grad_deviation <= tol;
  return rep;
}

}  // namespace cpdyn
