#include <cmath>
#include <random>
#include <vector>

#include "cpdyn/field_models.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace cpdyn;
using cpdyn::testing::max_component_diff;
using cpdyn::testing::rotation_z;
using cpdyn::testing::uniform_vec3;

namespace {

std::vector<Vec3> off_axis_points(std::size_t count, unsigned seed) {
  std::mt19937 rng(seed);
  std::vector<Vec3> pts;
  while (pts.size() < count) {
    const Vec3 p = uniform_vec3(rng, -2.0, 2.0);
    if (std::sqrt(p.x * p.x + p.y * p.y) < 0.2) continue;
    pts.push_back(p);
  }
  return pts;
}

}  // namespace

TEST_CASE("constant field: potential, jacobian and generator") {
  const Vec3 b{0.0, 0.0, 1.0};
  const FieldModel m = make_builtin(ConstantFieldParams{b}, 1.0);

  const Vec3 x{2.0, 3.0, 4.0};
  CHECK(max_component_diff(m.vector_potential(x), {-1.5, 1.0, 0.0}) == 0.0);
  CHECK(max_component_diff(m.magnetic_field(x), b) == 0.0);
  CHECK(m.scalar_potential(x) == 0.0);
  CHECK(max_component_diff(m.force(x), {0.0, 0.0, 0.0}) == 0.0);

  REQUIRE(m.symmetry_generator.has_value());
  const Vec3 sx = m.symmetry_generator->mul(x);
  CHECK(max_component_diff(sx, {3.0, -2.0, 0.0}) == 0.0);
}

TEST_CASE("builtin fields pass their own consistency check") {
  const auto pts = off_axis_points(40, 101u);

  const FieldModel exp_field = make_builtin(ExperimentFieldParams{}, 1.0);
  const auto exp_rep = verify_consistency(exp_field, pts, 1e-5, 1e-6);
  CHECK(exp_rep.passed);
  CHECK(exp_rep.checked == 40);

  const FieldModel const_field =
      make_builtin(ConstantFieldParams{{0.4, -1.1, 0.3}}, 0.5);
  CHECK(verify_consistency(const_field, pts, 1e-5, 1e-9).passed);

  QuadraticPotentialParams qp;
  qp.Q.m[0][0] = 2.0;
  qp.Q.m[1][1] = 0.5;
  qp.Q.m[0][1] = qp.Q.m[1][0] = -0.3;
  qp.q = {0.2, 0.0, -0.7};
  const FieldModel quad = make_builtin(qp, 1.0);
  CHECK(verify_consistency(quad, pts, 1e-5, 1e-8).passed);
}

TEST_CASE("consistency deviation shrinks ~4x when the stencil halves") {
  const FieldModel m = make_builtin(ExperimentFieldParams{}, 1.0);
  const std::vector<Vec3> pts = {{0.7, -0.4, 0.3}};
  const auto coarse = verify_consistency(m, pts, 2e-3, 1.0);
  const auto fine = verify_consistency(m, pts, 1e-3, 1.0);
  REQUIRE(fine.max_curl_deviation > 0.0);
  const double ratio = coarse.max_curl_deviation / fine.max_curl_deviation;
  CHECK(ratio > 3.5);
  CHECK(ratio < 4.5);
}

TEST_CASE("consistency check flags a corrupted field") {
  FieldModel m = make_builtin(ExperimentFieldParams{}, 1.0);
  const auto good_b = m.magnetic_field;
  m.magnetic_field = [good_b](const Vec3& x) { return -1.0 * good_b(x); };
  const std::vector<Vec3> pts = {{0.0, 1.0, 0.0}};
  const auto rep = verify_consistency(m, pts, 1e-5, 1e-6);
  CHECK_FALSE(rep.passed);
  CHECK(rep.max_curl_deviation == doctest::Approx(2.0).epsilon(1e-4));
}

TEST_CASE("experiment field is equivariant under its symmetry rotation") {
  const FieldModel m = make_builtin(ExperimentFieldParams{}, 1.0);
  const auto pts = off_axis_points(10, 55u);
  const double pi = 3.14159265358979323846;
  for (const double tau : {0.1, 1.0, pi}) {
    const Mat3 r = rotation_z(tau);
    const Mat3 rt = r.transpose();
    for (const Vec3& x : pts) {
      const Vec3 rx = r.mul(x);
      CHECK(std::abs(m.scalar_potential(rx) - m.scalar_potential(x)) <=
            1e-12);
      const Vec3 pulled = rt.mul(m.vector_potential(rx));
      CHECK(max_component_diff(pulled, m.vector_potential(x)) <= 1e-12);
      const Vec3 pulled_f = rt.mul(m.force(rx));
      CHECK(max_component_diff(pulled_f, m.force(x)) <= 1e-12);
      CHECK(std::abs(norm(m.magnetic_field(rx)) -
                     norm(m.magnetic_field(x))) <= 1e-12);
    }
  }
}

TEST_CASE("experiment field singular axis raises and is skipped") {
  const FieldModel m = make_builtin(ExperimentFieldParams{}, 1.0);
  REQUIRE(m.singular_set_guard);
  CHECK(m.singular_set_guard({0.0, 0.0, 0.5}));
  CHECK_FALSE(m.singular_set_guard({0.5, 0.0, 0.5}));
  CHECK_THROWS_AS((void)m.vector_potential({0.0, 0.0, 1.0}),
                  SingularRegionError);
  CHECK_THROWS_AS((void)m.scalar_potential({0.0, 0.0, -2.0}),
                  SingularRegionError);
  CHECK_THROWS_AS((void)m.force({0.0, 0.0, 0.0}), SingularRegionError);
  try {
    (void)m.magnetic_field({0.0, 0.0, 3.0});
    FAIL("expected SingularRegionError");
  } catch (const SingularRegionError& e) {
    CHECK(e.position.z == 3.0);
  }

  const std::vector<Vec3> pts = {{0.0, 0.0, 0.5}, {1.0, 0.0, 0.0}};
  const auto rep = verify_consistency(m, pts, 1e-5, 1e-6);
  CHECK(rep.checked == 1);
  CHECK(rep.skipped == std::vector<std::size_t>{0});
  CHECK(rep.passed);

  const auto none = verify_consistency(m, {{0.0, 0.0, 0.5}}, 1e-5, 1e-6);
  CHECK_FALSE(none.passed);
}

TEST_CASE("experiment momentum matches the closed form") {
  const FieldModel m = make_builtin(ExperimentFieldParams{}, 1.0);
  std::mt19937 rng(8u);
  for (int i = 0; i < 20; ++i) {
    Vec3 x = uniform_vec3(rng, -1.5, 1.5);
    if (std::sqrt(x.x * x.x + x.y * x.y) < 0.2) continue;
    const Vec3 v = uniform_vec3(rng, -0.5, 0.5);
    const double r = std::sqrt(x.x * x.x + x.y * x.y);
    const double closed =
        (v.x - (r / 3.0) * x.y) * x.y - (v.y + (r / 3.0) * x.x) * x.x;
    REQUIRE(m.symmetry_generator.has_value());
    const Vec3 p = v + m.momentum_a_scale * m.vector_potential(x);
    const double lib = dot(p, m.symmetry_generator->mul(x));
    CHECK(lib == doctest::Approx(closed).epsilon(1e-12));
  }
}

TEST_CASE("builtin construction validates its inputs") {
  CHECK_THROWS_AS((void)make_builtin(ExperimentFieldParams{}, 0.0),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)make_builtin(ConstantFieldParams{}, -1.0),
                  std::invalid_argument);

  QuadraticPotentialParams bad;
  bad.Q.m[0][1] = 0.3;
  bad.Q.m[1][0] = 0.2;
  CHECK_THROWS_AS((void)make_builtin(bad, 1.0), std::invalid_argument);
}

TEST_CASE("quadratic potential drops the rotational symmetry") {
  QuadraticPotentialParams qp;
  qp.Q.m[0][0] = 2.0;  // on top of the identity default: Q = diag(2, 1, 1)
  const FieldModel m = make_builtin(qp, 1.0);
  CHECK_FALSE(m.symmetry_generator.has_value());
  const Vec3 x{0.5, -1.0, 2.0};
  CHECK(m.scalar_potential(x) ==
        doctest::Approx(0.5 * (2.0 * 0.25 + 1.0 + 4.0)));
  CHECK(max_component_diff(m.force(x), {-1.0, 1.0, -2.0}) <= 1e-15);
}

TEST_CASE("free field has no magnetic part and no potential") {
  const FieldModel m = make_builtin(FreeFieldParams{}, 1.0);
  const Vec3 x{1.0, 2.0, 3.0};
  CHECK(norm(m.magnetic_field(x)) == 0.0);
  CHECK(norm(m.vector_potential(x)) == 0.0);
  CHECK(m.scalar_potential(x) == 0.0);
  CHECK(norm(m.force(x)) == 0.0);
}

TEST_CASE("finite-difference jacobian tracks the analytic one") {
  const FieldModel analytic = make_builtin(ExperimentFieldParams{}, 1.0);
  const FieldModel fd = with_fd_jacobian(analytic);
  for (const Vec3& x : off_axis_points(10, 3u)) {
    const Mat3 ja = analytic.vector_potential_jacobian(x);
    const Mat3 jf = fd.vector_potential_jacobian(x);
    CHECK(max_abs(ja - jf) <= 1e-8);
  }
}
