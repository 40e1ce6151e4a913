#include <cmath>
#include <numbers>

#include "cpdyn/field_models.hpp"
#include "cpdyn/integrators.hpp"
#include "cpdyn/observables.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace cpdyn;
using cpdyn::testing::rotation_z;

TEST_CASE("midpoint of two states averages position, velocity and time") {
  const ParticleState a{0.0, {0.0, 0.0, 0.0}, {1.0, 0.0, 0.0}};
  const ParticleState b{0.1, {1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}};
  const MidpointState ms = midpoint_state(a, b);
  CHECK(ms.x_mid == Vec3{0.5, 0.0, 0.0});
  CHECK(ms.v_mid == Vec3{0.5, 0.5, 0.0});
  CHECK(ms.t_mid == doctest::Approx(0.05));

  const MidpointState same = midpoint_state(a, a);
  CHECK(same.x_mid == a.x);
  CHECK(same.v_mid == a.v);
  CHECK(same.t_mid == a.t);
}

TEST_CASE("symmetric two-step midpoint velocity equals the difference "
          "quotient") {
  const FieldModel m = make_builtin(ExperimentFieldParams{}, 1.0);
  SolverSettings st;
  st.tol = 1e-13;
  const ParticleState s0{0.0, {0.0, 1.0, 0.1}, {0.09, 0.05, 0.20}};
  const double h = 0.1;
  TwoStepState ts = make_starter(s0, h, m, StarterStrategy::Tsm1Start, st);
  for (int k = 0; k < 5; ++k) {
    const TwoStepState next = tsm2_step(ts, h, m, st).state;
    const Vec3 v_mid = 0.5 * (ts.v_curr + next.v_curr);
    const Vec3 quotient = (next.x_curr - ts.x_curr) / h;
    CHECK(norm(v_mid - quotient) <= 1e-14);
    ts = next;
  }
}

TEST_CASE("conserved quantities at the benchmark initial data") {
  const FieldModel m = make_builtin(ExperimentFieldParams{}, 1.0);
  MidpointState ms;
  ms.x_mid = Vec3{0.0, 1.0, 0.1};
  ms.v_mid = Vec3{0.09, 0.05, 0.20};
  const ObservableSample s = compute_sample(ms, m, 0.1);

  CHECK(s.E == doctest::Approx(0.0353).epsilon(1e-13));
  REQUIRE(s.M.has_value());
  CHECK(*s.M == doctest::Approx(0.09 - 1.0 / 3.0).epsilon(1e-13));
  REQUIRE(s.I.has_value());
  CHECK(*s.I == doctest::Approx(0.0053).epsilon(1e-13));
  REQUIRE(s.xi.has_value());
  CHECK(*s.xi == doctest::Approx(2.0 * std::atan(0.05)).epsilon(1e-14));
  REQUIRE(s.H_h.has_value());
  REQUIRE(s.I_h.has_value());
  CHECK(*s.I_h == doctest::Approx(1.0025 * 0.0053).epsilon(1e-13));
}

TEST_CASE("coarse-resolution sample matches the tangent-half-angle "
          "identities") {
  const FieldModel m =
      make_builtin(ConstantFieldParams{{0.0, 0.0, 1.0}}, 0.01);
  MidpointState ms;
  ms.x_mid = Vec3{0.3, -0.2, 0.5};
  ms.v_mid = Vec3{1.0, 0.2, -0.4};
  const ObservableSample s = compute_sample(ms, m, 0.01);

  // h |b| / (2 eps) = 1/2, so xi = 2 arctan(1/2) and sin(xi) = 4/5.
  REQUIRE(s.xi.has_value());
  CHECK(*s.xi == doctest::Approx(2.0 * std::atan(0.5)).epsilon(1e-15));
  REQUIRE(s.I.has_value());
  REQUIRE(s.H_h.has_value());
  REQUIRE(s.I_h.has_value());
  const double factor = 2.0 * std::atan(0.5) / 0.8 - 1.0;
  CHECK(*s.H_h - s.E == doctest::Approx(factor * *s.I).epsilon(1e-13));
  CHECK(*s.I_h == doctest::Approx(1.25 * *s.I).epsilon(1e-15));
}

TEST_CASE("deformed moment to moment ratio is the algebraic resolution "
          "factor") {
  const FieldModel m = make_builtin(ExperimentFieldParams{}, 1.0);
  MidpointState ms;
  ms.x_mid = Vec3{0.4, 0.9, -0.3};
  ms.v_mid = Vec3{0.2, -0.1, 0.5};
  const double nb = norm(m.magnetic_field(ms.x_mid));
  for (const double h : {0.7, 0.1, 0.003}) {
    const ObservableSample s = compute_sample(ms, m, h);
    REQUIRE(s.I.has_value());
    REQUIRE(s.I_h.has_value());
    const double q = 0.5 * h * nb / m.eps;
    CHECK(*s.I_h / *s.I ==
          doctest::Approx(1.0 + q * q).epsilon(1e-15));
  }
}

TEST_CASE("velocity parallel to the field carries no gyration") {
  const FieldModel m =
      make_builtin(ConstantFieldParams{{0.0, 0.0, 2.0}}, 1.0);
  MidpointState ms;
  ms.x_mid = Vec3{1.0, 2.0, 3.0};
  ms.v_mid = Vec3{0.0, 0.0, 3.0};
  const ObservableSample s = compute_sample(ms, m, 0.1);
  REQUIRE(s.I.has_value());
  CHECK(*s.I == 0.0);
  CHECK(*s.I_h == 0.0);
  CHECK(*s.H_h == s.E);
}

TEST_CASE("field-free sample defines only the energy") {
  const FieldModel m = make_builtin(FreeFieldParams{}, 1.0);
  MidpointState ms;
  ms.x_mid = Vec3{1.0, -2.0, 0.5};
  ms.v_mid = Vec3{0.3, 0.4, 0.0};
  const ObservableSample s = compute_sample(ms, m, 0.1);
  CHECK(s.E == doctest::Approx(0.125).epsilon(1e-15));
  CHECK_FALSE(s.M.has_value());
  CHECK_FALSE(s.I.has_value());
  CHECK_FALSE(s.xi.has_value());
  CHECK_FALSE(s.H_h.has_value());
  CHECK_FALSE(s.I_h.has_value());
}

TEST_CASE("the symmetry rotation leaves the conserved quantities "
          "unchanged") {
  const FieldModel m = make_builtin(ExperimentFieldParams{}, 1.0);
  MidpointState ms;
  ms.x_mid = Vec3{0.0, 1.0, 0.1};
  ms.v_mid = Vec3{0.09, 0.05, 0.20};
  const ObservableSample base = compute_sample(ms, m, 0.1);
  REQUIRE(base.M.has_value());
  REQUIRE(base.I.has_value());
  for (const double tau : {0.1, 1.0, std::numbers::pi}) {
    const Mat3 r = rotation_z(tau);
    MidpointState turned;
    turned.x_mid = r * ms.x_mid;
    turned.v_mid = r * ms.v_mid;
    const ObservableSample s = compute_sample(turned, m, 0.1);
    CHECK(s.E == doctest::Approx(base.E).epsilon(1e-12));
    CHECK(*s.M == doctest::Approx(*base.M).epsilon(1e-12));
    CHECK(*s.I == doctest::Approx(*base.I).epsilon(1e-12));
  }
}

TEST_CASE("gyrophase rate satisfies its defining tangent relation") {
  const FieldModel m = make_builtin(ExperimentFieldParams{}, 0.5);
  const Vec3 x{0.3, 1.2, -0.4};
  const double nb = norm(m.magnetic_field(x));
  for (const double h : {0.5, 0.05, 0.001}) {
    const double rate = gyrophase_rate(x, m, h);
    const double eta = h / m.eps;
    CHECK(std::tan(0.5 * eta * rate) ==
          doctest::Approx(0.5 * eta * nb).epsilon(1e-12));
  }
  CHECK(gyrophase_rate(x, m, 1e-9) == doctest::Approx(nb).epsilon(1e-12));
  CHECK_THROWS_AS((void)gyrophase_rate(x, m, 0.0), std::invalid_argument);
}

TEST_CASE("modified invariants collapse onto the plain ones "
          "quadratically in h") {
  const FieldModel m = make_builtin(ExperimentFieldParams{}, 1.0);
  MidpointState ms;
  ms.x_mid = Vec3{0.0, 1.0, 0.1};
  ms.v_mid = Vec3{0.09, 0.05, 0.20};
  double prev_h = 0.0, prev_i = 0.0;
  for (const double h : {1e-1, 1e-2, 1e-3, 1e-4}) {
    const ObservableSample s = compute_sample(ms, m, h);
    const double dev_h = *s.H_h - s.E;
    const double dev_i = *s.I_h - *s.I;
    CHECK(dev_h > 0.0);
    CHECK(dev_i > 0.0);
    if (prev_h > 0.0) {
      CHECK(prev_h / dev_h == doctest::Approx(100.0).epsilon(0.05));
      CHECK(prev_i / dev_i == doctest::Approx(100.0).epsilon(0.05));
    }
    prev_h = dev_h;
    prev_i = dev_i;
  }
}

TEST_CASE("gyration angle stays inside the open half-turn interval") {
  const FieldModel m = make_builtin(ExperimentFieldParams{}, 1.0);
  MidpointState ms;
  ms.x_mid = Vec3{0.0, 1.0, 0.1};
  ms.v_mid = Vec3{0.09, 0.05, 0.20};
  for (const double h : {1e-6, 0.1, 10.0, 1e6}) {
    const ObservableSample s = compute_sample(ms, m, h);
    REQUIRE(s.xi.has_value());
    CHECK(*s.xi > 0.0);
    CHECK(*s.xi < std::numbers::pi);
  }
}

TEST_CASE("small-angle expansion check accepts the deformation "
          "coefficients") {
  const ExpansionCheckReport rep =
      modified_invariant_expansion_check({0.5, 0.25, 0.1, 0.01});
  CHECK(rep.passed);
  REQUIRE(rep.samples.size() == 4);
  for (const auto& s : rep.samples) CHECK(s.within_bound);

  const ExpansionCheckReport fine = modified_invariant_expansion_check({1e-2});
  CHECK(std::abs(fine.samples[0].energy_ratio - 1.0) <= 1e-4);
  CHECK(std::abs(fine.samples[0].moment_ratio - 1.0) <= 1e-4);

  CHECK_THROWS_AS((void)modified_invariant_expansion_check({0.0}),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)modified_invariant_expansion_check({-0.1}),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)modified_invariant_expansion_check({0.6}),
                  std::invalid_argument);
  CHECK_FALSE(modified_invariant_expansion_check({}).passed);
}

TEST_CASE("grid-point deformation coefficients sit above the midpoint "
          "ones by fixed factors") {
  CHECK(kEnergyDeformationCoeff == 1.0 / 6.0);
  CHECK(kMomentDeformationCoeff == 0.25);
  CHECK(kVarmEnergyDeformationCoeff == 5.0 / 12.0);
  CHECK(kVarmMomentDeformationCoeff == 0.5);
  CHECK(kVarmEnergyDeformationCoeff / kEnergyDeformationCoeff ==
        doctest::Approx(2.5).epsilon(1e-15));
  CHECK(kVarmMomentDeformationCoeff / kMomentDeformationCoeff == 2.0);
}
