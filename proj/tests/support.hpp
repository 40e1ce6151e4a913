#ifndef CPDYN_TESTS_SUPPORT_HPP
#define CPDYN_TESTS_SUPPORT_HPP

#include <array>
#include <cmath>
#include <functional>
#include <random>

#include "cpdyn/vec3.hpp"

namespace cpdyn::testing {

inline Vec3 uniform_vec3(std::mt19937& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  return {u(rng), u(rng), u(rng)};
}

inline double max_component_diff(const Vec3& a, const Vec3& b) {
  return std::max({std::abs(a.x - b.x), std::abs(a.y - b.y),
                   std::abs(a.z - b.z)});
}

//! Rotation by tau about the x3 axis, matching the experiment field's
//! symmetry direction: R x rotates (x1, x2) and fixes x3.
inline Mat3 rotation_z(double tau) {
  Mat3 r = Mat3::identity();
  r.m[0][0] = std::cos(tau);
  r.m[0][1] = std::sin(tau);
  r.m[1][0] = -std::sin(tau);
  r.m[1][1] = std::cos(tau);
  return r;
}

using Vec6 = std::array<double, 6>;
using Mat6 = std::array<std::array<double, 6>, 6>;

//! Determinant of a 6x6 matrix by LU factorization with partial pivoting.
inline double det6(Mat6 a) {
  double det = 1.0;
  for (int col = 0; col < 6; ++col) {
    int pivot = col;
    for (int row = col + 1; row < 6; ++row)
      if (std::abs(a[row][col]) > std::abs(a[pivot][col])) pivot = row;
    if (a[pivot][col] == 0.0) return 0.0;
    if (pivot != col) {
      std::swap(a[pivot], a[col]);
      det = -det;
    }
    det *= a[col][col];
    for (int row = col + 1; row < 6; ++row) {
      const double factor = a[row][col] / a[col][col];
      for (int k = col; k < 6; ++k) a[row][k] -= factor * a[col][k];
    }
  }
  return det;
}

//! Central-difference Jacobian of a phase-space map R^6 -> R^6.
inline Mat6 fd_jacobian6(const std::function<Vec6(const Vec6&)>& fn,
                         const Vec6& at, double delta) {
  Mat6 j{};
  for (int col = 0; col < 6; ++col) {
    Vec6 plus = at, minus = at;
    plus[col] += delta;
    minus[col] -= delta;
    const Vec6 fp = fn(plus), fm = fn(minus);
    for (int row = 0; row < 6; ++row)
      j[row][col] = (fp[row] - fm[row]) / (2.0 * delta);
  }
  return j;
}

inline Vec6 pack(const Vec3& a, const Vec3& b) {
  return {a.x, a.y, a.z, b.x, b.y, b.z};
}

inline Vec3 unpack_lo(const Vec6& v) { return {v[0], v[1], v[2]}; }
inline Vec3 unpack_hi(const Vec6& v) { return {v[3], v[4], v[5]}; }

}  // namespace cpdyn::testing

#endif
