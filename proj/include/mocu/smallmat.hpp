#ifndef MOCU_SMALLMAT_HPP
#define MOCU_SMALLMAT_HPP

// Fixed-size matrix/vector helpers used by the kinematics chain. Templated on
// the scalar so the same code runs on plain doubles and on dual numbers.

#include <array>
#include <cmath>
#include <cstddef>

namespace mocu {

template <class S>
struct Mat4 {
  std::array<S, 16> v{};

  S& operator()(int r, int c) { return v[r * 4 + c]; }
  const S& operator()(int r, int c) const { return v[r * 4 + c]; }

  static Mat4 identity() {
    Mat4 m;
    for (int i = 0; i < 4; ++i) m(i, i) = S(1);
    return m;
  }
};

template <class S>
struct Mat3 {
  std::array<S, 9> v{};

  S& operator()(int r, int c) { return v[r * 3 + c]; }
  const S& operator()(int r, int c) const { return v[r * 3 + c]; }

  static Mat3 identity() {
    Mat3 m;
    for (int i = 0; i < 3; ++i) m(i, i) = S(1);
    return m;
  }
};

template <class S>
using Vec3 = std::array<S, 3>;

template <class S>
Mat4<S> operator*(const Mat4<S>& a, const Mat4<S>& b) {
  Mat4<S> c;
  for (int i = 0; i < 4; ++i)
    for (int k = 0; k < 4; ++k) {
      const S aik = a(i, k);
      for (int j = 0; j < 4; ++j) c(i, j) += aik * b(k, j);
    }
  return c;
}

template <class S>
Mat4<S> operator+(const Mat4<S>& a, const Mat4<S>& b) {
  Mat4<S> c;
  for (int i = 0; i < 16; ++i) c.v[i] = a.v[i] + b.v[i];
  return c;
}

template <class S>
Mat4<S> operator*(const Mat4<S>& a, double s) {
  Mat4<S> c;
  for (int i = 0; i < 16; ++i) c.v[i] = a.v[i] * s;
  return c;
}

template <class S>
Mat3<S> rotationOf(const Mat4<S>& T) {
  Mat3<S> r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r(i, j) = T(i, j);
  return r;
}

template <class S>
Vec3<S> translationOf(const Mat4<S>& T) {
  return {T(0, 3), T(1, 3), T(2, 3)};
}

template <class S>
Mat3<S> transpose(const Mat3<S>& a) {
  Mat3<S> t;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) t(i, j) = a(j, i);
  return t;
}

template <class S>
Mat3<S> operator*(const Mat3<S>& a, const Mat3<S>& b) {
  Mat3<S> c;
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) {
      const S aik = a(i, k);
      for (int j = 0; j < 3; ++j) c(i, j) += aik * b(k, j);
    }
  return c;
}

template <class S>
Vec3<S> operator*(const Mat3<S>& a, const Vec3<S>& x) {
  Vec3<S> y{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) y[i] = y[i] + a(i, j) * x[j];
  return y;
}

// y = A^T x without forming the transpose
template <class S>
Vec3<S> mulT(const Mat3<S>& a, const Vec3<S>& x) {
  Vec3<S> y{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) y[i] = y[i] + a(j, i) * x[j];
  return y;
}

}  // namespace mocu

#endif
