#ifndef MOCU_DUAL_HPP
#define MOCU_DUAL_HPP

// Forward-mode dual scalar with N derivative lanes. The kinematics chain only
// needs +, -, *, sin and cos, so the surface here is deliberately small.

#include <array>
#include <cmath>

namespace mocu {

template <int N>
struct Dual {
  double a = 0.0;             // value
  std::array<double, N> d{};  // partials

  Dual() = default;
  Dual(double v) : a(v) {}

  static Dual seed(double v, int lane) {
    Dual x(v);
    x.d[lane] = 1.0;
    return x;
  }
};

template <int N>
Dual<N> operator+(const Dual<N>& x, const Dual<N>& y) {
  Dual<N> r(x.a + y.a);
  for (int i = 0; i < N; ++i) r.d[i] = x.d[i] + y.d[i];
  return r;
}

template <int N>
Dual<N> operator-(const Dual<N>& x, const Dual<N>& y) {
  Dual<N> r(x.a - y.a);
  for (int i = 0; i < N; ++i) r.d[i] = x.d[i] - y.d[i];
  return r;
}

template <int N>
Dual<N>& operator+=(Dual<N>& x, const Dual<N>& y) {
  x.a += y.a;
  for (int i = 0; i < N; ++i) x.d[i] += y.d[i];
  return x;
}

template <int N>
Dual<N> operator-(const Dual<N>& x) {
  Dual<N> r(-x.a);
  for (int i = 0; i < N; ++i) r.d[i] = -x.d[i];
  return r;
}

template <int N>
Dual<N> operator*(const Dual<N>& x, const Dual<N>& y) {
  Dual<N> r(x.a * y.a);
  for (int i = 0; i < N; ++i) r.d[i] = x.d[i] * y.a + x.a * y.d[i];
  return r;
}

template <int N>
Dual<N> operator*(const Dual<N>& x, double c) {
  Dual<N> r(x.a * c);
  for (int i = 0; i < N; ++i) r.d[i] = x.d[i] * c;
  return r;
}

template <int N>
Dual<N> operator*(double c, const Dual<N>& x) {
  return x * c;
}

template <int N>
Dual<N> operator+(const Dual<N>& x, double c) {
  Dual<N> r = x;
  r.a += c;
  return r;
}

template <int N>
Dual<N> operator+(double c, const Dual<N>& x) {
  return x + c;
}

template <int N>
Dual<N> sin(const Dual<N>& x) {
  Dual<N> r(std::sin(x.a));
  const double c = std::cos(x.a);
  for (int i = 0; i < N; ++i) r.d[i] = c * x.d[i];
  return r;
}

template <int N>
Dual<N> cos(const Dual<N>& x) {
  Dual<N> r(std::cos(x.a));
  const double s = -std::sin(x.a);
  for (int i = 0; i < N; ++i) r.d[i] = s * x.d[i];
  return r;
}

// uniform value access for code templated over double / Dual
inline double scalarValue(double x) { return x; }

template <int N>
double scalarValue(const Dual<N>& x) {
  return x.a;
}

}  // namespace mocu

#endif
