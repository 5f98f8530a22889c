#pragma once

#include <array>

namespace motionseg::detail {

// Closed-form 3x3 algebra over an arbitrary scalar (double or Dual).
template <typename T>
struct Mat3 {
  std::array<std::array<T, 3>, 3> a{};

  T& operator()(int r, int c) { return a[r][c]; }
  const T& operator()(int r, int c) const { return a[r][c]; }
};

template <typename T>
using Vec3 = std::array<T, 3>;

template <typename T>
Mat3<T> operator+(const Mat3<T>& x, const Mat3<T>& y) {
  Mat3<T> r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r(i, j) = x(i, j) + y(i, j);
  return r;
}

template <typename T>
Mat3<T> operator-(const Mat3<T>& x, const Mat3<T>& y) {
  Mat3<T> r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r(i, j) = x(i, j) - y(i, j);
  return r;
}

template <typename T>
Mat3<T> operator*(const Mat3<T>& x, const Mat3<T>& y) {
  Mat3<T> r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      T s = x(i, 0) * y(0, j);
      s += x(i, 1) * y(1, j);
      s += x(i, 2) * y(2, j);
      r(i, j) = s;
    }
  return r;
}

template <typename T>
T det(const Mat3<T>& m) {
  return m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) -
         m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0)) +
         m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
}

// Adjugate over determinant; the caller checks the determinant first.
template <typename T>
Mat3<T> inverse(const Mat3<T>& m, const T& determinant) {
  Mat3<T> r;
  r(0, 0) = (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) / determinant;
  r(0, 1) = (m(0, 2) * m(2, 1) - m(0, 1) * m(2, 2)) / determinant;
  r(0, 2) = (m(0, 1) * m(1, 2) - m(0, 2) * m(1, 1)) / determinant;
  r(1, 0) = (m(1, 2) * m(2, 0) - m(1, 0) * m(2, 2)) / determinant;
  r(1, 1) = (m(0, 0) * m(2, 2) - m(0, 2) * m(2, 0)) / determinant;
  r(1, 2) = (m(0, 2) * m(1, 0) - m(0, 0) * m(1, 2)) / determinant;
  r(2, 0) = (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0)) / determinant;
  r(2, 1) = (m(0, 1) * m(2, 0) - m(0, 0) * m(2, 1)) / determinant;
  r(2, 2) = (m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0)) / determinant;
  return r;
}

// a^T M b
template <typename T>
T bilinear(const Vec3<T>& a, const Mat3<T>& m, const Vec3<T>& b) {
  T s(0.0);
  for (int i = 0; i < 3; ++i) {
    T row = m(i, 0) * b[0];
    row += m(i, 1) * b[1];
    row += m(i, 2) * b[2];
    s += a[i] * row;
  }
  return s;
}

}  // namespace motionseg::detail
