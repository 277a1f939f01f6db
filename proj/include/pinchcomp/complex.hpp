// Copyright 2026 The pinchcomp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Complex numbers over any real scalar, including ad::Var (std::complex is
// only specified for the built-in floating types).

#include <cmath>
#include <complex>
#include <vector>

#include "pinchcomp/autodiff.hpp"

namespace pinchcomp {

template <class T>
struct Cplx {
  T re{};
  T im{};

  Cplx() = default;
  Cplx(T r, T i) : re(r), im(i) {}

  template <class U>
  static Cplx from(const Cplx<U>& z) {
    return Cplx(T(z.re), T(z.im));
  }
  static Cplx from(std::complex<double> z) { return Cplx(T(z.real()), T(z.imag())); }
  static Cplx polar(T magnitude, T phase) {
    using std::cos;
    using std::sin;
    return Cplx(magnitude * cos(phase), magnitude * sin(phase));
  }
};

template <class T>
Cplx<T> operator+(const Cplx<T>& a, const Cplx<T>& b) {
  return {a.re + b.re, a.im + b.im};
}
template <class T>
Cplx<T> operator-(const Cplx<T>& a, const Cplx<T>& b) {
  return {a.re - b.re, a.im - b.im};
}
template <class T>
Cplx<T> operator*(const Cplx<T>& a, const Cplx<T>& b) {
  return {a.re * b.re - a.im * b.im, a.re * b.im + a.im * b.re};
}
template <class T>
Cplx<T> operator*(const T& s, const Cplx<T>& a) {
  return {s * a.re, s * a.im};
}
template <class T>
Cplx<T>& operator+=(Cplx<T>& a, const Cplx<T>& b) {
  a.re = a.re + b.re;
  a.im = a.im + b.im;
  return a;
}

template <class T>
Cplx<T> conj(const Cplx<T>& a) {
  return {a.re, -a.im};
}

/// |z|^2
template <class T>
T norm2(const Cplx<T>& a) {
  return a.re * a.re + a.im * a.im;
}

template <class T>
Cplx<double> value_of(const Cplx<T>& z) {
  return {ad::value_of(z.re), ad::value_of(z.im)};
}

inline std::complex<double> to_std(const Cplx<double>& z) { return {z.re, z.im}; }

/// Dense complex matrix, row-major.
template <class T>
struct CMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<Cplx<T>> data;

  CMatrix() = default;
  CMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c) {}

  Cplx<T>& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  const Cplx<T>& operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

}  // namespace pinchcomp
