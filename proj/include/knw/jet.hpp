#pragma once

#include <cmath>

#include "knw/tape.hpp"

namespace knw {

inline double sq(double x) { return x * x; }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// One more tape primitive used by the activation jets below: constant - x.
inline Value operator-(double k, Value x) {
  Tape& t = *x.tape;
  return t.emit(Op::sub, t.constant(k).index, x.index, Tape::nil, k - t.val(x),
                1.0, -1.0);
}

// Second-order jet along one direction: carries a value together with the
// first and second directional derivatives. Instantiated with T = double for
// plain evaluation and T = Value to record the same arithmetic on a tape, in
// which case parameter gradients flow through all three components.
template <class T>
struct Jet2 {
  T f, d1, d2;
};

template <class T>
Jet2<T> operator+(const Jet2<T>& u, const Jet2<T>& v) {
  return {u.f + v.f, u.d1 + v.d1, u.d2 + v.d2};
}

template <class T>
Jet2<T> operator-(const Jet2<T>& u, const Jet2<T>& v) {
  return {u.f - v.f, u.d1 - v.d1, u.d2 - v.d2};
}

// Product rule up to second order.
template <class T>
Jet2<T> operator*(const Jet2<T>& u, const Jet2<T>& v) {
  return {u.f * v.f, u.f * v.d1 + u.d1 * v.f,
          u.f * v.d2 + 2.0 * (u.d1 * v.d1) + u.d2 * v.f};
}

// Scaling by a quantity that is constant along the jet direction.
template <class T>
Jet2<T> scale(const T& a, const Jet2<T>& u) {
  return {a * u.f, a * u.d1, a * u.d2};
}

template <class T>
Jet2<T> operator*(double k, const Jet2<T>& u) {
  return {k * u.f, k * u.d1, k * u.d2};
}

template <class T>
Jet2<T> sq(const Jet2<T>& u) {
  return {sq(u.f), 2.0 * (u.f * u.d1), 2.0 * sq(u.d1) + 2.0 * (u.f * u.d2)};
}

template <class T>
Jet2<T> sin(const Jet2<T>& u) {
  using std::cos;
  using std::sin;
  T s = sin(u.f), c = cos(u.f);
  return {s, c * u.d1, c * u.d2 - s * sq(u.d1)};
}

template <class T>
Jet2<T> cos(const Jet2<T>& u) {
  using std::cos;
  using std::sin;
  T s = sin(u.f), c = cos(u.f);
  return {c, -(s * u.d1), -(s * u.d2) - c * sq(u.d1)};
}

template <class T>
Jet2<T> tanh(const Jet2<T>& u) {
  using std::tanh;
  T th = tanh(u.f);
  T dth = 1.0 - sq(th);
  return {th, dth * u.d1, dth * u.d2 - 2.0 * (th * (dth * sq(u.d1)))};
}

template <class T>
Jet2<T> sigmoid(const Jet2<T>& u) {
  T s = sigmoid(u.f);
  T ds = s * (1.0 - s);
  return {s, ds * u.d1, ds * u.d2 + (ds * (1.0 - 2.0 * s)) * sq(u.d1)};
}

// Evaluation contexts let the same numerical kernels run on plain doubles or
// record onto a tape. `c` lifts a compile-time-known constant into T.
struct DoubleCtx {
  using Scalar = double;
  double c(double v) const { return v; }
  double zero() const { return 0.0; }
};

struct TapeCtx {
  using Scalar = Value;
  Tape* tape = nullptr;
  // 0 and 1 map to the tape's shared constants so algebraic folds apply.
  Value c(double v) const {
    if (v == 0.0) return tape->zero();
    if (v == 1.0) return tape->one();
    return tape->constant(v);
  }
  Value zero() const { return tape->zero(); }
};

}  // namespace knw
