// Forward-mode AD scalars carrying first (Jet1) or first+second (Jet2)
// derivatives with respect to a fixed set of seed variables.
//
// The direction count is dynamic.  A jet whose derivative storage is empty is
// a *constant*: it behaves as if its gradient (and Hessian) were zero of any
// size.  This lets plain double literals flow through templated code without
// threading the seed count everywhere.
#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace osc2 {

namespace detail {
inline void axpy(std::vector<double>& y, double a, const std::vector<double>& x) {
  if (x.empty()) return;
  if (y.empty()) y.assign(x.size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}
inline std::vector<double> scaled(const std::vector<double>& x, double a) {
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) r[i] = a * x[i];
  return r;
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Jet1: value + gradient
// ---------------------------------------------------------------------------
struct Jet1 {
  double v = 0.0;
  std::vector<double> g;  // empty == zero gradient

  Jet1() = default;
  Jet1(double value) : v(value) {}  // NOLINT: implicit by design
  Jet1(double value, std::vector<double> grad) : v(value), g(std::move(grad)) {}

  static Jet1 variable(double value, std::size_t index, std::size_t nvars) {
    Jet1 j(value);
    j.g.assign(nvars, 0.0);
    j.g[index] = 1.0;
    return j;
  }
};

inline double value(double x) { return x; }
inline double value(const Jet1& x) { return x.v; }

inline Jet1 operator-(const Jet1& a) { return {-a.v, detail::scaled(a.g, -1.0)}; }

inline Jet1 operator+(const Jet1& a, const Jet1& b) {
  Jet1 r(a.v + b.v);
  r.g = a.g;
  detail::axpy(r.g, 1.0, b.g);
  return r;
}
inline Jet1 operator-(const Jet1& a, const Jet1& b) {
  Jet1 r(a.v - b.v);
  r.g = a.g;
  detail::axpy(r.g, -1.0, b.g);
  return r;
}
inline Jet1 operator*(const Jet1& a, const Jet1& b) {
  Jet1 r(a.v * b.v);
  r.g = detail::scaled(a.g, b.v);
  detail::axpy(r.g, a.v, b.g);
  return r;
}
inline Jet1 reciprocal(const Jet1& a) {
  const double w = 1.0 / a.v;
  return {w, detail::scaled(a.g, -w * w)};
}
inline Jet1 operator/(const Jet1& a, const Jet1& b) { return a * reciprocal(b); }

inline Jet1& operator+=(Jet1& a, const Jet1& b) { a = a + b; return a; }
inline Jet1& operator-=(Jet1& a, const Jet1& b) { a = a - b; return a; }
inline Jet1& operator*=(Jet1& a, const Jet1& b) { a = a * b; return a; }

// f applied by chain rule given f(v) and f'(v).
inline Jet1 apply_chain(const Jet1& x, double f0, double f1) {
  return {f0, detail::scaled(x.g, f1)};
}

inline Jet1 sin(const Jet1& x) { return apply_chain(x, std::sin(x.v), std::cos(x.v)); }
inline Jet1 cos(const Jet1& x) { return apply_chain(x, std::cos(x.v), -std::sin(x.v)); }
inline Jet1 exp(const Jet1& x) { const double e = std::exp(x.v); return apply_chain(x, e, e); }
inline Jet1 log(const Jet1& x) { return apply_chain(x, std::log(x.v), 1.0 / x.v); }
inline Jet1 sqrt(const Jet1& x) {
  const double s = std::sqrt(x.v);
  return apply_chain(x, s, 0.5 / s);
}
inline Jet1 pow_int(const Jet1& x, int n) {
  if (n == 0) return Jet1(1.0);
  if (n < 0) return reciprocal(pow_int(x, -n));
  return apply_chain(x, std::pow(x.v, n), n * std::pow(x.v, n - 1));
}

// ---------------------------------------------------------------------------
// Jet2: value + gradient + Hessian (row-major, symmetric)
// ---------------------------------------------------------------------------
struct Jet2 {
  double v = 0.0;
  std::vector<double> g;  // size k, empty == zero
  std::vector<double> h;  // size k*k, empty == zero

  Jet2() = default;
  Jet2(double value) : v(value) {}  // NOLINT: implicit by design
  Jet2(double value, std::vector<double> grad, std::vector<double> hess)
      : v(value), g(std::move(grad)), h(std::move(hess)) {}

  static Jet2 variable(double value, std::size_t index, std::size_t nvars) {
    Jet2 j(value);
    j.g.assign(nvars, 0.0);
    j.g[index] = 1.0;
    return j;
  }
};

inline double value(const Jet2& x) { return x.v; }

namespace detail {
// h += a * (x ⊗ y + y ⊗ x)
inline void sym_outer(std::vector<double>& h, double a, const std::vector<double>& x,
                      const std::vector<double>& y) {
  if (x.empty() || y.empty() || a == 0.0) return;
  const std::size_t k = x.size();
  if (h.empty()) h.assign(k * k, 0.0);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) h[i * k + j] += a * (x[i] * y[j] + y[i] * x[j]);
}
}  // namespace detail

inline Jet2 operator-(const Jet2& a) {
  return {-a.v, detail::scaled(a.g, -1.0), detail::scaled(a.h, -1.0)};
}
inline Jet2 operator+(const Jet2& a, const Jet2& b) {
  Jet2 r(a.v + b.v);
  r.g = a.g;
  detail::axpy(r.g, 1.0, b.g);
  r.h = a.h;
  detail::axpy(r.h, 1.0, b.h);
  return r;
}
inline Jet2 operator-(const Jet2& a, const Jet2& b) {
  Jet2 r(a.v - b.v);
  r.g = a.g;
  detail::axpy(r.g, -1.0, b.g);
  r.h = a.h;
  detail::axpy(r.h, -1.0, b.h);
  return r;
}
inline Jet2 operator*(const Jet2& a, const Jet2& b) {
  Jet2 r(a.v * b.v);
  r.g = detail::scaled(a.g, b.v);
  detail::axpy(r.g, a.v, b.g);
  r.h = detail::scaled(a.h, b.v);
  detail::axpy(r.h, a.v, b.h);
  detail::sym_outer(r.h, 1.0, a.g, b.g);
  return r;
}
inline Jet2 apply_chain(const Jet2& x, double f0, double f1, double f2) {
  Jet2 r(f0);
  r.g = detail::scaled(x.g, f1);
  r.h = detail::scaled(x.h, f1);
  detail::sym_outer(r.h, 0.5 * f2, x.g, x.g);
  return r;
}
inline Jet2 reciprocal(const Jet2& a) {
  const double w = 1.0 / a.v;
  return apply_chain(a, w, -w * w, 2.0 * w * w * w);
}
inline Jet2 operator/(const Jet2& a, const Jet2& b) { return a * reciprocal(b); }

inline Jet2& operator+=(Jet2& a, const Jet2& b) { a = a + b; return a; }
inline Jet2& operator-=(Jet2& a, const Jet2& b) { a = a - b; return a; }
inline Jet2& operator*=(Jet2& a, const Jet2& b) { a = a * b; return a; }

inline Jet2 sin(const Jet2& x) {
  const double s = std::sin(x.v), c = std::cos(x.v);
  return apply_chain(x, s, c, -s);
}
inline Jet2 cos(const Jet2& x) {
  const double s = std::sin(x.v), c = std::cos(x.v);
  return apply_chain(x, c, -s, -c);
}
inline Jet2 exp(const Jet2& x) {
  const double e = std::exp(x.v);
  return apply_chain(x, e, e, e);
}
inline Jet2 log(const Jet2& x) {
  const double w = 1.0 / x.v;
  return apply_chain(x, std::log(x.v), w, -w * w);
}
inline Jet2 sqrt(const Jet2& x) {
  const double s = std::sqrt(x.v);
  return apply_chain(x, s, 0.5 / s, -0.25 / (s * x.v));
}
inline Jet2 pow_int(const Jet2& x, int n) {
  if (n == 0) return Jet2(1.0);
  if (n < 0) return reciprocal(pow_int(x, -n));
  return apply_chain(x, std::pow(x.v, n), n * std::pow(x.v, n - 1),
                     double(n) * (n - 1) * std::pow(x.v, n - 2));
}

// double fallbacks so templated code can call the same names on plain scalars
inline double reciprocal(double x) { return 1.0 / x; }
inline double pow_int(double x, int n) { return std::pow(x, n); }
using std::cos;
using std::exp;
using std::log;
using std::sin;
using std::sqrt;

// ---------------------------------------------------------------------------
// Truncation: one derivative level is consumed when a stored jet is
// differentiated, so the result lives one order lower.
// ---------------------------------------------------------------------------
template <class S>
struct jet_lower;
template <>
struct jet_lower<Jet2> { using type = Jet1; };
template <>
struct jet_lower<Jet1> { using type = double; };
template <class S>
using jet_lower_t = typename jet_lower<S>::type;

// d/dw_k of the field represented by the jet, as a jet of one lower order.
inline Jet1 partial(const Jet2& x, std::size_t k) {
  Jet1 r(x.g.empty() ? 0.0 : x.g[k]);
  if (!x.h.empty()) {
    const std::size_t n = x.g.size();
    r.g.assign(x.h.begin() + k * n, x.h.begin() + (k + 1) * n);
  }
  return r;
}
inline double partial(const Jet1& x, std::size_t k) { return x.g.empty() ? 0.0 : x.g[k]; }

inline Jet1 truncate(const Jet2& x) { return {x.v, x.g}; }
inline double truncate(const Jet1& x) { return x.v; }

}  // namespace osc2
