// Dense multi-index arrays with typed index slots (family / block / variance),
// Einstein contraction, slot-wise linear transformation, and a central-difference
// oracle. Also hosts the small dense linear algebra used throughout: matrices
// and rank-3/4 arrays templated on the scalar (double or jets), LU inversion
// with value-based pivoting, and Householder least squares for doubles.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "osc2/jet.hpp"

namespace osc2 {

struct TensorError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// --- evaluation points --------------------------------------------------------

// A point of the second-order bundle: base coordinates plus first- and
// second-order fibre coordinates. Ambient contexts read (x, y1, y2);
// submanifold contexts read the same three vectors as (u, v1, v2).
struct JetPoint {
  std::vector<double> x, y1, y2;
  friend bool operator==(const JetPoint&, const JetPoint&) = default;
};

// --- typed index slots ----------------------------------------------------------

enum class Family { Ambient, Sub, Normal };
enum class Block { H, V1, V2, None };
enum class Variance { Up, Down };

struct IndexSlot {
  Family family;
  Variance variance;
  std::size_t dim;
  Block block = Block::None;
  friend bool operator==(const IndexSlot&, const IndexSlot&) = default;
};

inline const char* to_string(Family f) {
  switch (f) {
    case Family::Ambient: return "ambient";
    case Family::Sub: return "sub";
    case Family::Normal: return "normal";
  }
  return "?";
}

// --- MixedDTensor -----------------------------------------------------------------

class MixedDTensor {
 public:
  MixedDTensor() = default;
  MixedDTensor(std::vector<IndexSlot> slots, JetPoint point)
      : slots_(std::move(slots)), point_(std::move(point)) {
    std::size_t total = 1;
    for (const auto& s : slots_) total *= s.dim;
    data_.assign(total, 0.0);
  }

  const std::vector<IndexSlot>& slots() const { return slots_; }
  const JetPoint& point() const { return point_; }
  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }
  std::size_t rank() const { return slots_.size(); }

  std::size_t flat_index(std::initializer_list<std::size_t> idx) const {
    if (idx.size() != slots_.size()) throw TensorError("index rank mismatch");
    std::size_t off = 0, k = 0;
    for (std::size_t i : idx) {
      if (i >= slots_[k].dim) throw TensorError("index out of range");
      off = off * slots_[k].dim + i;
      ++k;
    }
    return off;
  }
  double& at(std::initializer_list<std::size_t> idx) { return data_[flat_index(idx)]; }
  double at(std::initializer_list<std::size_t> idx) const { return data_[flat_index(idx)]; }

  template <class... I>
  double& operator()(I... idx) {
    return at({static_cast<std::size_t>(idx)...});
  }
  template <class... I>
  double operator()(I... idx) const {
    return at({static_cast<std::size_t>(idx)...});
  }

  // All components finite; call after filling in raw data.
  void check_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) throw TensorError("non-finite tensor component");
  }

  double max_abs() const {
    double m = 0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
  }

 private:
  std::vector<IndexSlot> slots_;
  std::vector<double> data_;
  JetPoint point_;
};

namespace detail {

inline std::vector<std::size_t> strides_of(const std::vector<IndexSlot>& slots) {
  std::vector<std::size_t> st(slots.size(), 1);
  for (std::size_t i = slots.size(); i-- > 1;)
    st[i - 1] = st[i] * slots[i].dim;
  return st;
}

}  // namespace detail

// Einstein contraction of slot `s1` of `t1` (summed against slot `s2` of `t2`).
// Result slots: remaining slots of t1 followed by remaining slots of t2.
inline MixedDTensor contract(const MixedDTensor& t1, std::size_t s1,
                             const MixedDTensor& t2, std::size_t s2) {
  if (s1 >= t1.rank() || s2 >= t2.rank()) throw TensorError("contract: slot out of range");
  const IndexSlot& a = t1.slots()[s1];
  const IndexSlot& b = t2.slots()[s2];
  if (a.family != b.family)
    throw TensorError(std::string("contract: family mismatch (") + to_string(a.family) +
                      " vs " + to_string(b.family) + ")");
  if (a.dim != b.dim) throw TensorError("contract: dimension mismatch");
  if (a.variance == b.variance)
    throw TensorError("contract: need one up and one down slot");
  if (a.block != Block::None && b.block != Block::None && a.block != b.block)
    throw TensorError("contract: block tags disagree");
  if (!(t1.point() == t2.point())) throw TensorError("contract: mismatched points");

  std::vector<IndexSlot> rslots;
  for (std::size_t i = 0; i < t1.rank(); ++i)
    if (i != s1) rslots.push_back(t1.slots()[i]);
  for (std::size_t i = 0; i < t2.rank(); ++i)
    if (i != s2) rslots.push_back(t2.slots()[i]);
  MixedDTensor r(rslots, t1.point());

  const auto st1 = detail::strides_of(t1.slots());
  const auto st2 = detail::strides_of(t2.slots());
  const std::size_t d = a.dim;

  // Enumerate the free multi-indices of each operand.
  std::vector<std::size_t> free1, free2;
  for (std::size_t i = 0; i < t1.rank(); ++i)
    if (i != s1) free1.push_back(i);
  for (std::size_t i = 0; i < t2.rank(); ++i)
    if (i != s2) free2.push_back(i);

  std::vector<std::size_t> idx(rslots.size(), 0);
  const std::size_t total = r.data().size();
  for (std::size_t flat = 0; flat < total; ++flat) {
    // decode flat -> idx
    std::size_t rem = flat;
    for (std::size_t i = rslots.size(); i-- > 0;) {
      idx[i] = rem % rslots[i].dim;
      rem /= rslots[i].dim;
    }
    std::size_t base1 = 0, base2 = 0;
    for (std::size_t i = 0; i < free1.size(); ++i) base1 += idx[i] * st1[free1[i]];
    for (std::size_t i = 0; i < free2.size(); ++i)
      base2 += idx[free1.size() + i] * st2[free2[i]];
    double sum = 0;
    for (std::size_t k = 0; k < d; ++k)
      sum += t1.data()[base1 + k * st1[s1]] * t2.data()[base2 + k * st2[s2]];
    r.data()[flat] = sum;
  }
  return r;
}

// --- dense matrices / rank-3 / rank-4 arrays over any scalar -------------------------

template <class S>
struct Mat {
  std::size_t rows = 0, cols = 0;
  std::vector<S> a;
  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, S(0)) {}
  S& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
  const S& operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }
  static Mat identity(std::size_t n) {
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = S(1);
    return m;
  }
};

template <class S>
struct Arr3 {
  std::size_t d0 = 0, d1 = 0, d2 = 0;
  std::vector<S> a;
  Arr3() = default;
  Arr3(std::size_t n0, std::size_t n1, std::size_t n2)
      : d0(n0), d1(n1), d2(n2), a(n0 * n1 * n2, S(0)) {}
  S& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return a[(i * d1 + j) * d2 + k];
  }
  const S& operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return a[(i * d1 + j) * d2 + k];
  }
};

template <class S>
struct Arr4 {
  std::size_t d0 = 0, d1 = 0, d2 = 0, d3 = 0;
  std::vector<S> a;
  Arr4() = default;
  Arr4(std::size_t n0, std::size_t n1, std::size_t n2, std::size_t n3)
      : d0(n0), d1(n1), d2(n2), d3(n3), a(n0 * n1 * n2 * n3, S(0)) {}
  S& operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
    return a[((i * d1 + j) * d2 + k) * d3 + l];
  }
  const S& operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
    return a[((i * d1 + j) * d2 + k) * d3 + l];
  }
};

template <class S>
Mat<S> matmul(const Mat<S>& A, const Mat<S>& B) {
  if (A.cols != B.rows) throw TensorError("matmul: shape mismatch");
  Mat<S> C(A.rows, B.cols);
  for (std::size_t i = 0; i < A.rows; ++i)
    for (std::size_t k = 0; k < A.cols; ++k) {
      const S& aik = A(i, k);
      for (std::size_t j = 0; j < B.cols; ++j) C(i, j) += aik * B(k, j);
    }
  return C;
}

template <class S>
std::vector<S> matvec(const Mat<S>& A, const std::vector<S>& x) {
  if (A.cols != x.size()) throw TensorError("matvec: shape mismatch");
  std::vector<S> y(A.rows, S(0));
  for (std::size_t i = 0; i < A.rows; ++i)
    for (std::size_t j = 0; j < A.cols; ++j) y[i] += A(i, j) * x[j];
  return y;
}

template <class S>
Mat<S> transpose(const Mat<S>& A) {
  Mat<S> T(A.cols, A.rows);
  for (std::size_t i = 0; i < A.rows; ++i)
    for (std::size_t j = 0; j < A.cols; ++j) T(j, i) = A(i, j);
  return T;
}

// LU decomposition with partial pivoting on |value(·)|, usable for jet-valued
// matrices: the pivot choice is driven by the scalar part, the elimination by
// full jet arithmetic.
template <class S>
struct LU {
  Mat<S> lu;
  std::vector<std::size_t> perm;
  int sign = 1;

  explicit LU(Mat<S> A) : lu(std::move(A)) {
    if (lu.rows != lu.cols) throw TensorError("LU: matrix not square");
    const std::size_t n = lu.rows;
    perm.resize(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    for (std::size_t k = 0; k < n; ++k) {
      std::size_t p = k;
      double best = std::abs(value(lu(k, k)));
      for (std::size_t i = k + 1; i < n; ++i) {
        const double cand = std::abs(value(lu(i, k)));
        if (cand > best) {
          best = cand;
          p = i;
        }
      }
      if (best < 1e-14) throw TensorError("LU: singular matrix");
      if (p != k) {
        for (std::size_t j = 0; j < n; ++j) std::swap(lu(k, j), lu(p, j));
        std::swap(perm[k], perm[p]);
        sign = -sign;
      }
      for (std::size_t i = k + 1; i < n; ++i) {
        S f = lu(i, k) / lu(k, k);
        lu(i, k) = f;
        for (std::size_t j = k + 1; j < n; ++j) lu(i, j) -= f * lu(k, j);
      }
    }
  }

  std::vector<S> solve(const std::vector<S>& b) const {
    const std::size_t n = lu.rows;
    if (b.size() != n) throw TensorError("LU::solve: size mismatch");
    std::vector<S> x(n, S(0));
    for (std::size_t i = 0; i < n; ++i) {
      S s = b[perm[i]];
      for (std::size_t j = 0; j < i; ++j) s -= lu(i, j) * x[j];
      x[i] = s;
    }
    for (std::size_t i = n; i-- > 0;) {
      S s = x[i];
      for (std::size_t j = i + 1; j < n; ++j) s -= lu(i, j) * x[j];
      x[i] = s / lu(i, i);
    }
    return x;
  }

  S det() const {
    S d = S(static_cast<double>(sign));
    for (std::size_t i = 0; i < lu.rows; ++i) d = d * lu(i, i);
    return d;
  }
};

template <class S>
Mat<S> inverse(const Mat<S>& A) {
  LU<S> f(A);
  const std::size_t n = A.rows;
  Mat<S> inv(n, n);
  std::vector<S> e(n, S(0));
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < n; ++i) e[i] = S(i == j ? 1.0 : 0.0);
    auto col = f.solve(e);
    for (std::size_t i = 0; i < n; ++i) inv(i, j) = col[i];
  }
  return inv;
}

template <class S>
S determinant(const Mat<S>& A) {
  return LU<S>(A).det();
}

// --- Householder least squares (double only) -------------------------------------------

struct LeastSquares {
  std::vector<double> x;    // minimizer
  double residual = 0.0;    // ‖Ax − b‖₂
  double condition = 0.0;   // max|R_ii| / min|R_ii|
};

inline LeastSquares householder_lsq(Mat<double> A, std::vector<double> b) {
  const std::size_t r = A.rows, c = A.cols;
  if (b.size() != r) throw TensorError("lsq: rhs size mismatch");
  if (r < c) throw TensorError("lsq: underdetermined system");
  for (std::size_t k = 0; k < c; ++k) {
    double norm = 0;
    for (std::size_t i = k; i < r; ++i) norm += A(i, k) * A(i, k);
    norm = std::sqrt(norm);
    if (norm == 0) throw TensorError("lsq: rank deficient");
    if (A(k, k) > 0) norm = -norm;
    // Householder vector v, stored in-place below the diagonal.
    std::vector<double> v(r - k);
    v[0] = A(k, k) - norm;
    for (std::size_t i = k + 1; i < r; ++i) v[i - k] = A(i, k);
    double vtv = 0;
    for (double t : v) vtv += t * t;
    if (vtv == 0) throw TensorError("lsq: rank deficient");
    A(k, k) = norm;
    for (std::size_t i = k + 1; i < r; ++i) A(i, k) = 0;
    for (std::size_t j = k + 1; j < c; ++j) {
      double dot = 0;
      for (std::size_t i = k; i < r; ++i) dot += v[i - k] * A(i, j);
      const double f = 2 * dot / vtv;
      for (std::size_t i = k; i < r; ++i) A(i, j) -= f * v[i - k];
    }
    double dotb = 0;
    for (std::size_t i = k; i < r; ++i) dotb += v[i - k] * b[i];
    const double fb = 2 * dotb / vtv;
    for (std::size_t i = k; i < r; ++i) b[i] -= fb * v[i - k];
  }
  LeastSquares out;
  out.x.assign(c, 0.0);
  for (std::size_t i = c; i-- > 0;) {
    double s = b[i];
    for (std::size_t j = i + 1; j < c; ++j) s -= A(i, j) * out.x[j];
    out.x[i] = s / A(i, i);
  }
  double rmax = 0, rmin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < c; ++i) {
    const double d = std::abs(A(i, i));
    rmax = std::max(rmax, d);
    rmin = std::min(rmin, d);
  }
  out.condition = rmin > 0 ? rmax / rmin : std::numeric_limits<double>::infinity();
  double rn = 0;
  for (std::size_t i = c; i < r; ++i) rn += b[i] * b[i];
  out.residual = std::sqrt(rn);
  return out;
}

// --- slot-wise transformation -----------------------------------------------------------

// Transform with one invertible matrix per slot: up slots contract against J,
// down slots against J⁻¹ (transposed placement), realizing the usual change of
// components under a change of frame.
inline MixedDTensor transform(const MixedDTensor& t, const std::vector<Mat<double>>& jac) {
  if (jac.size() != t.rank()) throw TensorError("transform: need one matrix per slot");
  std::vector<Mat<double>> use(jac.size());
  for (std::size_t s = 0; s < jac.size(); ++s) {
    const auto& J = jac[s];
    if (J.rows != t.slots()[s].dim || J.cols != t.slots()[s].dim)
      throw TensorError("transform: matrix dimension mismatch at slot " + std::to_string(s));
    if (std::abs(determinant(J)) < 1e-12)
      throw TensorError("transform: singular matrix at slot " + std::to_string(s));
    use[s] = (t.slots()[s].variance == Variance::Up) ? J : transpose(inverse(J));
  }
  // new[i...] = Π_s use[s](i_s, j_s) old[j...]
  MixedDTensor r(t.slots(), t.point());
  const auto st = detail::strides_of(t.slots());
  std::vector<std::size_t> idx(t.rank(), 0), jdx(t.rank(), 0);
  const std::size_t total = r.data().size();
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t rem = flat;
    for (std::size_t s = t.rank(); s-- > 0;) {
      idx[s] = rem % t.slots()[s].dim;
      rem /= t.slots()[s].dim;
    }
    double sum = 0;
    // iterate all source multi-indices
    std::fill(jdx.begin(), jdx.end(), 0);
    for (;;) {
      double w = 1;
      std::size_t off = 0;
      for (std::size_t s = 0; s < t.rank(); ++s) {
        w *= use[s](idx[s], jdx[s]);
        off += jdx[s] * st[s];
      }
      sum += w * t.data()[off];
      std::size_t s = t.rank();
      while (s-- > 0) {
        if (++jdx[s] < t.slots()[s].dim) break;
        jdx[s] = 0;
        if (s == 0) goto done;
      }
      if (t.rank() == 0) break;
    }
  done:
    r.data()[flat] = sum;
  }
  return r;
}

// --- finite differences -------------------------------------------------------------------

enum class Coord { X, Y1, Y2 };

template <class F>
double finite_difference(F&& f, const JetPoint& p, Coord which, std::size_t index, double h) {
  if (h <= 0) throw TensorError("finite_difference: h must be positive");
  JetPoint hi = p, lo = p;
  auto& hv = which == Coord::X ? hi.x : which == Coord::Y1 ? hi.y1 : hi.y2;
  auto& lv = which == Coord::X ? lo.x : which == Coord::Y1 ? lo.y1 : lo.y2;
  hv.at(index) += h;
  lv.at(index) -= h;
  return (f(hi) - f(lo)) / (2 * h);
}

}  // namespace osc2
