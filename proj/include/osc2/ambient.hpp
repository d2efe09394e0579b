// Second-order bundle geometry of the ambient space Osc²M for a metric
// g_ab(x, y⁽¹⁾) given in closed form: Christoffel symbols, spray, the
// canonical nonlinear connection (dual and direct coefficients), adapted
// frame/coframe, the nine-coefficient metrical linear connection, and
// h/v₁/v₂ covariant derivatives of expression-valued tensor fields.
//
// The whole tower is built symbolically once per space; numeric values at a
// point come from evaluating the shared expression DAG, optionally with jet
// scalars so that every object carries exact derivatives in one pass.
#pragma once

#include <array>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "osc2/expr.hpp"
#include "osc2/tensor.hpp"

namespace osc2 {

struct AmbientError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using ExprVec = std::vector<Expr>;
using ExprMat = std::vector<ExprVec>;
using ExprArr3 = std::vector<ExprMat>;

inline ExprVec expr_zeros(std::size_t n) { return ExprVec(n, make_const(0)); }
inline ExprMat expr_zeros(std::size_t r, std::size_t c) {
  return ExprMat(r, expr_zeros(c));
}
inline ExprArr3 expr_zeros(std::size_t a, std::size_t b, std::size_t c) {
  return ExprArr3(a, expr_zeros(b, c));
}

inline bool expr_equal(const Expr& a, const Expr& b) {
  if (a.get() == b.get()) return true;
  if (a->op != b->op || a->cval != b->cval || a->name != b->name || a->expo != b->expo)
    return false;
  if (!!a->a != !!b->a || !!a->b != !!b->b) return false;
  if (a->a && !expr_equal(a->a, b->a)) return false;
  if (a->b && !expr_equal(a->b, b->b)) return false;
  return true;
}

// Determinant by cofactor expansion; fine for the n ≤ 6 desk scale.
inline Expr det_expr(const ExprMat& m) {
  const std::size_t n = m.size();
  if (n == 1) return m[0][0];
  Expr acc = make_const(0);
  for (std::size_t j = 0; j < n; ++j) {
    ExprMat minor;
    minor.reserve(n - 1);
    for (std::size_t r = 1; r < n; ++r) {
      ExprVec row;
      row.reserve(n - 1);
      for (std::size_t c = 0; c < n; ++c)
        if (c != j) row.push_back(m[r][c]);
      minor.push_back(std::move(row));
    }
    Expr term = mul(m[0][j], det_expr(minor));
    acc = (j % 2 == 0) ? add(acc, term) : sub(acc, term);
  }
  return acc;
}

// Inverse as adjugate / determinant, sharing the determinant subtree.
inline ExprMat inverse_expr(const ExprMat& m, Expr* det_out = nullptr) {
  const std::size_t n = m.size();
  Expr det = det_expr(m);
  if (det_out) *det_out = det;
  ExprMat inv = expr_zeros(n, n);
  if (n == 1) {
    inv[0][0] = div(make_const(1), det);
    return inv;
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      ExprMat minor;
      for (std::size_t r = 0; r < n; ++r) {
        if (r == j) continue;  // adjugate: cofactor C_ji
        ExprVec row;
        for (std::size_t c = 0; c < n; ++c)
          if (c != i) row.push_back(m[r][c]);
        minor.push_back(std::move(row));
      }
      Expr cof = det_expr(minor);
      if ((i + j) % 2 == 1) cof = neg(cof);
      inv[i][j] = div(cof, det);
    }
  return inv;
}

// --- evaluation helpers -----------------------------------------------------------

template <class S>
std::vector<S> eval_vec(const ExprVec& v, EvalContext<S>& ctx) {
  std::vector<S> out;
  out.reserve(v.size());
  for (const auto& e : v) out.push_back(ctx.eval(e));
  return out;
}
template <class S>
Mat<S> eval_mat(const ExprMat& m, EvalContext<S>& ctx) {
  Mat<S> out(m.size(), m.empty() ? 0 : m[0].size());
  for (std::size_t i = 0; i < out.rows; ++i)
    for (std::size_t j = 0; j < out.cols; ++j) out(i, j) = ctx.eval(m[i][j]);
  return out;
}
template <class S>
Arr3<S> eval_arr3(const ExprArr3& t, EvalContext<S>& ctx) {
  const std::size_t a = t.size(), b = a ? t[0].size() : 0, c = b ? t[0][0].size() : 0;
  Arr3<S> out(a, b, c);
  for (std::size_t i = 0; i < a; ++i)
    for (std::size_t j = 0; j < b; ++j)
      for (std::size_t k = 0; k < c; ++k) out(i, j, k) = ctx.eval(t[i][j][k]);
  return out;
}

inline VarEnv<double> ambient_env(const JetPoint& p) {
  VarEnv<double> env;
  for (std::size_t i = 0; i < p.x.size(); ++i) {
    env[var_x(int(i))] = p.x[i];
    env[var_y1(int(i))] = p.y1[i];
    env[var_y2(int(i))] = p.y2[i];
  }
  return env;
}

// --- nonlinear connection / frames -------------------------------------------------

struct NonlinearConnection {
  Mat<double> M1, M2;  // dual coefficients
  Mat<double> N1, N2;  // direct coefficients
  JetPoint point;
};

struct AdaptedFramePair {
  Mat<double> frame;    // columns: δ/δxᵃ, δ/δy⁽¹⁾ᵃ, ∂/∂y⁽²⁾ᵃ in the natural basis
  Mat<double> coframe;  // rows:    dxᵃ, δy⁽¹⁾ᵃ, δy⁽²⁾ᵃ
};

// N₁ = M₁ and N₂ = M₂ − M₁N₁: the unique conversion making the coframe built
// from M dual to the frame built from N.
inline std::pair<Mat<double>, Mat<double>> direct_coefficients(const Mat<double>& M1,
                                                               const Mat<double>& M2) {
  Mat<double> N1 = M1;
  Mat<double> N2 = M2;
  const auto M1N1 = matmul(M1, N1);
  for (std::size_t i = 0; i < N2.rows; ++i)
    for (std::size_t j = 0; j < N2.cols; ++j) N2(i, j) -= M1N1(i, j);
  return {N1, N2};
}

template <class S>
Mat<S> assemble_frame(const Mat<S>& N1, const Mat<S>& N2) {
  const std::size_t n = N1.rows;
  Mat<S> F = Mat<S>::identity(3 * n);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t a = 0; a < n; ++a) {
      F(n + b, a) = -N1(b, a);
      F(2 * n + b, a) = -N2(b, a);
      F(2 * n + b, n + a) = -N1(b, a);
    }
  return F;
}

template <class S>
Mat<S> assemble_coframe(const Mat<S>& M1, const Mat<S>& M2) {
  const std::size_t n = M1.rows;
  Mat<S> C = Mat<S>::identity(3 * n);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b) {
      C(n + a, b) = M1(a, b);
      C(2 * n + a, b) = M2(a, b);
      C(2 * n + a, n + b) = M1(a, b);
    }
  return C;
}

// --- nine-coefficient linear connection ------------------------------------------------

// Index convention: L[i](a, b, c) = L₍ᵢ₀₎ᵃ_bc, C1[i](a, b, c) = C₍ᵢ₁₎ᵃ_bc,
// C2[i](a, b, c) = C₍ᵢ₂₎ᵃ_bc.
struct NineExpr {
  std::array<ExprArr3, 3> L, C1, C2;
};

template <class S>
struct NineEval {
  std::array<Arr3<S>, 3> L, C1, C2;
};

template <class S>
NineEval<S> eval_nine(const NineExpr& D, EvalContext<S>& ctx) {
  NineEval<S> out;
  for (int i = 0; i < 3; ++i) {
    out.L[i] = eval_arr3(D.L[i], ctx);
    out.C1[i] = eval_arr3(D.C1[i], ctx);
    out.C2[i] = eval_arr3(D.C2[i], ctx);
  }
  return out;
}

// Provider for the vertical coefficients B₍ⱼⱼ₎ᵃ_cb (j = 1, 2) entering the
// L₍ⱼ₀₎ rows; indexed as B(a, c, b). These coefficients are not determined by
// the metric alone; the default is the Berwald-type choice ∂N₍ⱼ₎ᵃ_b/∂y⁽ʲ⁾ᶜ,
// and results depending on them are flagged downstream.
using VerticalProvider = std::function<ExprArr3(int j)>;

// --- expression-valued tensor fields ------------------------------------------------------

struct ExprTensor {
  std::vector<IndexSlot> slots;
  std::vector<Expr> data;

  ExprTensor() = default;
  explicit ExprTensor(std::vector<IndexSlot> s) : slots(std::move(s)) {
    std::size_t total = 1;
    for (const auto& sl : slots) total *= sl.dim;
    data.assign(total, make_const(0));
  }
  Expr& at(std::initializer_list<std::size_t> idx) { return data[flat(idx)]; }
  const Expr& at(std::initializer_list<std::size_t> idx) const { return data[flat(idx)]; }
  std::size_t flat(std::initializer_list<std::size_t> idx) const {
    std::size_t off = 0, k = 0;
    for (std::size_t i : idx) off = off * slots[k++].dim + i;
    return off;
  }
  std::size_t flat(const std::vector<std::size_t>& idx) const {
    std::size_t off = 0;
    for (std::size_t k = 0; k < idx.size(); ++k) off = off * slots[k].dim + idx[k];
    return off;
  }
};

inline MixedDTensor evaluate_tensor(const ExprTensor& t, const JetPoint& p) {
  MixedDTensor out(t.slots, p);
  auto env = ambient_env(p);
  EvalContext<double> ctx(env);
  for (std::size_t i = 0; i < t.data.size(); ++i) out.data()[i] = ctx.eval(t.data[i]);
  out.check_finite();
  return out;
}

// --- the ambient space ---------------------------------------------------------------------

class AmbientSpace {
 public:
  AmbientSpace(int n, ExprMat metric, double tol = 1e-10)
      : n_(n), tol_(tol), g_(std::move(metric)) {
    if (n < 2) throw AmbientError("ambient dimension must be at least 2");
    if (g_.size() != std::size_t(n))
      throw AmbientError("metric must be an n x n matrix of expressions");
    for (const auto& row : g_)
      if (row.size() != std::size_t(n))
        throw AmbientError("metric must be an n x n matrix of expressions");
    for (int a = 0; a < n; ++a)
      for (int b = a + 1; b < n; ++b)
        if (!expr_equal(g_[a][b], g_[b][a]))
          throw AmbientError("metric is not structurally symmetric at entry (" +
                             std::to_string(a + 1) + "," + std::to_string(b + 1) + ")");
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        std::set<std::string> vars;
        collect_vars(g_[a][b], vars);
        for (const auto& v : vars)
          if (!allowed_metric_var(v))
            throw AmbientError("metric entry (" + std::to_string(a + 1) + "," +
                               std::to_string(b + 1) + ") uses variable '" + v +
                               "' outside x1..x" + std::to_string(n) + ", y1_1..y1_" +
                               std::to_string(n));
      }
    build_tower();
  }

  static AmbientSpace from_strings(int n, const std::vector<std::vector<std::string>>& gs,
                                   double tol = 1e-10) {
    ExprMat m(gs.size());
    for (std::size_t i = 0; i < gs.size(); ++i)
      for (const auto& s : gs[i]) m[i].push_back(parse(s));
    return AmbientSpace(n, std::move(m), tol);
  }

  int dim() const { return n_; }
  double tolerance() const { return tol_; }

  const ExprMat& g() const { return g_; }
  const ExprMat& g_inv() const { return ginv_; }
  const Expr& g_det() const { return gdet_; }
  const ExprArr3& gamma() const { return gamma_; }
  const ExprVec& spray() const { return G_; }
  const ExprMat& M1() const { return M1_; }
  const ExprMat& M2() const { return M2_; }
  const ExprMat& N1() const { return N1_; }
  const ExprMat& N2() const { return N2_; }
  const NineExpr& canonical() const { return nine_; }

  // Berwald-type vertical coefficients B₍ⱼⱼ₎ᵃ_cb = ∂N₍ⱼ₎ᵃ_b/∂y⁽ʲ⁾ᶜ.
  ExprArr3 berwald_vertical(int j) const {
    ExprArr3 B = expr_zeros(n_, n_, n_);
    const ExprMat& N = (j == 1) ? N1_ : N2_;
    for (int a = 0; a < n_; ++a)
      for (int c = 0; c < n_; ++c)
        for (int b = 0; b < n_; ++b)
          B[a][c][b] = differentiate(N[a][b], j == 1 ? var_y1(c) : var_y2(c));
    return B;
  }

  // Frame derivatives of an arbitrary expression in (x, y¹, y²).
  Expr delta_h(const Expr& f, int c) const {
    Expr r = differentiate(f, var_x(c));
    for (int e = 0; e < n_; ++e) {
      r = sub(r, mul(N1_[e][c], differentiate(f, var_y1(e))));
      r = sub(r, mul(N2_[e][c], differentiate(f, var_y2(e))));
    }
    return r;
  }
  Expr delta_v1(const Expr& f, int c) const {
    Expr r = differentiate(f, var_y1(c));
    for (int e = 0; e < n_; ++e)
      r = sub(r, mul(N1_[e][c], differentiate(f, var_y2(e))));
    return r;
  }
  Expr del_v2(const Expr& f, int c) const { return differentiate(f, var_y2(c)); }

  void check_nondegenerate(const JetPoint& p) const {
    auto env = ambient_env(p);
    EvalContext<double> ctx(env);
    const double det = ctx.eval(gdet_);
    if (std::abs(det) <= tol_)
      throw AmbientError("metric degenerate at sample point (|det g| = " +
                         std::to_string(std::abs(det)) + ")");
  }

  // The nine families for an arbitrary vertical-coefficient provider. The
  // member `canonical()` caches the result for the Berwald default.
  NineExpr canonical_with(const VerticalProvider& provider) const {
    NineExpr D;
    // L₍₀₀₎: generalized Christoffel in the horizontal frame derivative.
    D.L[0] = christoffel_like([this](const Expr& f, int c) { return delta_h(f, c); });
    // C₍ᵢ₁₎ and C₍ᵢ₂₎ families.
    D.C1[1] = christoffel_like([this](const Expr& f, int c) { return delta_v1(f, c); });
    D.C2[2] = christoffel_like([this](const Expr& f, int c) { return del_v2(f, c); });
    ExprArr3 half_v1 = half_derivative([this](const Expr& f, int c) { return delta_v1(f, c); });
    ExprArr3 half_v2 = half_derivative([this](const Expr& f, int c) { return del_v2(f, c); });
    D.C1[0] = half_v1;
    D.C1[2] = half_v1;
    D.C2[0] = half_v2;
    D.C2[1] = half_v2;
    // L₍ⱼ₀₎ rows use the supplied vertical coefficients.
    for (int j = 1; j <= 2; ++j) {
      ExprArr3 B = provider(j);
      ExprArr3 L = expr_zeros(n_, n_, n_);
      for (int a = 0; a < n_; ++a)
        for (int b = 0; b < n_; ++b)
          for (int c = 0; c < n_; ++c) {
            Expr acc = B[a][c][b];
            Expr inner = make_const(0);
            for (int d = 0; d < n_; ++d) {
              Expr t = delta_h(g_[b][d], c);
              for (int f = 0; f < n_; ++f) {
                t = sub(t, mul(B[f][c][b], g_[f][d]));
                t = sub(t, mul(B[f][c][d], g_[b][f]));
              }
              inner = add(inner, mul(ginv_[a][d], t));
            }
            L[a][b][c] = add(acc, mul(make_const(0.5), inner));
          }
      D.L[j] = L;
    }
    return D;
  }

 private:
  int n_;
  double tol_;
  ExprMat g_, ginv_;
  Expr gdet_;
  ExprArr3 gamma_;
  ExprVec G_;
  ExprMat M1_, M2_, N1_, N2_;
  NineExpr nine_;

  bool allowed_metric_var(const std::string& v) const {
    for (int i = 0; i < n_; ++i)
      if (v == var_x(i) || v == var_y1(i)) return true;
    return false;
  }

  template <class Deriv>
  ExprArr3 christoffel_like(Deriv&& d) const {
    ExprArr3 out = expr_zeros(n_, n_, n_);
    for (int a = 0; a < n_; ++a)
      for (int b = 0; b < n_; ++b)
        for (int c = 0; c < n_; ++c) {
          Expr acc = make_const(0);
          for (int e = 0; e < n_; ++e) {
            Expr t = add(d(g_[e][c], b), d(g_[b][e], c));
            t = sub(t, d(g_[b][c], e));
            acc = add(acc, mul(ginv_[a][e], t));
          }
          out[a][b][c] = mul(make_const(0.5), acc);
        }
    return out;
  }

  template <class Deriv>
  ExprArr3 half_derivative(Deriv&& d) const {
    // ½ gᵃᵈ (derivative of g_bd in direction c)
    ExprArr3 out = expr_zeros(n_, n_, n_);
    for (int a = 0; a < n_; ++a)
      for (int b = 0; b < n_; ++b)
        for (int c = 0; c < n_; ++c) {
          Expr acc = make_const(0);
          for (int e = 0; e < n_; ++e) acc = add(acc, mul(ginv_[a][e], d(g_[b][e], c)));
          out[a][b][c] = mul(make_const(0.5), acc);
        }
    return out;
  }

  void build_tower() {
    ginv_ = inverse_expr(g_, &gdet_);

    // Christoffel symbols of the fundamental metric (plain x-derivatives).
    gamma_ = expr_zeros(n_, n_, n_);
    for (int a = 0; a < n_; ++a)
      for (int b = 0; b < n_; ++b)
        for (int c = 0; c < n_; ++c) {
          Expr acc = make_const(0);
          for (int d = 0; d < n_; ++d) {
            Expr t = add(differentiate(g_[d][c], var_x(b)),
                         differentiate(g_[b][d], var_x(c)));
            t = sub(t, differentiate(g_[b][c], var_x(d)));
            acc = add(acc, mul(ginv_[a][d], t));
          }
          gamma_[a][b][c] = mul(make_const(0.5), acc);
        }

    // Spray G^a = ½ γ^a_bc y¹ᵇ y¹ᶜ and dual coefficients.
    G_ = expr_zeros(n_);
    for (int a = 0; a < n_; ++a) {
      Expr acc = make_const(0);
      for (int b = 0; b < n_; ++b)
        for (int c = 0; c < n_; ++c)
          acc = add(acc, mul(gamma_[a][b][c], mul(make_var(var_y1(b)), make_var(var_y1(c)))));
      G_[a] = mul(make_const(0.5), acc);
    }

    M1_ = expr_zeros(n_, n_);
    for (int a = 0; a < n_; ++a)
      for (int b = 0; b < n_; ++b) M1_[a][b] = differentiate(G_[a], var_y1(b));

    // M₂ = ½ (Γ M₁ + M₁ M₁) with Γ = y¹ᵃ ∂/∂xᵃ + 2 y²ᵃ ∂/∂y¹ᵃ.
    M2_ = expr_zeros(n_, n_);
    for (int a = 0; a < n_; ++a)
      for (int b = 0; b < n_; ++b) {
        Expr gam = make_const(0);
        for (int c = 0; c < n_; ++c) {
          gam = add(gam, mul(make_var(var_y1(c)), differentiate(M1_[a][b], var_x(c))));
          gam = add(gam, mul(mul(make_const(2), make_var(var_y2(c))),
                             differentiate(M1_[a][b], var_y1(c))));
        }
        Expr mm = make_const(0);
        for (int c = 0; c < n_; ++c) mm = add(mm, mul(M1_[a][c], M1_[c][b]));
        M2_[a][b] = mul(make_const(0.5), add(gam, mm));
      }

    // Direct coefficients: N₁ = M₁, N₂ = M₂ − M₁N₁.
    N1_ = M1_;
    N2_ = expr_zeros(n_, n_);
    for (int a = 0; a < n_; ++a)
      for (int b = 0; b < n_; ++b) {
        Expr mn = make_const(0);
        for (int c = 0; c < n_; ++c) mn = add(mn, mul(M1_[a][c], N1_[c][b]));
        N2_[a][b] = sub(M2_[a][b], mn);
      }

    nine_ = canonical_with([this](int j) { return berwald_vertical(j); });
  }
};

// --- numeric operations on the space ----------------------------------------------------------

inline MixedDTensor christoffel(const AmbientSpace& sp, const JetPoint& p) {
  sp.check_nondegenerate(p);
  const std::size_t n = sp.dim();
  MixedDTensor out({{Family::Ambient, Variance::Up, n},
                    {Family::Ambient, Variance::Down, n},
                    {Family::Ambient, Variance::Down, n}},
                   p);
  auto env = ambient_env(p);
  EvalContext<double> ctx(env);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t c = 0; c < n; ++c) out(a, b, c) = ctx.eval(sp.gamma()[a][b][c]);
  out.check_finite();
  return out;
}

inline std::pair<std::vector<double>, NonlinearConnection> spray_and_dual(
    const AmbientSpace& sp, const JetPoint& p) {
  sp.check_nondegenerate(p);
  auto env = ambient_env(p);
  EvalContext<double> ctx(env);
  NonlinearConnection nc;
  nc.point = p;
  nc.M1 = eval_mat(sp.M1(), ctx);
  nc.M2 = eval_mat(sp.M2(), ctx);
  nc.N1 = eval_mat(sp.N1(), ctx);
  nc.N2 = eval_mat(sp.N2(), ctx);
  return {eval_vec(sp.spray(), ctx), nc};
}

inline AdaptedFramePair adapted_frame_pair(const AmbientSpace&, const NonlinearConnection& nc,
                                           const JetPoint&) {
  return {assemble_frame(nc.N1, nc.N2), assemble_coframe(nc.M1, nc.M2)};
}

// Transformation of a point of the bundle under a base-coordinate change
// x̃ = φ(x): first-order fibre coordinates transform by the Jacobian, and
// 2ỹ⁽²⁾ᵃ = (∂ỹ⁽¹⁾ᵃ/∂xᵇ) y⁽¹⁾ᵇ + 2 (∂ỹ⁽¹⁾ᵃ/∂y⁽¹⁾ᵇ) y⁽²⁾ᵇ.
inline JetPoint jet_transform(const std::vector<Expr>& phi, const JetPoint& p) {
  const std::size_t n = phi.size();
  if (p.x.size() != n) throw AmbientError("jet_transform: dimension mismatch");
  auto env = ambient_env(p);
  EvalContext<double> ctx(env);

  Mat<double> J(n, n);
  ExprVec y1t(n);  // ỹ⁽¹⁾ᵃ as expressions in (x, y¹)
  for (std::size_t a = 0; a < n; ++a) {
    Expr acc = make_const(0);
    for (std::size_t b = 0; b < n; ++b) {
      Expr d = differentiate(phi[a], var_x(int(b)));
      J(a, b) = ctx.eval(d);
      acc = add(acc, mul(d, make_var(var_y1(int(b)))));
    }
    y1t[a] = acc;
  }
  double detJ = 0;
  try {
    detJ = determinant(J);
  } catch (const TensorError&) {
    detJ = 0;
  }
  if (std::abs(detJ) < 1e-12) throw AmbientError("jet_transform: singular Jacobian");

  JetPoint q;
  q.x.resize(n);
  q.y1.resize(n);
  q.y2.resize(n);
  for (std::size_t a = 0; a < n; ++a) {
    q.x[a] = ctx.eval(phi[a]);
    q.y1[a] = ctx.eval(y1t[a]);
    double acc = 0;
    for (std::size_t b = 0; b < n; ++b) {
      acc += ctx.eval(differentiate(y1t[a], var_x(int(b)))) * p.y1[b];
      acc += 2.0 * ctx.eval(differentiate(y1t[a], var_y1(int(b)))) * p.y2[b];
    }
    q.y2[a] = 0.5 * acc;
  }
  return q;
}

struct NineCoefficients {
  NineEval<double> values;
  JetPoint point;
};

inline NineCoefficients canonical_connection(const AmbientSpace& sp,
                                             const NonlinearConnection&, const JetPoint& p,
                                             const VerticalProvider* provider = nullptr) {
  sp.check_nondegenerate(p);
  auto env = ambient_env(p);
  EvalContext<double> ctx(env);
  NineCoefficients out;
  out.point = p;
  if (provider) {
    NineExpr D = sp.canonical_with(*provider);
    out.values = eval_nine(D, ctx);
  } else {
    out.values = eval_nine(sp.canonical(), ctx);
  }
  return out;
}

// Covariant derivative of an expression-valued ambient tensor field in the
// h (kind = Block::H), v₁ (Block::V1) or v₂ (Block::V2) direction, with the
// linear-connection index i selecting the coefficient row. Adds one ambient
// down slot of the matching block.
inline ExprTensor covariant_derivative(const AmbientSpace& sp, const NineExpr& D,
                                       const ExprTensor& T, int i, Block kind) {
  if (i < 0 || i > 2) throw AmbientError("covariant_derivative: i must be 0, 1 or 2");
  const int n = sp.dim();
  for (const auto& s : T.slots) {
    if (s.family != Family::Ambient || s.dim != std::size_t(n))
      throw AmbientError("covariant_derivative: ambient slots only");
  }
  const ExprArr3& coef = (kind == Block::H) ? D.L[i] : (kind == Block::V1) ? D.C1[i] : D.C2[i];
  auto frame_d = [&](const Expr& f, int c) {
    if (kind == Block::H) return sp.delta_h(f, c);
    if (kind == Block::V1) return sp.delta_v1(f, c);
    return sp.del_v2(f, c);
  };

  std::vector<IndexSlot> slots = T.slots;
  slots.push_back({Family::Ambient, Variance::Down, std::size_t(n), kind});
  ExprTensor out(slots);

  const std::size_t rank = T.slots.size();
  std::vector<std::size_t> idx(rank, 0);
  const std::size_t total = T.data.size();
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t rem = flat;
    for (std::size_t s = rank; s-- > 0;) {
      idx[s] = rem % T.slots[s].dim;
      rem /= T.slots[s].dim;
    }
    for (int c = 0; c < n; ++c) {
      Expr acc = frame_d(T.data[flat], c);
      for (std::size_t s = 0; s < rank; ++s) {
        for (int d = 0; d < n; ++d) {
          auto jdx = idx;
          jdx[s] = std::size_t(d);
          const Expr& comp = T.data[T.flat(jdx)];
          if (T.slots[s].variance == Variance::Up)
            acc = add(acc, mul(coef[idx[s]][d][c], comp));
          else
            acc = sub(acc, mul(coef[d][idx[s]][c], comp));
        }
      }
      auto odx = idx;
      odx.push_back(std::size_t(c));
      out.data[out.flat(odx)] = acc;
    }
  }
  return out;
}

}  // namespace osc2
