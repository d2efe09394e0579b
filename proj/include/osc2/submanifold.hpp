// Submanifolds of the second-order bundle: prolonged embedding, moving frame
// (tangents, metric-orthonormal normals, duals), induced nonlinear connection
// with the mixed K-tensors, and the coframe-restriction decomposition that
// validates them.
#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "osc2/ambient.hpp"
#include "osc2/expr.hpp"
#include "osc2/tensor.hpp"

namespace osc2 {

struct SubmanifoldError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using ExprArr4 = std::vector<ExprArr3>;

inline ExprArr4 expr_zeros(std::size_t a, std::size_t b, std::size_t c, std::size_t d) {
  return ExprArr4(a, expr_zeros(b, c, d));
}

template <class S>
Arr4<S> eval_arr4(const ExprArr4& t, EvalContext<S>& ctx) {
  const std::size_t a = t.size();
  const std::size_t b = a ? t[0].size() : 0;
  const std::size_t c = b ? t[0][0].size() : 0;
  const std::size_t d = c ? t[0][0][0].size() : 0;
  Arr4<S> out(a, b, c, d);
  for (std::size_t i = 0; i < a; ++i)
    for (std::size_t j = 0; j < b; ++j)
      for (std::size_t k = 0; k < c; ++k)
        for (std::size_t l = 0; l < d; ++l) out(i, j, k, l) = ctx.eval(t[i][j][k][l]);
  return out;
}

// --- embedding --------------------------------------------------------------------

// x = x(u¹..uᵐ) with 1 < m < n, prolonged to the second-order bundles:
// y⁽¹⁾ᵃ = Bᵃ_α v⁽¹⁾ᵅ and 2y⁽²⁾ᵃ = (∂y⁽¹⁾ᵃ/∂uᵅ)v⁽¹⁾ᵅ + 2(∂y⁽¹⁾ᵃ/∂v⁽¹⁾ᵅ)v⁽²⁾ᵅ.
class Embedding {
 public:
  Embedding(int n, int m, ExprVec x) : n_(n), m_(m), x_(std::move(x)) {
    if (!(1 < m && m < n))
      throw SubmanifoldError("the dimensions must satisfy 1 < m < n (got m = " +
                             std::to_string(m) + ", n = " + std::to_string(n) + ")");
    if (x_.size() != std::size_t(n))
      throw SubmanifoldError("embedding needs n component expressions");
    for (int a = 0; a < n; ++a) {
      std::set<std::string> vars;
      collect_vars(x_[a], vars);
      for (const auto& v : vars) {
        bool ok = false;
        for (int al = 0; al < m; ++al) ok = ok || v == var_u(al);
        if (!ok)
          throw SubmanifoldError("embedding component " + std::to_string(a + 1) +
                                 " uses variable '" + v + "' outside u1..u" +
                                 std::to_string(m));
      }
    }

    B_ = expr_zeros(n, m);
    B2_ = expr_zeros(n, m, m);
    B3_ = expr_zeros(n, m, m, m);
    for (int a = 0; a < n; ++a)
      for (int al = 0; al < m; ++al) {
        B_[a][al] = differentiate(x_[a], var_u(al));
        for (int be = 0; be < m; ++be) {
          B2_[a][al][be] = differentiate(B_[a][al], var_u(be));
          for (int ga = 0; ga < m; ++ga)
            B3_[a][al][be][ga] = differentiate(B2_[a][al][be], var_u(ga));
        }
      }

    y1_ = expr_zeros(n);
    y2_ = expr_zeros(n);
    for (int a = 0; a < n; ++a) {
      Expr acc = make_const(0);
      for (int al = 0; al < m; ++al)
        acc = add(acc, mul(B_[a][al], make_var(var_v1(al))));
      y1_[a] = acc;
      // ½ B₂ᵃ_γα v¹ᵞ v¹ᵅ + Bᵃ_α v²ᵅ
      Expr q = make_const(0);
      for (int ga = 0; ga < m; ++ga)
        for (int al = 0; al < m; ++al)
          q = add(q, mul(B2_[a][ga][al], mul(make_var(var_v1(ga)), make_var(var_v1(al)))));
      Expr lin = make_const(0);
      for (int al = 0; al < m; ++al)
        lin = add(lin, mul(B_[a][al], make_var(var_v2(al))));
      y2_[a] = add(mul(make_const(0.5), q), lin);
    }
  }

  static Embedding from_strings(int n, int m, const std::vector<std::string>& xs) {
    ExprVec x;
    x.reserve(xs.size());
    for (const auto& s : xs) x.push_back(parse(s));
    return Embedding(n, m, std::move(x));
  }

  int ambient_dim() const { return n_; }
  int sub_dim() const { return m_; }
  const ExprVec& x() const { return x_; }
  const ExprMat& B() const { return B_; }
  const ExprArr3& B2() const { return B2_; }
  const ExprArr4& B3() const { return B3_; }
  const ExprVec& y1() const { return y1_; }
  const ExprVec& y2() const { return y2_; }

 private:
  int n_, m_;
  ExprVec x_;
  ExprMat B_;
  ExprArr3 B2_;
  ExprArr4 B3_;
  ExprVec y1_, y2_;
};

// Environment binding the submanifold coordinates and, through the
// prolongation, the ambient ones; a single evaluation context over this
// environment reaches every expression of both towers.
template <class S>
VarEnv<S> sub_environment(const Embedding& e, const std::vector<S>& u,
                          const std::vector<S>& v1, const std::vector<S>& v2) {
  const int n = e.ambient_dim(), m = e.sub_dim();
  if (int(u.size()) != m || int(v1.size()) != m || int(v2.size()) != m)
    throw SubmanifoldError("sub_environment: coordinate size mismatch");
  VarEnv<S> env;
  for (int al = 0; al < m; ++al) {
    env[var_u(al)] = u[al];
    env[var_v1(al)] = v1[al];
    env[var_v2(al)] = v2[al];
  }
  {
    EvalContext<S> ctx(env);
    std::vector<S> xs = eval_vec(e.x(), ctx);
    std::vector<S> y1s = eval_vec(e.y1(), ctx);
    std::vector<S> y2s = eval_vec(e.y2(), ctx);
    for (int a = 0; a < n; ++a) {
      env[var_x(a)] = xs[a];
      env[var_y1(a)] = y1s[a];
      env[var_y2(a)] = y2s[a];
    }
  }
  return env;
}

// Seed a first- or second-order jet environment in the 3m submanifold
// coordinates (order u, then v¹, then v²).
template <class S>
VarEnv<S> sub_jet_environment(const Embedding& e, const JetPoint& q) {
  const int m = e.sub_dim();
  std::vector<S> u(m), v1(m), v2(m);
  for (int al = 0; al < m; ++al) {
    u[al] = S::variable(q.x[al], al, 3 * m);
    v1[al] = S::variable(q.y1[al], m + al, 3 * m);
    v2[al] = S::variable(q.y2[al], 2 * m + al, 3 * m);
  }
  return sub_environment(e, u, v1, v2);
}
template <>
inline VarEnv<double> sub_jet_environment<double>(const Embedding& e, const JetPoint& q) {
  std::vector<double> u(q.x.begin(), q.x.begin() + e.sub_dim());
  std::vector<double> v1(q.y1.begin(), q.y1.begin() + e.sub_dim());
  std::vector<double> v2(q.y2.begin(), q.y2.begin() + e.sub_dim());
  return sub_environment(e, u, v1, v2);
}

// Column-pivoted Householder rank of a double matrix.
inline std::size_t numeric_rank(Mat<double> A, double tol = 1e-9) {
  const std::size_t r = A.rows, c = A.cols;
  std::vector<std::size_t> cols(c);
  for (std::size_t j = 0; j < c; ++j) cols[j] = j;
  std::size_t rank = 0;
  double first_pivot = 0;
  for (std::size_t k = 0; k < std::min(r, c); ++k) {
    // pivot column with the largest trailing norm
    double best = -1;
    std::size_t bj = k;
    for (std::size_t j = k; j < c; ++j) {
      double s = 0;
      for (std::size_t i = k; i < r; ++i) s += A(i, j) * A(i, j);
      if (s > best) {
        best = s;
        bj = j;
      }
    }
    if (bj != k)
      for (std::size_t i = 0; i < r; ++i) std::swap(A(i, k), A(i, bj));
    const double norm = std::sqrt(std::max(best, 0.0));
    if (k == 0) first_pivot = norm;
    if (norm <= tol * std::max(1.0, first_pivot)) break;
    ++rank;
    // reflect the trailing block
    std::vector<double> v(r - k);
    v[0] = A(k, k) + (A(k, k) >= 0 ? norm : -norm);
    for (std::size_t i = k + 1; i < r; ++i) v[i - k] = A(i, k);
    double vtv = 0;
    for (double t : v) vtv += t * t;
    if (vtv == 0) continue;
    for (std::size_t j = k; j < c; ++j) {
      double dot = 0;
      for (std::size_t i = k; i < r; ++i) dot += v[i - k] * A(i, j);
      const double f = 2 * dot / vtv;
      for (std::size_t i = k; i < r; ++i) A(i, j) -= f * v[i - k];
    }
  }
  return rank;
}

// Numeric prolongation of a submanifold point to an ambient point, with the
// rank condition checked at u.
inline JetPoint prolong(const Embedding& e, const JetPoint& q) {
  auto env = sub_jet_environment<double>(e, q);
  EvalContext<double> ctx(env);
  Mat<double> B = eval_mat(e.B(), ctx);
  if (numeric_rank(B) != std::size_t(e.sub_dim()))
    throw SubmanifoldError("embedding is rank deficient at the sample point");
  JetPoint p;
  p.x = eval_vec(e.x(), ctx);
  p.y1 = eval_vec(e.y1(), ctx);
  p.y2 = eval_vec(e.y2(), ctx);
  return p;
}

// Jacobian of the full prolongation map (u, v¹, v²) → (x, y⁽¹⁾, y⁽²⁾),
// a 3n×3m block matrix used by the coframe-restriction check.
template <class S>
Mat<S> prolongation_jacobian(const Embedding& e, EvalContext<S>& ctx) {
  const int n = e.ambient_dim(), m = e.sub_dim();
  Mat<S> P(3 * n, 3 * m);
  for (int a = 0; a < n; ++a)
    for (int al = 0; al < m; ++al) {
      P(a, al) = ctx.eval(e.B()[a][al]);
      P(n + a, al) = ctx.eval(differentiate(e.y1()[a], var_u(al)));
      P(n + a, m + al) = ctx.eval(differentiate(e.y1()[a], var_v1(al)));
      P(2 * n + a, al) = ctx.eval(differentiate(e.y2()[a], var_u(al)));
      P(2 * n + a, m + al) = ctx.eval(differentiate(e.y2()[a], var_v1(al)));
      P(2 * n + a, 2 * m + al) = ctx.eval(differentiate(e.y2()[a], var_v2(al)));
    }
  return P;
}

// --- moving frame ------------------------------------------------------------------

template <class S>
struct MovingFrame {
  Mat<S> Bt;                        // n×m tangents Bᵃ_α = ∂xᵃ/∂uᵅ
  Mat<S> Bn;                        // n×(n−m) unit normals Bᵃ_ᾱ
  Mat<S> dual_t;                    // m×n     B^α_a
  Mat<S> dual_n;                    // (n−m)×n B^ᾱ_a
  std::vector<std::size_t> pivots;  // canonical axes seeding the normals
};

// Builds the moving frame at one point from the evaluated metric and tangent
// matrix. Normals come from metric Gram-Schmidt over canonical basis vectors,
// pivoting on the largest orthogonal residual; passing `frozen` replays a
// previously chosen pivot order (used when probing nearby points, so that the
// frame stays a smooth function), and degenerating pivots are detected rather
// than silently switched.
template <class S>
MovingFrame<S> moving_frame(const Mat<S>& g, const Mat<S>& B,
                            const std::vector<std::size_t>* frozen = nullptr,
                            double breakdown_tol = 1e-8, double degeneration_ratio = 0.1) {
  const std::size_t n = g.rows, m = B.cols;
  MovingFrame<S> F;
  F.Bt = B;
  F.Bn = Mat<S>(n, n - m);

  Mat<S> Gt(m, m);  // induced metric on the tangent span
  for (std::size_t al = 0; al < m; ++al)
    for (std::size_t be = 0; be < m; ++be) {
      S acc(0.0);
      for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b) acc += g(a, b) * B(a, al) * B(b, be);
      Gt(al, be) = acc;
    }
  std::optional<LU<S>> gt_lu;
  try {
    gt_lu.emplace(Gt);
  } catch (const TensorError&) {
    throw SubmanifoldError("moving_frame: induced metric on the tangent span is singular");
  }

  auto g_dot = [&](const std::vector<S>& x, const std::vector<S>& y) {
    S acc(0.0);
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = 0; b < n; ++b) acc += g(a, b) * x[a] * y[b];
    return acc;
  };

  std::vector<bool> used(n, false);
  auto residual_of = [&](std::size_t k, std::size_t have_normals) {
    std::vector<S> r(n, S(0.0));
    r[k] = S(1.0);
    // remove the tangent component: r -= B · Gt⁻¹ Bᵀ g r
    std::vector<S> rhs(m, S(0.0));
    for (std::size_t al = 0; al < m; ++al)
      for (std::size_t a = 0; a < n; ++a) rhs[al] += B(a, al) * g(a, k);
    auto c = gt_lu->solve(rhs);
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t al = 0; al < m; ++al) r[a] -= B(a, al) * c[al];
    // remove components along the normals found so far (unit vectors)
    for (std::size_t j = 0; j < have_normals; ++j) {
      std::vector<S> col(n);
      for (std::size_t a = 0; a < n; ++a) col[a] = F.Bn(a, j);
      S proj = g_dot(r, col);
      for (std::size_t a = 0; a < n; ++a) r[a] -= proj * col[a];
    }
    return r;
  };

  for (std::size_t j = 0; j < n - m; ++j) {
    double best_score = -1;
    std::size_t best_k = 0;
    std::vector<S> best_r;
    for (std::size_t k = 0; k < n; ++k) {
      if (used[k]) continue;
      auto r = residual_of(k, j);
      const double score = std::abs(value(g_dot(r, r)));
      if (score > best_score) {
        best_score = score;
        best_k = k;
        best_r = std::move(r);
      }
    }
    std::size_t pick = best_k;
    std::vector<S> r = std::move(best_r);
    if (frozen) {
      if (j >= frozen->size()) throw SubmanifoldError("moving_frame: frozen pivot list too short");
      pick = (*frozen)[j];
      if (pick >= n || used[pick]) throw SubmanifoldError("moving_frame: invalid frozen pivot");
      r = residual_of(pick, j);
      const double score = std::abs(value(g_dot(r, r)));
      if (score < degeneration_ratio * best_score)
        throw SubmanifoldError(
            "moving_frame: frozen pivot degenerated (the frame would switch branch)");
    }
    const S norm2 = g_dot(r, r);
    if (std::abs(value(norm2)) < breakdown_tol)
      throw SubmanifoldError("moving_frame: Gram-Schmidt breakdown (residual too small)");
    if (value(norm2) < 0)
      throw SubmanifoldError("moving_frame: metric is not positive on the normal complement");
    S inv_norm = S(1.0) / sqrt(norm2);
    for (std::size_t a = 0; a < n; ++a) F.Bn(a, j) = r[a] * inv_norm;
    used[pick] = true;
    F.pivots.push_back(pick);
  }

  // duals: rows of [B_α | B_ᾱ]⁻¹
  Mat<S> full(n, n);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t al = 0; al < m; ++al) full(a, al) = B(a, al);
    for (std::size_t j = 0; j < n - m; ++j) full(a, m + j) = F.Bn(a, j);
  }
  Mat<S> inv = inverse(full);
  F.dual_t = Mat<S>(m, n);
  F.dual_n = Mat<S>(n - m, n);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t al = 0; al < m; ++al) F.dual_t(al, a) = inv(al, a);
    for (std::size_t j = 0; j < n - m; ++j) F.dual_n(j, a) = inv(m + j, a);
  }
  return F;
}

// Replace the normal frame by B̄·A for A ∈ O(n−m) and rebuild the duals;
// the normal frame is determined only up to such transformations.
template <class S>
MovingFrame<S> apply_gauge(const MovingFrame<S>& F, const Mat<double>& A) {
  const std::size_t n = F.Bt.rows, m = F.Bt.cols, r = n - m;
  MovingFrame<S> G = F;
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t j = 0; j < r; ++j) {
      S acc(0.0);
      for (std::size_t k = 0; k < r; ++k) acc += F.Bn(a, k) * S(A(k, j));
      G.Bn(a, j) = acc;
    }
  Mat<S> full(n, n);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t al = 0; al < m; ++al) full(a, al) = G.Bt(a, al);
    for (std::size_t j = 0; j < r; ++j) full(a, m + j) = G.Bn(a, j);
  }
  Mat<S> inv = inverse(full);
  G.dual_t = Mat<S>(m, n);
  G.dual_n = Mat<S>(r, n);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t al = 0; al < m; ++al) G.dual_t(al, a) = inv(al, a);
    for (std::size_t j = 0; j < r; ++j) G.dual_n(j, a) = inv(m + j, a);
  }
  return G;
}

// --- induced nonlinear connection -----------------------------------------------------

template <class S>
struct InducedNonlinear {
  Mat<S> M1, M2;  // dual coefficients M̌₍₁₎, M̌₍₂₎ (m×m)
  Mat<S> N1, N2;  // direct coefficients Ň₍₁₎, Ň₍₂₎
  Mat<S> K1, K2;  // mixed tensors K₍₁₎, K₍₂₎ ((n−m)×m)
};

// The induced coefficients arise from decomposing the restricted ambient
// coframe in the moving frame:
//   M̌₍₁₎ = B^α(B₀ + M₁B),         K₍₁₎ = B^ᾱ(B₀ + M₁B),
//   M̌₍₂₎ = B^α·W,                 K₍₂₎ = B^ᾱ·W − K₍₁₎M̌₍₁₎,
// with W = ½B₃(v¹,v¹) + B₂(v²) + M₁B₀ + M₂B and B₀ᵃ_β = B₂ᵃ_γβ v¹ᵞ.
template <class S>
InducedNonlinear<S> induced_nonlinear(const MovingFrame<S>& F, const Mat<S>& M1a,
                                      const Mat<S>& M2a, const Arr3<S>& B2,
                                      const Arr4<S>& B3, const std::vector<S>& v1,
                                      const std::vector<S>& v2) {
  const std::size_t n = F.Bt.rows, m = F.Bt.cols;

  Mat<S> B0(n, m);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t be = 0; be < m; ++be) {
      S acc(0.0);
      for (std::size_t ga = 0; ga < m; ++ga) acc += B2(a, ga, be) * v1[ga];
      B0(a, be) = acc;
    }

  Mat<S> H(n, m);  // B₀ + M₁B
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t be = 0; be < m; ++be) {
      S acc = B0(a, be);
      for (std::size_t b = 0; b < n; ++b) acc += M1a(a, b) * F.Bt(b, be);
      H(a, be) = acc;
    }

  Mat<S> W(n, m);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t be = 0; be < m; ++be) {
      S acc(0.0);
      for (std::size_t de = 0; de < m; ++de) {
        for (std::size_t ga = 0; ga < m; ++ga)
          acc += S(0.5) * B3(a, de, ga, be) * v1[de] * v1[ga];
        acc += B2(a, de, be) * v2[de];
      }
      for (std::size_t b = 0; b < n; ++b) {
        acc += M1a(a, b) * B0(b, be);
        acc += M2a(a, b) * F.Bt(b, be);
      }
      W(a, be) = acc;
    }

  InducedNonlinear<S> I;
  I.M1 = matmul(F.dual_t, H);
  I.K1 = matmul(F.dual_n, H);
  I.M2 = matmul(F.dual_t, W);
  Mat<S> K2raw = matmul(F.dual_n, W);
  Mat<S> K1M1 = matmul(I.K1, I.M1);
  I.K2 = Mat<S>(n - m, m);
  for (std::size_t j = 0; j < n - m; ++j)
    for (std::size_t be = 0; be < m; ++be) I.K2(j, be) = K2raw(j, be) - K1M1(j, be);
  I.N1 = I.M1;
  Mat<S> M1N1 = matmul(I.M1, I.N1);
  I.N2 = Mat<S>(m, m);
  for (std::size_t al = 0; al < m; ++al)
    for (std::size_t be = 0; be < m; ++be) I.N2(al, be) = I.M2(al, be) - M1N1(al, be);
  return I;
}

// Max-norm residual of the coframe-restriction decomposition: the ambient
// coframe pulled back through the prolongation must equal
//   dxᵃ   = Bᵃ_α duᵅ
//   δy⁽¹⁾ᵃ = Bᵃ_α δv⁽¹⁾ᵅ + Bᵃ_ᾱ K₍₁₎^ᾱ_α duᵅ
//   δy⁽²⁾ᵃ = Bᵃ_α δv⁽²⁾ᵅ + Bᵃ_ᾱ K₍₁₎^ᾱ_α δv⁽¹⁾ᵅ + Bᵃ_ᾱ K₍₂₎^ᾱ_α duᵅ
// expressed back in the natural submanifold cobasis.
inline double restriction_residual(const Mat<double>& ambient_coframe,
                                   const Mat<double>& P, const MovingFrame<double>& F,
                                   const InducedNonlinear<double>& I) {
  const std::size_t n = F.Bt.rows, m = F.Bt.cols;
  Mat<double> lhs = matmul(ambient_coframe, P);

  Mat<double> R(3 * n, 3 * m);  // block coefficients in (du, δv¹, δv²)
  Mat<double> BnK1 = matmul(F.Bn, I.K1);
  Mat<double> BnK2 = matmul(F.Bn, I.K2);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t al = 0; al < m; ++al) {
      R(a, al) = F.Bt(a, al);
      R(n + a, al) = BnK1(a, al);
      R(n + a, m + al) = F.Bt(a, al);
      R(2 * n + a, al) = BnK2(a, al);
      R(2 * n + a, m + al) = BnK1(a, al);
      R(2 * n + a, 2 * m + al) = F.Bt(a, al);
    }
  Mat<double> rhs = matmul(R, assemble_coframe(I.M1, I.M2));

  double res = 0;
  for (std::size_t i = 0; i < lhs.rows; ++i)
    for (std::size_t j = 0; j < lhs.cols; ++j)
      res = std::max(res, std::abs(lhs(i, j) - rhs(i, j)));
  return res;
}

// Point transformation under a submanifold chart change ũ = φ(u); same
// second-order rule as the ambient one.
inline JetPoint sub_jet_transform(const std::vector<Expr>& phi_u, const JetPoint& q) {
  const std::size_t m = phi_u.size();
  std::map<std::string, Expr> ren;
  for (std::size_t i = 0; i < m; ++i) ren[var_u(int(i))] = make_var(var_x(int(i)));
  std::vector<Expr> phi_x;
  phi_x.reserve(m);
  for (const auto& e : phi_u) phi_x.push_back(substitute(e, ren));
  try {
    return jet_transform(phi_x, q);
  } catch (const AmbientError& err) {
    throw SubmanifoldError(std::string("sub chart change: ") + err.what());
  }
}

}  // namespace osc2
