// Ambient second-order geometry: Christoffel symbols, spray, nonlinear
// connection, adapted frames, canonical linear connection, covariant
// derivatives.
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "osc2/ambient.hpp"

using namespace osc2;

namespace {

AmbientSpace euclidean2() {
  return AmbientSpace::from_strings(2, {{"1", "0"}, {"0", "1"}});
}
AmbientSpace polar2() {
  // g = diag(1, (x1)^2): the Euclidean plane in polar coordinates.
  return AmbientSpace::from_strings(2, {{"1", "0"}, {"0", "x1^2"}});
}
AmbientSpace finsler3() {
  // A y¹-dependent metric so the v₁ coefficient families are nonzero.
  return AmbientSpace::from_strings(
      3, {{"1 + y1_2^2", "0", "0"}, {"0", "1 + x1^2", "0"}, {"0", "0", "1"}});
}

double max_abs_diff(const Mat<double>& A, const Mat<double>& B) {
  double m = 0;
  for (std::size_t i = 0; i < A.rows; ++i)
    for (std::size_t j = 0; j < A.cols; ++j) m = std::max(m, std::abs(A(i, j) - B(i, j)));
  return m;
}

}  // namespace

TEST_CASE("space construction validates the metric") {
  CHECK_THROWS_AS(AmbientSpace::from_strings(2, {{"1", "x1"}, {"x2", "1"}}), AmbientError);
  CHECK_THROWS_AS(AmbientSpace::from_strings(2, {{"1", "0"}, {"0", "y2_1"}}), AmbientError);
  CHECK_THROWS_AS(AmbientSpace::from_strings(2, {{"1", "0"}, {"0", "u1"}}), AmbientError);
  auto sp = polar2();
  JetPoint degenerate{{0.0, 1.0}, {0, 0}, {0, 0}};
  CHECK_THROWS_AS(christoffel(sp, degenerate), AmbientError);
}

TEST_CASE("Christoffel symbols vanish on the Euclidean plane") {
  auto sp = euclidean2();
  JetPoint p{{0.3, -0.7}, {1.0, 2.0}, {0.1, 0.0}};
  auto gam = christoffel(sp, p);
  CHECK(gam.max_abs() == 0.0);
}

TEST_CASE("Christoffel symbols of the polar metric match hand values") {
  auto sp = polar2();
  JetPoint p{{2.0, 0.5}, {1.0, 1.0}, {0.0, 0.0}};
  auto gam = christoffel(sp, p);
  CHECK_THAT(gam(0, 1, 1), Catch::Matchers::WithinAbs(-2.0, 1e-14));
  CHECK_THAT(gam(1, 0, 1), Catch::Matchers::WithinAbs(0.5, 1e-14));
  CHECK_THAT(gam(1, 1, 0), Catch::Matchers::WithinAbs(0.5, 1e-14));
  double rest = 0;
  for (std::size_t a = 0; a < 2; ++a)
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t c = 0; c < 2; ++c)
        if (!((a == 0 && b == 1 && c == 1) || (a == 1 && b + c == 1)))
          rest = std::max(rest, std::abs(gam(a, b, c)));
  CHECK(rest == 0.0);

  // symmetry holds exactly for any metric
  auto spf = finsler3();
  JetPoint q{{0.4, 1.2, -0.3}, {0.8, -0.5, 1.1}, {0.2, 0.0, -0.6}};
  auto gf = christoffel(spf, q);
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = 0; b < 3; ++b)
      for (std::size_t c = 0; c < 3; ++c)
        CHECK(gf(a, b, c) == gf(a, c, b));
}

TEST_CASE("Christoffel symbols match a finite-difference evaluation of their formula") {
  auto sp = polar2();
  JetPoint p{{1.7, 0.4}, {0.6, -0.9}, {0.0, 0.2}};
  auto gam = christoffel(sp, p);
  auto env = ambient_env(p);
  EvalContext<double> ctx(env);
  auto ginv = eval_mat(sp.g_inv(), ctx);
  auto g_at = [&](std::size_t r, std::size_t c) {
    return [&sp, r, c](const JetPoint& q) {
      auto e = ambient_env(q);
      EvalContext<double> cx(e);
      return cx.eval(sp.g()[r][c]);
    };
  };
  for (std::size_t a = 0; a < 2; ++a)
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t c = 0; c < 2; ++c) {
        double acc = 0;
        for (std::size_t d = 0; d < 2; ++d) {
          const double t = finite_difference(g_at(d, c), p, Coord::X, b, 1e-6) +
                           finite_difference(g_at(b, d), p, Coord::X, c, 1e-6) -
                           finite_difference(g_at(b, c), p, Coord::X, d, 1e-6);
          acc += 0.5 * ginv(a, d) * t;
        }
        CHECK_THAT(gam(a, b, c), Catch::Matchers::WithinAbs(acc, 1e-7));
      }
}

TEST_CASE("spray and dual coefficients: Euclidean space is flat") {
  auto sp = euclidean2();
  JetPoint p{{0.1, 0.2}, {1.5, -2.0}, {0.3, 0.4}};
  auto [G, nc] = spray_and_dual(sp, p);
  CHECK(G[0] == 0.0);
  CHECK(G[1] == 0.0);
  CHECK(max_abs_diff(nc.M1, Mat<double>(2, 2)) == 0.0);
  CHECK(max_abs_diff(nc.M2, Mat<double>(2, 2)) == 0.0);
  CHECK(max_abs_diff(nc.N2, Mat<double>(2, 2)) == 0.0);
}

TEST_CASE("spray and dual coefficients of the polar metric at a frozen point") {
  auto sp = polar2();
  JetPoint p{{2.0, 0.5}, {1.0, 1.0}, {0.0, 0.0}};
  auto [G, nc] = spray_and_dual(sp, p);
  CHECK_THAT(G[0], Catch::Matchers::WithinAbs(-1.0, 1e-14));
  CHECK_THAT(G[1], Catch::Matchers::WithinAbs(0.5, 1e-14));
  CHECK_THAT(nc.M1(0, 0), Catch::Matchers::WithinAbs(0.0, 1e-14));
  CHECK_THAT(nc.M1(0, 1), Catch::Matchers::WithinAbs(-2.0, 1e-14));
  CHECK_THAT(nc.M1(1, 0), Catch::Matchers::WithinAbs(0.5, 1e-14));
  CHECK_THAT(nc.M1(1, 1), Catch::Matchers::WithinAbs(0.5, 1e-14));

  // N₂ = M₂ − M₁², with M₁² = [[−1,−1],[0.25,−0.75]]
  Mat<double> M1sq = matmul(nc.M1, nc.M1);
  CHECK_THAT(M1sq(0, 0), Catch::Matchers::WithinAbs(-1.0, 1e-14));
  CHECK_THAT(M1sq(0, 1), Catch::Matchers::WithinAbs(-1.0, 1e-14));
  CHECK_THAT(M1sq(1, 0), Catch::Matchers::WithinAbs(0.25, 1e-14));
  CHECK_THAT(M1sq(1, 1), Catch::Matchers::WithinAbs(-0.75, 1e-14));
  auto [N1, N2] = direct_coefficients(nc.M1, nc.M2);
  CHECK(max_abs_diff(N1, nc.M1) == 0.0);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      CHECK_THAT(N2(i, j), Catch::Matchers::WithinAbs(nc.M2(i, j) - M1sq(i, j), 1e-14));
}

TEST_CASE("spray derivative in a fibre direction reproduces the dual coefficient") {
  auto sp = polar2();
  JetPoint p{{2.0, 0.5}, {1.0, 1.0}, {0.0, 0.0}};
  auto G0 = [&sp](const JetPoint& q) {
    auto e = ambient_env(q);
    EvalContext<double> cx(e);
    return cx.eval(sp.spray()[0]);
  };
  auto [G, nc] = spray_and_dual(sp, p);
  CHECK_THAT(finite_difference(G0, p, Coord::Y1, 1, 1e-5),
             Catch::Matchers::WithinAbs(nc.M1(0, 1), 1e-6));
}

TEST_CASE("spray is quadratic and dual coefficients linear in the fibre for Riemannian metrics") {
  auto sp = polar2();
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> d(-1, 1);
  for (int t = 0; t < 5; ++t) {
    JetPoint p{{1.5 + d(rng), d(rng)}, {d(rng), d(rng)}, {d(rng), d(rng)}};
    JetPoint ps = p;
    const double lam = 3.0;
    for (auto& v : ps.y1) v *= lam;
    auto [G, nc] = spray_and_dual(sp, p);
    auto [Gs, ncs] = spray_and_dual(sp, ps);
    for (int a = 0; a < 2; ++a)
      CHECK_THAT(Gs[a], Catch::Matchers::WithinAbs(lam * lam * G[a], 1e-10));
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 2; ++j)
        CHECK_THAT(ncs.M1(i, j), Catch::Matchers::WithinAbs(lam * nc.M1(i, j), 1e-10));
  }
}

TEST_CASE("adapted frame and coframe are dual") {
  auto sp = polar2();
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> d(-1, 1);

  // zero connection -> identity matrices
  NonlinearConnection zero{Mat<double>(2, 2), Mat<double>(2, 2), Mat<double>(2, 2),
                           Mat<double>(2, 2), JetPoint{}};
  auto idpair = adapted_frame_pair(sp, zero, JetPoint{});
  CHECK(max_abs_diff(idpair.frame, Mat<double>::identity(6)) == 0.0);
  CHECK(max_abs_diff(idpair.coframe, Mat<double>::identity(6)) == 0.0);

  for (int t = 0; t < 20; ++t) {
    JetPoint p{{1.2 + 2.0 * std::abs(d(rng)), d(rng)}, {d(rng), d(rng)}, {d(rng), d(rng)}};
    auto [G, nc] = spray_and_dual(sp, p);
    auto fp = adapted_frame_pair(sp, nc, p);
    CHECK_THAT(determinant(fp.frame), Catch::Matchers::WithinAbs(1.0, 1e-12));
    auto I = matmul(fp.coframe, fp.frame);
    CHECK(max_abs_diff(I, Mat<double>::identity(6)) < 1e-12);
  }
}

TEST_CASE("point transformation under a base chart change") {
  // identity map fixes everything
  std::vector<Expr> id = {parse("x1"), parse("x2")};
  JetPoint p{{2.0, 1.0}, {1.0, 0.0}, {3.0, 1.0}};
  auto q = jet_transform(id, p);
  CHECK(q == p);

  // linear maps act blockwise
  std::vector<Expr> lin = {parse("2*x1 - x2"), parse("x1 + x2")};
  auto ql = jet_transform(lin, p);
  CHECK_THAT(ql.y1[0], Catch::Matchers::WithinAbs(2.0 * 1.0 - 0.0, 1e-14));
  CHECK_THAT(ql.y2[0], Catch::Matchers::WithinAbs(2.0 * 3.0 - 1.0, 1e-14));
  CHECK_THAT(ql.y2[1], Catch::Matchers::WithinAbs(3.0 + 1.0, 1e-14));

  // frozen quadratic example
  std::vector<Expr> quad = {parse("x1^2"), parse("x2")};
  auto qq = jet_transform(quad, p);
  CHECK_THAT(qq.x[0], Catch::Matchers::WithinAbs(4.0, 1e-14));
  CHECK_THAT(qq.y1[0], Catch::Matchers::WithinAbs(4.0, 1e-14));
  CHECK_THAT(qq.y1[1], Catch::Matchers::WithinAbs(0.0, 1e-14));
  CHECK_THAT(qq.y2[0], Catch::Matchers::WithinAbs(13.0, 1e-14));
  CHECK_THAT(qq.y2[1], Catch::Matchers::WithinAbs(1.0, 1e-14));

  // composing two transformations agrees with transforming by the composition
  std::vector<Expr> psi = {parse("x1^2"), parse("x1 + x2")};
  std::map<std::string, Expr> by_quad{{"x1", quad[0]}, {"x2", quad[1]}};
  std::vector<Expr> comp = {substitute(psi[0], by_quad), substitute(psi[1], by_quad)};
  auto two_step = jet_transform(psi, jet_transform(quad, p));
  auto one_step = jet_transform(comp, p);
  for (int a = 0; a < 2; ++a) {
    CHECK_THAT(two_step.x[a], Catch::Matchers::WithinAbs(one_step.x[a], 1e-10));
    CHECK_THAT(two_step.y1[a], Catch::Matchers::WithinAbs(one_step.y1[a], 1e-10));
    CHECK_THAT(two_step.y2[a], Catch::Matchers::WithinAbs(one_step.y2[a], 1e-10));
  }

  std::vector<Expr> singular = {parse("x1"), parse("x1")};
  CHECK_THROWS_AS(jet_transform(singular, p), AmbientError);
}

TEST_CASE("canonical connection on Euclidean space vanishes") {
  auto sp = euclidean2();
  JetPoint p{{0.3, 0.1}, {1.0, -1.0}, {0.5, 0.2}};
  auto [G, nc] = spray_and_dual(sp, p);
  auto D = canonical_connection(sp, nc, p);
  for (int i = 0; i < 3; ++i)
    for (std::size_t a = 0; a < 2; ++a)
      for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t c = 0; c < 2; ++c) {
          CHECK(D.values.L[i](a, b, c) == 0.0);
          CHECK(D.values.C1[i](a, b, c) == 0.0);
          CHECK(D.values.C2[i](a, b, c) == 0.0);
        }
}

TEST_CASE("canonical connection symmetries and vanishing v2 families") {
  auto sp = finsler3();
  JetPoint p{{0.4, 1.2, -0.3}, {0.8, -0.5, 1.1}, {0.2, 0.0, -0.6}};
  auto [G, nc] = spray_and_dual(sp, p);
  auto D = canonical_connection(sp, nc, p);
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = 0; b < 3; ++b)
      for (std::size_t c = 0; c < 3; ++c) {
        CHECK_THAT(D.values.L[0](a, b, c),
                   Catch::Matchers::WithinAbs(D.values.L[0](a, c, b), 1e-13));
        CHECK_THAT(D.values.C1[1](a, b, c),
                   Catch::Matchers::WithinAbs(D.values.C1[1](a, c, b), 1e-13));
        for (int i = 0; i < 3; ++i)
          CHECK(D.values.C2[i](a, b, c) == 0.0);  // g has no y⁽²⁾ dependence
      }
  // the v₁ families are genuinely nonzero for this metric
  double c1max = 0;
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = 0; b < 3; ++b)
      for (std::size_t c = 0; c < 3; ++c)
        c1max = std::max(c1max, std::abs(D.values.C1[0](a, b, c)));
  CHECK(c1max > 0.01);
}

TEST_CASE("metric compatibility of the canonical connection") {
  auto check_compat = [](const AmbientSpace& sp, const JetPoint& p) {
    ExprTensor g({{Family::Ambient, Variance::Down, std::size_t(sp.dim())},
                  {Family::Ambient, Variance::Down, std::size_t(sp.dim())}});
    for (std::size_t a = 0; a < std::size_t(sp.dim()); ++a)
      for (std::size_t b = 0; b < std::size_t(sp.dim()); ++b)
        g.at({a, b}) = sp.g()[a][b];
    auto h0 = covariant_derivative(sp, sp.canonical(), g, 0, Block::H);
    auto v1 = covariant_derivative(sp, sp.canonical(), g, 1, Block::V1);
    auto v2 = covariant_derivative(sp, sp.canonical(), g, 2, Block::V2);
    CHECK(evaluate_tensor(h0, p).max_abs() < 1e-10);
    CHECK(evaluate_tensor(v1, p).max_abs() < 1e-10);
    CHECK(evaluate_tensor(v2, p).max_abs() < 1e-10);
  };
  check_compat(polar2(), JetPoint{{1.7, 0.4}, {0.6, -0.9}, {0.0, 0.2}});
  check_compat(finsler3(), JetPoint{{0.4, 1.2, -0.3}, {0.8, -0.5, 1.1}, {0.2, 0.0, -0.6}});
}

TEST_CASE("covariant derivative of a scalar is the frame derivative") {
  auto sp = polar2();
  ExprTensor f(std::vector<IndexSlot>{});
  f.data[0] = parse("x1*y1_2 + sin(x2)");
  auto df = covariant_derivative(sp, sp.canonical(), f, 0, Block::H);
  JetPoint p{{1.3, 0.2}, {0.4, 1.1}, {-0.2, 0.5}};
  auto num = evaluate_tensor(df, p);
  auto env = ambient_env(p);
  EvalContext<double> ctx(env);
  for (int c = 0; c < 2; ++c)
    CHECK_THAT(num(c), Catch::Matchers::WithinAbs(ctx.eval(sp.delta_h(f.data[0], c)), 1e-13));
}

TEST_CASE("covariant derivative satisfies the Leibniz rule") {
  auto sp = finsler3();
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> d(-1, 1);
  auto rand_poly = [&] {
    // low-degree polynomial in x, y¹, y²
    Expr e = make_const(d(rng));
    for (int i = 0; i < 3; ++i) {
      e = add(e, mul(make_const(d(rng)), make_var(var_x(i))));
      e = add(e, mul(make_const(d(rng)), mul(make_var(var_y1(i)), make_var(var_x(i)))));
      e = add(e, mul(make_const(d(rng)), make_var(var_y2(i))));
    }
    return e;
  };
  ExprTensor S({{Family::Ambient, Variance::Up, 3}});
  ExprTensor T({{Family::Ambient, Variance::Down, 3}});
  for (std::size_t a = 0; a < 3; ++a) {
    S.at({a}) = rand_poly();
    T.at({a}) = rand_poly();
  }
  ExprTensor P({{Family::Ambient, Variance::Up, 3}, {Family::Ambient, Variance::Down, 3}});
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = 0; b < 3; ++b) P.at({a, b}) = mul(S.at({a}), T.at({b}));

  JetPoint p{{0.4, 1.2, -0.3}, {0.8, -0.5, 1.1}, {0.2, 0.0, -0.6}};
  for (Block kind : {Block::H, Block::V1, Block::V2}) {
    const int i = kind == Block::H ? 0 : kind == Block::V1 ? 1 : 2;
    auto dP = evaluate_tensor(covariant_derivative(sp, sp.canonical(), P, i, kind), p);
    auto dS = evaluate_tensor(covariant_derivative(sp, sp.canonical(), S, i, kind), p);
    auto dT = evaluate_tensor(covariant_derivative(sp, sp.canonical(), T, i, kind), p);
    auto Sv = evaluate_tensor(S, p);
    auto Tv = evaluate_tensor(T, p);
    for (std::size_t a = 0; a < 3; ++a)
      for (std::size_t b = 0; b < 3; ++b)
        for (std::size_t c = 0; c < 3; ++c)
          CHECK_THAT(dP(a, b, c),
                     Catch::Matchers::WithinAbs(dS(a, c) * Tv(b) + Sv(a) * dT(b, c), 1e-9));
  }
}

TEST_CASE("Christoffel symbols are not tensorial under quadratic chart changes") {
  // Euclidean metric; chart x̃1 = x1 + ½·0.7·x2², x̃2 = x2. Pulling the flat
  // metric back gives g̃ with nonzero Christoffel symbols, while the tensor
  // transformation of γ = 0 stays zero.
  const double c = 0.7;
  auto tilde = AmbientSpace::from_strings(
      2, {{"1", "-0.7*x2"}, {"-0.7*x2", "1 + 0.49*x2^2"}});
  JetPoint pt{{0.4, 1.1}, {0.3, -0.2}, {0.0, 0.0}};
  auto gam = christoffel(tilde, pt);
  CHECK(gam.max_abs() > 1e-3);
  CHECK_THAT(gam(0, 1, 1), Catch::Matchers::WithinAbs(-c, 1e-12));

  // ...whereas the metric itself is tensorial: pushing the Euclidean metric
  // through the chart change reproduces g̃.
  auto flat = euclidean2();
  // original-chart point corresponding to pt: x1 = x̃1 − ½c x̃2², x2 = x̃2
  JetPoint p0{{0.4 - 0.5 * c * 1.1 * 1.1, 1.1}, {0.0, 0.0}, {0.0, 0.0}};
  MixedDTensor g0({{Family::Ambient, Variance::Down, 2},
                   {Family::Ambient, Variance::Down, 2}},
                  p0);
  g0(0, 0) = g0(1, 1) = 1.0;
  Mat<double> J(2, 2);  // ∂x̃/∂x at p0
  J(0, 0) = 1.0;
  J(0, 1) = c * p0.x[1];
  J(1, 1) = 1.0;
  auto gt = transform(g0, {J, J});
  auto env = ambient_env(pt);
  EvalContext<double> ctx(env);
  auto gtilde = eval_mat(tilde.g(), ctx);
  for (std::size_t a = 0; a < 2; ++a)
    for (std::size_t b = 0; b < 2; ++b)
      CHECK_THAT(gt(a, b), Catch::Matchers::WithinAbs(gtilde(a, b), 1e-9));
}
