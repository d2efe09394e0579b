// Commutator coefficient extraction and the identity checks built on it.
#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "osc2/identities.hpp"

using namespace osc2;

namespace {

AmbientSpace euclidean(int n) {
  std::vector<std::vector<std::string>> gs(n, std::vector<std::string>(n, "0"));
  for (int i = 0; i < n; ++i) gs[i][i] = "1";
  return AmbientSpace::from_strings(n, gs);
}
AmbientSpace sphere_block3() {
  return AmbientSpace::from_strings(3, {{"1", "0", "0"}, {"0", "sin(x1)^2", "0"}, {"0", "0", "1"}});
}
AmbientSpace polar3() {
  return AmbientSpace::from_strings(3, {{"1", "0", "0"}, {"0", "x1^2", "0"}, {"0", "0", "1"}});
}
AmbientSpace finsler3() {
  return AmbientSpace::from_strings(
      3, {{"1 + y1_2^2", "0", "0"}, {"0", "1 + x1^2", "0"}, {"0", "0", "1"}});
}
Embedding plane_graph() { return Embedding::from_strings(3, 2, {"u1", "u2", "0.4"}); }
Embedding bent_cylinder() {
  return Embedding::from_strings(3, 2, {"cos(u1)", "sin(u1) + 0.2*u2^2", "u2"});
}
Embedding linear3() { return Embedding::from_strings(3, 2, {"u1", "u2", "2*u1 + 3*u2"}); }

JetPoint graph_point() { return JetPoint{{0.9, 0.5}, {0.6, -0.7}, {0.2, 0.3}}; }
JetPoint bent_point() { return JetPoint{{0.3, -0.2}, {0.8, 0.4}, {0.1, -0.3}}; }

double max_abs3(const Arr3<double>& A) {
  double g = 0;
  for (double x : A.a) g = std::max(g, std::abs(x));
  return g;
}
double max_abs4(const Arr4<double>& A) {
  double g = 0;
  for (double x : A.a) g = std::max(g, std::abs(x));
  return g;
}
double gap3(const Arr3<double>& A, const Arr3<double>& B) {
  double g = 0;
  for (std::size_t k = 0; k < A.a.size(); ++k) g = std::max(g, std::abs(A.a[k] - B.a[k]));
  return g;
}
double gap4(const Arr4<double>& A, const Arr4<double>& B) {
  double g = 0;
  for (std::size_t k = 0; k < A.a.size(); ++k) g = std::max(g, std::abs(A.a[k] - B.a[k]));
  return g;
}
template <typename S>
std::vector<double> values_of(const std::vector<S>& v) {
  std::vector<double> out(v.size());
  for (std::size_t k = 0; k < v.size(); ++k) out[k] = value(v[k]);
  return out;
}

}  // namespace

TEST_CASE("probe solver recovers planted overdetermined systems") {
  std::mt19937_64 rng(11);
  Mat<double> A(12, 5);
  for (double& x : A.a) x = symmetric_unit(rng);
  std::vector<double> want(5);
  for (double& x : want) x = symmetric_unit(rng);
  std::vector<double> b(12, 0.0);
  for (int i = 0; i < 12; ++i)
    for (int j = 0; j < 5; ++j) b[i] += A(i, j) * want[j];
  ProbeSolver solver(A);
  CHECK(solver.condition() < 100.0);
  double resid = 1;
  auto x = solver.solve(b, &resid);
  CHECK(resid < 1e-12);
  for (int j = 0; j < 5; ++j) CHECK_THAT(x[j], Catch::Matchers::WithinAbs(want[j], 1e-12));

  // reusable factorization: a second right-hand side works without refactoring
  std::vector<double> b2(12, 0.0);
  for (int i = 0; i < 12; ++i) b2[i] = 2.0 * b[i];
  auto x2 = solver.solve(b2, &resid);
  for (int j = 0; j < 5; ++j) CHECK_THAT(x2[j], Catch::Matchers::WithinAbs(2.0 * want[j], 1e-12));

  CHECK_THROWS_AS(ProbeSolver(Mat<double>(3, 5)), IdentitiesError);
  Mat<double> S(6, 2);  // duplicate columns: singular
  for (int i = 0; i < 6; ++i) S(i, 0) = S(i, 1) = double(i + 1);
  ProbeSolver sing(S);
  CHECK(sing.condition() > 1e8);
}

TEST_CASE("same-kind commutators are antisymmetric in the direction pair") {
  auto sp = finsler3();
  auto e = bent_cylinder();
  auto C = make_sub_context<Jet2>(sp, e, bent_point());
  auto D2 = connection_data(C);
  auto D1 = connection_data_lowered(C);
  std::mt19937_64 rng(5);
  std::vector<PolyField> comps(C.m);
  for (auto& f : comps) f = PolyField::random(rng, 3 * C.m);
  auto pr = commutator_probe(C, D2, D1, poly_vector_field(C, comps));
  for (int i = 0; i < 3; ++i)
    for (ShapeKind s : {ShapeKind::HH, ShapeKind::V1V1, ShapeKind::V2V2}) {
      const auto& L = pr.lhs[i][static_cast<int>(s)];
      for (int al = 0; al < C.m; ++al)
        for (int be = 0; be < C.m; ++be) {
          CHECK(L(al, be, be) == 0.0);
          for (int ga = 0; ga < C.m; ++ga) CHECK(L(al, be, ga) == -L(al, ga, be));
        }
    }
}

TEST_CASE("extracted horizontal families match their closed forms") {
  struct Case {
    AmbientSpace sp;
    Embedding e;
    JetPoint q;
  };
  std::vector<Case> cases;
  cases.push_back({sphere_block3(), plane_graph(), graph_point()});
  cases.push_back({finsler3(), bent_cylinder(), bent_point()});
  for (const auto& c : cases) {
    auto C2 = make_sub_context<Jet2>(c.sp, c.e, c.q);
    auto C1 = make_sub_context<Jet1>(c.sp, c.e, c.q);
    auto R = extract_coefficients(C2, 42);
    auto nc = nonlinear_curvatures(C1);
    for (int i = 0; i < 3; ++i) {
      const auto& sc = R.at(ShapeKind::HH, i);
      CHECK(sc.extraction_residual < 1e-8);
      CHECK(sc.condition < 100.0);
      CHECK(gap3(sc.slope_h, linear_torsion(C1, i)) < 1e-12);
      CHECK(gap3(sc.slope_v1, nc.first) < 1e-12);
      CHECK(gap3(sc.slope_v2, nc.second) < 1e-12);
      CHECK(gap4(sc.curvature, horizontal_curvature(C1, i)) < 1e-12);
      // mixed shapes expose the vertical connection families directly
      const auto& hv1 = R.at(ShapeKind::HV1, i);
      const auto& hv2 = R.at(ShapeKind::HV2, i);
      const auto& v12 = R.at(ShapeKind::V1V2, i);
      double worst = 0;
      for (int a = 0; a < C1.m; ++a)
        for (int b = 0; b < C1.m; ++b)
          for (int cc = 0; cc < C1.m; ++cc) {
            worst = std::max(worst, std::abs(hv1.slope_h(a, b, cc) - value(C1.tan.C1[i](a, b, cc))));
            worst = std::max(worst, std::abs(hv2.slope_h(a, b, cc) - value(C1.tan.C2[i](a, b, cc))));
            worst = std::max(worst, std::abs(v12.slope_v1(a, b, cc) - value(C1.tan.C2[i](a, b, cc))));
          }
      CHECK(worst < 1e-12);
      CHECK(gap3(R.at(ShapeKind::V1V1, i).slope_v1, vertical_torsion(C1, i, 1)) < 1e-12);
      CHECK(gap3(R.at(ShapeKind::V2V2, i).slope_v2, vertical_torsion(C1, i, 2)) < 1e-12);
      // purely vertical commutators never see a horizontal slope, and the
      // second-kind pair has no first-kind slope either
      CHECK(max_abs3(R.at(ShapeKind::V2V2, i).slope_v1) < 1e-10);
    }
  }
}

TEST_CASE("finite-difference curvature oracle agrees on the sphere patch") {
  auto sp = sphere_block3();
  auto e = plane_graph();
  JetPoint q = graph_point();
  auto C2 = make_sub_context<Jet2>(sp, e, q);
  auto R = extract_coefficients(C2, 42);
  for (int i : {0, 2}) {
    auto fd = horizontal_curvature_fd(sp, e, q, i);
    CHECK(gap4(R.at(ShapeKind::HH, i).curvature, fd) < 1e-6);
  }
  // the induced surface is a round unit sphere: its extracted horizontal
  // curvature carries Gauss curvature one
  const auto& c = R.at(ShapeKind::HH, 0).curvature;
  const double s2 = std::sin(0.9) * std::sin(0.9);
  CHECK_THAT(c(1, 0, 1, 0), Catch::Matchers::WithinAbs(s2, 1e-9));
  CHECK_THAT(c(1, 0, 0, 1), Catch::Matchers::WithinAbs(-s2, 1e-9));
  CHECK_THAT(c(0, 1, 0, 1), Catch::Matchers::WithinAbs(1.0, 1e-9));
  CHECK(max_abs4(c) > 0.5);
}

TEST_CASE("flat scenarios extract vanishing curvature") {
  {
    auto C2 = make_sub_context<Jet2>(euclidean(3), linear3(),
                                     JetPoint{{0.3, 0.7}, {1.0, 2.0}, {0.5, -1.0}});
    auto R = extract_coefficients(C2, 42);
    for (ShapeKind s : all_shapes)
      for (int i = 0; i < 3; ++i) {
        CHECK(max_abs4(R.at(s, i).curvature) < 1e-12);
        CHECK(max_abs3(R.at(s, i).slope_h) < 1e-12);
        CHECK(max_abs3(R.at(s, i).slope_v1) < 1e-12);
        CHECK(max_abs3(R.at(s, i).slope_v2) < 1e-12);
      }
  }
  {
    // flat metric written in a curvilinear chart: individual connection
    // coefficients are nonzero but every extracted curvature still vanishes
    auto C1 = make_sub_context<Jet1>(polar3(), plane_graph(), graph_point());
    double coef = 0;
    for (int i = 0; i < 3; ++i)
      for (const Jet1& entry : C1.tan.L[i].a) coef = std::max(coef, std::abs(value(entry)));
    auto C2 = make_sub_context<Jet2>(polar3(), plane_graph(), graph_point());
    auto R = extract_coefficients(C2, 42);
    CHECK(coef > 0.1);
    for (ShapeKind s : all_shapes)
      for (int i = 0; i < 3; ++i) CHECK(max_abs4(R.at(s, i).curvature) < 1e-8);
  }
}

TEST_CASE("the affine commutator model explains random fields") {
  for (int scenario = 0; scenario < 2; ++scenario) {
    auto sp = scenario == 0 ? sphere_block3() : finsler3();
    auto e = scenario == 0 ? plane_graph() : bent_cylinder();
    JetPoint q = scenario == 0 ? graph_point() : bent_point();
    auto C2 = make_sub_context<Jet2>(sp, e, q);
    auto R = extract_coefficients(C2, 42);
    auto rep = verify_ricci(C2, R, 1234, 50);
    CHECK(rep.overall < 1e-8);
    CHECK(rep.overall_row0 < 1e-8);
    if (scenario == 1) {
      // mutating one extracted coefficient is detected immediately
      RicciCoefficients bad = R;
      bad.at(ShapeKind::HH, 0).slope_v1(0, 0, 1) += 1e-3;
      auto mrep = verify_ricci(C2, bad, 1234, 5);
      CHECK(mrep.overall > 1e-5);
    }
  }
}

TEST_CASE("extracted families transform as d-tensors under chart changes") {
  auto sp = finsler3();
  auto e = bent_cylinder();
  JetPoint q = bent_point();
  auto C2 = make_sub_context<Jet2>(sp, e, q);
  auto R = extract_coefficients(C2, 42);

  std::vector<Expr> phi{parse("2*u1"), parse("u2 + 0.3*u1^2")};
  std::map<std::string, Expr> inv{{"u1", parse("0.5*u1")}, {"u2", parse("u2 - 0.075*u1^2")}};
  ExprVec xs;
  for (const auto& comp : e.x()) xs.push_back(substitute(comp, inv));
  Embedding et(3, 2, xs);
  JetPoint qt = sub_jet_transform(phi, q);
  auto Ct = make_sub_context<Jet2>(sp, et, qt);
  auto Rt = extract_coefficients(Ct, 42);

  Mat<double> J(2, 2);
  J(0, 0) = 2.0;
  J(1, 0) = 0.6 * q.x[0];
  J(1, 1) = 1.0;
  Mat<double> Jinv = inverse(J);
  auto push3 = [&](const Arr3<double>& A) {
    Arr3<double> out(2, 2, 2);
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b)
        for (int c = 0; c < 2; ++c)
          for (int d = 0; d < 2; ++d)
            for (int ee = 0; ee < 2; ++ee)
              for (int f = 0; f < 2; ++f)
                out(a, b, c) += J(a, d) * Jinv(ee, b) * Jinv(f, c) * A(d, ee, f);
    return out;
  };
  auto push4 = [&](const Arr4<double>& A) {
    Arr4<double> out(2, 2, 2, 2);
    for (int dl = 0; dl < 2; ++dl)
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
          for (int c = 0; c < 2; ++c)
            for (int dd = 0; dd < 2; ++dd)
              for (int aa = 0; aa < 2; ++aa)
                for (int bb = 0; bb < 2; ++bb)
                  for (int cc = 0; cc < 2; ++cc)
                    out(dl, a, b, c) += Jinv(dd, dl) * J(a, aa) * Jinv(bb, b) * Jinv(cc, c) *
                                        A(dd, aa, bb, cc);
    return out;
  };
  for (ShapeKind s : all_shapes)
    for (int i = 0; i < 3; ++i) {
      CHECK(gap4(Rt.at(s, i).curvature, push4(R.at(s, i).curvature)) < 1e-8);
      CHECK(gap3(Rt.at(s, i).slope_v1, push3(R.at(s, i).slope_v1)) < 1e-8);
      CHECK(gap3(Rt.at(s, i).slope_v2, push3(R.at(s, i).slope_v2)) < 1e-8);
      if (shape_has_h_slope(s)) CHECK(gap3(Rt.at(s, i).slope_h, push3(R.at(s, i).slope_h)) < 1e-8);
    }
}

TEST_CASE("the Liouville fields satisfy the deflection identities") {
  struct Case {
    AmbientSpace sp;
    Embedding e;
    JetPoint q;
  };
  std::vector<Case> cases;
  cases.push_back({euclidean(3), linear3(), JetPoint{{0.3, 0.7}, {1.0, 2.0}, {0.5, -1.0}}});
  cases.push_back({sphere_block3(), plane_graph(), graph_point()});
  cases.push_back({finsler3(), bent_cylinder(), bent_point()});
  for (const auto& c : cases) {
    auto C2 = make_sub_context<Jet2>(c.sp, c.e, c.q);
    auto R = extract_coefficients(C2, 42);
    auto rep = verify_deflection_identities(C2, R);
    CHECK(rep.overall < 1e-8);
    CHECK(rep.overall_row0 < 1e-8);
    for (int j = 0; j < 2; ++j)
      for (int s = 0; s < 6; ++s)
        for (int i = 0; i < 3; ++i) CHECK(rep.max_residual[j][s][i] < 1e-8);
  }
  // residuals stay at solver precision in a reparametrized chart
  std::vector<Expr> phi{parse("2*u1"), parse("u2 + 0.3*u1^2")};
  std::map<std::string, Expr> inv{{"u1", parse("0.5*u1")}, {"u2", parse("u2 - 0.075*u1^2")}};
  Embedding bent = bent_cylinder();
  ExprVec xs;
  for (const auto& comp : bent.x()) xs.push_back(substitute(comp, inv));
  Embedding et(3, 2, xs);
  auto Ct = make_sub_context<Jet2>(finsler3(), et, sub_jet_transform(phi, bent_point()));
  auto Rt = extract_coefficients(Ct, 42);
  CHECK(verify_deflection_identities(Ct, Rt).overall < 1e-8);
}

TEST_CASE("flat deflection pattern: met, unmet, and synthetic substitution") {
  {
    auto C1 = make_sub_context<Jet1>(euclidean(3), linear3(),
                                     JetPoint{{0.3, 0.7}, {1.0, 2.0}, {0.5, -1.0}});
    auto C2 = make_sub_context<Jet2>(euclidean(3), linear3(),
                                     JetPoint{{0.3, 0.7}, {1.0, 2.0}, {0.5, -1.0}});
    auto R = extract_coefficients(C2, 42);
    auto defl = deflections(C1);
    auto rep = check_flat_deflection_pattern(defl, values_of(C1.z1), values_of(C1.z2), R);
    CHECK(rep.precondition_met);
    CHECK(rep.pattern_residual == 0.0);
    CHECK(rep.max_conclusion < 1e-8);
  }
  {
    auto C1 = make_sub_context<Jet1>(euclidean(3), bent_cylinder(), bent_point());
    auto C2 = make_sub_context<Jet2>(euclidean(3), bent_cylinder(), bent_point());
    auto R = extract_coefficients(C2, 42);
    auto defl = deflections(C1);
    auto rep = check_flat_deflection_pattern(defl, values_of(C1.z1), values_of(C1.z2), R);
    CHECK_FALSE(rep.precondition_met);
    CHECK(rep.pattern_residual > 1e-4);
  }
  {
    // forcing the special pattern turns each identity into the algebraic
    // relation "curvature contracted with the field equals the v_j slope"
    auto C2 = make_sub_context<Jet2>(sphere_block3(), plane_graph(), graph_point());
    auto R = extract_coefficients(C2, 42);
    const int m = 2;
    DeflectionSet pattern;
    for (int j = 0; j < 2; ++j)
      for (int i = 0; i < 3; ++i) {
        pattern.D[j][i] = Mat<double>(m, m);
        pattern.d1[j][i] = Mat<double>(m, m);
        pattern.d2[j][i] = Mat<double>(m, m);
        for (int al = 0; al < m; ++al) {
          pattern.d1[j][i](al, al) = j == 0 ? 1.0 : 0.0;
          pattern.d2[j][i](al, al) = j == 1 ? 1.0 : 0.0;
        }
      }
    std::vector<double> z1{0.6, -0.7}, z2{0.2, 0.3};
    auto rep = check_flat_deflection_pattern(pattern, z1, z2, R, 1e-9);
    CHECK(rep.precondition_met);
    // one family recomputed by hand must agree exactly
    const auto& sc = R.at(ShapeKind::HH, 1);
    double want = 0;
    for (int al = 0; al < m; ++al)
      for (int be = 0; be < m; ++be)
        for (int ga = 0; ga < m; ++ga) {
          double acc = -sc.slope_v1(al, be, ga);
          for (int dl = 0; dl < m; ++dl) acc += z1[dl] * sc.curvature(dl, al, be, ga);
          want = std::max(want, std::abs(acc));
        }
    CHECK(rep.conclusion_residual[0][0][1] == want);
  }
}
