#include <doctest.h>

#include <cmath>

#include "tubeflow/qift.hpp"

using namespace tubeflow;

namespace {

// F(x, lambda) = x^2 - lambda around the base root (1, 1).
ImplicitProblem quadratic_problem(bool analytic = true) {
  auto F = [](const Vec& x, const Vec& l) {
    Vec r(1);
    r << x[0] * x[0] - l[0];
    return r;
  };
  Vec x0(1), l0(1);
  x0 << 1.0;
  l0 << 1.0;
  if (!analytic) return ImplicitProblem::make(1, 1, F, x0, l0);
  auto dx = [](const Vec& x, const Vec&) {
    Mat J(1, 1);
    J << 2.0 * x[0];
    return J;
  };
  auto dl = [](const Vec&, const Vec&) {
    Mat J(1, 1);
    J << -1.0;
    return J;
  };
  return ImplicitProblem::make(1, 1, F, x0, l0, dx, dl);
}

}  // namespace

TEST_CASE("adjugate inverse") {
  CHECK((adjugate_inverse(Mat::Identity(3, 3)) - Mat::Identity(3, 3)).norm() <
        1e-14);

  Mat D = Mat::Zero(2, 2);
  D(0, 0) = 2.0;
  D(1, 1) = 4.0;
  Mat Dinv = adjugate_inverse(D);
  CHECK(Dinv(0, 0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(Dinv(1, 1) == doctest::Approx(0.25).epsilon(1e-14));

  Mat A(3, 3);
  A << 2.0, -1.0, 0.5, 0.3, 1.7, -0.2, -0.8, 0.4, 1.1;
  CHECK((A * adjugate_inverse(A) - Mat::Identity(3, 3)).norm() < 1e-10);
  CHECK((adjugate_inverse(A) * A - Mat::Identity(3, 3)).norm() < 1e-10);

  Mat S(2, 2);
  S << 1.0, 2.0, 0.5, 1.0;  // det = 0
  CHECK_THROWS_AS(adjugate_inverse(S), SingularMatrix);
  CHECK_THROWS_AS(adjugate_inverse(Mat::Zero(2, 3)), SpecError);
}

TEST_CASE("implicit problem validation") {
  auto F = [](const Vec& x, const Vec& l) {
    Vec r(1);
    r << x[0] * x[0] - l[0];
    return r;
  };
  Vec x0(1), l0(1);
  x0 << 1.1;  // not a root of x^2 - 1
  l0 << 1.0;
  CHECK_THROWS_AS(ImplicitProblem::make(1, 1, F, x0, l0), SpecError);

  // dF/dx singular at the base: x^3 - lambda at (0, 0)
  auto G = [](const Vec& x, const Vec& l) {
    Vec r(1);
    r << x[0] * x[0] * x[0] - l[0];
    return r;
  };
  auto Gx = [](const Vec& x, const Vec&) {
    Mat J(1, 1);
    J << 3.0 * x[0] * x[0];
    return J;
  };
  CHECK_THROWS_AS(
      ImplicitProblem::make(1, 1, G, Vec::Zero(1), Vec::Zero(1), Gx),
      SpecError);
  CHECK_THROWS_AS(ImplicitProblem::make(0, 1, F, x0, l0), SpecError);
  CHECK_THROWS_AS(ImplicitProblem::make(1, 1, nullptr, x0, l0), SpecError);
}

TEST_CASE("hand-checked constants for the quadratic base") {
  // A0 = 2, A0^{-1} = 1/2; |1 - A(x)/2| = |1 - x| <= 1/2 exactly on
  // |x - 1| <= 1/2, so delta = 0.5 also certifies B = 1, M = 0.5 and
  // delta1 = 0.5 / (2 * 0.5 * 1) = 0.5.
  ImplicitProblem p = quadratic_problem();
  QiftConstants c = qift_constants(p, {1.0, 0.5, 0.25});
  CHECK(c.delta == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(c.B_delta == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(c.M == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(c.delta1 == doctest::Approx(0.5).epsilon(1e-14));

  // the automatic search brackets the same threshold
  QiftConstants a = qift_constants_auto(p, 1.0);
  CHECK(a.delta == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(a.delta1 == doctest::Approx(0.5).epsilon(1e-9));

  // finite-difference fallback: test off the exact contraction boundary,
  // where the FD truncation cannot flip the certificate
  QiftConstants f = qift_constants(quadratic_problem(false), {0.4});
  CHECK(f.delta == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(f.B_delta == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(f.M == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("constants search failure modes") {
  ImplicitProblem p = quadratic_problem();
  CHECK_THROWS_AS(qift_constants(p, {4.0, 2.0}), NoValidDelta);
  CHECK_THROWS_AS(qift_constants(p, {}), SpecError);
  CHECK_THROWS_AS(qift_constants(p, {0.5}, 1), SpecError);
  // sample budget: 9 points per axis on a high-dimensional box blows the cap
  auto F = [](const Vec& x, const Vec& l) { return Vec(x - l); };
  Vec z = Vec::Zero(4);
  ImplicitProblem big = ImplicitProblem::make(4, 4, F, z, z);
  CHECK_THROWS_AS(qift_constants(big, {1.0}, 9), SpecError);

  // steep curvature forces the certified box very small
  auto steep = [](const Vec& x, const Vec& l) {
    Vec r(1);
    r << x[0] + 1e6 * x[0] * x[0] - l[0];
    return r;
  };
  ImplicitProblem sp =
      ImplicitProblem::make(1, 1, steep, Vec::Zero(1), Vec::Zero(1));
  CHECK_THROWS_AS(qift_constants_auto(sp, 1.0, 3), NoValidDelta);
  QiftConstants sc = qift_constants_auto(sp, 1.0);
  CHECK(sc.delta <= 2.6e-7);
  CHECK(sc.delta > 0.0);
}

TEST_CASE("certified solve tracks the root branch") {
  ImplicitProblem p = quadratic_problem();
  QiftConstants c = qift_constants(p, {0.5});
  for (double l : {0.6, 1.0, 1.4, 1.4999}) {
    Vec lv(1);
    lv << l;
    Vec x = qift_solve(p, c, lv);
    CHECK(x[0] == doctest::Approx(std::sqrt(l)).epsilon(1e-10));
  }
  Vec outside(1);
  outside << 1.6;
  CHECK_THROWS_AS(qift_solve(p, c, outside), OutsideCertifiedBox);
  CHECK_THROWS_AS(qift_solve(p, c, Vec::Zero(2)), SpecError);
}

TEST_CASE("iteration divergence is caught at the box wall") {
  // claimed slope 0.1 against a true slope of 1 makes the update x <-
  // -9x + 10 lambda expand away from the fixed point for lambda != 0
  auto F = [](const Vec& x, const Vec& l) { return Vec(x - l); };
  auto fake_dx = [](const Vec&, const Vec&) {
    Mat J(1, 1);
    J << 0.1;
    return J;
  };
  ImplicitProblem p =
      ImplicitProblem::make(1, 1, F, Vec::Zero(1), Vec::Zero(1), fake_dx);
  QiftConstants c = qift_constants(p, {1.0});
  Vec l(1);
  l << 0.04;  // inside delta1 = 1/20
  CHECK_THROWS_AS(qift_solve(p, c, l), NoConvergence);
}
