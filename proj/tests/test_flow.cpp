#include <doctest.h>

#include <cmath>

#include "tubeflow/flow.hpp"

using namespace tubeflow;

namespace {
constexpr double kPi = 3.14159265358979323846;

// Figure-eight trace: self-intersects at the origin for u = pi/2, 3pi/2.
ChartedManifold figure_eight(int n) {
  GridShape shape({{0.0, 2.0 * kPi, true}}, {n});
  auto eval = [](const Vec& u) {
    Vec p(2);
    p << std::cos(u[0]), std::sin(u[0]) * std::cos(u[0]);
    return p;
  };
  return ChartedManifold::from_closures(shape, 2, eval);
}
}  // namespace

TEST_CASE("oriented unit normal fields") {
  ChartedManifold ci = ChartedManifold::circle(1.0, 64);
  FrameField ff = FrameField::build(ci);
  NormalField out = NormalField::outward(ci, ff);
  NormalField in = NormalField::inward(ci, ff);
  CHECK(out.v.cols() == 64);
  for (int f : {0, 20, 63}) {
    Vec radial = ci.evaluate_node(f);
    CHECK(out.v.col(f).dot(radial) == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(in.v.col(f).dot(radial) == doctest::Approx(-1.0).epsilon(1e-10));
  }

  // the torus hint points away from the core circle, also on the inner rim
  ChartedManifold to = ChartedManifold::torus(2.0, 0.5, 32, 16);
  FrameField ft = FrameField::build(to);
  NormalField ot = NormalField::outward(to, ft);
  int inner = to.shape().flatten({0, 8});  // v = pi: inner equator
  Vec p = to.evaluate_node(inner);
  CHECK(p[0] == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(ot.v.col(inner)[0] == doctest::Approx(-1.0).epsilon(1e-10));

  // orientation is a codimension-1 notion
  GridShape shape({{0.0, 2.0 * kPi, true}}, {32});
  auto eval = [](const Vec& u) {
    Vec q(3);
    q << std::cos(u[0]), std::sin(u[0]), 0.0;
    return q;
  };
  ChartedManifold space_curve = ChartedManifold::from_closures(shape, 3, eval);
  FrameField fs = FrameField::build(space_curve);
  CHECK_THROWS_AS(NormalField::outward(space_curve, fs), SpecError);
}

TEST_CASE("normal field from an explicit matrix") {
  ChartedManifold ci = ChartedManifold::circle(1.0, 32);
  Mat v(2, 32);
  for (int f = 0; f < 32; ++f) v.col(f) = 2.5 * ci.evaluate_node(f);
  NormalField nf = NormalField::from_matrix(ci, v);
  CHECK(nf.v.col(5).norm() == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(NormalField::from_matrix(ci, Mat::Ones(2, 31)),
                  FieldGridMismatch);
  Mat tang(2, 32);
  for (int f = 0; f < 32; ++f) {
    Vec p = ci.evaluate_node(f);
    tang.col(f) << -p[1], p[0];
  }
  CHECK_THROWS_AS(NormalField::from_matrix(ci, tang), NotNormal);
  CHECK_THROWS_AS(NormalField::from_matrix(ci, Mat::Zero(2, 32)), SpecError);
}

TEST_CASE("linear flow moves samples along the field") {
  ChartedManifold ci = ChartedManifold::circle(1.0, 64);
  FrameField ff = FrameField::build(ci);
  NormalField in = NormalField::inward(ci, ff);
  ChartedManifold moved = linear_normal_flow(ci, in, 0.3);
  CHECK(moved.sample_backed());
  for (int f : {0, 31}) {
    CHECK(moved.evaluate_node(f).norm() == doctest::Approx(0.7).epsilon(1e-12));
  }
  NormalField small{Mat::Ones(2, 63)};
  CHECK_THROWS_AS(linear_normal_flow(ci, small, 0.1), FieldGridMismatch);
}

TEST_CASE("immersion oracle flags collapse and rank loss") {
  ChartedManifold ci = ChartedManifold::circle(1.0, 64);
  CHECK(immersion_check(ci).pass);

  // all samples coincide: tangent frame gone
  GridSamples flat = ci.samples();
  flat.points = Mat::Zero(2, 64);
  OracleVerdict v =
      immersion_check(ChartedManifold::from_samples(flat, false), 2.0);
  CHECK_FALSE(v.pass);
  CHECK(v.fail_node >= 0);
  CHECK(v.reason.find("collapsed") != std::string::npos);

  // a surface squashed onto a curve keeps s_max but loses rank
  std::vector<Axis> box{{0.0, 1.0, false}, {0.0, 1.0, false}};
  ChartedManifold sq = ChartedManifold::graph("zero", box, {9, 9});
  GridSamples sheared = sq.samples();
  for (int f = 0; f < sheared.count(); ++f) {
    Vec u = sq.shape().node(f);
    sheared.points.col(f) << u[0], 0.0, 0.0;  // forget the second parameter
  }
  OracleVerdict r =
      immersion_check(ChartedManifold::from_samples(sheared, false), 1.0);
  CHECK_FALSE(r.pass);
  CHECK(r.reason.find("rank drop") != std::string::npos);
}

TEST_CASE("injectivity oracle sees the figure-eight crossing") {
  CHECK(injectivity_oracle(ChartedManifold::circle(1.0, 128)).pass);

  OracleVerdict v = injectivity_oracle(figure_eight(256));
  CHECK_FALSE(v.pass);
  // the crossing pairs u = pi/2 (node 64) with u = 3 pi/2 (node 192)
  CHECK(v.witness_a == 64);
  CHECK(v.witness_b == 192);
  CHECK(v.reason.find("near-coincident") != std::string::npos);

  CHECK_THROWS_AS(injectivity_oracle(figure_eight(64), 0.0), SpecError);

  OracleVerdict both = embedding_oracle(figure_eight(256));
  CHECK_FALSE(both.pass);
}

TEST_CASE("largest certified-to-pass flow time by sweep") {
  ChartedManifold ci = ChartedManifold::circle(1.0, 256);
  FrameField ff = FrameField::build(ci);
  NormalField in = NormalField::inward(ci, ff);
  NormalField out = NormalField::outward(ci, ff);

  // inward flow of the unit circle breaks down at t = 1 (radius 0)
  double met = max_embedding_time(ci, in, 2.0);
  CHECK(met > 0.99);
  CHECK(met < 1.0);
  // outward flow never breaks: the sweep returns t_max itself
  CHECK(max_embedding_time(ci, out, 2.0) == 2.0);

  CHECK_THROWS_AS(max_embedding_time(ci, in, 0.0), SpecError);
  CHECK_THROWS_AS(max_embedding_time(ci, in, 1.0, 1), SpecError);
}

TEST_CASE("step rule validation") {
  CHECK_THROWS_AS(StepRule::fixed_step(0.0), SpecError);
  CHECK_THROWS_AS(StepRule::tstar_capped(0.0), SpecError);
  CHECK_THROWS_AS(StepRule::tstar_capped(1.5), SpecError);
  CHECK_THROWS_AS(StepRule::tstar_capped(0.5, 0), SpecError);
  CHECK_THROWS_AS(StepRule::backtracking(0.0, 0.5), SpecError);
  CHECK_THROWS_AS(StepRule::backtracking(1e-4, 1.0), SpecError);
}

TEST_CASE("gradient descent shrinks the volume of a fat circle") {
  ChartedManifold m = ChartedManifold::circle(2.0, 64);
  VolumePenalty vol;
  FlowTrace tr =
      gradient_descent_flow(m, vol, 5, StepRule::tstar_capped(0.5, 2));
  REQUIRE(tr.steps.size() == 6u);  // initial state plus five steps
  CHECK(tr.steps[0].step_size == 0.0);
  // discrete 64-gon perimeter sits (pi/64)^2/6 under the smooth length
  CHECK(tr.steps[0].penalty == doctest::Approx(4.0 * kPi).epsilon(5e-3));
  for (size_t i = 1; i < tr.steps.size(); ++i) {
    CHECK(tr.steps[i].penalty < tr.steps[i - 1].penalty);
    CHECK(tr.steps[i].verdict.pass);
    CHECK(tr.steps[i].step_size > 0.0);
    CHECK(tr.steps[i].max_displacement > 0.0);
    CHECK(tr.steps[i].snapshot.count() == 64);
  }
  CHECK_FALSE(tr.stopped_on_oracle);
  CHECK_FALSE(tr.stopped_on_small_gradient);

  FlowTrace bt =
      gradient_descent_flow(m, vol, 3, StepRule::backtracking(1e-4, 0.5));
  for (size_t i = 1; i < bt.steps.size(); ++i)
    CHECK(bt.steps[i].penalty < bt.steps[i - 1].penalty);

  CHECK_THROWS_AS(gradient_descent_flow(m, vol, 0, StepRule::fixed_step(0.1)),
                  SpecError);
}

TEST_CASE("flow stops at a stationary point") {
  // cloud equal to the sample lattice: the distance penalty is already zero
  // and its centered-difference gradient vanishes identically
  ChartedManifold m = ChartedManifold::circle(1.0, 16);
  DistancePenalty p(DataCloud::make(m.samples().points));
  FlowTrace tr =
      gradient_descent_flow(m, p, 10, StepRule::fixed_step(1e-3));
  CHECK(tr.steps.size() == 1u);
  CHECK(tr.stopped_on_small_gradient);
  CHECK_FALSE(tr.stopped_on_oracle);
}
