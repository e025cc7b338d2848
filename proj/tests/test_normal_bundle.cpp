#include <doctest.h>

#include <cmath>
#include <limits>

#include "tubeflow/normal_bundle.hpp"

using namespace tubeflow;

namespace {
constexpr double kPi = 3.14159265358979323846;
}

TEST_CASE("pointwise normal frame is orthonormal and normal") {
  ChartedManifold to = ChartedManifold::torus(2.0, 0.5, 32, 16);
  for (int f : {0, 77, 300, 511}) {
    Vec u = to.shape().node(f);
    NormalFrame nf = normal_frame(to, u);
    CHECK(nf.W.rows() == 3);
    CHECK(nf.W.cols() == 1);
    CHECK((nf.W.transpose() * nf.W - Mat::Identity(1, 1)).norm() < 1e-12);
    CHECK((to.jacobian(u).transpose() * nf.W).norm() < 1e-12);
  }

  // circle: the normal space is the radial line
  ChartedManifold ci = ChartedManifold::circle(1.0, 64);
  Vec u(1);
  u << 0.8;
  NormalFrame nf = normal_frame(ci, u);
  Vec radial(2);
  radial << std::cos(0.8), std::sin(0.8);
  CHECK(std::abs(nf.W.col(0).dot(radial)) == doctest::Approx(1.0).epsilon(1e-12));

  // anchoring flips the frame onto the anchor's side
  Mat anchor = -nf.W;
  NormalFrame flipped = normal_frame(ci, u, &anchor);
  CHECK((flipped.W + nf.W).norm() < 1e-12);
}

TEST_CASE("frame field sweeps the lattice continuously") {
  ChartedManifold to = ChartedManifold::torus(2.0, 0.5, 32, 16);
  FrameField ff = FrameField::build(to);
  CHECK(ff.shape() == to.shape());
  for (int f : {0, 100, 511}) {
    const Mat& W = ff.frame(f);
    CHECK((W.transpose() * W - Mat::Identity(1, 1)).norm() < 1e-12);
    CHECK((to.jacobian_node(f).transpose() * W).norm() < 1e-12);
  }
  // the torus normal field is smooth, so adjacent frames differ by O(h)
  CHECK(ff.continuity_constant() < 2.0);

  ChartedManifold ci = ChartedManifold::circle(1.0, 128);
  FrameField fc = FrameField::build(ci);
  // |dW/du| = 1 on the unit circle, so the realized constant sits near 1
  CHECK(fc.continuity_constant() == doctest::Approx(1.0).epsilon(0.05));

  // node lookup: exact hit vs off-lattice point
  Vec u0 = ci.shape().node(17);
  CHECK(fc.node_index(ci, u0) == 17);
  Vec off = u0;
  off[0] += 0.3 * ci.shape().spacing(0);
  CHECK(fc.node_index(ci, off) == -1);

  // frame_at anchors to the nearest stored frame: no sign flip nearby
  Mat Wn = fc.frame(17);
  Mat Wo = fc.frame_at(ci, off);
  CHECK((Wo - Wn).norm() < 0.1);
}

TEST_CASE("frame derivative matches the analytic circle rate") {
  ChartedManifold ci = ChartedManifold::circle(1.0, 256);
  FrameField ff = FrameField::build(ci);
  // w(u) = +-(cos u, sin u), so |dw/du| = 1 exactly
  Mat dW = ff.frame_derivative(ci, 31, 0);
  CHECK(dW.col(0).norm() == doctest::Approx(1.0).epsilon(1e-4));
  // and dw/du is tangent: orthogonal to w itself
  CHECK(std::abs(dW.col(0).dot(ff.frame(31).col(0))) < 1e-4);
}

TEST_CASE("endpoint map and its jacobian on the circle") {
  ChartedManifold ci = ChartedManifold::circle(1.0, 256);
  FrameField ff = FrameField::build(ci);
  Vec u = ci.shape().node(40);
  Vec w = ff.frame(40).col(0);
  double inward_sign = w.dot(ci.evaluate(u)) < 0.0 ? 1.0 : -1.0;

  Vec r(1);
  r << 0.0;
  CHECK((endpoint_map(ci, ff, u, r) - ci.evaluate(u)).norm() < 1e-14);

  // moving inward by t lands on the circle of radius 1 - t
  r << 0.3 * inward_sign;
  CHECK(endpoint_map(ci, ff, u, r).norm() == doctest::Approx(0.7).epsilon(1e-12));

  // |det DE| = 1 - t along the inward ray, up to the stencil truncation
  for (double t : {0.1, 0.5, 0.9}) {
    r << t * inward_sign;
    Mat DE = endpoint_jacobian(ci, ff, u, r);
    CHECK(DE.rows() == 2);
    CHECK(DE.cols() == 2);
    CHECK(std::abs(std::abs(DE.determinant()) - (1.0 - t)) < 1e-3);
  }

  // off-lattice evaluation agrees with the nodal path at the node itself
  Mat nodal = endpoint_jacobian(ci, ff, u, r);
  Vec u_off = u;
  u_off[0] += 1e-7;
  Mat off = endpoint_jacobian(ci, ff, u_off, r);
  CHECK((nodal - off).norm() < 1e-3);

  Vec bad(2);
  bad << 0.1, 0.2;
  CHECK_THROWS_AS(endpoint_map(ci, ff, u, bad), SpecError);
}

TEST_CASE("determinant law sharpens under grid refinement") {
  // second-order stencils: the nodal determinant error shrinks like h^2
  ChartedManifold ci = ChartedManifold::circle(1.0, 32768);
  FrameField ff = FrameField::build(ci);
  Vec u = ci.shape().node(12345);
  Vec w = ff.frame(12345).col(0);
  double inward_sign = w.dot(ci.evaluate(u)) < 0.0 ? 1.0 : -1.0;
  Vec r(1);
  r << 0.5 * inward_sign;
  Mat DE = endpoint_jacobian(ci, ff, u, r);
  CHECK(std::abs(std::abs(DE.determinant()) - 0.5) < 1e-8);
}

TEST_CASE("focal distance along normal rays") {
  ChartedManifold ci = ChartedManifold::circle(1.0, 64);
  Vec u(1);
  u << 1.3;
  Vec inward(2);
  inward << -std::cos(1.3), -std::sin(1.3);
  CHECK(focal_distance(ci, u, inward) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(focal_distance(ci, u, Vec(-inward)) ==
        std::numeric_limits<double>::infinity());

  // torus outer equator: curvatures 1/r and cos v/(R + r cos v)
  ChartedManifold to = ChartedManifold::torus(2.0, 0.5, 32, 16);
  Vec v(2);
  v << 0.0, 0.0;
  Vec in3(3);
  in3 << -1.0, 0.0, 0.0;  // points at the core circle
  CHECK(focal_distance(to, v, in3) == doctest::Approx(0.5).epsilon(1e-10));
}
