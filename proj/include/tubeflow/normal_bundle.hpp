#pragma once

#include "tubeflow/manifold.hpp"

namespace tubeflow {

// Orthonormal basis of the normal space at a chart point, N x (N-k).
struct NormalFrame {
  Vec u;
  Mat W;
};

// Gram-Schmidt frame of the normal space at u. With an anchor the result is
// rotated (orthogonal Procrustes) to track the anchor's columns, which keeps
// frames continuous across nearby calls.
NormalFrame normal_frame(const ChartedManifold& m, const Vec& u,
                         const Mat* anchor = nullptr);

// One frame per grid node, built by a lexicographic sweep where each node is
// anchored to an already-framed neighbor. On smoothly framed patches adjacent
// frames differ by O(grid spacing); the realized constant is reported, not
// fixed. Frame derivatives are lattice stencils on the stored field; a
// neighbor whose stored frame mismatches the center (orientation seam) is
// re-anchored to the center frame before differencing.
class FrameField {
 public:
  static FrameField build(const ChartedManifold& m);

  const GridShape& shape() const { return shape_; }
  const Mat& frame(int flat) const { return frames_[flat]; }
  // Max over adjacent node pairs of |W_a - W_b|_F / spacing.
  double continuity_constant() const { return continuity_constant_; }

  // Frame at an arbitrary chart point, anchored to the nearest stored node.
  Mat frame_at(const ChartedManifold& m, const Vec& u) const;

  // d w_i / d u_axis for all frame columns at a node: N x (N-k).
  Mat frame_derivative(const ChartedManifold& m, int flat, int axis) const;

  // Flat node index if u coincides with a grid node, else -1.
  int node_index(const ChartedManifold& m, const Vec& u) const;

 private:
  GridShape shape_;
  std::vector<Mat> frames_;
  double continuity_constant_ = 0.0;
};

// Endpoint map E(u, r) = phi(u) + sum_i r^i w_i(u); r holds coefficients in
// the frame at u.
Vec endpoint_map(const ChartedManifold& m, const FrameField& frames,
                 const Vec& u, const Vec& r);

// Full N x N Jacobian of the endpoint map in ambient coordinates: first k
// columns d phi/du_j + sum_i r^i d w_i/du_j, last N-k columns the frame
// itself. At grid nodes derivatives difference the stored frame field; off
// the lattice a local patch is re-anchored to the frame at u.
Mat endpoint_jacobian(const ChartedManifold& m, const FrameField& frames,
                      const Vec& u, const Vec& r);

// Distance along the ray t -> u + t v (t > 0) to the first focal point:
// min over positive principal curvatures p of 1/p, +inf when none.
double focal_distance(const ChartedManifold& m, const Vec& u, const Vec& v);

}  // namespace tubeflow
