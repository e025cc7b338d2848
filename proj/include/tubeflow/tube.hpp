#pragma once

#include "tubeflow/qift.hpp"

namespace tubeflow {

struct TubeSamplingOptions {
  int normal_dirs = 64;   // fiber directions in codimension >= 2
  int fiber_radii = 8;    // radii per direction, up to the tube radius
  unsigned seed = 0;
  double safety = 1.1;    // multiplier on sampled suprema
};

// Tube-wide data shared by every base point: the calibration scales, the
// tube radius, and the sampled remainder bounds on the endpoint-map
// Jacobian. All derivative bounds are taken in calibrated coordinates
// q~_j = sigma_j q_j (sigma_j = max_grid sqrt(g_jj)), which makes every
// delta an ambient-commensurate length.
struct TubeBounds {
  double K = 0.0;
  double tube_radius = 0.0;   // 0.999/K, capped at the ambient diameter
  double ambient_diameter = 0.0;
  Vec sigma;                  // per-axis calibration scales
  Mat G_entry;                // N x N: sup |d DE_(p,m) / d z_j| over tube, j
  Vec G_row;                  // N: sup over tube of max_m |DE_(p,m)|
  std::vector<Vec> fiber_dirs;  // unit coefficient vectors in frame coords
  std::vector<double> fiber_radii;  // includes 0 and the tube radius
};

TubeBounds tube_bounds(const ChartedManifold& m, const FrameField& frames,
                       const TubeSamplingOptions& opts = {});

// Certified radii at one base point (u, r) of the normal bundle.
struct PointConstants {
  double delta0 = 0.0;      // half-contraction box radius
  double delta1 = 0.0;      // delta0 / (2M), B = 1
  double delta3 = 0.0;      // delta1 / sqrt(N sum_p G_row_p^2)
  double delta_point = 0.0; // min(delta3, delta0)
  double det_DE = 0.0;      // ambient endpoint-map determinant
};

// Requires |r| <= tube radius (OutsideTube); throws SingularDE when DE is
// numerically singular inside the certified tube.
PointConstants tube_constants_at(const ChartedManifold& m,
                                 const FrameField& frames, const Vec& u,
                                 const Vec& r, const TubeBounds& bounds);
// Convenience overload computing the shared bounds first.
PointConstants tube_constants_at(const ChartedManifold& m,
                                 const FrameField& frames, const Vec& u,
                                 const Vec& r,
                                 const TubeSamplingOptions& opts = {});

// delta = (min over grid nodes of the fiber minimum of delta_point) / 2.
double safe_radius_delta(const ChartedManifold& m, const FrameField& frames,
                         const TubeSamplingOptions& opts = {});

struct TubeConstants {
  double K = 0.0;
  double K_inv = 0.0;  // +inf for flat inputs
  double delta = 0.0;
  double epsilon = 0.0;
  double t_star = 0.0;  // min(K_inv, delta/3)
  TubeBounds bounds;
  struct Row {
    Vec u;
    double r = 0.0;  // signed fiber coefficient (codim 1), magnitude else
    PointConstants point;
  };
  std::vector<Row> table;
};

// Full pipeline: curvature bound, remainder bounds, per-point constants,
// safe radius and flow time.
TubeConstants safe_flow_time(const ChartedManifold& m,
                             const FrameField& frames,
                             const TubeSamplingOptions& opts = {});

}  // namespace tubeflow
