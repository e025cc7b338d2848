#include "tubeflow/tube.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <random>

namespace tubeflow {

namespace {

// Divide the chart columns by the calibration scales. The frame columns are
// already unit length, so after this every column of DE is an ambient
// direction per unit ambient parameter motion.
Mat calibrate(Mat DE, const Vec& sigma) {
  for (int j = 0; j < sigma.size(); ++j) DE.col(j) /= sigma[j];
  return DE;
}

std::vector<Vec> fiber_directions(int codim, const TubeSamplingOptions& opts) {
  std::vector<Vec> dirs;
  if (codim == 0) return dirs;
  if (codim == 1) {
    Vec plus(1), minus(1);
    plus << 1.0;
    minus << -1.0;
    dirs.push_back(plus);
    dirs.push_back(minus);
    return dirs;
  }
  if (opts.normal_dirs < 1)
    throw SpecError("tube sampling: need at least one fiber direction");
  std::mt19937 rng(opts.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  dirs.reserve(opts.normal_dirs);
  while (static_cast<int>(dirs.size()) < opts.normal_dirs) {
    Vec d(codim);
    for (int i = 0; i < codim; ++i) d[i] = gauss(rng);
    double len = d.norm();
    if (len < 1e-8) continue;
    dirs.push_back(d / len);
  }
  return dirs;
}

}  // namespace

TubeBounds tube_bounds(const ChartedManifold& m, const FrameField& frames,
                       const TubeSamplingOptions& opts) {
  if (!(opts.safety >= 1.0))
    throw SpecError("tube sampling: safety factor must be >= 1");
  if (opts.fiber_radii < 1)
    throw SpecError("tube sampling: need at least one fiber radius");
  const GridShape& shape = m.shape();
  const int k = shape.rank();
  const int N = m.ambient_dim();
  const int codim = N - k;
  const int count = shape.total();

  TubeBounds b;
  b.K = max_curvature_K(m, CurvatureOptions{opts.normal_dirs, opts.seed});
  b.ambient_diameter = m.samples().ambient_diameter();
  b.tube_radius = b.K > 0.0 ? std::min(0.999 / b.K, b.ambient_diameter)
                            : b.ambient_diameter;

  // Calibration scales: worst-case metric stretch per chart axis.
  b.sigma = Vec::Zero(k);
  for (int f = 0; f < count; ++f) {
    Mat J = m.jacobian_node(f);
    for (int j = 0; j < k; ++j)
      b.sigma[j] = std::max(b.sigma[j], J.col(j).norm());
  }
  for (int j = 0; j < k; ++j)
    if (!(b.sigma[j] > 0.0))
      throw RankDeficient("tube bounds: a chart axis has zero metric length");

  b.fiber_dirs = fiber_directions(codim, opts);
  b.fiber_radii.push_back(0.0);
  for (int i = 1; i <= opts.fiber_radii; ++i)
    b.fiber_radii.push_back(b.tube_radius * i / opts.fiber_radii);

  // DE is linear in the fiber coefficient, so the supremum of any entry (or
  // entry of an r-derivative) along a sampled ray sits at the endpoints.
  // Scanning r = 0 and r = tube_radius * dir per direction is exact there.
  std::vector<Vec> fiber_ends;
  fiber_ends.push_back(Vec::Zero(codim));
  for (const Vec& d : b.fiber_dirs) fiber_ends.push_back(b.tube_radius * d);

  Mat G_entry = Mat::Zero(N, N);
  Vec G_row = Vec::Zero(N);
  std::mutex merge_mutex;
  parallel_for(count, [&](int f) {
    Mat local_entry = Mat::Zero(N, N);
    Vec local_row = Vec::Zero(N);
    Vec u = shape.node(f);

    // Fiber derivatives need no differencing: d(DE)/dr_i stacks the i-th
    // columns of the frame derivatives in the chart block and zeros in the
    // frame block.
    std::vector<Mat> dW(k);
    for (int j = 0; j < k; ++j) dW[j] = frames.frame_derivative(m, f, j);
    for (int i = 0; i < codim; ++i) {
      Mat Gi = Mat::Zero(N, N);
      for (int j = 0; j < k; ++j)
        Gi.col(j) = dW[j].col(i).cwiseAbs() / b.sigma[j];
      local_entry = local_entry.cwiseMax(Gi);
    }

    for (const Vec& r : fiber_ends) {
      Mat DE = calibrate(endpoint_jacobian(m, frames, u, r), b.sigma);
      local_row = local_row.cwiseMax(DE.cwiseAbs().rowwise().maxCoeff());
      for (int j = 0; j < k; ++j) {
        double h = shape.spacing(j) / 8.0;
        std::vector<int> offsets;
        std::vector<double> coeffs;
        axis_stencil(shape.axis(j), u[j], h, 1, offsets, coeffs);
        Mat Gj = Mat::Zero(N, N);
        for (size_t s = 0; s < offsets.size(); ++s) {
          Vec us = u;
          us[j] += offsets[s] * h;
          Gj += coeffs[s] * (offsets[s] == 0
                                 ? DE
                                 : calibrate(endpoint_jacobian(m, frames, us, r),
                                             b.sigma));
        }
        local_entry = local_entry.cwiseMax(Gj.cwiseAbs() / b.sigma[j]);
      }
    }

    std::lock_guard<std::mutex> lock(merge_mutex);
    G_entry = G_entry.cwiseMax(local_entry);
    G_row = G_row.cwiseMax(local_row);
  });

  b.G_entry = opts.safety * G_entry;
  b.G_row = opts.safety * G_row;
  return b;
}

PointConstants tube_constants_at(const ChartedManifold& m,
                                 const FrameField& frames, const Vec& u,
                                 const Vec& r, const TubeBounds& bounds) {
  const int N = m.ambient_dim();
  if (r.size() != N - m.shape().rank())
    throw SpecError("tube constants: fiber coefficient dimension mismatch");
  if (r.norm() > bounds.tube_radius + 1e-12)
    throw OutsideTube("tube constants: fiber point beyond the tube radius");

  Mat DE = calibrate(endpoint_jacobian(m, frames, u, r), bounds.sigma);
  PointConstants pc;
  pc.det_DE = DE.determinant();
  if (std::abs(pc.det_DE) <= 1e-14)
    throw SingularDE("tube constants: endpoint Jacobian is singular");
  Mat inv = adjugate_inverse(DE);

  // Half-contraction radius: the Newton residual matrix I - inv * DE(z)
  // moves at most 2 N max_{l,m} sum_p |inv_lp| G_entry_pm per unit step, so
  // the box where it stays under 1/2 has this radius. Flat inputs make the
  // slope zero; the ambient diameter is then the natural cap.
  double slope = (inv.cwiseAbs() * bounds.G_entry).maxCoeff();
  double contraction = 2.0 * N * slope;
  pc.delta0 = contraction > 0.0
                  ? std::min(1.0 / contraction, bounds.ambient_diameter)
                  : bounds.ambient_diameter;

  double M = inv.cwiseAbs().maxCoeff();
  pc.delta1 = pc.delta0 / (2.0 * M);

  double row_sq = bounds.G_row.squaredNorm();
  pc.delta3 = row_sq > 0.0 ? pc.delta1 / std::sqrt(N * row_sq) : pc.delta1;
  pc.delta_point = std::min(pc.delta3, pc.delta0);
  return pc;
}

PointConstants tube_constants_at(const ChartedManifold& m,
                                 const FrameField& frames, const Vec& u,
                                 const Vec& r,
                                 const TubeSamplingOptions& opts) {
  return tube_constants_at(m, frames, u, r, tube_bounds(m, frames, opts));
}

namespace {

// Shared fiber sweep: per-point constants at every node for r = 0 and for
// every sampled direction at every positive radius.
void fiber_sweep(const ChartedManifold& m, const FrameField& frames,
                 const TubeBounds& bounds, std::vector<TubeConstants::Row>* table,
                 double* delta_min) {
  const GridShape& shape = m.shape();
  const int codim = m.ambient_dim() - shape.rank();
  const int count = shape.total();
  double best = std::numeric_limits<double>::infinity();
  std::mutex merge_mutex;
  parallel_for(count, [&](int f) {
    Vec u = shape.node(f);
    std::vector<TubeConstants::Row> local;
    double local_best = std::numeric_limits<double>::infinity();
    auto visit = [&](const Vec& r, double signed_r) {
      TubeConstants::Row row;
      row.u = u;
      row.r = signed_r;
      row.point = tube_constants_at(m, frames, u, r, bounds);
      local_best = std::min(local_best, row.point.delta_point);
      if (table) local.push_back(std::move(row));
    };
    visit(Vec::Zero(codim), 0.0);
    for (double rho : bounds.fiber_radii) {
      if (rho <= 0.0) continue;
      for (const Vec& d : bounds.fiber_dirs) {
        double signed_r = codim == 1 ? rho * d[0] : rho;
        visit(rho * d, signed_r);
      }
    }
    std::lock_guard<std::mutex> lock(merge_mutex);
    best = std::min(best, local_best);
    if (table)
      table->insert(table->end(), std::make_move_iterator(local.begin()),
                    std::make_move_iterator(local.end()));
  });
  *delta_min = best;
}

}  // namespace

double safe_radius_delta(const ChartedManifold& m, const FrameField& frames,
                         const TubeSamplingOptions& opts) {
  TubeBounds bounds = tube_bounds(m, frames, opts);
  double fiber_min = 0.0;
  fiber_sweep(m, frames, bounds, nullptr, &fiber_min);
  return fiber_min / 2.0;
}

TubeConstants safe_flow_time(const ChartedManifold& m, const FrameField& frames,
                             const TubeSamplingOptions& opts) {
  TubeConstants tc;
  tc.bounds = tube_bounds(m, frames, opts);
  tc.K = tc.bounds.K;
  tc.K_inv = tc.K > 0.0 ? 1.0 / tc.K
                        : std::numeric_limits<double>::infinity();
  double fiber_min = 0.0;
  fiber_sweep(m, frames, tc.bounds, &tc.table, &fiber_min);
  tc.delta = fiber_min / 2.0;
  tc.epsilon = tc.delta / 3.0;
  tc.t_star = std::min(tc.K_inv, tc.epsilon);
  return tc;
}

}  // namespace tubeflow
