#include "tubeflow/normal_bundle.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <limits>

namespace tubeflow {

namespace {

// Rotate the columns of W onto the anchor (orthogonal Procrustes). For a
// single column this is a sign flip.
Mat align_to_anchor(const Mat& W, const Mat& anchor) {
  if (W.cols() == 0) return W;
  if (W.cols() == 1)
    return W.col(0).dot(anchor.col(0)) < 0.0 ? Mat(-W) : W;
  Eigen::JacobiSVD<Mat> svd(W.transpose() * anchor,
                            Eigen::ComputeFullU | Eigen::ComputeFullV);
  return W * (svd.matrixU() * svd.matrixV().transpose());
}

}  // namespace

NormalFrame normal_frame(const ChartedManifold& m, const Vec& u,
                         const Mat* anchor) {
  const int N = m.ambient_dim();
  const int k = m.param_dim();
  const int codim = N - k;
  Vec w = m.wrap(u);
  Mat J = m.jacobian(w);
  Eigen::JacobiSVD<Mat> svd(J, Eigen::ComputeFullU);
  double s_max = svd.singularValues()(0);
  double s_min = svd.singularValues()(k - 1);
  if (!(s_max > 0.0) || s_min <= 1e-10 * s_max)
    throw RankDeficient("frame: tangent space is degenerate");
  Mat T = svd.matrixU().leftCols(k);

  // Gram-Schmidt over the ambient basis projected off the tangent space,
  // pivoting on the largest residual for stability.
  Mat C = Mat::Identity(N, N) - T * T.transpose();
  Mat W(N, codim);
  std::vector<bool> taken(N, false);
  for (int c = 0; c < codim; ++c) {
    int pick = -1;
    double best = 0.0;
    for (int i = 0; i < N; ++i) {
      if (taken[i]) continue;
      double n = C.col(i).norm();
      if (n > best) {
        best = n;
        pick = i;
      }
    }
    if (pick < 0 || best <= 1e-10)
      throw RankDeficient("frame: normal space collapsed");
    taken[pick] = true;
    Vec v = C.col(pick) / best;
    W.col(c) = v;
    C -= v * (v.transpose() * C);
  }
  if (anchor) {
    if (anchor->rows() != N || anchor->cols() != codim)
      throw SpecError("frame: anchor has wrong shape");
    W = align_to_anchor(W, *anchor);
  }
  return {w, W};
}

FrameField FrameField::build(const ChartedManifold& m) {
  FrameField f;
  f.shape_ = m.shape();
  const int total = f.shape_.total();
  f.frames_.resize(total);
  for (int flat = 0; flat < total; ++flat) {
    // Anchor to the already-framed neighbor along the fastest-varying axis.
    const Mat* anchor = nullptr;
    std::vector<int> idx = f.shape_.unflatten(flat);
    for (int j = f.shape_.rank() - 1; j >= 0; --j) {
      if (idx[j] > 0) {
        anchor = &f.frames_[f.shape_.neighbor(flat, j, -1)];
        break;
      }
    }
    f.frames_[flat] = normal_frame(m, f.shape_.node(flat), anchor).W;
  }
  double c = 0.0;
  for (int flat = 0; flat < total; ++flat) {
    for (int j = 0; j < f.shape_.rank(); ++j) {
      int nb = f.shape_.neighbor(flat, j, 1);
      if (nb < 0) continue;
      c = std::max(c, (f.frames_[flat] - f.frames_[nb]).norm() /
                          f.shape_.spacing(j));
    }
  }
  f.continuity_constant_ = c;
  return f;
}

Mat FrameField::frame_at(const ChartedManifold& m, const Vec& u) const {
  Vec w = m.wrap(u);
  std::vector<int> idx(shape_.rank());
  for (int j = 0; j < shape_.rank(); ++j) {
    const Axis& ax = shape_.axis(j);
    int i = static_cast<int>(std::lround((w[j] - ax.lo) / shape_.spacing(j)));
    if (ax.periodic)
      i = ((i % shape_.dim(j)) + shape_.dim(j)) % shape_.dim(j);
    else
      i = std::min(std::max(i, 0), shape_.dim(j) - 1);
    idx[j] = i;
  }
  const Mat& anchor = frames_[shape_.flatten(idx)];
  return normal_frame(m, w, &anchor).W;
}

int FrameField::node_index(const ChartedManifold& m, const Vec& u) const {
  Vec w = m.wrap(u);
  std::vector<int> idx(shape_.rank());
  for (int j = 0; j < shape_.rank(); ++j) {
    const Axis& ax = shape_.axis(j);
    double t = (w[j] - ax.lo) / shape_.spacing(j);
    int i = static_cast<int>(std::lround(t));
    if (std::abs(t - i) > 1e-7) return -1;
    if (ax.periodic)
      i = ((i % shape_.dim(j)) + shape_.dim(j)) % shape_.dim(j);
    else if (i < 0 || i >= shape_.dim(j))
      return -1;
    idx[j] = i;
  }
  return shape_.flatten(idx);
}

Mat FrameField::frame_derivative(const ChartedManifold& m, int flat,
                                 int axis) const {
  std::vector<int> offsets;
  std::vector<double> coeffs;
  std::vector<int> idx = shape_.unflatten(flat);
  shape_.stencil(axis, idx[axis], 1, offsets, coeffs);
  const Mat& Wc = frames_[flat];
  // A stored neighbor frame far from the center frame marks an orientation
  // seam; difference against a re-anchored copy instead.
  const double seam = 0.5 * std::sqrt(static_cast<double>(Wc.cols()));
  Mat d = Mat::Zero(Wc.rows(), Wc.cols());
  for (size_t t = 0; t < offsets.size(); ++t) {
    int nb = shape_.neighbor(flat, axis, offsets[t]);
    if (nb < 0) throw StencilOutOfDomain("frame derivative: stencil off grid");
    if ((frames_[nb] - Wc).norm() > seam)
      d += coeffs[t] * align_to_anchor(frames_[nb], Wc);
    else
      d += coeffs[t] * frames_[nb];
  }
  return d;
}

Vec endpoint_map(const ChartedManifold& m, const FrameField& frames,
                 const Vec& u, const Vec& r) {
  const int codim = m.ambient_dim() - m.param_dim();
  if (r.size() != codim)
    throw SpecError("endpoint map: normal coefficient count mismatch");
  int flat = frames.node_index(m, u);
  Mat W = flat >= 0 ? frames.frame(flat) : frames.frame_at(m, u);
  return m.evaluate(u) + W * r;
}

Mat endpoint_jacobian(const ChartedManifold& m, const FrameField& frames,
                      const Vec& u, const Vec& r) {
  const int N = m.ambient_dim();
  const int k = m.param_dim();
  if (r.size() != N - k)
    throw SpecError("endpoint map: normal coefficient count mismatch");
  Mat DE(N, N);
  int flat = frames.node_index(m, u);
  if (flat >= 0) {
    Mat J = m.jacobian_node(flat);
    for (int j = 0; j < k; ++j)
      DE.col(j) = J.col(j) + frames.frame_derivative(m, flat, j) * r;
    DE.rightCols(N - k) = frames.frame(flat);
    return DE;
  }
  // Off the lattice: frames along each stencil are re-anchored to the frame
  // at u itself, so the differenced field is continuous by construction.
  Vec w = m.wrap(u);
  Mat Wu = frames.frame_at(m, w);
  Mat J = m.jacobian(w);
  std::vector<int> offsets;
  std::vector<double> coeffs;
  for (int j = 0; j < k; ++j) {
    double h = m.shape().spacing(j);
    axis_stencil(m.shape().axis(j), w[j], h, 1, offsets, coeffs);
    Mat d = Mat::Zero(N, N - k);
    for (size_t t = 0; t < offsets.size(); ++t) {
      if (offsets[t] == 0) {
        d += coeffs[t] * Wu;
        continue;
      }
      Vec up = w;
      up[j] += offsets[t] * h;
      d += coeffs[t] * normal_frame(m, up, &Wu).W;
    }
    DE.col(j) = J.col(j) + d * r;
  }
  DE.rightCols(N - k) = Wu;
  return DE;
}

double focal_distance(const ChartedManifold& m, const Vec& u, const Vec& v) {
  FundamentalForms ff = fundamental_forms(m, u, v);
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < ff.principal_curvatures.size(); ++i) {
    double p = ff.principal_curvatures[i];
    if (p > 1e-12) best = std::min(best, 1.0 / p);
  }
  return best;
}

}  // namespace tubeflow
