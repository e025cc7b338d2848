#include "tubeflow/penalty.hpp"

#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <limits>

namespace tubeflow {

DataCloud DataCloud::make(Mat points, Vec weights) {
  if (points.cols() < 1) throw EmptyCloud("data cloud: no points");
  if (points.rows() < 1) throw SpecError("data cloud: ambient dimension zero");
  DataCloud c;
  c.points = std::move(points);
  if (weights.size() == 0) {
    c.weights = Vec::Ones(c.points.cols());
  } else {
    if (weights.size() != c.points.cols())
      throw SpecError("data cloud: weight count does not match point count");
    if ((weights.array() <= 0.0).any())
      throw SpecError("data cloud: weights must be positive");
    c.weights = std::move(weights);
  }
  return c;
}

double VolumePenalty::value_on_samples(const GridSamples& gs) const {
  double total = 0.0;
  for (int f = 0; f < gs.count(); ++f) total += gs.quadrature_weight(f);
  return total;
}

double VolumePenalty::value(const ChartedManifold& m) const {
  if (m.deriv_order() < 1) return value_on_samples(m.samples());
  const GridShape& shape = m.shape();
  double total = 0.0;
  for (int f = 0; f < shape.total(); ++f) {
    Mat J = m.jacobian_node(f);
    double det = (J.transpose() * J).determinant();
    if (!(det > 0.0))
      throw DegenerateMetric("volume: metric not positive at a grid node");
    total += std::sqrt(det) * shape.cell_weight(f);
  }
  return total;
}

DistancePenalty::DistancePenalty(DataCloud cloud) : cloud_(std::move(cloud)) {
  if (cloud_.count() < 1) throw EmptyCloud("distance penalty: empty cloud");
}

double DistancePenalty::value_on_samples(const GridSamples& gs) const {
  return detail(gs).value;
}

DistanceDetail DistancePenalty::detail(const GridSamples& gs) const {
  if (gs.ambient_dim() != cloud_.points.rows())
    throw SpecError("distance penalty: ambient dimension mismatch");
  DistanceDetail d;
  d.nearest.resize(cloud_.count(), -1);
  for (int j = 0; j < cloud_.count(); ++j) {
    double best = (gs.points.col(0) - cloud_.points.col(j)).squaredNorm();
    int arg = 0;
    bool tied = false;
    for (int f = 1; f < gs.count(); ++f) {
      double d2 = (gs.points.col(f) - cloud_.points.col(j)).squaredNorm();
      double band = 1e-12 * std::max(best, 1.0);
      if (d2 < best - band) {
        best = d2;
        arg = f;
        tied = false;
      } else if (d2 <= best + band) {
        // Within the tie band of the running minimum. Lowest flat index wins.
        tied = true;
        if (d2 < best) best = d2;
      }
    }
    d.nearest[j] = arg;
    if (tied) d.tied.push_back(j);
    d.value += cloud_.weights[j] * best;
  }
  return d;
}

PinnedCoordinatePenalty::PinnedCoordinatePenalty(int ambient_axis,
                                                 int node_flat)
    : axis_(ambient_axis), node_(node_flat) {
  if (axis_ < 0 || node_ < 0)
    throw SpecError("pinned coordinate: negative axis or node index");
}

double PinnedCoordinatePenalty::value_on_samples(const GridSamples& gs) const {
  if (axis_ >= gs.ambient_dim() || node_ >= gs.count())
    throw SpecError("pinned coordinate: index outside the sample lattice");
  return gs.points(axis_, node_);
}

CombinationPenalty::CombinationPenalty(std::vector<Part> parts)
    : parts_(std::move(parts)) {
  if (parts_.empty()) throw SpecError("combination penalty: no parts");
  for (const Part& p : parts_)
    if (!p.second) throw SpecError("combination penalty: null part");
}

double CombinationPenalty::value_on_samples(const GridSamples& gs) const {
  double total = 0.0;
  for (const Part& p : parts_) total += p.first * p.second->value_on_samples(gs);
  return total;
}

double CombinationPenalty::value(const ChartedManifold& m) const {
  double total = 0.0;
  for (const Part& p : parts_) total += p.first * p.second->value(m);
  return total;
}

double volume(const ChartedManifold& m) { return VolumePenalty().value(m); }

DistanceDetail distance_penalty(const ChartedManifold& m,
                                const DataCloud& cloud) {
  return DistancePenalty(cloud).detail(m.samples());
}

GradientField l2_gradient(const PenaltyFunctional& p, const ChartedManifold& m,
                          double step_rel) {
  const int N = m.ambient_dim();
  const int k = m.param_dim();
  GridSamples work = m.samples();
  const int count = work.count();
  double step = step_rel * m.ambient_scale();
  if (!(step > 0.0)) throw SpecError("gradient: non-positive step");

  Vec weight(count);
  for (int f = 0; f < count; ++f) weight[f] = work.quadrature_weight(f);

  GradientField field;
  field.Z = Mat::Zero(N, count);
  field.tangential_norm = Vec::Zero(count);
  field.normal_norm = Vec::Zero(count);
  for (int f = 0; f < count; ++f) {
    for (int a = 0; a < N; ++a) {
      double saved = work.points(a, f);
      work.points(a, f) = saved + step;
      double vp = p.value_on_samples(work);
      work.points(a, f) = saved - step;
      double vm = p.value_on_samples(work);
      work.points(a, f) = saved;
      field.Z(a, f) = (vp - vm) / (2.0 * step * weight[f]);
    }
  }

  for (int f = 0; f < count; ++f) {
    Mat J = m.jacobian_node(f);
    Eigen::HouseholderQR<Mat> qr(J);
    Mat Q = qr.householderQ() * Mat::Identity(N, k);
    Vec z = field.Z.col(f);
    Vec coeff = Q.transpose() * z;
    field.tangential_norm[f] = coeff.norm();
    field.normal_norm[f] = (z - Q * coeff).norm();
  }
  return field;
}

double normality_defect(const GradientField& field, const ChartedManifold& m) {
  if (field.Z.cols() != m.shape().total())
    throw SpecError("normality defect: field does not match the grid");
  double worst = 0.0;
  for (int f = 0; f < field.Z.cols(); ++f) {
    double denom = std::max(field.Z.col(f).norm(), 1e-12);
    worst = std::max(worst, field.tangential_norm[f] / denom);
  }
  return worst;
}

Diffeo Diffeo::identity(int k) {
  if (k < 1) throw SpecError("diffeo: rank must be positive");
  Diffeo d;
  d.kind_.assign(k, Kind::identity);
  d.param_.assign(k, 0.0);
  return d;
}

Diffeo& Diffeo::shift(int axis, double amount) {
  if (axis < 0 || axis >= rank()) throw SpecError("diffeo: axis out of range");
  kind_[axis] = Kind::shift;
  param_[axis] = amount;
  return *this;
}

Diffeo& Diffeo::sine_warp(int axis, double amplitude) {
  if (axis < 0 || axis >= rank()) throw SpecError("diffeo: axis out of range");
  if (!(std::abs(amplitude) < 1.0))
    throw NotBijective("diffeo: sine warp amplitude must satisfy |a| < 1");
  kind_[axis] = Kind::warp;
  param_[axis] = amplitude;
  return *this;
}

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

Vec Diffeo::apply(const std::vector<Axis>& axes, const Vec& u) const {
  if (static_cast<int>(axes.size()) != rank() || u.size() != rank())
    throw SpecError("diffeo: rank mismatch");
  Vec v = u;
  for (int j = 0; j < rank(); ++j) {
    const Axis& ax = axes[j];
    switch (kind_[j]) {
      case Kind::identity:
        break;
      case Kind::shift:
        if (!ax.periodic)
          throw SpecError("diffeo: phase shift needs a periodic axis");
        v[j] = u[j] + param_[j];
        break;
      case Kind::warp: {
        double s = kTwoPi * (u[j] - ax.lo) / ax.length();
        v[j] = u[j] + param_[j] * (ax.length() / kTwoPi) * std::sin(s);
        break;
      }
    }
  }
  return v;
}

double Diffeo::deriv(const std::vector<Axis>& axes, int axis, double u) const {
  if (axis < 0 || axis >= rank()) throw SpecError("diffeo: axis out of range");
  if (kind_[axis] != Kind::warp) return 1.0;
  const Axis& ax = axes[axis];
  double s = kTwoPi * (u - ax.lo) / ax.length();
  return 1.0 + param_[axis] * std::cos(s);
}

double Diffeo::second(const std::vector<Axis>& axes, int axis, double u) const {
  if (axis < 0 || axis >= rank()) throw SpecError("diffeo: axis out of range");
  if (kind_[axis] != Kind::warp) return 0.0;
  const Axis& ax = axes[axis];
  double s = kTwoPi * (u - ax.lo) / ax.length();
  return -param_[axis] * (kTwoPi / ax.length()) * std::sin(s);
}

ChartedManifold reparametrized(const ChartedManifold& m, const Diffeo& d) {
  if (d.rank() != m.param_dim())
    throw SpecError("reparametrized: diffeo rank does not match the chart");
  std::vector<Axis> axes = m.shape().axes();
  auto eval = [m, d, axes](const Vec& u) { return m.evaluate(d.apply(axes, u)); };
  auto jac = [m, d, axes](const Vec& u) {
    Mat J = m.jacobian(d.apply(axes, u));
    for (int j = 0; j < J.cols(); ++j) J.col(j) *= d.deriv(axes, j, u[j]);
    return J;
  };
  auto second = [m, d, axes](const Vec& u, int a, int b) {
    Vec v = d.apply(axes, u);
    Vec s = m.second_derivative(v, a, b) * d.deriv(axes, a, u[a]) *
            d.deriv(axes, b, u[b]);
    if (a == b) s += m.jacobian(v).col(a) * d.second(axes, a, u[a]);
    return s;
  };
  ChartedManifold out = ChartedManifold::from_closures(
      m.shape(), m.ambient_dim(), eval, jac, second, m.family());
  if (m.has_outward_hint()) {
    out.set_outward_hint(
        [m, d, axes](const Vec& u) { return m.outward_hint(d.apply(axes, u)); });
  }
  return out;
}

double reparametrization_invariance(const PenaltyFunctional& p,
                                    const ChartedManifold& m, const Diffeo& d) {
  return std::abs(p.value(reparametrized(m, d)) - p.value(m));
}

}  // namespace tubeflow
