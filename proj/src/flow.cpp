#include "tubeflow/flow.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>

namespace tubeflow {

namespace {

Vec orientation_hint(const ChartedManifold& m, const Vec& u,
                     const Vec& centroid) {
  if (m.has_outward_hint()) return m.outward_hint(u);
  return m.evaluate(u) - centroid;
}

}  // namespace

NormalField NormalField::outward(const ChartedManifold& m,
                                 const FrameField& frames) {
  if (m.ambient_dim() - m.param_dim() != 1)
    throw SpecError("normal field: outward orientation needs codimension 1");
  const GridShape& shape = m.shape();
  Vec centroid = m.samples().points.rowwise().mean();
  NormalField field;
  field.v = Mat::Zero(m.ambient_dim(), shape.total());
  for (int f = 0; f < shape.total(); ++f) {
    Vec w = frames.frame(f).col(0);
    Vec hint = orientation_hint(m, shape.node(f), centroid);
    field.v.col(f) = hint.dot(w) >= 0.0 ? w : Vec(-w);
  }
  return field;
}

NormalField NormalField::inward(const ChartedManifold& m,
                                const FrameField& frames) {
  NormalField field = outward(m, frames);
  field.v = -field.v;
  return field;
}

NormalField NormalField::from_matrix(const ChartedManifold& m, Mat v) {
  if (v.rows() != m.ambient_dim() || v.cols() != m.shape().total())
    throw FieldGridMismatch("normal field: matrix does not match the grid");
  for (int f = 0; f < v.cols(); ++f) {
    double len = v.col(f).norm();
    if (len <= 1e-12)
      throw SpecError("normal field: zero column cannot be normalized");
    v.col(f) /= len;
    Mat J = m.jacobian_node(f);
    for (int j = 0; j < J.cols(); ++j) {
      double proj = std::abs(J.col(j).dot(v.col(f)));
      if (proj > 1e-6 * J.col(j).norm())
        throw NotNormal("normal field: column has a tangential component");
    }
  }
  NormalField field;
  field.v = std::move(v);
  return field;
}

ChartedManifold linear_normal_flow(const ChartedManifold& m,
                                   const NormalField& field, double t) {
  if (field.v.rows() != m.ambient_dim() ||
      field.v.cols() != m.shape().total())
    throw FieldGridMismatch("linear flow: field does not match the grid");
  GridSamples gs = m.samples();
  gs.points += t * field.v;
  return ChartedManifold::from_samples(std::move(gs), false);
}

OracleVerdict immersion_check(const ChartedManifold& snapshot,
                              double ambient_scale) {
  const GridShape& shape = snapshot.shape();
  double scale =
      ambient_scale > 0.0 ? ambient_scale : snapshot.ambient_scale();
  double param_diam = 0.0;
  for (int j = 0; j < shape.rank(); ++j)
    param_diam += shape.axis(j).length() * shape.axis(j).length();
  param_diam = std::sqrt(param_diam);
  double collapse = 1e-8 * scale / param_diam;

  OracleVerdict v;
  for (int f = 0; f < shape.total(); ++f) {
    Mat J = snapshot.jacobian_node(f);
    Eigen::JacobiSVD<Mat> svd(J);
    double s_max = svd.singularValues()(0);
    double s_min = svd.singularValues()(svd.singularValues().size() - 1);
    if (s_max <= collapse) {
      v.pass = false;
      v.reason = "tangent frame collapsed";
      v.fail_node = f;
      return v;
    }
    if (s_min <= 1e-8 * s_max) {
      v.pass = false;
      v.reason = "rank drop in the lattice Jacobian";
      v.fail_node = f;
      return v;
    }
  }
  return v;
}

OracleVerdict injectivity_oracle(const ChartedManifold& snapshot,
                                 double separation_ratio) {
  if (!(separation_ratio > 0.0))
    throw SpecError("injectivity oracle: ratio must be positive");
  const GridShape& shape = snapshot.shape();
  const GridSamples& gs = snapshot.samples();
  const int count = shape.total();
  const int k = shape.rank();

  double param_diam = 0.0;
  for (int j = 0; j < k; ++j) {
    double L = shape.axis(j).length();
    double far = shape.axis(j).periodic ? L / 2.0 : L;
    param_diam += far * far;
  }
  param_diam = std::sqrt(param_diam);
  double far_param = separation_ratio * param_diam;
  double close = separation_ratio * gs.median_local_spacing();
  double close2 = close * close;

  Mat coords(k, count);
  for (int f = 0; f < count; ++f) coords.col(f) = shape.node(f);

  OracleVerdict v;
  for (int a = 0; a < count; ++a) {
    for (int b = a + 1; b < count; ++b) {
      double amb2 = (gs.points.col(a) - gs.points.col(b)).squaredNorm();
      if (amb2 >= close2) continue;
      double pd2 = 0.0;
      for (int j = 0; j < k; ++j) {
        double d = std::abs(coords(j, a) - coords(j, b));
        if (shape.axis(j).periodic)
          d = std::min(d, shape.axis(j).length() - d);
        pd2 += d * d;
      }
      if (pd2 > far_param * far_param) {
        v.pass = false;
        v.reason = "distant parameters map to near-coincident points";
        v.witness_a = a;
        v.witness_b = b;
        return v;
      }
    }
  }
  return v;
}

OracleVerdict embedding_oracle(const ChartedManifold& snapshot,
                               double separation_ratio, double ambient_scale) {
  OracleVerdict v = immersion_check(snapshot, ambient_scale);
  if (!v.pass) return v;
  return injectivity_oracle(snapshot, separation_ratio);
}

double max_embedding_time(const ChartedManifold& m, const NormalField& field,
                          double t_max, int resolution) {
  if (!(t_max > 0.0)) throw SpecError("embedding time: t_max must be positive");
  if (resolution < 2) throw SpecError("embedding time: resolution too small");
  double scale = m.ambient_scale();
  auto passes = [&](double t) {
    return embedding_oracle(linear_normal_flow(m, field, t), 0.1, scale).pass;
  };
  double lo = 0.0;
  double hi = -1.0;
  for (int i = 1; i <= resolution; ++i) {
    double t = t_max * i / resolution;
    if (passes(t)) {
      lo = t;
    } else {
      hi = t;
      break;
    }
  }
  if (hi < 0.0) return t_max;
  while (hi - lo > 1e-4 * t_max) {
    double mid = 0.5 * (lo + hi);
    (passes(mid) ? lo : hi) = mid;
  }
  return lo;
}

StepRule StepRule::fixed_step(double h) {
  if (!(h > 0.0)) throw SpecError("step rule: step must be positive");
  StepRule r;
  r.kind = Kind::fixed;
  r.h = h;
  return r;
}

StepRule StepRule::tstar_capped(double fraction, int recompute_every) {
  if (!(fraction > 0.0) || fraction > 1.0)
    throw SpecError("step rule: fraction must lie in (0, 1]");
  if (recompute_every < 1)
    throw SpecError("step rule: recompute interval must be positive");
  StepRule r;
  r.kind = Kind::tstar_capped;
  r.fraction = fraction;
  r.recompute_every = recompute_every;
  return r;
}

StepRule StepRule::backtracking(double c, double rho) {
  if (!(c > 0.0 && c < 1.0) || !(rho > 0.0 && rho < 1.0))
    throw SpecError("step rule: backtracking constants must lie in (0, 1)");
  StepRule r;
  r.kind = Kind::backtracking;
  r.c = c;
  r.rho = rho;
  return r;
}

FlowTrace gradient_descent_flow(const ChartedManifold& m,
                                const PenaltyFunctional& p, int max_steps,
                                const StepRule& rule,
                                const TubeSamplingOptions& tube_opts) {
  if (max_steps < 1) throw SpecError("flow: need at least one step");
  double scale = m.ambient_scale();
  GridSamples current = m.samples();

  FlowTrace trace;
  {
    FlowStep initial;
    initial.index = 0;
    initial.penalty = p.value_on_samples(current);
    initial.verdict = embedding_oracle(
        ChartedManifold::from_samples(current, false), 0.1, scale);
    initial.snapshot = current;
    trace.steps.push_back(std::move(initial));
  }

  double t_star = 0.0;
  for (int n = 0; n < max_steps; ++n) {
    ChartedManifold snap = ChartedManifold::from_samples(current, false);
    GradientField grad = l2_gradient(p, snap);
    double gnorm = 0.0;
    for (int f = 0; f < grad.Z.cols(); ++f)
      gnorm = std::max(gnorm, grad.Z.col(f).norm());
    if (gnorm <= 1e-10) {
      trace.stopped_on_small_gradient = true;
      break;
    }

    double h = rule.h;
    if (rule.kind == StepRule::Kind::tstar_capped) {
      if (n % rule.recompute_every == 0) {
        FrameField frames = FrameField::build(snap);
        t_star = safe_flow_time(snap, frames, tube_opts).t_star;
      }
      h = rule.fraction * t_star / gnorm;
    } else if (rule.kind == StepRule::Kind::backtracking) {
      double base = p.value_on_samples(current);
      double slope = 0.0;
      for (int f = 0; f < grad.Z.cols(); ++f)
        slope += current.quadrature_weight(f) * grad.Z.col(f).squaredNorm();
      GridSamples trial = current;
      while (h > 1e-16) {
        trial.points = current.points - h * grad.Z;
        if (p.value_on_samples(trial) <= base - rule.c * h * slope) break;
        h *= rule.rho;
      }
    }

    FlowStep step;
    step.index = n + 1;
    step.step_size = h;
    step.max_displacement = h * gnorm;
    GridSamples next = current;
    next.points -= h * grad.Z;
    step.penalty = p.value_on_samples(next);
    step.verdict = embedding_oracle(ChartedManifold::from_samples(next, false),
                                    0.1, scale);
    step.snapshot = next;
    bool failed = !step.verdict.pass;
    trace.steps.push_back(std::move(step));
    if (failed) {
      trace.stopped_on_oracle = true;
      break;
    }
    current = std::move(next);
  }
  return trace;
}

}  // namespace tubeflow
