#include "tubeflow/manifold.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>
#include <cmath>
#include <random>

namespace tubeflow {

ChartedManifold ChartedManifold::from_closures(GridShape shape,
                                               int ambient_dim, EvalFn eval,
                                               JacobianFn jac, SecondFn second,
                                               std::string family) {
  if (!eval) throw SpecError("manifold: evaluation closure required");
  if (ambient_dim < shape.rank())
    throw SpecError("manifold: ambient dimension below parameter dimension");
  ChartedManifold m;
  m.shape_ = std::move(shape);
  m.ambient_dim_ = ambient_dim;
  m.eval_ = std::move(eval);
  m.jac_ = std::move(jac);
  m.second_ = std::move(second);
  m.deriv_order_ = m.jac_ ? (m.second_ ? 2 : 1) : 0;
  m.family_ = std::move(family);
  double hmin = m.shape_.spacing(0);
  for (int j = 1; j < m.shape_.rank(); ++j)
    hmin = std::min(hmin, m.shape_.spacing(j));
  m.fd_step_ = hmin / 4.0;
  GridSamples gs;
  gs.shape = m.shape_;
  gs.points.resize(ambient_dim, m.shape_.total());
  for (int flat = 0; flat < m.shape_.total(); ++flat) {
    Vec x = m.eval_(m.shape_.node(flat));
    if (x.size() != ambient_dim)
      throw SpecError("manifold: closure returned wrong ambient dimension");
    gs.points.col(flat) = x;
  }
  m.cache_ = std::make_shared<GridSamples>(std::move(gs));
  m.validate_immersion_at_nodes();
  return m;
}

ChartedManifold ChartedManifold::from_samples(GridSamples samples,
                                              bool validate_immersion) {
  if (samples.points.cols() != samples.shape.total())
    throw SpecError("manifold: sample count does not match the grid");
  if (samples.points.rows() < samples.shape.rank())
    throw SpecError("manifold: ambient dimension below parameter dimension");
  ChartedManifold m;
  m.shape_ = samples.shape;
  m.ambient_dim_ = static_cast<int>(samples.points.rows());
  m.sample_backed_ = true;
  m.deriv_order_ = 0;
  m.family_ = "sampled";
  double hmin = m.shape_.spacing(0);
  for (int j = 1; j < m.shape_.rank(); ++j)
    hmin = std::min(hmin, m.shape_.spacing(j));
  m.fd_step_ = hmin / 4.0;
  m.cache_ = std::make_shared<GridSamples>(std::move(samples));
  if (validate_immersion) m.validate_immersion_at_nodes();
  return m;
}

ChartedManifold ChartedManifold::transformed(const Mat& A,
                                             const Vec& b) const {
  if (A.rows() != ambient_dim_ || A.cols() != ambient_dim_ ||
      b.size() != ambient_dim_)
    throw SpecError("transform: matrix/offset shape mismatch");
  Eigen::FullPivLU<Mat> lu(A);
  if (!lu.isInvertible()) throw SpecError("transform: singular matrix");
  ChartedManifold m;
  m.shape_ = shape_;
  m.ambient_dim_ = ambient_dim_;
  m.deriv_order_ = deriv_order_;
  m.sample_backed_ = sample_backed_;
  m.family_ = family_;
  m.fd_step_ = fd_step_;
  if (!sample_backed_) {
    m.eval_ = [A, b, e = eval_](const Vec& u) { return Vec(A * e(u) + b); };
    if (jac_) m.jac_ = [A, j = jac_](const Vec& u) { return Mat(A * j(u)); };
    if (second_)
      m.second_ = [A, s = second_](const Vec& u, int a, int c) {
        return Vec(A * s(u, a, c));
      };
  }
  GridSamples gs = *cache_;
  gs.points = (A * gs.points).colwise() + b;
  m.cache_ = std::make_shared<GridSamples>(std::move(gs));
  if (outward_hint_)
    m.outward_hint_ = [A, h = outward_hint_](const Vec& u) {
      return Vec(A * h(u));
    };
  m.validate_immersion_at_nodes();
  return m;
}

void ChartedManifold::validate_immersion_at_nodes() const {
  for (int flat = 0; flat < shape_.total(); ++flat) {
    Eigen::JacobiSVD<Mat> svd(jacobian_node(flat));
    double s_max = svd.singularValues()(0);
    double s_min = svd.singularValues()(svd.singularValues().size() - 1);
    if (!(s_max > 0.0) || s_min <= 1e-10 * s_max)
      throw RankDeficient("manifold: chart Jacobian rank-deficient at node " +
                          std::to_string(flat));
  }
}

Vec ChartedManifold::wrap(const Vec& u) const {
  if (u.size() != param_dim())
    throw SpecError("manifold: parameter dimension mismatch");
  Vec w = u;
  for (int j = 0; j < param_dim(); ++j) {
    const Axis& ax = shape_.axis(j);
    if (ax.periodic) {
      double t = std::fmod(u[j] - ax.lo, ax.length());
      if (t < 0.0) t += ax.length();
      if (t >= ax.length()) t = 0.0;
      w[j] = ax.lo + t;
    } else {
      const double tol = 1e-9 * ax.length();
      if (u[j] < ax.lo - tol || u[j] > ax.hi + tol)
        throw OutOfDomain("manifold: parameter outside chart domain");
      w[j] = std::min(std::max(u[j], ax.lo), ax.hi);
    }
  }
  return w;
}

namespace {

// Multilinear interpolation of lattice samples. Exact at the nodes.
Vec interpolate(const GridSamples& gs, const Vec& u) {
  const GridShape& shape = gs.shape;
  const int k = shape.rank();
  std::vector<int> base(k);
  std::vector<double> frac(k);
  for (int j = 0; j < k; ++j) {
    const Axis& ax = shape.axis(j);
    double t = (u[j] - ax.lo) / shape.spacing(j);
    int i0 = static_cast<int>(std::floor(t));
    if (ax.periodic) {
      i0 = ((i0 % shape.dim(j)) + shape.dim(j)) % shape.dim(j);
    } else {
      i0 = std::min(std::max(i0, 0), shape.dim(j) - 2);
    }
    base[j] = i0;
    frac[j] = t - std::floor(t);
    if (!ax.periodic) frac[j] = t - i0;
  }
  Vec out = Vec::Zero(gs.ambient_dim());
  std::vector<int> idx(k);
  for (int corner = 0; corner < (1 << k); ++corner) {
    double w = 1.0;
    for (int j = 0; j < k; ++j) {
      if (corner & (1 << j)) {
        idx[j] = base[j] + 1;
        if (shape.axis(j).periodic) idx[j] %= shape.dim(j);
        w *= frac[j];
      } else {
        idx[j] = base[j];
        w *= 1.0 - frac[j];
      }
    }
    if (w != 0.0) out += w * gs.points.col(shape.flatten(idx));
  }
  return out;
}

}  // namespace

Vec ChartedManifold::evaluate(const Vec& u) const {
  Vec w = wrap(u);
  if (sample_backed_) return interpolate(*cache_, w);
  return eval_(w);
}

Mat ChartedManifold::jacobian(const Vec& u) const {
  Vec w = wrap(u);
  if (!sample_backed_ && jac_) return jac_(w);
  return fd_jacobian_closure(w);
}

Vec ChartedManifold::second_derivative(const Vec& u, int a, int b) const {
  Vec w = wrap(u);
  if (!sample_backed_ && second_) return second_(w, a, b);
  return fd_second_closure(w, a, b);
}

Vec ChartedManifold::evaluate_node(int flat) const {
  return cache_->points.col(flat);
}

Mat ChartedManifold::jacobian_node(int flat) const {
  if (sample_backed_) return cache_->fd_jacobian(flat);
  if (jac_) return jac_(shape_.node(flat));
  return fd_jacobian_closure(shape_.node(flat));
}

Vec ChartedManifold::second_derivative_node(int flat, int a, int b) const {
  if (sample_backed_) return cache_->fd_second(flat, a, b);
  if (second_) return second_(shape_.node(flat), a, b);
  return fd_second_closure(shape_.node(flat), a, b);
}

Mat ChartedManifold::fd_jacobian_closure(const Vec& u) const {
  // Sample-backed charts differentiate the interpolant with full lattice
  // steps (node values then match the lattice stencils exactly); analytic
  // charts without a Jacobian closure use a quarter-spacing step.
  Mat J(ambient_dim_, param_dim());
  std::vector<int> offsets;
  std::vector<double> coeffs;
  for (int j = 0; j < param_dim(); ++j) {
    double h = sample_backed_ ? shape_.spacing(j) : fd_step_;
    axis_stencil(shape_.axis(j), u[j], h, 1, offsets, coeffs);
    Vec col = Vec::Zero(ambient_dim_);
    for (size_t t = 0; t < offsets.size(); ++t) {
      Vec up = u;
      up[j] += offsets[t] * h;
      col += coeffs[t] * evaluate(up);
    }
    J.col(j) = col;
  }
  return J;
}

Vec ChartedManifold::fd_second_closure(const Vec& u, int a, int b) const {
  std::vector<int> offsets;
  std::vector<double> coeffs;
  double ha = sample_backed_ ? shape_.spacing(a) : fd_step_;
  if (!sample_backed_ && jac_) {
    // Differentiate column b of the analytic Jacobian along axis a.
    axis_stencil(shape_.axis(a), u[a], ha, 1, offsets, coeffs);
    Vec out = Vec::Zero(ambient_dim_);
    for (size_t t = 0; t < offsets.size(); ++t) {
      Vec up = u;
      up[a] += offsets[t] * ha;
      out += coeffs[t] * jac_(wrap(up)).col(b);
    }
    return out;
  }
  if (a == b) {
    axis_stencil(shape_.axis(a), u[a], ha, 2, offsets, coeffs);
    Vec out = Vec::Zero(ambient_dim_);
    for (size_t t = 0; t < offsets.size(); ++t) {
      Vec up = u;
      up[a] += offsets[t] * ha;
      out += coeffs[t] * evaluate(up);
    }
    return out;
  }
  // Mixed partial: nest the two first-order stencils.
  axis_stencil(shape_.axis(a), u[a], ha, 1, offsets, coeffs);
  double hb = sample_backed_ ? shape_.spacing(b) : fd_step_;
  std::vector<int> offs_b;
  std::vector<double> coef_b;
  Vec out = Vec::Zero(ambient_dim_);
  for (size_t t = 0; t < offsets.size(); ++t) {
    Vec up = u;
    up[a] += offsets[t] * ha;
    axis_stencil(shape_.axis(b), up[b], hb, 1, offs_b, coef_b);
    for (size_t s = 0; s < offs_b.size(); ++s) {
      Vec upp = up;
      upp[b] += offs_b[s] * hb;
      out += coeffs[t] * coef_b[s] * evaluate(upp);
    }
  }
  return out;
}

const GridSamples& ChartedManifold::samples() const { return *cache_; }

double ChartedManifold::ambient_scale() const {
  return cache_->ambient_diameter();
}

Vec ChartedManifold::outward_hint(const Vec& u) const {
  if (!outward_hint_)
    throw SpecError("manifold: no outward side hint for this family");
  return outward_hint_(wrap(u));
}

FundamentalForms fundamental_forms(const ChartedManifold& m, const Vec& u,
                                   const Vec& v) {
  if (v.size() != m.ambient_dim())
    throw SpecError("fundamental forms: normal vector dimension mismatch");
  Mat J = m.jacobian(u);
  if (std::abs(v.norm() - 1.0) > 1e-8)
    throw NotNormal("fundamental forms: direction is not a unit vector");
  if ((J.transpose() * v).norm() > 1e-8 * J.norm())
    throw NotNormal("fundamental forms: direction has a tangential part");
  const int k = m.param_dim();
  FundamentalForms out;
  out.g = J.transpose() * J;
  Eigen::SelfAdjointEigenSolver<Mat> ges(out.g);
  double emin = ges.eigenvalues()(0);
  double emax = ges.eigenvalues()(k - 1);
  if (!(emax > 0.0) || emin <= 1e-12 * emax)
    throw DegenerateMetric("fundamental forms: singular first form");
  out.l.resize(k, k);
  for (int a = 0; a < k; ++a)
    for (int b = a; b < k; ++b) {
      double lab = v.dot(m.second_derivative(u, a, b));
      out.l(a, b) = lab;
      out.l(b, a) = lab;
    }
  Eigen::GeneralizedSelfAdjointEigenSolver<Mat> pencil(out.l, out.g);
  out.principal_curvatures = pencil.eigenvalues();
  return out;
}

namespace {

// Largest curvature at one node, maximized over all unit normal directions.
// Uses max_{x tangent, x^T g x = 1} |P_normal II(x,x)| which equals the
// normal-direction maximum because the second form is linear in the normal.
double node_curvature(const ChartedManifold& m, int flat,
                      const CurvatureOptions& opts) {
  const int k = m.param_dim();
  const int N = m.ambient_dim();
  const int codim = N - k;
  if (codim == 0) return 0.0;
  Mat J = m.jacobian_node(flat);
  Mat g = J.transpose() * J;
  std::vector<Vec> h(static_cast<size_t>(k) * k);
  for (int a = 0; a < k; ++a)
    for (int b = a; b < k; ++b) {
      Vec s = m.second_derivative_node(flat, a, b);
      h[a * k + b] = s;
      h[b * k + a] = s;
    }
  Eigen::HouseholderQR<Mat> qr(J);
  Mat Q = qr.householderQ() * Mat::Identity(N, N);
  Mat Wn = Q.rightCols(codim);  // orthonormal normal basis

  if (codim == 1) {
    Vec n = Wn.col(0);
    Mat l(k, k);
    for (int a = 0; a < k; ++a)
      for (int b = 0; b < k; ++b) l(a, b) = n.dot(h[a * k + b]);
    Eigen::GeneralizedSelfAdjointEigenSolver<Mat> pencil(l, g);
    double lo = pencil.eigenvalues()(0);
    double hi = pencil.eigenvalues()(k - 1);
    return std::max(std::abs(lo), std::abs(hi));
  }

  auto normal_accel = [&](const Vec& x) {
    Vec acc = Vec::Zero(N);
    for (int a = 0; a < k; ++a)
      for (int b = 0; b < k; ++b) acc += x[a] * x[b] * h[a * k + b];
    return Vec(Wn.transpose() * acc);
  };

  if (k == 1) {
    // Single tangent direction: the maximum is attained along it exactly.
    return normal_accel(Vec::Ones(1)).norm() / g(0, 0);
  }

  // Sample tangent directions on the metric unit sphere, then refine around
  // the best one with a shrinking deterministic local search.
  std::mt19937 rng(opts.seed + 0x9e3779b9u * static_cast<unsigned>(flat + 1));
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto draw = [&]() {
    Vec z(k);
    for (int j = 0; j < k; ++j) z[j] = gauss(rng);
    return z;
  };
  auto value = [&](const Vec& z) {
    double q = z.dot(g * z);
    if (!(q > 0.0)) return 0.0;
    return normal_accel(z).norm() / q;
  };
  Vec best = draw();
  double best_val = value(best);
  for (int s = 1; s < opts.normal_dirs; ++s) {
    Vec z = draw();
    double v = value(z);
    if (v > best_val) {
      best_val = v;
      best = z;
    }
  }
  double radius = 0.5;
  for (int it = 0; it < 64; ++it) {
    Vec z = best + radius * best.norm() * draw().normalized();
    double v = value(z);
    if (v > best_val) {
      best_val = v;
      best = z;
    } else {
      radius *= 0.85;
    }
  }
  return best_val;
}

}  // namespace

double max_curvature_K(const ChartedManifold& m, const CurvatureOptions& opts) {
  const int total = m.shape().total();
  std::vector<double> per_node(total, 0.0);
  parallel_for(total,
               [&](int flat) { per_node[flat] = node_curvature(m, flat, opts); });
  double K = 0.0;
  for (double v : per_node) K = std::max(K, v);
  return K;
}

}  // namespace tubeflow
