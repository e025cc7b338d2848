#include "tubeflow/qift.hpp"

#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <limits>

namespace tubeflow {

namespace {

double sup_entry(const Mat& A) { return A.cwiseAbs().maxCoeff(); }
double sup_norm(const Vec& v) {
  return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}

Mat fd_jacobian(const std::function<Vec(const Vec&)>& f, const Vec& at,
                int out_dim) {
  Mat J(out_dim, at.size());
  double h = 1e-6 * std::max(1.0, sup_norm(at));
  for (int i = 0; i < at.size(); ++i) {
    Vec lo = at, hi = at;
    lo[i] -= h;
    hi[i] += h;
    J.col(i) = (f(hi) - f(lo)) / (2.0 * h);
  }
  return J;
}

}  // namespace

ImplicitProblem ImplicitProblem::make(int x_dim, int lambda_dim, ResidualFn F,
                                      const Vec& x0, const Vec& lambda0,
                                      JacobianFn dF_dx, JacobianFn dF_dlambda) {
  if (x_dim < 1 || lambda_dim < 1)
    throw SpecError("implicit problem: dimensions must be positive");
  if (!F) throw SpecError("implicit problem: residual closure required");
  if (x0.size() != x_dim || lambda0.size() != lambda_dim)
    throw SpecError("implicit problem: base point dimension mismatch");
  ImplicitProblem p;
  p.x_dim = x_dim;
  p.lambda_dim = lambda_dim;
  p.F = std::move(F);
  p.dF_dx = std::move(dF_dx);
  p.dF_dlambda = std::move(dF_dlambda);
  p.x0 = x0;
  p.lambda0 = lambda0;
  Vec r = p.F(x0, lambda0);
  if (r.size() != x_dim)
    throw SpecError("implicit problem: residual has wrong dimension");
  if (sup_norm(r) > 1e-12)
    throw SpecError("implicit problem: base point is not a root");
  Eigen::FullPivLU<Mat> lu(p.jac_x(x0, lambda0));
  if (!lu.isInvertible())
    throw SpecError("implicit problem: dF/dx singular at the base point");
  return p;
}

Mat ImplicitProblem::jac_x(const Vec& x, const Vec& lambda) const {
  if (dF_dx) return dF_dx(x, lambda);
  return fd_jacobian([&](const Vec& xx) { return F(xx, lambda); }, x, x_dim);
}

Mat ImplicitProblem::jac_lambda(const Vec& x, const Vec& lambda) const {
  if (dF_dlambda) return dF_dlambda(x, lambda);
  return fd_jacobian([&](const Vec& ll) { return F(x, ll); }, lambda, x_dim);
}

namespace {

// Sweep the sampled box |x-x0|, |lambda-lambda0| <= delta. Returns the sup of
// |I - A0inv A| and, through B, the sup of |dF/dlambda|.
double box_contraction_sup(const ImplicitProblem& p, const Mat& A0inv,
                           double delta, int spa, double* B) {
  const int dims = p.x_dim + p.lambda_dim;
  Vec base(dims);
  base.head(p.x_dim) = p.x0;
  base.tail(p.lambda_dim) = p.lambda0;
  long count = 1;
  for (int d = 0; d < dims; ++d) {
    count *= spa;
    if (count > 200000)
      throw SpecError("qift: sample budget exceeded for this dimension");
  }
  Mat I = Mat::Identity(p.x_dim, p.x_dim);
  double sup = 0.0;
  double bsup = 0.0;
  std::vector<int> idx(dims, 0);
  for (long s = 0; s < count; ++s) {
    Vec z = base;
    long rem = s;
    for (int d = 0; d < dims; ++d) {
      int i = static_cast<int>(rem % spa);
      rem /= spa;
      z[d] += spa == 1 ? 0.0 : -delta + 2.0 * delta * i / (spa - 1);
    }
    Vec x = z.head(p.x_dim);
    Vec l = z.tail(p.lambda_dim);
    sup = std::max(sup, sup_entry(I - A0inv * p.jac_x(x, l)));
    bsup = std::max(bsup, sup_entry(p.jac_lambda(x, l)));
  }
  if (B) *B = bsup;
  return sup;
}

QiftConstants assemble(const ImplicitProblem& p, const Mat& A0inv,
                       double delta, int spa) {
  QiftConstants c;
  c.delta = delta;
  c.M = sup_entry(A0inv);
  box_contraction_sup(p, A0inv, delta, spa, &c.B_delta);
  c.delta1 = c.B_delta > 0.0
                 ? delta / (2.0 * c.M * c.B_delta)
                 : std::numeric_limits<double>::infinity();
  return c;
}

}  // namespace

QiftConstants qift_constants(const ImplicitProblem& p,
                             const std::vector<double>& search_grid,
                             int samples_per_axis) {
  if (search_grid.empty()) throw SpecError("qift: empty search grid");
  for (double d : search_grid)
    if (!(d > 0.0)) throw SpecError("qift: search grid values must be positive");
  if (samples_per_axis < 2) throw SpecError("qift: need >= 2 samples per axis");
  std::vector<double> grid = search_grid;
  std::sort(grid.begin(), grid.end(), std::greater<double>());
  Mat A0inv = adjugate_inverse(p.jac_x(p.x0, p.lambda0));
  for (double delta : grid) {
    double sup = box_contraction_sup(p, A0inv, delta, samples_per_axis, nullptr);
    if (sup <= 0.5 + 1e-12) return assemble(p, A0inv, delta, samples_per_axis);
  }
  throw NoValidDelta("qift: half-contraction fails at every grid value");
}

QiftConstants qift_constants_auto(const ImplicitProblem& p, double scale,
                                  int levels, int samples_per_axis) {
  if (!(scale > 0.0)) throw SpecError("qift: scale must be positive");
  Mat A0inv = adjugate_inverse(p.jac_x(p.x0, p.lambda0));
  auto passes = [&](double delta) {
    return box_contraction_sup(p, A0inv, delta, samples_per_axis, nullptr) <=
           0.5 + 1e-12;
  };
  double delta = scale;
  double failed = 0.0;
  bool found = false;
  for (int lvl = 0; lvl < levels; ++lvl) {
    if (passes(delta)) {
      found = true;
      break;
    }
    failed = delta;
    delta *= 0.5;
  }
  if (!found) throw NoValidDelta("qift: half-contraction fails down to scale/2^levels");
  if (failed > 0.0) {
    double mid = 0.5 * (delta + failed);
    if (passes(mid)) delta = mid;
  }
  return assemble(p, A0inv, delta, samples_per_axis);
}

Vec qift_solve(const ImplicitProblem& p, const QiftConstants& c,
               const Vec& lambda) {
  if (lambda.size() != p.lambda_dim)
    throw SpecError("qift: lambda dimension mismatch");
  if (!(sup_norm(lambda - p.lambda0) < c.delta1))
    throw OutsideCertifiedBox("qift: lambda outside the certified radius");
  Mat A0inv = adjugate_inverse(p.jac_x(p.x0, p.lambda0));
  Vec x = p.x0;
  for (int it = 0; it < 200; ++it) {
    Vec r = p.F(x, lambda);
    if (sup_norm(r) < 1e-12) return x;
    x -= A0inv * r;
    if (sup_norm(x - p.x0) > c.delta + 1e-12)
      throw NoConvergence("qift: iterate left the certified box");
  }
  throw NoConvergence("qift: no convergence in 200 iterations");
}

Mat adjugate_inverse(const Mat& A) {
  if (A.rows() != A.cols() || A.rows() < 1)
    throw SpecError("adjugate inverse: matrix must be square");
  const int n = static_cast<int>(A.rows());
  double det = A.determinant();
  if (std::abs(det) <= 1e-14)
    throw SingularMatrix("adjugate inverse: determinant below 1e-14");
  Mat inv(n, n);
  if (n == 1) {
    inv(0, 0) = 1.0 / det;
    return inv;
  }
  Mat minor(n - 1, n - 1);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      // Cofactor expansion: inverse (i,j) uses the minor deleting row j, col i.
      for (int r = 0, mr = 0; r < n; ++r) {
        if (r == j) continue;
        for (int cc = 0, mc = 0; cc < n; ++cc) {
          if (cc == i) continue;
          minor(mr, mc) = A(r, cc);
          ++mc;
        }
        ++mr;
      }
      double sign = ((i + j) % 2 == 0) ? 1.0 : -1.0;
      inv(i, j) = sign * minor.determinant() / det;
    }
  }
  return inv;
}

}  // namespace tubeflow
