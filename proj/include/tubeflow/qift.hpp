#pragma once

#include "tubeflow/normal_bundle.hpp"

namespace tubeflow {

// A parametrized root-finding problem F(x, lambda) = 0 with a known base
// solution. Derivative oracles are optional; missing ones fall back to
// central finite differences. Construction validates the base residual
// (sup norm <= 1e-12) and invertibility of dF/dx at the base point.
struct ImplicitProblem {
  using ResidualFn = std::function<Vec(const Vec&, const Vec&)>;
  using JacobianFn = std::function<Mat(const Vec&, const Vec&)>;

  int x_dim = 0;
  int lambda_dim = 0;
  ResidualFn F;
  JacobianFn dF_dx;       // m x m
  JacobianFn dF_dlambda;  // m x n
  Vec x0;
  Vec lambda0;

  static ImplicitProblem make(int x_dim, int lambda_dim, ResidualFn F,
                              const Vec& x0, const Vec& lambda0,
                              JacobianFn dF_dx = nullptr,
                              JacobianFn dF_dlambda = nullptr);

  Mat jac_x(const Vec& x, const Vec& lambda) const;
  Mat jac_lambda(const Vec& x, const Vec& lambda) const;
};

// Certified constants: on the box |x - x0|_inf <= delta, |lambda - lambda0|_inf
// <= delta the sampled sup of |I - A0^{-1} A(x,lambda)| (max entry) stays
// <= 1/2; B_delta bounds |dF/dlambda|, M = |A0^{-1}| (max entry), and
// delta1 = delta / (2 M B_delta) is the certified lambda radius.
struct QiftConstants {
  double delta = 0.0;
  double B_delta = 0.0;
  double M = 0.0;
  double delta1 = 0.0;
};

// delta = largest value of search_grid passing the sampled half-contraction
// condition (samples_per_axis points per box axis). Throws NoValidDelta when
// no grid value passes.
QiftConstants qift_constants(const ImplicitProblem& p,
                             const std::vector<double>& search_grid,
                             int samples_per_axis = 9);

// Geometric grid (factor 2 down from `scale`, `levels` entries) followed by
// one bisection refinement between the passing value and its failing
// neighbor.
QiftConstants qift_constants_auto(const ImplicitProblem& p, double scale,
                                  int levels = 40, int samples_per_axis = 9);

// Fixed-point iteration x <- x - A0^{-1} F(x, lambda) from x0. Requires
// |lambda - lambda0|_inf < delta1 (OutsideCertifiedBox), stops at residual
// sup norm < 1e-12, throws NoConvergence after 200 iterations or if an
// iterate leaves the certified x-box.
Vec qift_solve(const ImplicitProblem& p, const QiftConstants& c,
               const Vec& lambda);

// Inverse through the explicit adjugate/determinant route (used for DE^{-1}
// and for M). Throws SingularMatrix when |det| <= 1e-14.
Mat adjugate_inverse(const Mat& A);

}  // namespace tubeflow
