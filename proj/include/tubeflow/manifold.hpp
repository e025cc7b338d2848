#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>

#include "tubeflow/grid.hpp"

namespace tubeflow {

// A parametrized embedded submanifold: a chart from a product of intervals
// into R^N together with a sample grid. Evaluation is closure-backed
// (analytic families, optionally with analytic derivatives) or sample-backed
// (multilinear interpolation of a stored lattice, derivatives by lattice
// stencils). Construction validates the immersion precondition: the N x k
// Jacobian must have full column rank at every grid node.
class ChartedManifold {
 public:
  using EvalFn = std::function<Vec(const Vec&)>;
  // Full Jacobian, N x k.
  using JacobianFn = std::function<Mat(const Vec&)>;
  // Second derivative vector d^2 phi / du_a du_b.
  using SecondFn = std::function<Vec(const Vec&, int, int)>;
  // Ambient hint for the outward side of a codimension-1 family.
  using HintFn = std::function<Vec(const Vec&)>;

  static ChartedManifold from_closures(GridShape shape, int ambient_dim,
                                       EvalFn eval, JacobianFn jac = nullptr,
                                       SecondFn second = nullptr,
                                       std::string family = "custom");
  static ChartedManifold from_samples(GridSamples samples,
                                      bool validate_immersion = true);

  // Built-in families.
  static ChartedManifold circle(double radius, int n,
                                double cx = 0.0, double cy = 0.0);
  static ChartedManifold ellipse(double a, double b, int n);
  // Polar band chart of the sphere; the chart is rank-deficient at the
  // poles, so the polar interval is inset by pole_inset on both ends.
  static ChartedManifold sphere(double radius, int nu, int nv,
                                double pole_inset = 0.3);
  static ChartedManifold torus(double ring_radius, double tube_radius,
                               int nu, int nv);
  // Graph chart u -> (u, f(u)) for a named scalar field from the built-in
  // registry ("zero", "paraboloid", "sphere_cap").
  static ChartedManifold graph(const std::string& field,
                               const std::vector<Axis>& box,
                               const std::vector<int>& dims,
                               double field_param = 1.0);

  // Push the chart through x -> A x + b (A invertible N x N).
  ChartedManifold transformed(const Mat& A, const Vec& b) const;

  int param_dim() const { return shape_.rank(); }
  int ambient_dim() const { return ambient_dim_; }
  const GridShape& shape() const { return shape_; }
  int deriv_order() const { return deriv_order_; }
  bool sample_backed() const { return sample_backed_; }
  const std::string& family() const { return family_; }

  // Wrap periodic coordinates into [lo, hi); reject points outside
  // non-periodic axes (OutOfDomain).
  Vec wrap(const Vec& u) const;

  Vec evaluate(const Vec& u) const;
  Mat jacobian(const Vec& u) const;
  Vec second_derivative(const Vec& u, int a, int b) const;

  // Node-indexed accessors (no interpolation).
  Vec evaluate_node(int flat) const;
  Mat jacobian_node(int flat) const;
  Vec second_derivative_node(int flat, int a, int b) const;

  // The sample lattice of the chart (cached).
  const GridSamples& samples() const;

  double ambient_scale() const;  // bounding-box diagonal of the samples

  bool has_outward_hint() const { return static_cast<bool>(outward_hint_); }
  Vec outward_hint(const Vec& u) const;
  void set_outward_hint(HintFn hint) { outward_hint_ = std::move(hint); }

 private:
  ChartedManifold() = default;
  void validate_immersion_at_nodes() const;
  Mat fd_jacobian_closure(const Vec& u) const;
  Vec fd_second_closure(const Vec& u, int a, int b) const;

  GridShape shape_;
  int ambient_dim_ = 0;
  EvalFn eval_;
  JacobianFn jac_;
  SecondFn second_;
  HintFn outward_hint_;
  int deriv_order_ = 0;
  bool sample_backed_ = false;
  std::string family_ = "custom";
  std::shared_ptr<GridSamples> cache_;  // lattice samples
  double fd_step_ = 0.0;                // closure FD step: min spacing / 4
};

// First and second fundamental forms at u against a unit normal v, plus the
// principal curvatures (eigenvalues of the pencil l x = p g x).
// Throws NotNormal if v is not unit or not orthogonal to the tangent space,
// DegenerateMetric if g is numerically singular.
struct FundamentalForms {
  Mat g;
  Mat l;
  Vec principal_curvatures;
};

FundamentalForms fundamental_forms(const ChartedManifold& m, const Vec& u,
                                   const Vec& v);

struct CurvatureOptions {
  int normal_dirs = 64;  // sphere sample count in codimension >= 2
  unsigned seed = 0;
};

// Largest principal curvature over all grid nodes and all unit normal
// directions. Codimension 1 checks both orientations exactly; higher
// codimension samples the normal sphere and runs one local refinement pass.
double max_curvature_K(const ChartedManifold& m,
                       const CurvatureOptions& opts = {});

}  // namespace tubeflow
