#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "tubeflow/errors.hpp"

namespace tubeflow {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// One parameter axis. Periodic axes identify lo with hi; sample points then
// cover [lo, hi) with spacing length/n. Non-periodic axes include both
// endpoints with spacing length/(n-1).
struct Axis {
  double lo = 0.0;
  double hi = 1.0;
  bool periodic = false;

  double length() const { return hi - lo; }
};

// Row-major multi-index bookkeeping for a tensor-product grid.
class GridShape {
 public:
  GridShape() = default;
  GridShape(std::vector<Axis> axes, std::vector<int> dims);

  int rank() const { return static_cast<int>(dims_.size()); }
  int total() const { return total_; }
  const std::vector<Axis>& axes() const { return axes_; }
  const std::vector<int>& dims() const { return dims_; }
  const Axis& axis(int j) const { return axes_[j]; }
  int dim(int j) const { return dims_[j]; }

  double spacing(int j) const;
  // Parameter coordinate of node index i along axis j.
  double coord(int j, int i) const;

  int flatten(const std::vector<int>& idx) const;
  std::vector<int> unflatten(int flat) const;
  Vec node(int flat) const;

  // Flat index of the node `step` cells away along `axis`, wrapping on
  // periodic axes. Returns -1 when the step leaves a non-periodic axis.
  int neighbor(int flat, int axis, int step) const;

  // Tensor-product quadrature weight: rectangle rule on periodic axes,
  // trapezoid on non-periodic ones.
  double cell_weight(int flat) const;

  // Second-order one-dimensional stencil along `axis` at node position i:
  // central where possible, one-sided at non-periodic boundaries.
  // Returns (offsets in cells, coefficients); coefficients already include
  // the 1/h or 1/h^2 factor. order is 1 or 2.
  void stencil(int axis, int i, int order, std::vector<int>& offsets,
               std::vector<double>& coeffs) const;

  bool operator==(const GridShape& other) const;

 private:
  std::vector<Axis> axes_;
  std::vector<int> dims_;
  int total_ = 0;
};

// A grid of ambient sample points (one column per node).
struct GridSamples {
  GridShape shape;
  Mat points;  // N x shape.total()

  int ambient_dim() const { return static_cast<int>(points.rows()); }
  int count() const { return static_cast<int>(points.cols()); }

  // Lattice finite-difference Jacobian at a node (N x k).
  Mat fd_jacobian(int flat) const;
  // Lattice second derivative d^2 x / du_a du_b at a node.
  Vec fd_second(int flat, int a, int b) const;

  // Diagonal of the ambient bounding box of the samples.
  double ambient_diameter() const;
  // Median ambient distance between axis-adjacent nodes.
  double median_local_spacing() const;
  // Quadrature weight including the metric factor sqrt(det g) from the
  // lattice Jacobian. Throws DegenerateMetric on non-positive det.
  double quadrature_weight(int flat) const;
};

// Second-order finite-difference stencil at parameter value u with step h
// (not tied to the lattice): central where the axis domain allows it,
// one-sided toward the interior otherwise. Offsets are multiples of h;
// coefficients include the 1/h or 1/h^2 factor. order is 1 or 2.
void axis_stencil(const Axis& ax, double u, double h, int order,
                  std::vector<int>& offsets, std::vector<double>& coeffs);

// Number of worker threads: TUBEFLOW_THREADS caps hardware concurrency.
int thread_budget();

// Deterministic parallel sweep over [0, count). The body must only write to
// disjoint state per index (or fold via order-independent reductions).
void parallel_for(int count, const std::function<void(int)>& body);

}  // namespace tubeflow
