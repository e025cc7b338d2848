#pragma once

#include <memory>

#include "tubeflow/manifold.hpp"

namespace tubeflow {

struct DataCloud {
  Mat points;   // N x count
  Vec weights;  // positive; defaults to ones

  static DataCloud make(Mat points, Vec weights = Vec());
  int count() const { return static_cast<int>(points.cols()); }
};

// A functional of the embedding. Two evaluation paths: value() on a chart
// uses the best available derivatives (analytic quadrature for volume);
// value_on_samples() is the discrete functional on a bare sample lattice and
// is the one differentiated by l2_gradient, so base and perturbed states see
// the same discretization.
class PenaltyFunctional {
 public:
  virtual ~PenaltyFunctional() = default;
  virtual double value_on_samples(const GridSamples& gs) const = 0;
  virtual double value(const ChartedManifold& m) const {
    return value_on_samples(m.samples());
  }
  virtual std::string name() const = 0;
};

class VolumePenalty final : public PenaltyFunctional {
 public:
  double value_on_samples(const GridSamples& gs) const override;
  double value(const ChartedManifold& m) const override;
  std::string name() const override { return "volume"; }
};

struct DistanceDetail {
  double value = 0.0;
  std::vector<int> nearest;  // grid node index per cloud point
  std::vector<int> tied;     // cloud points whose minimum was tied
};

class DistancePenalty final : public PenaltyFunctional {
 public:
  explicit DistancePenalty(DataCloud cloud);
  double value_on_samples(const GridSamples& gs) const override;
  DistanceDetail detail(const GridSamples& gs) const;
  const DataCloud& cloud() const { return cloud_; }
  std::string name() const override { return "distance"; }

 private:
  DataCloud cloud_;
};

// Probe functional P = x-coordinate `axis` of the sample at one pinned grid
// node. Not invariant under reparametrization; its gradient is tangential.
class PinnedCoordinatePenalty final : public PenaltyFunctional {
 public:
  PinnedCoordinatePenalty(int ambient_axis, int node_flat);
  double value_on_samples(const GridSamples& gs) const override;
  std::string name() const override { return "pinned_coordinate"; }

 private:
  int axis_;
  int node_;
};

class CombinationPenalty final : public PenaltyFunctional {
 public:
  using Part = std::pair<double, std::shared_ptr<const PenaltyFunctional>>;
  explicit CombinationPenalty(std::vector<Part> parts);
  double value_on_samples(const GridSamples& gs) const override;
  double value(const ChartedManifold& m) const override;
  std::string name() const override { return "combination"; }

 private:
  std::vector<Part> parts_;
};

double volume(const ChartedManifold& m);
DistanceDetail distance_penalty(const ChartedManifold& m,
                                const DataCloud& cloud);

// Discrete Riesz representative of dP with respect to the quadrature inner
// product: bump each sample along each ambient axis (central differences,
// step = step_rel x ambient scale), divide by the node's quadrature weight.
struct GradientField {
  Mat Z;                // N x count
  Vec tangential_norm;  // per node
  Vec normal_norm;      // per node
};

GradientField l2_gradient(const PenaltyFunctional& p,
                          const ChartedManifold& m, double step_rel = 1e-5);

// max over nodes of |Z_tangential| / max(|Z|, 1e-12).
double normality_defect(const GradientField& field, const ChartedManifold& m);

// Per-axis reparametrization of the chart: phase shifts on periodic axes and
// the sine warp u -> u + a sin(scaled u), |a| < 1 (NotBijective otherwise).
class Diffeo {
 public:
  static Diffeo identity(int k);
  Diffeo& shift(int axis, double amount);
  Diffeo& sine_warp(int axis, double amplitude);

  Vec apply(const std::vector<Axis>& axes, const Vec& u) const;
  double deriv(const std::vector<Axis>& axes, int axis, double u) const;
  double second(const std::vector<Axis>& axes, int axis, double u) const;
  int rank() const { return static_cast<int>(kind_.size()); }

 private:
  enum class Kind { identity, shift, warp };
  std::vector<Kind> kind_;
  std::vector<double> param_;
};

ChartedManifold reparametrized(const ChartedManifold& m, const Diffeo& d);

// |P(phi o alpha) - P(phi)| at equal grid resolution.
double reparametrization_invariance(const PenaltyFunctional& p,
                                    const ChartedManifold& m,
                                    const Diffeo& d);

}  // namespace tubeflow
