#pragma once

#include "tubeflow/normal_bundle.hpp"
#include "tubeflow/penalty.hpp"
#include "tubeflow/tube.hpp"

namespace tubeflow {

// A unit-length section of the normal bundle sampled at the grid nodes.
struct NormalField {
  Mat v;  // N x count

  // Codimension-1 fields oriented by the family's outward hint (fallback:
  // away from the sample centroid).
  static NormalField outward(const ChartedManifold& m,
                             const FrameField& frames);
  static NormalField inward(const ChartedManifold& m,
                            const FrameField& frames);
  static NormalField from_matrix(const ChartedManifold& m, Mat v);
};

// Snapshot phi + t v wrapped as a sample-backed chart. Immersion validation
// is skipped: snapshots are exactly the candidates the oracles judge.
ChartedManifold linear_normal_flow(const ChartedManifold& m,
                                   const NormalField& field, double t);

struct OracleVerdict {
  bool pass = true;
  std::string reason;       // empty when passing
  int fail_node = -1;       // immersion failures
  int witness_a = -1;       // near-intersection pair
  int witness_b = -1;
};

// Rank test on lattice Jacobians: fail when the smallest singular value is
// <= 1e-8 x the largest, or (collapse guard) the largest falls below
// 1e-8 x ambient_scale / parameter diameter. ambient_scale <= 0 uses the
// snapshot's own bounding box; flow drivers pass the initial manifold's.
OracleVerdict immersion_check(const ChartedManifold& snapshot,
                              double ambient_scale = 0.0);

// Fails when two nodes are far in parameter space (periodic metric, more
// than ratio x parameter diameter) yet closer in ambient space than
// ratio x the median local sample spacing.
OracleVerdict injectivity_oracle(const ChartedManifold& snapshot,
                                 double separation_ratio = 0.1);

OracleVerdict embedding_oracle(const ChartedManifold& snapshot,
                               double separation_ratio = 0.1,
                               double ambient_scale = 0.0);

// Largest t in [0, t_max] below which every swept snapshot passes the
// embedding oracle: forward sweep at `resolution` steps, then bisection of
// the bracketing interval to 1e-4 x t_max.
double max_embedding_time(const ChartedManifold& m, const NormalField& field,
                          double t_max, int resolution = 200);

struct StepRule {
  enum class Kind { fixed, tstar_capped, backtracking };
  Kind kind = Kind::fixed;
  double h = 1e-2;           // fixed
  double fraction = 0.5;     // tstar_capped: max displacement = fraction * t*
  int recompute_every = 10;  // tstar_capped: steps between t* refreshes
  double c = 1e-4;           // backtracking sufficient-decrease constant
  double rho = 0.5;          // backtracking shrink factor

  static StepRule fixed_step(double h);
  static StepRule tstar_capped(double fraction, int recompute_every = 10);
  static StepRule backtracking(double c, double rho);
};

struct FlowStep {
  int index = 0;
  double step_size = 0.0;
  double penalty = 0.0;
  double max_displacement = 0.0;
  OracleVerdict verdict;
  GridSamples snapshot;
};

struct FlowTrace {
  std::vector<FlowStep> steps;
  bool stopped_on_oracle = false;
  bool stopped_on_small_gradient = false;
};

// Discrete gradient descent x <- x - h_n Z(x) on the sample lattice, with
// the embedding oracle evaluated on every snapshot. The tstar_capped rule
// scales steps so the largest node displacement is fraction x t* of the
// current snapshot (the displacement field, rescaled to unit max length, is
// a normal field of length at most one flowing for that time).
FlowTrace gradient_descent_flow(const ChartedManifold& m,
                                const PenaltyFunctional& p, int max_steps,
                                const StepRule& rule,
                                const TubeSamplingOptions& tube_opts = {});

}  // namespace tubeflow
