// Command-line front end: spec ingestion, pipeline orchestration, reports.
// Exit codes: 0 success, 2 spec/config errors, 3 pipeline errors, 4 oracle
// failure. Reports are deterministic (17 significant digits, fixed seed).
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <limits>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tubeflow/flow.hpp"
#include "tubeflow/io.hpp"
#include "tubeflow/normal_bundle.hpp"
#include "tubeflow/penalty.hpp"
#include "tubeflow/qift.hpp"
#include "tubeflow/tube.hpp"

namespace {

using namespace tubeflow;
namespace fs = std::filesystem;

struct RunConfig {
  std::string spec;
  std::string cloud;
  std::string out;
  std::vector<int> grid;
  double t = 1.0;
  int steps = 15;
  std::string step_rule = "tstar";
  double step_size = 1e-2;
  double fraction = 0.5;
  int recompute_every = 10;
  unsigned seed = 0;
  int normal_dirs = 64;
  int fiber_radii = 8;
  std::string field;
  std::string penalty;
  int pin_axis = 0;
  int pin_node = -1;
  bool export_frames = false;
  std::string problem = "quadratic";
  std::vector<double> base;
  std::vector<double> coeffs;
  std::vector<double> lambdas;
  double delta_scale = 1.0;
};

TubeSamplingOptions tube_options(const RunConfig& cfg) {
  TubeSamplingOptions opts;
  opts.normal_dirs = cfg.normal_dirs;
  opts.fiber_radii = cfg.fiber_radii;
  opts.seed = cfg.seed;
  return opts;
}

std::string json_number(double v) {
  return std::isfinite(v) ? io::format_double(v) : "null";
}

std::string verdict_json(const OracleVerdict& v) {
  std::ostringstream out;
  out << "{\"pass\": " << (v.pass ? "true" : "false") << ", \"reason\": \""
      << v.reason << "\", \"fail_node\": " << v.fail_node
      << ", \"witness_a\": " << v.witness_a << ", \"witness_b\": "
      << v.witness_b << "}";
  return out.str();
}

std::string grid_json(const GridShape& shape) {
  std::ostringstream out;
  out << "[";
  for (int j = 0; j < shape.rank(); ++j)
    out << (j ? ", " : "") << shape.dim(j);
  out << "]";
  return out.str();
}

std::string snapshot_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "snapshot_%03d.csv", index);
  return buf;
}

std::shared_ptr<PenaltyFunctional> make_penalty(const RunConfig& cfg,
                                                const ChartedManifold& m) {
  if (cfg.penalty == "volume") return std::make_shared<VolumePenalty>();
  if (cfg.penalty == "distance") {
    if (cfg.cloud.empty())
      throw SpecError("distance penalty needs --cloud CSV");
    DataCloud cloud = io::load_cloud_csv(cfg.cloud, m.ambient_dim());
    return std::make_shared<DistancePenalty>(std::move(cloud));
  }
  if (cfg.penalty == "pinned") {
    int node = cfg.pin_node >= 0 ? cfg.pin_node : m.shape().total() / 4;
    return std::make_shared<PinnedCoordinatePenalty>(cfg.pin_axis, node);
  }
  throw SpecError("unknown penalty '" + cfg.penalty +
                  "' (volume|distance|pinned)");
}

int cmd_analyze(const RunConfig& cfg) {
  ChartedManifold m = io::load_manifold_spec(cfg.spec, cfg.grid);
  FrameField frames = FrameField::build(m);
  TubeConstants tc = safe_flow_time(m, frames, tube_options(cfg));

  fs::path out(cfg.out);
  io::atomic_write(out / "per_point.csv", io::per_point_csv(tc));
  std::vector<int> grid = m.shape().dims();
  io::atomic_write(out / "report.json", io::analyze_report_json(tc, grid));
  if (cfg.export_frames)
    io::atomic_write(out / "frames.csv", io::frame_field_csv(m, frames));

  std::cout << "K=" << io::format_double(tc.K)
            << " delta=" << io::format_double(tc.delta)
            << " epsilon=" << io::format_double(tc.epsilon)
            << " t_star=" << io::format_double(tc.t_star) << "\n";
  return 0;
}

NormalField make_field(const RunConfig& cfg, const ChartedManifold& m,
                       const FrameField& frames) {
  if (cfg.field == "inward") return NormalField::inward(m, frames);
  if (cfg.field == "outward") return NormalField::outward(m, frames);
  GridSamples gs = io::load_snapshot_csv(cfg.field, m.shape());
  return NormalField::from_matrix(m, gs.points);
}

int cmd_flow_linear(const RunConfig& cfg, const ChartedManifold& m) {
  if (cfg.steps < 1) throw SpecError("--steps must be positive");
  FrameField frames = FrameField::build(m);
  NormalField field = make_field(cfg, m, frames);
  std::shared_ptr<PenaltyFunctional> p;
  {
    RunConfig pcfg = cfg;
    if (pcfg.penalty.empty()) pcfg.penalty = "volume";
    p = make_penalty(pcfg, m);
  }

  fs::path out(cfg.out);
  std::vector<double> ts, penalties;
  std::vector<OracleVerdict> verdicts;
  std::vector<std::string> files;
  bool failed = false;
  for (int i = 0; i <= cfg.steps; ++i) {
    double t = cfg.t * i / cfg.steps;
    ChartedManifold snap = linear_normal_flow(m, field, t);
    OracleVerdict v = embedding_oracle(snap, 0.1, m.ambient_scale());
    double value = std::numeric_limits<double>::quiet_NaN();
    if (v.pass) value = p->value_on_samples(snap.samples());
    ts.push_back(t);
    penalties.push_back(value);
    verdicts.push_back(v);
    files.push_back(snapshot_name(i));
    io::atomic_write(out / files.back(),
                     io::snapshot_csv(m.shape(), snap.samples()));
    if (!v.pass) {
      failed = true;
      break;
    }
  }

  std::ostringstream man;
  man << "{\n  \"schema_version\": " << io::kSchemaVersion << ",\n"
      << "  \"grid\": " << grid_json(m.shape()) << ",\n"
      << "  \"mode\": \"linear\",\n"
      << "  \"field\": \"" << cfg.field << "\",\n"
      << "  \"penalty\": \"" << p->name() << "\",\n  \"t_values\": [";
  for (size_t i = 0; i < ts.size(); ++i)
    man << (i ? ", " : "") << io::format_double(ts[i]);
  man << "],\n  \"penalties\": [";
  for (size_t i = 0; i < penalties.size(); ++i)
    man << (i ? ", " : "") << json_number(penalties[i]);
  man << "],\n  \"verdicts\": [";
  for (size_t i = 0; i < verdicts.size(); ++i)
    man << (i ? ", " : "") << verdict_json(verdicts[i]);
  man << "],\n  \"snapshots\": [";
  for (size_t i = 0; i < files.size(); ++i)
    man << (i ? ", " : "") << "\"" << files[i] << "\"";
  man << "]\n}\n";
  io::atomic_write(out / "manifest.json", man.str());

  const OracleVerdict& last = verdicts.back();
  std::cout << "steps=" << (ts.size() - 1)
            << " final_penalty=" << json_number(penalties.back())
            << " verdict=" << (last.pass ? "pass" : "fail") << "\n";
  if (failed) {
    std::ostringstream err;
    err << "oracle failure at t=" << io::format_double(ts.back()) << ": "
        << last.reason;
    if (last.fail_node >= 0) err << " (node " << last.fail_node << ")";
    if (last.witness_a >= 0)
      err << " (nodes " << last.witness_a << ", " << last.witness_b << ")";
    throw OracleFailure(err.str());
  }
  return 0;
}

int cmd_flow_gradient(const RunConfig& cfg, const ChartedManifold& m) {
  std::shared_ptr<PenaltyFunctional> p = make_penalty(cfg, m);
  StepRule rule;
  if (cfg.step_rule == "fixed") {
    rule = StepRule::fixed_step(cfg.step_size);
  } else if (cfg.step_rule == "tstar" || cfg.step_rule == "tstar_capped") {
    rule = StepRule::tstar_capped(cfg.fraction, cfg.recompute_every);
  } else if (cfg.step_rule == "backtracking") {
    rule = StepRule::backtracking(1e-4, 0.5);
    rule.h = cfg.step_size;
  } else {
    throw SpecError("unknown step rule '" + cfg.step_rule +
                    "' (fixed|tstar|backtracking)");
  }

  FlowTrace trace =
      gradient_descent_flow(m, *p, cfg.steps, rule, tube_options(cfg));

  fs::path out(cfg.out);
  std::vector<std::string> files;
  for (const FlowStep& s : trace.steps) {
    files.push_back(snapshot_name(s.index));
    io::atomic_write(out / files.back(),
                     io::snapshot_csv(m.shape(), s.snapshot));
  }

  std::ostringstream man;
  man << "{\n  \"schema_version\": " << io::kSchemaVersion << ",\n"
      << "  \"grid\": " << grid_json(m.shape()) << ",\n"
      << "  \"mode\": \"gradient\",\n"
      << "  \"penalty\": \"" << p->name() << "\",\n"
      << "  \"step_rule\": \"" << cfg.step_rule << "\",\n"
      << "  \"step_sizes\": [";
  for (size_t i = 0; i < trace.steps.size(); ++i)
    man << (i ? ", " : "") << io::format_double(trace.steps[i].step_size);
  man << "],\n  \"penalties\": [";
  for (size_t i = 0; i < trace.steps.size(); ++i)
    man << (i ? ", " : "") << json_number(trace.steps[i].penalty);
  man << "],\n  \"max_displacements\": [";
  for (size_t i = 0; i < trace.steps.size(); ++i)
    man << (i ? ", " : "")
        << io::format_double(trace.steps[i].max_displacement);
  man << "],\n  \"verdicts\": [";
  for (size_t i = 0; i < trace.steps.size(); ++i)
    man << (i ? ", " : "") << verdict_json(trace.steps[i].verdict);
  man << "],\n  \"stopped_on_oracle\": "
      << (trace.stopped_on_oracle ? "true" : "false")
      << ",\n  \"stopped_on_small_gradient\": "
      << (trace.stopped_on_small_gradient ? "true" : "false")
      << ",\n  \"snapshots\": [";
  for (size_t i = 0; i < files.size(); ++i)
    man << (i ? ", " : "") << "\"" << files[i] << "\"";
  man << "]\n}\n";
  io::atomic_write(out / "manifest.json", man.str());

  const FlowStep& last = trace.steps.back();
  std::cout << "steps=" << (trace.steps.size() - 1)
            << " final_penalty=" << json_number(last.penalty)
            << " verdict=" << (last.verdict.pass ? "pass" : "fail") << "\n";
  if (trace.stopped_on_oracle) {
    std::ostringstream err;
    err << "oracle failure at step " << last.index << ": "
        << last.verdict.reason;
    if (last.verdict.fail_node >= 0)
      err << " (node " << last.verdict.fail_node << ")";
    if (last.verdict.witness_a >= 0)
      err << " (nodes " << last.verdict.witness_a << ", "
          << last.verdict.witness_b << ")";
    throw OracleFailure(err.str());
  }
  return 0;
}

int cmd_flow(const RunConfig& cfg) {
  ChartedManifold m = io::load_manifold_spec(cfg.spec, cfg.grid);
  if (!cfg.field.empty()) return cmd_flow_linear(cfg, m);
  if (!cfg.penalty.empty()) return cmd_flow_gradient(cfg, m);
  throw SpecError("flow needs either --field (with --t) or --penalty");
}

int cmd_check_normality(const RunConfig& cfg) {
  ChartedManifold m = io::load_manifold_spec(cfg.spec, cfg.grid);
  if (cfg.penalty.empty()) throw SpecError("check-normality needs --penalty");
  std::shared_ptr<PenaltyFunctional> p = make_penalty(cfg, m);

  GradientField grad = l2_gradient(*p, m);
  double defect = normality_defect(grad, m);

  // Canonical probe diffeo: quarter-cell phase shift on the first periodic
  // axis, else a half-amplitude sine warp.
  Diffeo d = Diffeo::identity(m.param_dim());
  int shifted = -1;
  for (int j = 0; j < m.param_dim(); ++j) {
    if (m.shape().axis(j).periodic) {
      d.shift(j, m.shape().spacing(j) / 4.0);
      shifted = j;
      break;
    }
  }
  if (shifted < 0) d.sine_warp(0, 0.5);
  double gap = reparametrization_invariance(*p, m, d);

  int ties = 0;
  if (auto* dp = dynamic_cast<const DistancePenalty*>(p.get()))
    ties = static_cast<int>(dp->detail(m.samples()).tied.size());

  std::cout << "normality_defect=" << io::format_double(defect)
            << " invariance_gap=" << io::format_double(gap) << " ties=" << ties
            << "\n";

  if (!cfg.out.empty()) {
    fs::path out(cfg.out);
    std::ostringstream rep;
    rep << "{\n  \"schema_version\": " << io::kSchemaVersion << ",\n"
        << "  \"grid\": " << grid_json(m.shape()) << ",\n"
        << "  \"penalty\": \"" << p->name() << "\",\n"
        << "  \"normality_defect\": " << json_number(defect) << ",\n"
        << "  \"invariance_gap\": " << json_number(gap) << ",\n"
        << "  \"ties\": " << ties << ",\n"
        << "  \"gradient\": \"gradient.csv\"\n}\n";
    io::atomic_write(out / "normality.json", rep.str());
    io::atomic_write(out / "gradient.csv", io::gradient_field_csv(m, grad));
  }
  return 0;
}

ImplicitProblem make_problem(const RunConfig& cfg) {
  Vec x0(1), l0(1);
  if (cfg.problem == "quadratic") {
    x0 << (cfg.base.size() > 0 ? cfg.base[0] : 1.0);
    l0 << (cfg.base.size() > 1 ? cfg.base[1] : 1.0);
    return ImplicitProblem::make(
        1, 1,
        [](const Vec& x, const Vec& l) {
          Vec r(1);
          r << x[0] * x[0] - l[0];
          return r;
        },
        x0, l0,
        [](const Vec& x, const Vec&) {
          Mat J(1, 1);
          J << 2.0 * x[0];
          return J;
        },
        [](const Vec&, const Vec&) {
          Mat J(1, 1);
          J << -1.0;
          return J;
        });
  }
  if (cfg.problem == "linear") {
    x0 << (cfg.base.size() > 0 ? cfg.base[0] : 0.0);
    l0 << (cfg.base.size() > 1 ? cfg.base[1] : 0.0);
    return ImplicitProblem::make(
        1, 1,
        [](const Vec& x, const Vec& l) {
          Vec r(1);
          r << x[0] - l[0];
          return r;
        },
        x0, l0,
        [](const Vec&, const Vec&) {
          Mat J(1, 1);
          J << 1.0;
          return J;
        },
        [](const Vec&, const Vec&) {
          Mat J(1, 1);
          J << -1.0;
          return J;
        });
  }
  if (cfg.problem == "poly") {
    if (cfg.coeffs.empty())
      throw SpecError("poly problem needs --coeffs c0,c1,...");
    if (cfg.base.size() != 2)
      throw SpecError("poly problem needs --base x0,lambda0");
    x0 << cfg.base[0];
    l0 << cfg.base[1];
    std::vector<double> c = cfg.coeffs;
    return ImplicitProblem::make(
        1, 1,
        [c](const Vec& x, const Vec& l) {
          double acc = 0.0;
          for (size_t i = c.size(); i-- > 0;) acc = acc * x[0] + c[i];
          Vec r(1);
          r << acc - l[0];
          return r;
        },
        x0, l0,
        [c](const Vec& x, const Vec&) {
          double acc = 0.0;
          for (size_t i = c.size(); i-- > 1;)
            acc = acc * x[0] + static_cast<double>(i) * c[i];
          Mat J(1, 1);
          J << acc;
          return J;
        },
        [](const Vec&, const Vec&) {
          Mat J(1, 1);
          J << -1.0;
          return J;
        });
  }
  throw SpecError("unknown problem '" + cfg.problem +
                  "' (quadratic|linear|poly)");
}

int cmd_qift(const RunConfig& cfg) {
  ImplicitProblem p = make_problem(cfg);
  QiftConstants c = qift_constants_auto(p, cfg.delta_scale);
  std::cout << "delta=" << io::format_double(c.delta)
            << " B_delta=" << io::format_double(c.B_delta)
            << " M=" << io::format_double(c.M)
            << " delta1=" << io::format_double(c.delta1) << "\n";

  std::ostringstream roots_json;
  for (size_t i = 0; i < cfg.lambdas.size(); ++i) {
    Vec l(1);
    l << cfg.lambdas[i];
    Vec x = qift_solve(p, c, l);
    double residual = p.F(x, l).cwiseAbs().maxCoeff();
    std::cout << "lambda=" << io::format_double(cfg.lambdas[i])
              << " root=" << io::format_double(x[0])
              << " residual=" << io::format_double(residual) << "\n";
    roots_json << (i ? ", " : "")
               << "{\"lambda\": " << io::format_double(cfg.lambdas[i])
               << ", \"root\": " << io::format_double(x[0])
               << ", \"residual\": " << io::format_double(residual) << "}";
  }

  if (!cfg.out.empty()) {
    std::ostringstream rep;
    rep << "{\n  \"schema_version\": " << io::kSchemaVersion << ",\n"
        << "  \"problem\": \"" << cfg.problem << "\",\n"
        << "  \"delta\": " << io::format_double(c.delta) << ",\n"
        << "  \"B_delta\": " << io::format_double(c.B_delta) << ",\n"
        << "  \"M\": " << io::format_double(c.M) << ",\n"
        << "  \"delta1\": " << io::format_double(c.delta1) << ",\n"
        << "  \"roots\": [" << roots_json.str() << "]\n}\n";
    io::atomic_write(fs::path(cfg.out) / "qift.json", rep.str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Certified normal-flow bounds for sampled embedded manifolds"};
  app.require_subcommand(1);
  RunConfig cfg;

  auto add_manifold_flags = [&](CLI::App* sub, bool need_out) {
    sub->add_option("--spec", cfg.spec, "manifold spec JSON")
        ->required()
        ->check(CLI::ExistingFile);
    auto* out = sub->add_option("--out", cfg.out, "output directory");
    if (need_out) out->required();
    sub->add_option("--grid", cfg.grid, "grid override n1,n2,...")
        ->delimiter(',');
    sub->add_option("--seed", cfg.seed, "seed for sampled checks");
    sub->add_option("--normal-dirs", cfg.normal_dirs,
                    "fiber directions in codimension >= 2")
        ->check(CLI::PositiveNumber);
    sub->add_option("--fiber-radii", cfg.fiber_radii,
                    "fiber radii per direction")
        ->check(CLI::PositiveNumber);
  };

  CLI::App* analyze = app.add_subcommand(
      "analyze", "curvature bound, safe radius delta and flow time t*");
  add_manifold_flags(analyze, true);
  analyze->add_flag("--export-frames", cfg.export_frames,
                    "also write the normal frame field CSV");

  CLI::App* flow = app.add_subcommand(
      "flow", "linear normal flow or penalty gradient descent");
  add_manifold_flags(flow, true);
  flow->add_option("--field", cfg.field,
                   "normal field: inward, outward, or a CSV path");
  flow->add_option("--t", cfg.t, "final time of the linear flow");
  flow->add_option("--steps", cfg.steps, "snapshot count / descent steps");
  flow->add_option("--penalty", cfg.penalty,
                   "penalty: volume, distance, pinned");
  flow->add_option("--cloud", cfg.cloud, "point cloud CSV (distance penalty)");
  flow->add_option("--step-rule", cfg.step_rule,
                   "descent rule: fixed, tstar, backtracking");
  flow->add_option("--step-size", cfg.step_size, "fixed/backtracking step");
  flow->add_option("--fraction", cfg.fraction, "tstar rule: fraction of t*");
  flow->add_option("--recompute-every", cfg.recompute_every,
                   "tstar rule: steps between t* refreshes");
  flow->add_option("--pin-axis", cfg.pin_axis, "pinned penalty ambient axis");
  flow->add_option("--pin-node", cfg.pin_node, "pinned penalty node index");

  CLI::App* check = app.add_subcommand(
      "check-normality",
      "normality defect and reparametrization-invariance gap of a penalty");
  add_manifold_flags(check, false);
  check->add_option("--penalty", cfg.penalty,
                    "penalty: volume, distance, pinned")
      ->required();
  check->add_option("--cloud", cfg.cloud, "point cloud CSV (distance)");
  check->add_option("--pin-axis", cfg.pin_axis, "pinned penalty ambient axis");
  check->add_option("--pin-node", cfg.pin_node, "pinned penalty node index");

  CLI::App* qift = app.add_subcommand(
      "qift", "certified implicit-function constants and root solves");
  qift->add_option("--problem", cfg.problem, "quadratic, linear, or poly");
  qift->add_option("--base", cfg.base, "base point x0,lambda0")
      ->delimiter(',');
  qift->add_option("--coeffs", cfg.coeffs, "poly coefficients c0,c1,...")
      ->delimiter(',');
  qift->add_option("--lambda", cfg.lambdas, "parameter values to solve at")
      ->delimiter(',');
  qift->add_option("--delta-scale", cfg.delta_scale,
                   "largest candidate box radius")
      ->check(CLI::PositiveNumber);
  qift->add_option("--out", cfg.out, "output directory");

  try {
    app.parse(argc, argv);
    if (app.got_subcommand(analyze)) return cmd_analyze(cfg);
    if (app.got_subcommand(flow)) return cmd_flow(cfg);
    if (app.got_subcommand(check)) return cmd_check_normality(cfg);
    if (app.got_subcommand(qift)) return cmd_qift(cfg);
    throw SpecError("no subcommand selected");
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const OracleFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const SpecError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
