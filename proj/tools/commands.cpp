#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "bangbang/endpoint.hpp"
#include "bangbang/errors.hpp"

namespace bangbang::cli {

namespace {

std::ofstream open_output(const RunContext& ctx, const char* name) {
  std::filesystem::create_directories(ctx.out_dir);
  const auto path = ctx.out_dir / name;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  if (ctx.log) *ctx.log << "writing " << path.string() << '\n';
  return out;
}

void write_json(const RunContext& ctx, const char* name, const json& doc) {
  auto out = open_output(ctx, name);
  out << doc.dump(2) << '\n';
}

json header(const ExperimentConfig& config, const char* command) {
  return {{"command", command}, {"config_hash", config_hash(config.document)}, {"seed", config.seed}};
}

json channels_json(const std::vector<std::size_t>& channels) {
  json out = json::array();
  for (std::size_t c : channels) out.push_back(c + 1);
  return out;
}

void put_result(json& doc, const RobustifyResult& r) {
  doc["control"] = control_to_json(r.control);
  doc["cost"] = r.cost_c;
  doc["robustness_cost"] = std::isfinite(r.cost_cr) ? json(r.cost_cr) : json(nullptr);
  doc["objective"] = r.objective;
  doc["residual"] = r.constraint_residual;
  doc["converged"] = r.converged;
  doc["iterations"] = r.iterations;
}

BangBangControl nominal_control(const ExperimentConfig& config, const DynamicsModel& model,
                                std::size_t jobs) {
  if (config.nominal.control) return *config.nominal.control;
  return derive_nominal(timing_problem(config, model), config.nominal.search, {}, jobs).control;
}

const RobustifyResult& best_of(const ChannelSearch& search) {
  if (!search.best) {
    throw NotConverged("no channel tuple reached the target within tolerance",
                       std::numeric_limits<double>::infinity());
  }
  return *search.table[*search.best].result;
}

}  // namespace

TimingProblem timing_problem(const ExperimentConfig& config, const DynamicsModel& model) {
  TimingProblem p;
  p.model = &model;
  p.x0 = config.x0;
  p.target = config.target;
  p.weights = config.robustify.weights;
  p.gap = config.gap;
  p.grid.samples = config.robustify.grid_samples;
  p.integrator = config.integrator;
  return p;
}

std::string provenance_line(const ExperimentConfig& config, const char* command) {
  return "# config_hash=" + config_hash(config.document) + " command=" + command +
         " seed=" + std::to_string(config.seed);
}

ChannelSearch robustify_search(const ExperimentConfig& config, const DynamicsModel& model,
                               const BangBangControl& base, std::size_t needles, std::size_t jobs) {
  const auto problem = timing_problem(config, model);
  const auto& rs = config.robustify;
  if (rs.mode == SearchMode::exhaustive) {
    return enumerate_needle_channels(problem, base, needles, SearchMode::exhaustive, {}, {}, jobs);
  }
  std::vector<std::size_t> prefix;
  if (!rs.greedy_prefix.empty() && rs.greedy_prefix.size() + 1 == needles) {
    prefix = rs.greedy_prefix;
  } else {
    for (std::size_t l = 1; l < needles; ++l) {
      const auto step = enumerate_needle_channels(problem, base, l, SearchMode::greedy, prefix, {}, jobs);
      prefix = best_of(step).channels;
    }
  }
  return enumerate_needle_channels(problem, base, needles, SearchMode::greedy, prefix, {}, jobs);
}

json cmd_nominal(const ExperimentConfig& config, const RunContext& ctx) {
  RigidBodyModel model(config.model);
  const auto result = derive_nominal(timing_problem(config, model), config.nominal.search, {}, ctx.jobs);
  json doc = header(config, "nominal");
  put_result(doc, result);
  doc.erase("robustness_cost");
  const Vector end = endpoint(model, config.x0, result.control, config.integrator);
  doc["endpoint"] = std::vector<double>(end.data(), end.data() + end.size());

  const auto traj = propagate(model, config.x0, result.control, 0.0, result.control.final_time(),
                              config.integrator);
  auto csv = open_output(ctx, "nominal_trajectory.csv");
  csv << provenance_line(config, "nominal") << '\n';
  write_trajectory_csv(csv, traj);
  write_json(ctx, "nominal.json", doc);
  return doc;
}

json cmd_robustify(const ExperimentConfig& config, const RunContext& ctx) {
  RigidBodyModel model(config.model);
  const auto base = nominal_control(config, model, ctx.jobs);
  const auto search = robustify_search(config, model, base, config.robustify.needles, ctx.jobs);

  auto csv = open_output(ctx, "cost_table.csv");
  csv << provenance_line(config, "robustify") << '\n';
  write_cost_table_csv(csv, search);
  csv.close();

  json doc = header(config, "robustify");
  doc["needles"] = config.robustify.needles;
  doc["mode"] = config.robustify.mode == SearchMode::greedy ? "greedy" : "exhaustive";
  doc["tuples_evaluated"] = search.table.size();
  doc["tuples_converged"] = std::ranges::count_if(
      search.table, [](const TupleOutcome& t) { return t.result && t.result->converged; });
  const auto& best = best_of(search);
  doc["channels"] = channels_json(best.channels);
  put_result(doc, best);
  write_json(ctx, "robustify.json", doc);
  return doc;
}

json cmd_track(const ExperimentConfig& config, const RunContext& ctx) {
  RigidBodyModel model(config.model);
  PerturbedRigidBodyModel truth(config.model, config.perturbation);
  BangBangControl control = config.tracking.control
                                ? *config.tracking.control
                                : nominal_control(config, model, ctx.jobs);
  if (!config.tracking.control && config.tracking.source == TrackSource::robustified) {
    control = best_of(robustify_search(config, model, control, config.robustify.needles, ctx.jobs)).control;
  }

  TrackingConfig tc;
  tc.checkpoints = default_checkpoints(control, config.tracking.checkpoints);
  tc.gap = config.gap;
  tc.drift_threshold = config.tracking.drift_threshold;
  tc.damping = config.tracking.damping;
  tc.integrator = config.integrator;
  const auto result = track(model, truth, control, config.x0, config.target, tc);

  auto log = open_output(ctx, "tracking_log.csv");
  log << provenance_line(config, "track") << '\n';
  write_tracking_log_csv(log, result.reports);
  log.close();
  auto traj = open_output(ctx, "tracking_trajectory.csv");
  traj << provenance_line(config, "track") << '\n';
  write_trajectory_csv(traj, result.trajectory);
  traj.close();

  const double scale = config.target.norm();
  const Vector nominal_end = endpoint(model, config.x0, control, config.integrator);
  json doc = header(config, "track");
  doc["epsilon"] = config.perturbation.epsilon;
  doc["nominal_error"] = (nominal_end - config.target).norm() / scale;
  doc["uncorrected_error"] = result.uncorrected_error;
  doc["corrected_error"] = result.corrected_error;
  doc["checkpoints"] = result.reports.size();
  doc["accepted"] = std::ranges::count_if(result.reports, [](const auto& r) { return r.accepted; });
  doc["rejected"] = std::ranges::count_if(
      result.reports, [](const auto& r) { return r.status == CorrectionStatus::rejected; });
  doc["control"] = control_to_json(result.final_control);
  write_json(ctx, "tracking_summary.json", doc);
  return doc;
}

json cmd_sweep(const ExperimentConfig& config, const RunContext& ctx) {
  RigidBodyModel model(config.model);
  const auto base = nominal_control(config, model, ctx.jobs);
  const ModelFactory perturbed = [&](double eps) {
    PerturbationSpec spec = config.perturbation;
    spec.epsilon = eps;
    return std::make_unique<PerturbedRigidBodyModel>(config.model, spec);
  };

  struct Row {
    std::size_t needles;
    RobustifyResult result;
    double eps_max = 0.0;
  };
  std::vector<Row> rows;
  for (std::size_t l : config.sweep.needles) {
    const auto search = robustify_search(config, model, base, l, ctx.jobs);
    std::vector<const RobustifyResult*> converged;
    for (const auto& t : search.table) {
      if (t.result && t.result->converged && std::isfinite(t.result->cost_cr)) converged.push_back(&*t.result);
    }
    std::ranges::stable_sort(converged, {}, &RobustifyResult::objective);
    std::vector<double> seen;
    for (const auto* r : converged) {
      if (seen.size() == config.sweep.per_needle_count) break;
      if (std::ranges::find(seen, r->cost_cr) != seen.end()) continue;
      seen.push_back(r->cost_cr);
      rows.push_back({l, *r});
    }
  }

  for (auto& row : rows) {
    TrackingConfig tc;
    tc.checkpoints = default_checkpoints(row.result.control, config.tracking.checkpoints);
    tc.gap = config.gap;
    tc.drift_threshold = config.tracking.drift_threshold;
    tc.damping = config.tracking.damping;
    tc.integrator = config.integrator;
    row.eps_max = epsilon_max(model, perturbed, row.result.control, config.x0, config.target,
                              config.sweep.epsilon_grid, tc, ctx.jobs)
                      .epsilon_max;
  }

  auto csv = open_output(ctx, "sweep.csv");
  csv << provenance_line(config, "sweep") << '\n';
  csv << "needles,tuple,C,C_r,epsilon_max\n";
  csv.precision(17);
  std::vector<double> inv_cr, eps;
  for (const auto& row : rows) {
    std::string tuple;
    for (std::size_t c : row.result.channels) tuple += (tuple.empty() ? "" : "-") + std::to_string(c + 1);
    csv << row.needles << ',' << tuple << ',' << row.result.cost_c << ',' << row.result.cost_cr << ','
        << row.eps_max << '\n';
    inv_cr.push_back(1.0 / row.result.cost_cr);
    eps.push_back(row.eps_max);
  }
  csv.close();

  json doc = header(config, "sweep");
  doc["rows"] = rows.size();
  doc["spearman_inverse_cr_vs_epsilon_max"] = nullptr;
  if (rows.size() >= 2) {
    const double rho = spearman(inv_cr, eps);
    if (std::isfinite(rho)) doc["spearman_inverse_cr_vs_epsilon_max"] = rho;
  }
  write_json(ctx, "sweep_summary.json", doc);
  return doc;
}

}  // namespace bangbang::cli
