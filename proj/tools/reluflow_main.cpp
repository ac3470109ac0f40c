// Command line harness: dataset validation, closed-form oracle reports,
// single runs, lambda sweeps, the high-dimensional PCA experiment and the
// large-initialisation contrast run.
//
// Exit codes: 0 success, 1 config error, 2 numerical abort,
//             3 dataset-assumption error.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "reluflow/experiment.hpp"

namespace fs = std::filesystem;
using namespace reluflow;

namespace {

struct CliOptions {
  std::string config_path;
  ExperimentConfig cfg;
  // Flags present on the command line override config-file fields.
  std::optional<std::string> dataset;
  std::vector<double> y;
  std::optional<std::size_t> m;
  std::vector<double> lambdas;
  std::vector<std::uint64_t> seeds;
  std::optional<double> step, max_time, stop_loss, eps, slack;
  std::optional<std::size_t> record_stride;
  std::optional<std::string> outdir;
  std::optional<unsigned> threads;
};

void add_common_options(CLI::App* cmd, CliOptions& opt) {
  cmd->add_option("--config", opt.config_path, "JSON config file");
  cmd->add_option("--dataset", opt.dataset,
                  "preset (toy2, nonortho5, highdim, canonical) or dataset file");
  cmd->add_option("--y", opt.y, "labels for the canonical preset")->delimiter(',');
  cmd->add_option("--m", opt.m, "network width");
  cmd->add_option("--lambda", opt.lambdas, "initialisation scale(s)")->delimiter(',');
  cmd->add_option("--seed", opt.seeds, "seed(s)")->delimiter(',');
  cmd->add_option("--step", opt.step, "Euler step size");
  cmd->add_option("--max-time", opt.max_time, "maximum simulated time");
  cmd->add_option("--stop-loss", opt.stop_loss, "terminate when loss <= this");
  cmd->add_option("--record-stride", opt.record_stride, "steps between records");
  cmd->add_option("--eps", opt.eps, "epsilon for the phase clocks");
  cmd->add_option("--slack", opt.slack, "slack multiplier on the bounds");
  cmd->add_option("--outdir", opt.outdir,
                  "output root (default $RELUFLOW_OUTDIR or ./runs)");
  cmd->add_option("--threads", opt.threads, "worker threads for sweeps");
}

ExperimentConfig resolve_config(const CliOptions& opt) {
  ExperimentConfig cfg;
  if (!opt.config_path.empty())
    cfg = config_from_json(json::parse(read_text_file(opt.config_path)));
  if (opt.dataset) cfg.dataset = *opt.dataset;
  if (!opt.y.empty()) cfg.y = opt.y;
  if (opt.m) cfg.m = *opt.m;
  if (!opt.lambdas.empty()) cfg.lambdas = opt.lambdas;
  if (!opt.seeds.empty()) cfg.seeds = opt.seeds;
  if (opt.step) cfg.flow.step = *opt.step;
  if (opt.max_time) cfg.flow.max_time = *opt.max_time;
  if (opt.stop_loss) cfg.flow.stop_loss = *opt.stop_loss;
  if (opt.record_stride) cfg.flow.record_stride = *opt.record_stride;
  if (opt.eps) cfg.eps = *opt.eps;
  if (opt.slack) cfg.slack = *opt.slack;
  if (opt.outdir) cfg.outdir = *opt.outdir;
  if (opt.threads) cfg.threads = *opt.threads;
  if (cfg.lambdas.empty() || cfg.seeds.empty())
    throw CLI::ValidationError("config", "need at least one lambda and one seed");
  return cfg;
}

int cmd_validate(const ExperimentConfig& cfg) {
  auto resolved = resolve_dataset(cfg);
  const auto& rep = resolved.report;
  std::printf("dataset           %s (n=%zu, d=%zu)\n", resolved.data.name.c_str(),
              resolved.data.n(), resolved.data.dim());
  std::printf("orthonormal_ok    %s (max deviation %.3g)\n",
              rep.orthonormal_ok ? "true" : "false", rep.max_ortho_dev);
  std::printf("labels_nonzero_ok %s\n", rep.labels_nonzero_ok ? "true" : "false");
  std::printf("energy_split_ok   %s (gap %.6g)\n",
              rep.energy_split_ok ? "true" : "false", rep.energy_gap);
  std::printf("swap_applied      %s\n", rep.swap_applied ? "true" : "false");
  std::printf("labels_negated    %s\n", resolved.labels_negated ? "true" : "false");
  if (!rep.labels_nonzero_ok) {
    std::fprintf(stderr, "error: dataset has zero labels\n");
    return 3;
  }
  return 0;
}

int cmd_oracle(const ExperimentConfig& cfg, const std::string& out_path) {
  auto resolved = resolve_dataset(cfg);
  TheorySummary s = summarize(resolved.data);
  json j = summary_to_json(s);
  j["labels_negated"] = resolved.labels_negated;
  std::string path = out_path;
  if (path.empty()) {
    fs::path root = default_outdir(cfg);
    fs::create_directories(root);
    path = (root / (resolved.data.name + "_oracle.json")).string();
  }
  write_text_file(path, j.dump(2) + "\n");
  std::printf("oracle summary written to %s\n", path.c_str());
  std::printf("||D+|| = %.12g, ||D-|| = %.12g, r = %.12g, eps_max = %.6g\n",
              s.dirs.norm_plus, s.dirs.norm_minus, s.dirs.r, s.eps_max);
  if (s.closed_forms)
    std::printf("min_norm_sq = %.12g, saddle_loss = %.12g\n", s.min_norm_sq,
                s.saddle_loss);
  else
    std::printf("closed forms unavailable (inputs not orthonormal); saddle level = %.12g\n",
                s.saddle_level);
  return 0;
}

int cmd_run(const ExperimentConfig& cfg) {
  auto resolved = resolve_dataset(cfg);
  fs::path root = default_outdir(cfg);
  fs::create_directories(root);
  write_text_file((root / "config.json").string(),
                  config_to_json(cfg).dump(2) + "\n");
  auto runs = run_grid(resolved.data, cfg, root);
  for (const auto& run : runs) {
    std::printf("lambda=%g seed=%llu: final_loss=%.6g f1=%.6g kinks=%zu", run.lambda,
                static_cast<unsigned long long>(run.seed), run.final_loss,
                run.final_f1, run.kink_clusters);
    if (run.escape2) std::printf(" escape2=%.4g", *run.escape2);
    std::printf(" reactivations=%ld\n", run.report.reactivation_events);
    json rep = phase_report_to_json(run.report);
    std::fputs(phase_report_table(rep).c_str(), stdout);
  }
  std::printf("artifacts under %s\n", root.string().c_str());
  return 0;
}

int cmd_sweep(const ExperimentConfig& cfg) {
  if (cfg.lambdas.size() < 2)
    throw CLI::ValidationError("sweep", "sweep needs >= 2 lambda values");
  auto resolved = resolve_dataset(cfg);
  fs::path root = default_outdir(cfg);
  fs::create_directories(root);
  auto runs = run_grid(resolved.data, cfg, root);
  auto sweep = summarize_sweep(runs);
  write_text_file((root / "sweep.csv").string(), sweep_to_csv(sweep));
  json j;
  j["rows"] = sweep.rows;
  if (sweep.fit_done) {
    j["escape2_vs_neglog_lambda"] = {{"slope", sweep.fit_slope},
                                     {"intercept", sweep.fit_intercept},
                                     {"r2", sweep.fit_r2}};
    std::printf("escape2 ~ %.4g * (-ln lambda) + %.4g   (R^2 = %.6f)\n",
                sweep.fit_slope, sweep.fit_intercept, sweep.fit_r2);
  }
  write_text_file((root / "sweep.json").string(), j.dump(2) + "\n");
  std::printf("sweep results under %s\n", root.string().c_str());
  return 0;
}

int cmd_highdim(ExperimentConfig cfg) {
  cfg.dataset = "highdim";
  auto resolved = resolve_dataset(cfg);
  fs::path root = default_outdir(cfg);
  fs::create_directories(root);
  auto runs = run_grid(resolved.data, cfg, root);
  const auto& run = runs.front();
  const Params& final_params = run.trajectory.final_params();

  auto pca = pca_top_k(final_params.W, 10);
  std::ostringstream ev;
  ev << "rank,eigenvalue,explained_ratio\n";
  for (std::size_t i = 0; i < pca.eigenvalues.size(); ++i)
    ev << (i + 1) << ',' << format_g17(pca.eigenvalues[i]) << ','
       << format_g17(pca.explained_ratio[i]) << "\n";
  write_text_file((root / "explained_variance.csv").string(), ev.str());

  std::ostringstream proj;
  proj << "time,neuron,sign,radius,angle\n";
  for (const auto& snap : run.trajectory.snapshots) {
    for (std::size_t j = 0; j < snap.params.m(); ++j) {
      auto polar = project_polar(pca, snap.params.W.row(j));
      proj << format_g17(snap.time) << ',' << j << ','
           << (snap.params.a[j] >= 0.0 ? 1 : -1) << ',' << format_g17(polar.radius)
           << ',' << format_g17(polar.angle) << "\n";
    }
  }
  write_text_file((root / "pca_projection.csv").string(), proj.str());

  double top2 = pca.explained_ratio[0] +
                (pca.explained_ratio.size() > 1 ? pca.explained_ratio[1] : 0.0);
  std::printf("final_loss=%.6g top2_explained=%.4f artifacts under %s\n",
              run.final_loss, top2, root.string().c_str());
  return 0;
}

int cmd_lazy(const ExperimentConfig& cfg) {
  auto resolved = resolve_dataset(cfg);
  fs::path root = default_outdir(cfg);
  fs::create_directories(root);
  auto runs = run_grid(resolved.data, cfg, root);
  for (const auto& run : runs) {
    InitConfig init{run.lambda, cfg.m, run.seed};
    Params p0 = init_balanced(init, resolved.data.dim());
    const Params& pf = run.trajectory.final_params();
    double max_rel_move = 0.0;
    for (std::size_t j = 0; j < p0.m(); ++j) {
      double norm0 = nrm2(p0.W.row(j));
      if (norm0 == 0.0) continue;
      double moved = 0.0;
      for (std::size_t i = 0; i < p0.dim(); ++i) {
        double dv = pf.W(j, i) - p0.W(j, i);
        moved += dv * dv;
      }
      max_rel_move = std::max(max_rel_move, std::sqrt(moved) / norm0);
    }
    json j;
    j["lambda"] = run.lambda;
    j["seed"] = run.seed;
    j["final_loss"] = run.final_loss;
    j["max_relative_neuron_displacement"] = max_rel_move;
    j["final_f1"] = run.final_f1;
    if (run.summary.closed_forms) {
      j["min_norm_sq"] = run.summary.min_norm_sq;
      j["f1_over_min"] = run.final_f1 / (0.5 * run.summary.min_norm_sq);
    }
    char name[80];
    std::snprintf(name, sizeof name, "lazy_lambda%g_seed%llu.json", run.lambda,
                  static_cast<unsigned long long>(run.seed));
    write_text_file((root / name).string(), j.dump(2) + "\n");
    std::printf("lambda=%g: max relative displacement %.4g, final f1 %.6g\n",
                run.lambda, max_rel_move, run.final_f1);
  }
  return 0;
}

int cmd_report(const std::string& path) {
  json rep = json::parse(read_text_file(path));
  std::fputs(phase_report_table(rep).c_str(), stdout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gradient-flow dynamics of one-hidden-layer ReLU networks"};
  app.require_subcommand(1);

  CliOptions opt;
  std::string oracle_out, report_path;

  auto* validate = app.add_subcommand("validate", "check dataset assumptions");
  add_common_options(validate, opt);
  auto* oracle = app.add_subcommand("oracle", "write the closed-form summary");
  add_common_options(oracle, opt);
  oracle->add_option("-o,--out", oracle_out, "output file");
  auto* run = app.add_subcommand("run", "integrate and verify one configuration");
  add_common_options(run, opt);
  auto* sweep = app.add_subcommand("sweep", "lambda sweep with aggregated CSV");
  add_common_options(sweep, opt);
  auto* highdim = app.add_subcommand("highdim", "high-dimensional teacher run + PCA");
  add_common_options(highdim, opt);
  auto* lazy = app.add_subcommand("lazy", "large-initialisation contrast run");
  add_common_options(lazy, opt);
  auto* report = app.add_subcommand("report", "pretty-print a phase report");
  report->add_option("file", report_path, "phase_report.json")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (report->parsed()) return cmd_report(report_path);
    ExperimentConfig cfg = resolve_config(opt);
    if (validate->parsed()) return cmd_validate(cfg);
    if (oracle->parsed()) return cmd_oracle(cfg, oracle_out);
    if (run->parsed()) return cmd_run(cfg);
    if (sweep->parsed()) return cmd_sweep(cfg);
    if (highdim->parsed()) return cmd_highdim(cfg);
    if (lazy->parsed()) return cmd_lazy(cfg);
  } catch (const CLI::Error& ex) {
    std::fprintf(stderr, "config error: %s\n", ex.what());
    return 1;
  } catch (const FlowError& ex) {
    std::fprintf(stderr, "numerical abort: %s\n", ex.what());
    return 2;
  } catch (const AssumptionError& ex) {
    std::fprintf(stderr, "dataset assumption error: %s\n", ex.what());
    return 3;
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return 1;
  }
  return 0;
}
