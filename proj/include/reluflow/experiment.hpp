#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "reluflow/dataset.hpp"
#include "reluflow/flow.hpp"
#include "reluflow/io.hpp"
#include "reluflow/network.hpp"
#include "reluflow/pca.hpp"
#include "reluflow/phases.hpp"
#include "reluflow/svg.hpp"
#include "reluflow/theory.hpp"

namespace reluflow {

/// A full experiment description. Loaded from a JSON config file; individual
/// CLI flags override single fields.
struct ExperimentConfig {
  std::string dataset = "toy2";     // preset name or path to a dataset file
  std::vector<double> y;            // labels for the canonical preset
  std::size_t canonical_d = 0;      // 0: use len(y)
  std::size_t m = 60;               // network width
  std::vector<double> lambdas{1e-5};
  std::vector<std::uint64_t> seeds{1};
  FlowConfig flow;
  std::optional<double> eps;        // default: min(eps_max, 0.2)
  double slack = 3.0;
  std::string outdir;               // default: $RELUFLOW_OUTDIR or ./runs
  unsigned threads = 0;             // 0: hardware concurrency
};

inline ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig cfg;
  if (j.contains("dataset")) cfg.dataset = j.at("dataset").get<std::string>();
  if (j.contains("y")) cfg.y = j.at("y").get<std::vector<double>>();
  if (j.contains("canonical_d")) cfg.canonical_d = j.at("canonical_d").get<std::size_t>();
  if (j.contains("m")) cfg.m = j.at("m").get<std::size_t>();
  if (j.contains("lambda")) {
    if (j.at("lambda").is_array())
      cfg.lambdas = j.at("lambda").get<std::vector<double>>();
    else
      cfg.lambdas = {j.at("lambda").get<double>()};
  }
  if (j.contains("seed")) {
    if (j.at("seed").is_array())
      cfg.seeds = j.at("seed").get<std::vector<std::uint64_t>>();
    else
      cfg.seeds = {j.at("seed").get<std::uint64_t>()};
  }
  if (j.contains("step")) cfg.flow.step = j.at("step").get<double>();
  if (j.contains("max_time")) cfg.flow.max_time = j.at("max_time").get<double>();
  if (j.contains("record_stride"))
    cfg.flow.record_stride = j.at("record_stride").get<std::size_t>();
  if (j.contains("stop_loss")) cfg.flow.stop_loss = j.at("stop_loss").get<double>();
  if (j.contains("snapshot_times"))
    cfg.flow.snapshot_times = j.at("snapshot_times").get<std::vector<double>>();
  if (j.contains("eps")) cfg.eps = j.at("eps").get<double>();
  if (j.contains("slack")) cfg.slack = j.at("slack").get<double>();
  if (j.contains("outdir")) cfg.outdir = j.at("outdir").get<std::string>();
  if (j.contains("threads")) cfg.threads = j.at("threads").get<unsigned>();
  return cfg;
}

inline json config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["dataset"] = cfg.dataset;
  if (!cfg.y.empty()) j["y"] = cfg.y;
  if (cfg.canonical_d) j["canonical_d"] = cfg.canonical_d;
  j["m"] = cfg.m;
  j["lambda"] = cfg.lambdas;
  j["seed"] = cfg.seeds;
  j["step"] = cfg.flow.step;
  j["max_time"] = cfg.flow.max_time;
  j["record_stride"] = cfg.flow.record_stride;
  j["stop_loss"] = cfg.flow.stop_loss;
  if (!cfg.flow.snapshot_times.empty()) j["snapshot_times"] = cfg.flow.snapshot_times;
  if (cfg.eps) j["eps"] = *cfg.eps;
  j["slack"] = cfg.slack;
  if (!cfg.outdir.empty()) j["outdir"] = cfg.outdir;
  return j;
}

inline std::string default_outdir(const ExperimentConfig& cfg) {
  if (!cfg.outdir.empty()) return cfg.outdir;
  if (const char* env = std::getenv("RELUFLOW_OUTDIR")) return env;
  return "runs";
}

/// Resolved dataset plus the orientation bookkeeping. Labels are negated at
/// load time when ||D+|| < ||D-|| so that r > 1 always holds downstream.
struct ResolvedDataset {
  Dataset data;
  AssumptionReport report;
  bool labels_negated = false;
};

inline ResolvedDataset resolve_dataset(const ExperimentConfig& cfg) {
  Dataset ds;
  if (cfg.dataset == "canonical") {
    std::vector<double> y = cfg.y.empty() ? std::vector<double>{2.0, -1.0} : cfg.y;
    std::size_t d = cfg.canonical_d ? cfg.canonical_d : y.size();
    ds = make_canonical(d, y);
  } else if (cfg.dataset == "toy2" || cfg.dataset == "nonortho5" ||
             cfg.dataset == "highdim") {
    ds = preset(cfg.dataset);
  } else if (std::filesystem::exists(cfg.dataset)) {
    ds = load_dataset(cfg.dataset);
  } else {
    throw std::invalid_argument(
        "dataset '" + cfg.dataset +
        "' is neither a preset (toy2, nonortho5, highdim, canonical) nor a file");
  }
  ResolvedDataset out;
  auto dirs = alignment_directions(ds);  // throws AssumptionError if one-sided
  if (dirs.norm_plus == dirs.norm_minus)
    throw AssumptionError("degenerate dataset: ||D+|| equals ||D-||");
  if (dirs.norm_plus < dirs.norm_minus) {
    ds = negate_labels(ds);
    out.labels_negated = true;
  }
  out.report = validate_dataset(ds);
  out.data = std::move(ds);
  return out;
}

/// Direction clusters of the represented function: unit neuron directions
/// grouped at cosine tolerance, counting only clusters carrying more than
/// mass_frac of the total squared parameter norm.
inline std::size_t count_direction_clusters(const Params& p, double cos_tol = 1e-2,
                                            double mass_frac = 0.01) {
  struct Cluster {
    std::vector<double> dir;
    double mass = 0.0;
  };
  std::vector<Cluster> clusters;
  double total = params_norm_sq(p);
  if (total <= 0.0) return 0;
  for (std::size_t j = 0; j < p.m(); ++j) {
    double norm = nrm2(p.W.row(j));
    if (norm == 0.0) continue;
    double mass = p.a[j] * p.a[j] + norm * norm;
    auto wj = p.W.row(j);
    bool placed = false;
    for (auto& c : clusters) {
      double cosine = dot(wj, c.dir) / norm;
      if (cosine >= 1.0 - cos_tol) {
        c.mass += mass;
        placed = true;
        break;
      }
    }
    if (!placed) {
      Cluster c;
      c.dir.assign(wj.begin(), wj.end());
      scale(1.0 / norm, c.dir);
      c.mass = mass;
      clusters.push_back(std::move(c));
    }
  }
  std::size_t significant = 0;
  for (const auto& c : clusters)
    if (c.mass > mass_frac * total) ++significant;
  return significant;
}

struct RunResult {
  double lambda = 0.0;
  std::uint64_t seed = 0;
  Trajectory trajectory;
  TheorySummary summary;
  PhaseReport report;
  double eps = 0.0;
  double final_loss = 0.0;
  double final_f1 = 0.0;
  std::size_t kink_clusters = 0;
  std::optional<double> escape1, escape2;
};

/// Integrates one (lambda, seed) cell and runs the phase checks. Escape
/// times are measured at pinned levels: halfway down from the initial
/// plateau, and 1% of the saddle level for the second escape.
inline RunResult run_single(const Dataset& ds, const ExperimentConfig& cfg,
                            double lambda, std::uint64_t seed) {
  RunResult out;
  out.lambda = lambda;
  out.seed = seed;

  InitConfig init{lambda, cfg.m, seed};
  Params p0 = init_balanced(init, ds.dim());
  out.summary = summarize(ds);
  attach_init(out.summary, p0, ds, lambda);
  out.eps = cfg.eps ? *cfg.eps : default_eps(out.summary);

  FlowConfig flow = cfg.flow;
  const double n = static_cast<double>(ds.n());
  flow.snapshot_u_plus_level =
      n * out.summary.dirs.norm_plus - std::pow(lambda, out.eps / 5.0);
  flow.snapshot_u_minus_level =
      n * out.summary.dirs.norm_minus - std::pow(lambda, out.eps / 29.0);

  out.trajectory = integrate(p0, ds, out.summary, flow);
  out.report = build_phase_report(out.trajectory, out.summary, lambda, out.eps,
                                  cfg.slack, flow.stop_loss);
  out.final_loss = out.trajectory.loss.back();
  const Params& final_params = out.trajectory.final_params();
  out.final_f1 = f1_norm(final_params);
  out.kink_clusters = count_direction_clusters(final_params);

  double init_level = out.trajectory.loss.front();
  double saddle = out.summary.saddle_level;
  try {
    out.escape1 = escape_time(out.trajectory, 0.5 * (init_level + saddle),
                              Escape::First);
  } catch (const std::runtime_error&) {
  }
  try {
    out.escape2 = escape_time(out.trajectory, 0.01 * saddle, Escape::Second);
  } catch (const std::runtime_error&) {
  }
  return out;
}

inline void write_run_artifacts(const RunResult& run, const Dataset& ds,
                                const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_dataset(ds, (dir / "dataset.json").string());
  write_text_file((dir / "summary.json").string(),
                  summary_to_json(run.summary).dump(2) + "\n");
  write_text_file((dir / "trajectory.csv").string(),
                  trajectory_to_csv(run.trajectory));
  json rep = phase_report_to_json(run.report);
  rep["final_f1"] = run.final_f1;
  rep["kink_clusters"] = run.kink_clusters;
  if (run.escape1) rep["escape1"] = *run.escape1;
  if (run.escape2) rep["escape2"] = *run.escape2;
  write_text_file((dir / "phase_report.json").string(), rep.dump(2) + "\n");
  for (const auto& snap : run.trajectory.snapshots) {
    char name[96];
    std::snprintf(name, sizeof name, "params_%s_t%g.json", snap.tag.c_str(),
                  snap.time);
    save_params(snap.params, (dir / name).string());
  }
  save_params(run.trajectory.final_params(), (dir / "final_params.json").string());
  SvgSeries loss_series{"loss", run.trajectory.times, run.trajectory.loss};
  write_text_file((dir / "loss.svg").string(),
                  render_line_svg({loss_series}, /*log_y=*/true));
}

/// Runs the (lambda, seed) grid, in parallel when the grid has more than one
/// cell. Each cell writes into its own subdirectory of out_root.
inline std::vector<RunResult> run_grid(const Dataset& ds,
                                       const ExperimentConfig& cfg,
                                       const std::filesystem::path& out_root,
                                       bool write_artifacts = true) {
  struct Cell {
    double lambda;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (double lambda : cfg.lambdas)
    for (std::uint64_t seed : cfg.seeds) cells.push_back({lambda, seed});
  std::vector<RunResult> results(cells.size());
  std::vector<std::string> errors(cells.size());

  unsigned workers = cfg.threads ? cfg.threads : std::thread::hardware_concurrency();
  workers = std::max(1u, std::min<unsigned>(workers, cells.size()));
  std::atomic<std::size_t> cursor{0};
  auto work = [&] {
    for (;;) {
      std::size_t i = cursor.fetch_add(1);
      if (i >= cells.size()) return;
      try {
        results[i] = run_single(ds, cfg, cells[i].lambda, cells[i].seed);
        if (write_artifacts) {
          char sub[96];
          std::snprintf(sub, sizeof sub, "lambda%g_seed%llu", cells[i].lambda,
                        static_cast<unsigned long long>(cells[i].seed));
          write_run_artifacts(results[i], ds, out_root / sub);
        }
      } catch (const std::exception& ex) {
        errors[i] = ex.what();
        results[i].lambda = cells[i].lambda;
        results[i].seed = cells[i].seed;
      }
    }
  };
  if (workers == 1 || cells.size() == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (!errors[i].empty())
      throw FlowError("run lambda=" + std::to_string(cells[i].lambda) +
                          " seed=" + std::to_string(cells[i].seed) +
                          " failed: " + errors[i],
                      Params{}, 0, 0.0);
  }
  return results;
}

struct SweepSummary {
  json rows = json::array();
  double fit_slope = 0.0;      // escape2 vs -ln(lambda)
  double fit_intercept = 0.0;
  double fit_r2 = 0.0;
  bool fit_done = false;
};

/// Aggregates a lambda sweep: one row per run plus the affine fit of the
/// second escape time against -ln(lambda).
inline SweepSummary summarize_sweep(const std::vector<RunResult>& runs) {
  SweepSummary out;
  std::vector<double> neg_log_lambda, escape2;
  for (const auto& run : runs) {
    json row;
    row["lambda"] = run.lambda;
    row["seed"] = run.seed;
    row["escape1"] =
        run.escape1 ? json(*run.escape1) : json(nullptr);
    row["escape2"] =
        run.escape2 ? json(*run.escape2) : json(nullptr);
    row["final_loss"] = run.final_loss;
    double fds = run.report.convergence.final_dist_star;
    row["final_dist_star"] = std::isnan(fds) ? json(nullptr) : json(fds);
    row["tail_rate"] = run.report.convergence.rate_fitted
                           ? json(run.report.convergence.tail_rate)
                           : json(nullptr);
    row["final_f1"] = run.final_f1;
    out.rows.push_back(row);
    if (run.escape2) {
      neg_log_lambda.push_back(-std::log(run.lambda));
      escape2.push_back(*run.escape2);
    }
  }
  if (neg_log_lambda.size() >= 2) {
    auto line = detail::fit_line(neg_log_lambda, escape2);
    out.fit_slope = line.slope;
    out.fit_intercept = line.intercept;
    out.fit_r2 = line.r2;
    out.fit_done = true;
  }
  return out;
}

inline std::string sweep_to_csv(const SweepSummary& sweep) {
  std::ostringstream out;
  out << "lambda,seed,escape1,escape2,final_loss,final_dist_star,tail_rate,final_f1\n";
  auto cell = [](const json& v) {
    return v.is_null() ? std::string("nan") : format_g17(v.get<double>());
  };
  for (const auto& row : sweep.rows) {
    out << format_g17(row.at("lambda").get<double>()) << ','
        << row.at("seed").get<std::uint64_t>() << ',' << cell(row.at("escape1"))
        << ',' << cell(row.at("escape2")) << ','
        << format_g17(row.at("final_loss").get<double>()) << ','
        << cell(row.at("final_dist_star")) << ',' << cell(row.at("tail_rate")) << ','
        << format_g17(row.at("final_f1").get<double>()) << "\n";
  }
  return out.str();
}

}  // namespace reluflow
