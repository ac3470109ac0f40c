#pragma once

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "reluflow/dataset.hpp"
#include "reluflow/flow.hpp"
#include "reluflow/network.hpp"
#include "reluflow/phases.hpp"
#include "reluflow/theory.hpp"

namespace reluflow {

using json = nlohmann::ordered_json;

// --- lossless float encoding -------------------------------------------
// Floats in structured files are hex-float strings, so write -> read is
// bit-exact.

inline std::string to_hex_float(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

inline double from_hex_float(const std::string& s) {
  const char* begin = s.c_str();
  char* end = nullptr;
  double v = std::strtod(begin, &end);
  if (end == begin) throw std::invalid_argument("bad float literal: '" + s + "'");
  return v;
}

inline json hex_array(std::span<const double> vals) {
  json arr = json::array();
  for (double v : vals) arr.push_back(to_hex_float(v));
  return arr;
}

inline std::vector<double> parse_hex_array(const json& arr) {
  std::vector<double> out;
  out.reserve(arr.size());
  for (const auto& v : arr) out.push_back(from_hex_float(v.get<std::string>()));
  return out;
}

// %.17g round-trips doubles through decimal; used for CSV columns.
inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// --- dataset / params files --------------------------------------------

inline json dataset_to_json(const Dataset& ds) {
  json j;
  j["name"] = ds.name;
  j["n"] = ds.n();
  j["d"] = ds.dim();
  j["inputs"] = hex_array(ds.inputs.data);  // row-major
  j["labels"] = hex_array(ds.labels);
  return j;
}

inline Dataset dataset_from_json(const json& j) {
  Dataset ds;
  ds.name = j.at("name").get<std::string>();
  std::size_t n = j.at("n").get<std::size_t>();
  std::size_t d = j.at("d").get<std::size_t>();
  ds.inputs = Matrix(n, d);
  ds.inputs.data = parse_hex_array(j.at("inputs"));
  if (ds.inputs.data.size() != n * d)
    throw std::invalid_argument("dataset file: inputs array has wrong length");
  ds.labels = parse_hex_array(j.at("labels"));
  check_well_formed(ds);
  return ds;
}

inline json params_to_json(const Params& p) {
  json j;
  j["m"] = p.m();
  j["d"] = p.dim();
  j["a"] = hex_array(p.a);
  j["W"] = hex_array(p.W.data);  // row-major
  return j;
}

inline Params params_from_json(const json& j) {
  Params p;
  std::size_t m = j.at("m").get<std::size_t>();
  std::size_t d = j.at("d").get<std::size_t>();
  p.a = parse_hex_array(j.at("a"));
  p.W = Matrix(m, d);
  p.W.data = parse_hex_array(j.at("W"));
  if (p.a.size() != m || p.W.data.size() != m * d)
    throw std::invalid_argument("params file: array lengths inconsistent");
  return p;
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
  write_text_file(path, dataset_to_json(ds).dump(2) + "\n");
}
inline Dataset load_dataset(const std::string& path) {
  return dataset_from_json(json::parse(read_text_file(path)));
}
inline void save_params(const Params& p, const std::string& path) {
  write_text_file(path, params_to_json(p).dump(2) + "\n");
}
inline Params load_params(const std::string& path) {
  return params_from_json(json::parse(read_text_file(path)));
}

// --- trajectory CSV ------------------------------------------------------

inline constexpr const char* kTrajectoryCsvHeader =
    "t,loss,grad_norm,u_plus,u_minus,align_plus,align_minus,max_other_norm,"
    "dist_star,dist_saddle,drift";

inline std::string trajectory_to_csv(const Trajectory& traj) {
  std::ostringstream out;
  out << kTrajectoryCsvHeader << "\n";
  for (std::size_t i = 0; i < traj.times.size(); ++i) {
    out << format_g17(traj.times[i]) << ',' << format_g17(traj.loss[i]) << ','
        << format_g17(traj.grad_norm[i]) << ',' << format_g17(traj.u_plus[i]) << ','
        << format_g17(traj.u_minus[i]) << ',' << format_g17(traj.align_plus[i])
        << ',' << format_g17(traj.align_minus[i]) << ','
        << format_g17(traj.max_other_norm[i]) << ',' << format_g17(traj.dist_star[i])
        << ',' << format_g17(traj.dist_saddle[i]) << ',' << format_g17(traj.drift[i])
        << "\n";
  }
  return out.str();
}

/// Reads back the 11 schema columns of a trajectory CSV. Extra series kept
/// only in memory (loss_pos, max_norm) are not part of the file format.
inline Trajectory trajectory_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("empty trajectory csv");
  if (line != kTrajectoryCsvHeader)
    throw std::invalid_argument("unexpected trajectory csv header: " + line);
  Trajectory traj;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(row, cell, ',')) vals.push_back(from_hex_float(cell));
    if (vals.size() != 11)
      throw std::invalid_argument("trajectory csv row has " +
                                  std::to_string(vals.size()) + " columns");
    traj.times.push_back(vals[0]);
    traj.loss.push_back(vals[1]);
    traj.grad_norm.push_back(vals[2]);
    traj.u_plus.push_back(vals[3]);
    traj.u_minus.push_back(vals[4]);
    traj.align_plus.push_back(vals[5]);
    traj.align_minus.push_back(vals[6]);
    traj.max_other_norm.push_back(vals[7]);
    traj.dist_star.push_back(vals[8]);
    traj.dist_saddle.push_back(vals[9]);
    traj.drift.push_back(vals[10]);
  }
  return traj;
}

// --- theory summary / phase report --------------------------------------

inline json summary_to_json(const TheorySummary& s) {
  json j;
  j["n"] = s.n;
  j["d"] = s.d;
  j["d_plus"] = hex_array(s.dirs.d_plus);
  j["d_minus"] = hex_array(s.dirs.d_minus);
  j["norm_d_plus"] = s.dirs.norm_plus;
  j["norm_d_minus"] = s.dirs.norm_minus;
  j["r"] = s.dirs.r;
  j["alpha"] = s.alpha;
  j["beta"] = s.beta;
  j["eps_max"] = s.eps_max;
  j["saddle_level"] = s.saddle_level;
  if (s.closed_forms) {
    j["theta_star"] = params_to_json(s.theta_star);
    j["theta_saddle"] = params_to_json(s.theta_saddle);
    j["min_norm_sq"] = s.min_norm_sq;
    j["saddle_loss"] = s.saddle_loss;
  } else {
    j["closed_forms"] =
        "unavailable: closed-form interpolator and saddle require orthonormal inputs";
  }
  if (s.has_init) {
    j["s_plus1"] = s.s_plus1;
    j["s_minus1"] = s.s_minus1;
    j["assumption3_ok"] = s.assumption3_ok;
    j["c_init"] = s.c_init;
  }
  return j;
}

inline json check_item_to_json(const CheckItem& c) {
  json j;
  j["check"] = c.check;
  j["measured"] = c.measured;
  j["bound"] = c.bound;
  j["slack"] = c.slack;
  j["direction"] = c.upper ? "<=" : ">=";
  j["margin"] = c.margin();
  j["pass"] = c.pass;
  if (!c.note.empty()) j["note"] = c.note;
  return j;
}

inline json phase_outcome_to_json(const PhaseOutcome& p) {
  json j;
  j["applicable"] = p.applicable;
  if (!p.note.empty()) j["note"] = p.note;
  if (!std::isnan(p.detected_time)) j["detected_time"] = p.detected_time;
  j["items"] = json::array();
  for (const auto& c : p.items) j["items"].push_back(check_item_to_json(c));
  j["all_pass"] = p.all_pass();
  return j;
}

inline json phase_report_to_json(const PhaseReport& rep) {
  json j;
  j["lambda"] = rep.lambda;
  j["eps"] = rep.eps;
  j["slack"] = rep.slack;
  j["reactivation_events"] = rep.reactivation_events;
  j["phase1"] = phase_outcome_to_json(rep.phase1);
  j["phase2"] = phase_outcome_to_json(rep.phase2);
  j["saddle"] = phase_outcome_to_json(rep.saddle);
  j["phase3"] = phase_outcome_to_json(rep.phase3);
  json conv;
  conv["converged"] = rep.convergence.converged;
  conv["final_loss"] = rep.convergence.final_loss;
  if (!std::isnan(rep.convergence.final_dist_star))
    conv["final_dist_star"] = rep.convergence.final_dist_star;
  if (rep.convergence.rate_fitted) {
    conv["tail_rate"] = rep.convergence.tail_rate;
    conv["rate_ok"] = rep.convergence.rate_ok;
  }
  j["convergence"] = conv;
  return j;
}

/// One table row per inequality: check, measured, bound, margin, verdict.
inline std::string phase_report_table(const json& rep) {
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-24s %14s %14s %14s  %s\n", "check", "measured",
                "bound", "margin", "verdict");
  out << buf;
  for (const char* phase : {"phase1", "phase2", "saddle", "phase3"}) {
    if (!rep.contains(phase)) continue;
    const auto& p = rep.at(phase);
    if (!p.value("applicable", true)) {
      std::snprintf(buf, sizeof buf, "%-24s %s\n", phase,
                    p.value("note", std::string("not applicable")).c_str());
      out << buf;
      continue;
    }
    for (const auto& item : p.at("items")) {
      if (item.contains("measured") && item.at("measured").is_number()) {
        std::snprintf(buf, sizeof buf, "%-24s %14.6g %14.6g %14.6g  %s\n",
                      item.at("check").get<std::string>().c_str(),
                      item.at("measured").get<double>(),
                      item.at("bound").get<double>(),
                      item.at("margin").get<double>(),
                      item.at("pass").get<bool>() ? "pass" : "FAIL");
      } else {
        std::snprintf(buf, sizeof buf, "%-24s %s\n",
                      item.at("check").get<std::string>().c_str(),
                      item.value("note", std::string()).c_str());
      }
      out << buf;
    }
  }
  if (rep.contains("convergence")) {
    const auto& c = rep.at("convergence");
    std::snprintf(buf, sizeof buf, "%-24s final_loss=%.6g converged=%s\n",
                  "convergence", c.at("final_loss").get<double>(),
                  c.at("converged").get<bool>() ? "true" : "false");
    out << buf;
    if (c.contains("tail_rate")) {
      std::snprintf(buf, sizeof buf, "%-24s tail_rate=%.6g rate_ok=%s\n", "",
                    c.at("tail_rate").get<double>(),
                    c.at("rate_ok").get<bool>() ? "true" : "false");
      out << buf;
    }
  }
  return out.str();
}

}  // namespace reluflow
