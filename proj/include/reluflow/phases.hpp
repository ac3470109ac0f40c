#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "reluflow/flow.hpp"
#include "reluflow/theory.hpp"

namespace reluflow {

/// One verified inequality: measured value against its bound (with the
/// slack multiplier already applied to the lambda-power error term).
struct CheckItem {
  std::string check;     // e.g. "phase1.align_plus"
  double measured = 0.0;
  double bound = 0.0;
  double slack = 1.0;
  bool upper = false;    // true: measured <= bound, false: measured >= bound
  bool pass = false;
  std::string note;

  double margin() const { return upper ? bound - measured : measured - bound; }
};

inline CheckItem make_check(std::string name, double measured, double bound,
                            double slack, bool upper, std::string note = {}) {
  CheckItem c;
  c.check = std::move(name);
  c.measured = measured;
  c.bound = bound;
  c.slack = slack;
  c.upper = upper;
  c.pass = upper ? measured <= bound : measured >= bound;
  c.note = std::move(note);
  return c;
}

struct PhaseOutcome {
  bool applicable = true;
  std::string note;
  double detected_time = std::numeric_limits<double>::quiet_NaN();
  std::vector<CheckItem> items;

  bool all_pass() const {
    if (!applicable) return true;
    for (const auto& c : items)
      if (!c.pass) return false;
    return true;
  }
};

namespace detail {

inline std::size_t nearest_record(const Trajectory& traj, double t) {
  if (traj.times.empty()) throw std::invalid_argument("empty trajectory");
  auto it = std::lower_bound(traj.times.begin(), traj.times.end(), t);
  if (it == traj.times.end()) return traj.times.size() - 1;
  std::size_t i = static_cast<std::size_t>(it - traj.times.begin());
  if (i > 0 && t - traj.times[i - 1] < traj.times[i] - t) --i;
  return i;
}

inline void require_init(const TheorySummary& s) {
  if (!s.has_init)
    throw std::invalid_argument("summary missing init data (call attach_init)");
}

}  // namespace detail

/// Alignment-phase checks at the clock t1 = -eps ln(lambda) / ||D-||:
/// both signed groups aligned to within 2 lambda^eps of perfect cosine and
/// every neuron norm still below 2 c lambda^(1 - r eps).
inline PhaseOutcome check_phase1(const Trajectory& traj, const TheorySummary& s,
                                 double lambda, double eps, double slack) {
  detail::require_init(s);
  auto tb = time_bounds(lambda, eps, s);
  if (tb.t1 > traj.times.back() + 1e-12)
    throw std::runtime_error("trajectory does not cover the alignment clock t1");
  PhaseOutcome out;
  std::size_t i = detail::nearest_record(traj, tb.t1);
  const double np = s.dirs.norm_plus, nm = s.dirs.norm_minus;
  double pow_eps = std::pow(lambda, eps);

  // Empirical end of alignment: both groups past the target cosine.
  double cos_target = 1.0 - 2.0 * pow_eps;
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    double ap = traj.align_plus[k], am = traj.align_minus[k];
    if (std::isnan(ap) || std::isnan(am)) break;
    if (ap >= cos_target && am >= cos_target) {
      out.detected_time = traj.times[k];
      break;
    }
  }

  out.items.push_back(make_check(
      "phase1.align_plus", traj.align_plus[i] * np,
      (1.0 - slack * 2.0 * pow_eps) * np, slack, false,
      "min over S+,1 of <wbar_j, D+> at t1"));
  out.items.push_back(make_check(
      "phase1.align_minus", traj.align_minus[i] * nm,
      (1.0 - slack * 2.0 * pow_eps) * nm, slack, false,
      "min over S-,1 of <wbar_j, -D-> at t1"));
  out.items.push_back(make_check(
      "phase1.norm_cap", traj.max_norm[i],
      slack * 2.0 * s.c_init * std::pow(lambda, 1.0 - s.dirs.r * eps), slack, true,
      "max_j ||w_j|| at t1"));
  return out;
}

/// Positive-fitting checks. The phase end t2 is detected as the first record
/// with u_plus >= n ||D+|| - lambda^(eps/5); the inequalities are evaluated
/// there.
inline PhaseOutcome check_phase2(const Trajectory& traj, const TheorySummary& s,
                                 double lambda, double eps, double slack) {
  detail::require_init(s);
  auto tb = time_bounds(lambda, eps, s);
  PhaseOutcome out;
  const double n = static_cast<double>(s.n);
  const double np = s.dirs.norm_plus;
  const double capacity = n * np;
  const double threshold = capacity - std::pow(lambda, eps / 5.0);

  std::size_t i2 = traj.times.size();
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    if (traj.u_plus[k] >= threshold) {
      i2 = k;
      break;
    }
  }
  if (i2 == traj.times.size())
    throw std::runtime_error(
        "positive-group mass never reached the fitting threshold; trajectory too short");
  out.detected_time = traj.times[i2];

  out.items.push_back(make_check("phase2.time_bound", out.detected_time, tb.t2_max,
                                 1.0, true, "detected t2 vs clock bound"));
  out.items.push_back(make_check(
      "phase2.align_plus", traj.align_plus[i2] * np,
      np - slack * std::pow(lambda, eps / 2.0), slack, false,
      "min over S+,1 of <wbar_j, D+> at t2"));
  out.items.push_back(make_check("phase2.capacity", traj.u_plus[i2],
                                 capacity - slack * std::pow(lambda, eps / 5.0),
                                 slack, false, "u_plus at t2"));
  out.items.push_back(make_check(
      "phase2.other_norms", traj.max_other_norm[i2],
      slack * 2.0 * s.c_init * std::pow(lambda, eps), slack, true,
      "max norm outside S+,1 and S-,1 at t2"));
  out.items.push_back(make_check(
      "phase2.pos_loss", traj.loss_pos[i2],
      slack * std::pow(lambda, 2.0 * eps / 5.0) / (2.0 * n), slack, true,
      "positive-label loss at t2"));
  return out;
}

/// Intermediate-saddle checks over the plateau window
/// [-(1+3eps) ln(lambda)/||D+||, -(1-eps) ln(lambda)/||D-||]: the state
/// stays within slack * lambda^(eps/5) of the saddle set and the loss sits
/// at the saddle level.
inline PhaseOutcome check_saddle(const Trajectory& traj, const TheorySummary& s,
                                 double lambda, double eps, double slack) {
  detail::require_init(s);
  auto tb = time_bounds(lambda, eps, s);
  PhaseOutcome out;
  if (tb.plateau_hi > traj.times.back() + 1e-12)
    throw std::runtime_error("plateau window extends past the trajectory end");
  double max_dist = 0.0, max_loss_dev = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    if (traj.times[k] < tb.plateau_lo || traj.times[k] > tb.plateau_hi) continue;
    ++count;
    if (!std::isnan(traj.dist_saddle[k]))
      max_dist = std::max(max_dist, traj.dist_saddle[k]);
    max_loss_dev = std::max(max_loss_dev, std::abs(traj.loss[k] - s.saddle_level));
  }
  if (count == 0)
    throw std::runtime_error("no records inside the plateau window");
  double bound = slack * std::pow(lambda, eps / 5.0);
  out.detected_time = tb.plateau_lo;
  out.items.push_back(make_check("saddle.distance", max_dist, bound, slack, true,
                                 "max distance to the saddle set over the window"));
  out.items.push_back(make_check("saddle.loss_level", max_loss_dev, bound, slack,
                                 true, "max |loss - saddle level| over the window"));
  return out;
}

/// Negative-fitting checks. t3 is detected as the first record with
/// u_minus >= n ||D-|| - lambda^(eps/29). The positive-group stillness
/// check needs the u_plus/u_minus-triggered snapshots.
inline PhaseOutcome check_phase3(const Trajectory& traj, const TheorySummary& s,
                                 double lambda, double eps, double slack) {
  detail::require_init(s);
  auto tb = time_bounds(lambda, eps, s);
  PhaseOutcome out;
  const double n = static_cast<double>(s.n);
  const double nm = s.dirs.norm_minus;
  const double capacity = n * nm;
  const double threshold = capacity - std::pow(lambda, eps / 29.0);

  std::size_t i3 = traj.times.size();
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    if (traj.u_minus[k] >= threshold) {
      i3 = k;
      break;
    }
  }
  if (i3 == traj.times.size())
    throw std::runtime_error(
        "negative-group mass never reached the fitting threshold; trajectory too short");
  out.detected_time = traj.times[i3];

  out.items.push_back(make_check("phase3.time_bound", out.detected_time, tb.t3_max,
                                 1.0, true, "detected t3 vs clock bound"));
  out.items.push_back(make_check(
      "phase3.align_minus", traj.align_minus[i3] * nm,
      nm - slack * std::pow(lambda, eps / 14.0), slack, false,
      "min over S-,1 of <wbar_j, -D-> at t3"));
  out.items.push_back(make_check("phase3.capacity", traj.u_minus[i3],
                                 capacity - slack * std::pow(lambda, eps / 29.0),
                                 slack, false, "u_minus at t3"));
  out.items.push_back(make_check(
      "phase3.other_norms", traj.max_other_norm[i3],
      slack * 3.0 * s.c_init * std::pow(lambda, eps), slack, true,
      "max norm outside S+,1 and S-,1 at t3"));

  const Params* snap2 = nullptr;
  const Params* snap3 = nullptr;
  for (const auto& snap : traj.snapshots) {
    if (snap.tag == "u_plus") snap2 = &snap.params;
    if (snap.tag == "u_minus") snap3 = &snap.params;
  }
  if (snap2 && snap3) {
    double moved = 0.0;
    for (std::size_t j : s.s_plus1) {
      double d2 = 0.0;
      auto w2 = snap2->W.row(j);
      auto w3 = snap3->W.row(j);
      for (std::size_t i = 0; i < snap2->dim(); ++i) {
        double dv = w2[i] - w3[i];
        d2 += dv * dv;
      }
      moved = std::max(moved, std::sqrt(d2));
    }
    out.items.push_back(make_check(
        "phase3.plus_frozen", moved, slack * std::pow(lambda, eps / 15.0), slack,
        true, "max over S+,1 of ||w_j(t2) - w_j(t3)||"));
  } else {
    CheckItem c;
    c.check = "phase3.plus_frozen";
    c.pass = true;
    c.note = "skipped: no u_plus/u_minus snapshots in the trajectory";
    out.items.push_back(c);
  }
  return out;
}

struct PlRatio {
  double ratio = 0.0;  // ||grad L||^2 / L
  double bound = 0.0;  // 2 min of the per-sign covered masses / n
  bool pass = false;
};

/// Gradient-domination ratio against its balanced-network lower bound
///   ||grad L(theta)||^2 >= 2 L(theta) min( m+/n , m-/n ),
/// where m+/m- are the squared masses of neurons whose sign matches and
/// whose activations cover every label of that sign at the *current* state.
inline PlRatio pl_ratio(const Params& p, const Dataset& ds,
                        double balance_tol = 1e-6) {
  detail::check_dims(p, ds);
  for (std::size_t j = 0; j < p.m(); ++j) {
    double norm = nrm2(p.W.row(j));
    if (std::abs(std::abs(p.a[j]) - norm) > balance_tol)
      throw std::invalid_argument("pl_ratio needs balanced parameters");
  }
  double l = loss(p, ds);
  if (l <= 0.0) throw std::domain_error("PL ratio undefined at zero loss");
  Params g = gradient(p, ds);
  double grad_sq = dot(g.a, g.a) + dot(g.W.data, g.W.data);

  double mass_plus = 0.0, mass_minus = 0.0;
  for (std::size_t j = 0; j < p.m(); ++j) {
    bool sign_pos = p.a[j] > 0.0;
    bool covers = true;
    for (std::size_t k = 0; k < ds.n() && covers; ++k) {
      double y = ds.labels[k];
      if ((sign_pos && y > 0.0) || (!sign_pos && y < 0.0))
        covers = dot(p.W.row(j), ds.inputs.row(k)) > 0.0;
    }
    if (!covers) continue;
    double norm_sq = dot(p.W.row(j), p.W.row(j));
    if (sign_pos)
      mass_plus += norm_sq;
    else
      mass_minus += norm_sq;
  }
  PlRatio out;
  out.ratio = grad_sq / l;
  out.bound =
      2.0 * std::min(mass_plus, mass_minus) / static_cast<double>(ds.n());
  out.pass = out.ratio >= out.bound;
  return out;
}

struct ConvergenceReport {
  bool converged = false;
  double final_loss = 0.0;
  double final_dist_star = std::numeric_limits<double>::quiet_NaN();
  double tail_rate = std::numeric_limits<double>::quiet_NaN();
  bool rate_fitted = false;
  bool rate_ok = false;  // tail_rate >= 0.5 ||D-||
};

/// Final-phase report: terminal loss against the stop threshold and the
/// exponential decay rate fitted on the tail of ln(loss), compared with the
/// asymptotic rate ||D-||.
inline ConvergenceReport check_convergence(const Trajectory& traj,
                                           const TheorySummary& s, double lambda,
                                           double stop_loss) {
  (void)lambda;
  ConvergenceReport rep;
  rep.final_loss = traj.loss.back();
  rep.converged = rep.final_loss <= stop_loss;
  if (!traj.dist_star.empty()) rep.final_dist_star = traj.dist_star.back();

  if (traj.loss.front() <= stop_loss) return rep;  // started converged

  // Tail window: strictly positive losses below 5% of the saddle level.
  double hi = 0.05 * s.saddle_level;
  double lo = std::max(stop_loss * 2.0, 0.0);
  std::vector<double> ts, ls;
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    if (traj.loss[k] > lo && traj.loss[k] < hi) {
      ts.push_back(traj.times[k]);
      ls.push_back(std::log(traj.loss[k]));
    }
  }
  if (ts.size() >= 5) {
    auto line = detail::fit_line(ts, ls);
    rep.tail_rate = -line.slope;
    rep.rate_fitted = true;
    rep.rate_ok = rep.tail_rate >= 0.5 * s.dirs.norm_minus;
  }
  return rep;
}

/// Aggregate report over all phases of one trajectory.
struct PhaseReport {
  PhaseOutcome phase1, phase2, saddle, phase3;
  ConvergenceReport convergence;
  double lambda = 0.0, eps = 0.0, slack = 0.0;
  long reactivation_events = 0;

  double t1_detected() const { return phase1.detected_time; }
  double t2_detected() const { return phase2.detected_time; }
  double t3_detected() const { return phase3.detected_time; }
};

/// Runs every phase check, converting per-phase errors (window not covered,
/// threshold never reached) into inapplicable outcomes so one report always
/// comes back. Phase 3 and the saddle are skipped when the fitting sets are
/// not both non-empty.
inline PhaseReport build_phase_report(const Trajectory& traj,
                                      const TheorySummary& s, double lambda,
                                      double eps, double slack,
                                      double stop_loss) {
  PhaseReport rep;
  rep.lambda = lambda;
  rep.eps = eps;
  rep.slack = slack;
  rep.reactivation_events = traj.reactivation_events;
  auto guarded = [&](PhaseOutcome (*fn)(const Trajectory&, const TheorySummary&,
                                        double, double, double)) {
    try {
      return fn(traj, s, lambda, eps, slack);
    } catch (const std::exception& ex) {
      PhaseOutcome out;
      out.applicable = false;
      out.note = ex.what();
      return out;
    }
  };
  if (!s.assumption3_ok) {
    PhaseOutcome na;
    na.applicable = false;
    na.note = "not applicable: fitting sets S+,1 / S-,1 not both non-empty";
    rep.phase1 = na;
    rep.phase2 = guarded(check_phase2);
    rep.saddle = na;
    rep.phase3 = na;
  } else {
    rep.phase1 = guarded(check_phase1);
    rep.phase2 = guarded(check_phase2);
    rep.saddle = guarded(check_saddle);
    rep.phase3 = guarded(check_phase3);
  }
  rep.convergence = check_convergence(traj, s, lambda, stop_loss);
  return rep;
}

}  // namespace reluflow
