#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "reluflow/dataset.hpp"
#include "reluflow/network.hpp"
#include "reluflow/theory.hpp"

namespace reluflow {

struct FlowConfig {
  double step = 1e-3;       // Euler step, in time units
  double max_time = 100.0;  // stop after this much simulated time
  std::size_t record_stride = 10;  // steps between diagnostic records
  double stop_loss = 0.0;   // terminate once loss <= stop_loss
  std::vector<double> snapshot_times;  // full parameter snapshots (sorted)
  // Snapshot triggers on the per-sign squared masses; used to capture the
  // states at the ends of the two norm-growth phases.
  std::optional<double> snapshot_u_plus_level;
  std::optional<double> snapshot_u_minus_level;
  bool track_freezing = true;
  double norm_floor = 1e-30;
};

struct Snapshot {
  double time = 0.0;
  std::string tag;  // "time", "u_plus", "u_minus", "final"
  Params params;
};

/// Time series of scalar diagnostics recorded during integration, plus
/// parameter snapshots. All series share the same length; times are
/// strictly increasing.
struct Trajectory {
  std::vector<double> times;
  std::vector<double> loss;
  std::vector<double> grad_norm;
  std::vector<double> u_plus;          // sum_{j in S+,1} ||w_j||^2
  std::vector<double> u_minus;         // sum_{j in S-,1} ||w_j||^2
  std::vector<double> align_plus;      // min_{j in S+,1} cos(w_j, D+)
  std::vector<double> align_minus;     // min_{j in S-,1} cos(w_j, -D-)
  std::vector<double> max_other_norm;  // max_{j outside both sets} ||w_j||
  std::vector<double> dist_star;       // distance to the interpolator set
  std::vector<double> dist_saddle;     // distance to the saddle set
  std::vector<double> drift;           // max_j |a_j^2 - ||w_j||^2|
  // Extra series kept for the phase checks (not part of the CSV schema).
  std::vector<double> loss_pos;  // loss restricted to positive labels
  std::vector<double> max_norm;  // max_j ||w_j|| over all neurons

  std::vector<Snapshot> snapshots;
  std::size_t steps = 0;

  // Activation-freezing bookkeeping: once a preactivation <w_j, x_k> goes
  // non-positive it should stay put on exactly orthogonal data.
  long reactivation_events = 0;
  double frozen_drift_max = 0.0;

  const Params& final_params() const {
    for (auto it = snapshots.rbegin(); it != snapshots.rend(); ++it)
      if (it->tag == "final") return it->params;
    throw std::logic_error("trajectory has no final snapshot");
  }

  /// Slack allowed on monotone-descent checks: discrete steps overshoot by
  /// at most O(step * ||grad||^2) per unit time.
  double mono_tolerance(double step) const {
    double g = 0.0;
    for (double v : grad_norm) g = std::max(g, v);
    return 10.0 * step * g * g;
  }
};

/// Raised when the integration produces a non-finite value (step too large).
/// Carries the last finite state for post-mortem inspection.
struct FlowError : std::runtime_error {
  Params last_state;
  std::size_t step_index;
  double time;
  FlowError(std::string msg, Params state, std::size_t step, double t)
      : std::runtime_error(std::move(msg)),
        last_state(std::move(state)),
        step_index(step),
        time(t) {}
};

/// Integrates the gradient flow d(theta)/dt = -grad L(theta) by explicit
/// Euler from p0, recording diagnostics every record_stride steps (step 0
/// and the final step always included). The summary provides the fitting
/// sets and alignment directions the diagnostics are measured against.
inline Trajectory integrate(const Params& p0, const Dataset& ds,
                            const TheorySummary& summary, const FlowConfig& cfg) {
  detail::check_dims(p0, ds);
  if (!(cfg.step > 0.0)) throw std::invalid_argument("step must be > 0");
  if (!(cfg.max_time > 0.0)) throw std::invalid_argument("max_time must be > 0");
  if (cfg.record_stride < 1) throw std::invalid_argument("record_stride must be >= 1");
  if (!summary.has_init)
    throw std::invalid_argument("summary missing init data (call attach_init)");
  if (!all_finite(p0.a) || !all_finite(p0.W.data))
    throw std::invalid_argument("initial parameters are not finite");

  const std::size_t m = p0.m(), n = ds.n(), d = p0.dim();
  const double inv_n = 1.0 / static_cast<double>(n);
  const double eta = cfg.step;
  const auto max_steps =
      static_cast<std::size_t>(std::llround(std::ceil(cfg.max_time / eta)));

  std::vector<char> in_plus(m, 0), in_minus(m, 0);
  for (std::size_t j : summary.s_plus1) in_plus[j] = 1;
  for (std::size_t j : summary.s_minus1) in_minus[j] = 1;
  const bool others_exist = [&] {
    for (std::size_t j = 0; j < m; ++j)
      if (!in_plus[j] && !in_minus[j]) return true;
    return false;
  }();

  Params p = p0;
  Matrix pre;
  std::vector<double> h, e, sum(d), norms(m), ga(m);
  Matrix gw(m, d);

  // Freezing bookkeeping.
  std::vector<char> frozen;
  std::vector<double> frozen_val;
  if (cfg.track_freezing) {
    frozen.assign(m * n, 0);
    frozen_val.assign(m * n, 0.0);
  }

  Trajectory traj;
  auto snapshot_times = cfg.snapshot_times;
  std::sort(snapshot_times.begin(), snapshot_times.end());
  std::size_t next_snapshot = 0;
  bool u_plus_snapped = false, u_minus_snapped = false;
  long last_recorded_step = -1;

  Params last_finite = p;

  for (std::size_t step_idx = 0;; ++step_idx) {
    const double t = static_cast<double>(step_idx) * eta;
    detail::evaluate(p, ds, pre, h, e);

    double loss_val = 0.0, loss_pos_val = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      double sq = e[k] * e[k];
      loss_val += sq;
      if (ds.labels[k] > 0.0) loss_pos_val += sq;
    }
    loss_val *= 0.5 * inv_n;
    loss_pos_val *= 0.5 * inv_n;

    if (!std::isfinite(loss_val))
      throw FlowError("integration diverged (non-finite loss) at step " +
                          std::to_string(step_idx) + "; reduce the step size",
                      std::move(last_finite), step_idx, t);

    // Gradient at the current state; shared accumulation with gradient().
    double grad_sq = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      auto prej = pre.row(j);
      double gaj = 0.0;
      for (std::size_t k = 0; k < n; ++k)
        if (prej[k] > 0.0) gaj += e[k] * prej[k];
      gaj *= inv_n;
      ga[j] = gaj;
      detail::neuron_residual_sum(prej, e, ds.inputs, sum);
      auto gwj = gw.row(j);
      double row_sq = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        double v = p.a[j] * (sum[i] * inv_n);
        gwj[i] = v;
        row_sq += v * v;
      }
      grad_sq += gaj * gaj + row_sq;
    }

    if (cfg.track_freezing) {
      for (std::size_t j = 0; j < m; ++j) {
        auto prej = pre.row(j);
        for (std::size_t k = 0; k < n; ++k) {
          char& fr = frozen[j * n + k];
          double v = prej[k];
          if (!fr) {
            if (v <= 0.0) {
              fr = 1;
              frozen_val[j * n + k] = v;
            }
          } else if (v > 0.0) {
            ++traj.reactivation_events;
            fr = 0;
          } else {
            double dev = std::abs(v - frozen_val[j * n + k]);
            if (dev > traj.frozen_drift_max) traj.frozen_drift_max = dev;
          }
        }
      }
    }

    // Per-neuron norms and group aggregates.
    double u_plus = 0.0, u_minus = 0.0, max_other = 0.0, max_all = 0.0,
           drift = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      double norm = nrm2(p.W.row(j));
      norms[j] = norm;
      double sq = norm * norm;
      if (in_plus[j]) u_plus += sq;
      if (in_minus[j]) u_minus += sq;
      if (!in_plus[j] && !in_minus[j]) max_other = std::max(max_other, norm);
      max_all = std::max(max_all, norm);
      drift = std::max(drift, std::abs(p.a[j] * p.a[j] - sq));
    }

    const bool at_end = loss_val <= cfg.stop_loss || step_idx >= max_steps;
    if (step_idx % cfg.record_stride == 0 || at_end) {
      if (static_cast<long>(step_idx) != last_recorded_step) {
        last_recorded_step = static_cast<long>(step_idx);
        auto group_align = [&](const std::vector<std::size_t>& idx,
                               const std::vector<double>& dir, double dir_norm) {
          if (idx.empty()) return std::numeric_limits<double>::quiet_NaN();
          double worst = 1.0;
          for (std::size_t j : idx) {
            double norm = norms[j];
            double cosine =
                norm < cfg.norm_floor
                    ? 0.0
                    : dot(p.W.row(j), dir) / (norm * dir_norm);
            worst = std::min(worst, cosine);
          }
          return worst;
        };
        traj.times.push_back(t);
        traj.loss.push_back(loss_val);
        traj.loss_pos.push_back(loss_pos_val);
        traj.grad_norm.push_back(std::sqrt(grad_sq));
        traj.u_plus.push_back(u_plus);
        traj.u_minus.push_back(u_minus);
        traj.align_plus.push_back(
            group_align(summary.s_plus1, summary.dirs.d_plus, summary.dirs.norm_plus));
        double am = std::numeric_limits<double>::quiet_NaN();
        if (!summary.s_minus1.empty()) {
          // cos against -D-: negate the inner product.
          double worst = 1.0;
          for (std::size_t j : summary.s_minus1) {
            double norm = norms[j];
            double cosine = norm < cfg.norm_floor
                                ? 0.0
                                : -dot(p.W.row(j), summary.dirs.d_minus) /
                                      (norm * summary.dirs.norm_minus);
            worst = std::min(worst, cosine);
          }
          am = worst;
        }
        traj.align_minus.push_back(am);
        traj.max_other_norm.push_back(others_exist ? max_other : 0.0);
        traj.max_norm.push_back(max_all);
        if (summary.closed_forms) {
          traj.dist_star.push_back(dist_to_star_set(p, summary));
          traj.dist_saddle.push_back(dist_to_saddle_set(p, summary));
        } else {
          traj.dist_star.push_back(std::numeric_limits<double>::quiet_NaN());
          traj.dist_saddle.push_back(std::numeric_limits<double>::quiet_NaN());
        }
        traj.drift.push_back(drift);
      }
    }

    while (next_snapshot < snapshot_times.size() &&
           t >= snapshot_times[next_snapshot] - 0.5 * eta) {
      traj.snapshots.push_back({t, "time", p});
      ++next_snapshot;
    }
    if (cfg.snapshot_u_plus_level && !u_plus_snapped &&
        u_plus >= *cfg.snapshot_u_plus_level) {
      traj.snapshots.push_back({t, "u_plus", p});
      u_plus_snapped = true;
    }
    if (cfg.snapshot_u_minus_level && !u_minus_snapped &&
        u_minus >= *cfg.snapshot_u_minus_level) {
      traj.snapshots.push_back({t, "u_minus", p});
      u_minus_snapped = true;
    }

    if (at_end) {
      traj.steps = step_idx;
      traj.snapshots.push_back({t, "final", p});
      break;
    }

    last_finite = p;
    for (std::size_t j = 0; j < m; ++j) {
      p.a[j] -= eta * ga[j];
      auto wj = p.W.row(j);
      auto gwj = gw.row(j);
      for (std::size_t i = 0; i < d; ++i) {
        double g = gwj[i];
        if (g != 0.0) wj[i] -= eta * g;
      }
    }
    if (!all_finite(p.a) || !all_finite(p.W.data))
      throw FlowError("integration diverged (non-finite parameters) at step " +
                          std::to_string(step_idx + 1) + "; reduce the step size",
                      std::move(last_finite), step_idx + 1, t + eta);
  }
  return traj;
}

/// Parameters of the logistic growth law fitted to the positive-group mass:
/// du/dt = rate * (1 - u/capacity) * u.
struct LogisticFit {
  double rate = 0.0;      // predicted 2 ||D+||
  double capacity = 0.0;  // predicted n ||D+||
  double intercept = 0.0;
  std::size_t window = 0;  // number of records used
};

namespace detail {

struct LineFit {
  double slope = 0.0, intercept = 0.0, r2 = 0.0, sse = 0.0;
};

inline LineFit fit_line(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  if (n < 2) throw std::invalid_argument("line fit needs >= 2 points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double sse = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double r = y[i] - (f.slope * x[i] + f.intercept);
    sse += r * r;
  }
  f.sse = sse;
  f.r2 = syy > 0.0 ? 1.0 - sse / syy : 1.0;
  return f;
}

/// Minimises f over [lo, hi] by golden-section search.
template <class F>
double golden_min(F&& f, double lo, double hi, int iters = 200) {
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = lo, b = hi;
  double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
  double f1 = f(x1), f2 = f(x2);
  for (int i = 0; i < iters; ++i) {
    if (f1 < f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - phi * (b - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + phi * (b - a);
      f2 = f(x2);
    }
  }
  return 0.5 * (a + b);
}

}  // namespace detail

/// Fits the logistic law to the recorded u_plus series. The fit window is
/// the contiguous stretch where u_plus lies in [lo_frac, hi_frac] of the
/// theoretical capacity n ||D+||; the capacity itself is estimated by a 1-d
/// search minimising the residual of the linearised model
/// ln(u / (capacity - u)) = rate * t + const.
inline LogisticFit u_plus_growth_fit(const Trajectory& traj,
                                     const TheorySummary& summary,
                                     double lo_frac = 0.02, double hi_frac = 0.9) {
  const double cap0 = static_cast<double>(summary.n) * summary.dirs.norm_plus;
  const auto& u = traj.u_plus;
  std::size_t begin = u.size(), end = u.size();
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (u[i] >= lo_frac * cap0) {
      begin = i;
      break;
    }
  }
  for (std::size_t i = begin; i < u.size(); ++i) {
    if (u[i] > hi_frac * cap0) {
      end = i;
      break;
    }
  }
  if (begin >= u.size() || end - begin < 10)
    throw std::runtime_error("growth window too short (need >= 10 records in [" +
                             std::to_string(lo_frac) + ", " + std::to_string(hi_frac) +
                             "] of capacity)");
  std::vector<double> ts(traj.times.begin() + begin, traj.times.begin() + end);
  std::vector<double> us(u.begin() + begin, u.begin() + end);
  double u_max = *std::max_element(us.begin(), us.end());

  std::vector<double> z(us.size());
  auto sse_at = [&](double cap) {
    for (std::size_t i = 0; i < us.size(); ++i) z[i] = std::log(us[i] / (cap - us[i]));
    return detail::fit_line(ts, z).sse;
  };
  double cap = detail::golden_min(sse_at, u_max * (1.0 + 1e-9), 3.0 * cap0);
  for (std::size_t i = 0; i < us.size(); ++i) z[i] = std::log(us[i] / (cap - us[i]));
  auto line = detail::fit_line(ts, z);
  LogisticFit fit;
  fit.rate = line.slope;
  fit.capacity = cap;
  fit.intercept = line.intercept;
  fit.window = us.size();
  return fit;
}

enum class Escape { First, Second };

/// First time the loss durably (>= min_records consecutive records) drops
/// below `level`. `level` must sit between the plateau the escape leaves
/// and the one it reaches.
inline double escape_time(const Trajectory& traj, double level, Escape which,
                          std::size_t min_records = 3) {
  (void)which;  // the scan is identical; the enum documents intent
  const auto& loss = traj.loss;
  for (std::size_t i = 0; i < loss.size(); ++i) {
    if (loss[i] >= level) continue;
    bool durable = true;
    for (std::size_t k = i; k < std::min(loss.size(), i + min_records); ++k)
      if (loss[k] >= level) {
        durable = false;
        break;
      }
    if (durable) return traj.times[i];
  }
  throw std::runtime_error("not escaped: loss never durably dropped below " +
                           std::to_string(level));
}

}  // namespace reluflow
