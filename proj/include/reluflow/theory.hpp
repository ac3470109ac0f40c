#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "reluflow/dataset.hpp"
#include "reluflow/network.hpp"

namespace reluflow {

/// Thrown when a dataset violates an assumption a closed-form quantity needs.
struct AssumptionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct AlignmentDirections {
  std::vector<double> d_plus;   // (1/n) sum_{y_k > 0} y_k x_k
  std::vector<double> d_minus;  // (1/n) sum_{y_k < 0} y_k x_k
  double norm_plus = 0.0;
  double norm_minus = 0.0;
  double r = 0.0;  // ||D+|| / ||D-||
};

/// The two directions the signed neuron groups align with, and their norm
/// ratio r. Errors if all labels share one sign (the two-group picture
/// degenerates).
inline AlignmentDirections alignment_directions(const Dataset& ds) {
  check_well_formed(ds);
  const std::size_t n = ds.n(), d = ds.dim();
  AlignmentDirections out;
  out.d_plus.assign(d, 0.0);
  out.d_minus.assign(d, 0.0);
  bool any_pos = false, any_neg = false;
  for (std::size_t k = 0; k < n; ++k) {
    double y = ds.labels[k];
    if (y > 0.0) {
      any_pos = true;
      axpy(y, ds.inputs.row(k), out.d_plus);
    } else if (y < 0.0) {
      any_neg = true;
      axpy(y, ds.inputs.row(k), out.d_minus);
    }
  }
  if (!any_pos || !any_neg)
    throw AssumptionError("one-sided labels: dataset needs labels of both signs");
  scale(1.0 / static_cast<double>(n), out.d_plus);
  scale(1.0 / static_cast<double>(n), out.d_minus);
  out.norm_plus = nrm2(out.d_plus);
  out.norm_minus = nrm2(out.d_minus);
  out.r = out.norm_plus / out.norm_minus;
  return out;
}

struct EpsilonBound {
  double alpha = 0.0;    // min_{y_k > 0} y_k^2 / (2 ||D+||^2)
  double beta = 0.0;     // min_{y_k < 0} y_k^2 / (2 ||D-||^2)
  double eps_max = 0.0;  // largest feasible epsilon, capped at 0.25
};

/// Largest epsilon satisfying both feasibility constraints
///   (1 + 3 eps) * max(1 - alpha, ||D-||/||D+||) <= 1 - eps
///   (1 + 3 r eps) * (1 - beta)                  <= 1 - eps
/// Each is linear in eps; a constraint with a non-positive left factor is
/// vacuous. The result is capped at 0.25.
inline EpsilonBound epsilon_max(const Dataset& ds) {
  auto dirs = alignment_directions(ds);
  if (!(dirs.r > 1.0))
    throw AssumptionError(
        "epsilon bound needs canonical orientation (||D+|| > ||D-||); negate the "
        "labels first");
  double min_pos_sq = std::numeric_limits<double>::infinity();
  double min_neg_sq = std::numeric_limits<double>::infinity();
  for (double y : ds.labels) {
    if (y > 0.0) min_pos_sq = std::min(min_pos_sq, y * y);
    if (y < 0.0) min_neg_sq = std::min(min_neg_sq, y * y);
  }
  EpsilonBound out;
  out.alpha = min_pos_sq / (2.0 * dirs.norm_plus * dirs.norm_plus);
  out.beta = min_neg_sq / (2.0 * dirs.norm_minus * dirs.norm_minus);

  double q = std::max(1.0 - out.alpha, dirs.norm_minus / dirs.norm_plus);
  double eps = (1.0 - q) / (1.0 + 3.0 * q);
  if (1.0 - out.beta > 0.0) {
    double eps_b = out.beta / (1.0 + 3.0 * dirs.r * (1.0 - out.beta));
    eps = std::min(eps, eps_b);
  }
  out.eps_max = std::min(eps, 0.25);
  return out;
}

/// Neurons whose initial weights activate every label of the matching sign.
struct FittingSets {
  std::vector<std::size_t> s_plus1;   // s_j = +1, <w_j^0, x_k> >= 0 for all y_k > 0
  std::vector<std::size_t> s_minus1;  // s_j = -1, <w_j^0, x_k> >= 0 for all y_k < 0
  bool both_nonempty = false;
};

inline FittingSets fitting_sets(const Params& p0, const Dataset& ds) {
  detail::check_dims(p0, ds);
  FittingSets out;
  for (std::size_t j = 0; j < p0.m(); ++j) {
    bool sign_pos = p0.a[j] > 0.0;
    bool covers = true;
    for (std::size_t k = 0; k < ds.n() && covers; ++k) {
      double y = ds.labels[k];
      if ((sign_pos && y > 0.0) || (!sign_pos && y < 0.0))
        covers = dot(p0.W.row(j), ds.inputs.row(k)) >= 0.0;
    }
    if (!covers) continue;
    if (sign_pos)
      out.s_plus1.push_back(j);
    else
      out.s_minus1.push_back(j);
  }
  out.both_nonempty = !out.s_plus1.empty() && !out.s_minus1.empty();
  return out;
}

namespace detail {
inline void require_orthonormal(const Dataset& ds, const char* what) {
  if (!validate_dataset(ds).orthonormal_ok)
    throw AssumptionError(std::string(what) + " requires orthonormal inputs");
}
}  // namespace detail

/// Canonical two-neuron interpolator of minimal parameter norm:
///   w_1 =  sqrt(n/||D+||) D+,  a_1 =  sqrt(n ||D+||)
///   w_2 = -sqrt(n/||D-||) D-,  a_2 = -sqrt(n ||D-||)
/// padded with zero neurons up to the requested width. Its squared norm is
/// 2n(||D+|| + ||D-||), the minimum over all interpolating networks.
/// Only valid for orthonormal inputs.
inline std::pair<Params, double> minimal_norm_interpolator(const Dataset& ds,
                                                           std::size_t width = 2) {
  detail::require_orthonormal(ds, "minimal-norm interpolator");
  if (width < 2) throw std::invalid_argument("interpolator needs width >= 2");
  auto dirs = alignment_directions(ds);
  const double n = static_cast<double>(ds.n());
  Params p;
  p.a.assign(width, 0.0);
  p.W = Matrix(width, ds.dim(), 0.0);
  double c_plus = std::sqrt(n / dirs.norm_plus);
  double c_minus = std::sqrt(n / dirs.norm_minus);
  for (std::size_t i = 0; i < ds.dim(); ++i) {
    p.W(0, i) = c_plus * dirs.d_plus[i];
    p.W(1, i) = -c_minus * dirs.d_minus[i];
  }
  p.a[0] = std::sqrt(n * dirs.norm_plus);
  p.a[1] = -std::sqrt(n * dirs.norm_minus);
  double min_norm_sq = 2.0 * n * (dirs.norm_plus + dirs.norm_minus);
  return {std::move(p), min_norm_sq};
}

/// Membership test for the minimal-norm interpolator set: balanced, every
/// non-zero positive neuron aligned with D+, every non-zero negative neuron
/// aligned with -D-, and the per-sign squared masses equal to n||D+|| and
/// n||D-||, all within tol.
inline bool membership_min_norm(const Params& p, const Dataset& ds, double tol) {
  detail::require_orthonormal(ds, "minimal-norm membership");
  auto dirs = alignment_directions(ds);
  const double n = static_cast<double>(ds.n());
  double mass_plus = 0.0, mass_minus = 0.0;
  for (std::size_t j = 0; j < p.m(); ++j) {
    double norm = nrm2(p.W.row(j));
    if (std::abs(std::abs(p.a[j]) - norm) > tol) return false;  // balanced
    if (norm <= tol) continue;                                  // zero neuron
    if (p.a[j] > 0.0) {
      if (std::abs(dot(p.W.row(j), dirs.d_plus) - norm * dirs.norm_plus) > tol)
        return false;
      mass_plus += norm * norm;
    } else {
      if (std::abs(dot(p.W.row(j), dirs.d_minus) + norm * dirs.norm_minus) > tol)
        return false;
      mass_minus += norm * norm;
    }
  }
  return std::abs(mass_plus - n * dirs.norm_plus) <= tol &&
         std::abs(mass_minus - n * dirs.norm_minus) <= tol;
}

/// Loss level of the intermediate critical point where the positive labels
/// are fitted and the negative ones still read zero. Well defined for any
/// dataset with pairwise orthogonal inputs.
inline double saddle_loss_level(const Dataset& ds) {
  double s = 0.0;
  for (double y : ds.labels)
    if (y < 0.0) s += y * y;
  return s / (2.0 * static_cast<double>(ds.n()));
}

/// Canonical one-neuron representative of the intermediate saddle:
///   w_1 = sqrt(n/||D+||) D+,  a_1 = sqrt(n ||D+||).
/// Its gradient vanishes identically (the negative labels sit on the
/// sigma'(0)=0 boundary). Only valid for orthonormal inputs.
inline std::pair<Params, double> saddle_point(const Dataset& ds) {
  detail::require_orthonormal(ds, "intermediate saddle");
  auto dirs = alignment_directions(ds);
  const double n = static_cast<double>(ds.n());
  Params p;
  p.a.assign(1, std::sqrt(n * dirs.norm_plus));
  p.W = Matrix(1, ds.dim(), 0.0);
  double c_plus = std::sqrt(n / dirs.norm_plus);
  for (std::size_t i = 0; i < ds.dim(); ++i) p.W(0, i) = c_plus * dirs.d_plus[i];
  return {std::move(p), saddle_loss_level(ds)};
}

/// Predicted phase clocks for a given initialisation scale lambda < 1 and
/// feasible epsilon. All are multiples of -ln(lambda).
struct TimeBounds {
  double t1 = 0.0;        // end of the alignment phase: -eps ln(lambda) / ||D-||
  double t_plus1 = 0.0;   // positive-group alignment clock: -eps ln(lambda) / ||D+||
  double t2_max = 0.0;    // positive labels fitted by -(1+3 eps) ln(lambda) / ||D+||
  double plateau_lo = 0.0;  // intermediate-saddle window start (= t2_max)
  double plateau_hi = 0.0;  // window end: -(1-eps) ln(lambda) / ||D-||
  double t3_max = 0.0;    // negative labels fitted by -(1+3 r eps) ln(lambda) / ||D-||
};

struct TheorySummary;
inline TimeBounds time_bounds(double lambda, double eps, const TheorySummary& s);

/// Every closed-form quantity derivable from the dataset alone, plus the
/// initialisation-dependent pieces filled in by attach_init().
struct TheorySummary {
  AlignmentDirections dirs;
  double alpha = 0.0, beta = 0.0, eps_max = 0.0;
  double saddle_level = 0.0;

  // Present only for orthonormal inputs.
  bool closed_forms = false;
  Params theta_star;    // width-2 canonical representative
  Params theta_saddle;  // width-1 canonical representative
  double min_norm_sq = 0.0;
  double saddle_loss = 0.0;

  // Initialisation-dependent (attach_init).
  bool has_init = false;
  std::vector<std::size_t> s_plus1, s_minus1;
  bool assumption3_ok = false;
  double c_init = 0.0;  // max_j ||w_j^0|| / lambda

  std::size_t n = 0, d = 0;
};

inline TheorySummary summarize(const Dataset& ds) {
  TheorySummary s;
  s.n = ds.n();
  s.d = ds.dim();
  s.dirs = alignment_directions(ds);
  auto eb = epsilon_max(ds);
  s.alpha = eb.alpha;
  s.beta = eb.beta;
  s.eps_max = eb.eps_max;
  s.saddle_level = saddle_loss_level(ds);
  if (validate_dataset(ds).orthonormal_ok) {
    s.closed_forms = true;
    auto [star, mns] = minimal_norm_interpolator(ds);
    s.theta_star = std::move(star);
    s.min_norm_sq = mns;
    auto [sad, sl] = saddle_point(ds);
    s.theta_saddle = std::move(sad);
    s.saddle_loss = sl;
  }
  return s;
}

inline void attach_init(TheorySummary& s, const Params& p0, const Dataset& ds,
                        double lambda) {
  auto sets = fitting_sets(p0, ds);
  s.s_plus1 = std::move(sets.s_plus1);
  s.s_minus1 = std::move(sets.s_minus1);
  s.assumption3_ok = sets.both_nonempty;
  double max_norm = 0.0;
  for (std::size_t j = 0; j < p0.m(); ++j)
    max_norm = std::max(max_norm, nrm2(p0.W.row(j)));
  s.c_init = max_norm / lambda;
  s.has_init = true;
}

inline TimeBounds time_bounds(double lambda, double eps, const TheorySummary& s) {
  if (!(lambda > 0.0) || lambda >= 1.0)
    throw std::invalid_argument("time bounds need 0 < lambda < 1");
  if (!(eps > 0.0)) throw std::invalid_argument("time bounds need eps > 0");
  const double log_term = -std::log(lambda);
  const double np = s.dirs.norm_plus, nm = s.dirs.norm_minus, r = s.dirs.r;
  TimeBounds tb;
  tb.t1 = eps * log_term / nm;
  tb.t_plus1 = eps * log_term / np;
  tb.t2_max = (1.0 + 3.0 * eps) * log_term / np;
  tb.plateau_lo = tb.t2_max;
  tb.plateau_hi = (1.0 - eps) * log_term / nm;
  tb.t3_max = (1.0 + 3.0 * r * eps) * log_term / nm;
  return tb;
}

/// Default epsilon used by run harnesses: stays in the small-eps regime the
/// bounds assume. Backs off from eps_max because at equality the saddle
/// window [t2_max, plateau_hi] collapses to a single point.
inline double default_eps(const TheorySummary& s) {
  return std::min(0.9 * s.eps_max, 0.2);
}

namespace detail {

/// Replaces the per-sign neuron groups by their aligned, mass-renormalised
/// images: positive-group neurons become multiples of D+/||D+|| with total
/// squared mass `mass_plus` (distribution of mass matching p), the negative
/// group multiples of -D-/||D-|| with mass `mass_minus`, all other neurons
/// zero. Output weights follow by balancedness.
inline Params project_to_aligned(const Params& p, const TheorySummary& s,
                                 double mass_plus, double mass_minus) {
  Params out;
  out.a.assign(p.m(), 0.0);
  out.W = Matrix(p.m(), p.dim(), 0.0);
  struct Group {
    const std::vector<std::size_t>* idx;
    double target;
    double sign;
    const std::vector<double>* dir;
    double dir_norm;
  };
  const Group groups[2] = {
      {&s.s_plus1, mass_plus, 1.0, &s.dirs.d_plus, s.dirs.norm_plus},
      {&s.s_minus1, mass_minus, -1.0, &s.dirs.d_minus, s.dirs.norm_minus},
  };
  for (const Group& g : groups) {
    if (g.idx->empty() || g.target <= 0.0) continue;
    double mass = 0.0;
    for (std::size_t j : *g.idx) {
      double norm = nrm2(p.W.row(j));
      mass += norm * norm;
    }
    for (std::size_t j : *g.idx) {
      // Mass distribution follows p when it has any; uniform otherwise.
      double share = mass > 0.0 ? dot(p.W.row(j), p.W.row(j)) / mass
                                : 1.0 / static_cast<double>(g.idx->size());
      double norm = std::sqrt(g.target * share);
      double coef = g.sign * norm / g.dir_norm;
      auto wj = out.W.row(j);
      for (std::size_t i = 0; i < p.dim(); ++i) wj[i] = coef * (*g.dir)[i];
      out.a[j] = g.sign * norm;
    }
  }
  return out;
}

}  // namespace detail

/// Distance from p to the minimal-norm interpolator set, measured against
/// the aligned mass-matched member supported on the initialisation's
/// fitting sets.
inline double dist_to_star_set(const Params& p, const TheorySummary& s) {
  const double n = static_cast<double>(s.n);
  Params proj = detail::project_to_aligned(p, s, n * s.dirs.norm_plus,
                                           n * s.dirs.norm_minus);
  return params_dist(p, proj);
}

/// Distance from p to the intermediate-saddle set (positive mass in place,
/// negative group at zero).
inline double dist_to_saddle_set(const Params& p, const TheorySummary& s) {
  const double n = static_cast<double>(s.n);
  Params proj = detail::project_to_aligned(p, s, n * s.dirs.norm_plus, 0.0);
  return params_dist(p, proj);
}

}  // namespace reluflow
