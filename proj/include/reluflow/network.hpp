#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "reluflow/dataset.hpp"
#include "reluflow/linalg.hpp"
#include "reluflow/rng.hpp"

namespace reluflow {

/// One-hidden-layer ReLU network parameters theta = (a, W):
/// h(x) = sum_j a_j * max(0, <w_j, x>), with w_j the rows of W.
struct Params {
  std::vector<double> a;  // m output weights
  Matrix W;               // m x d hidden neurons

  std::size_t m() const { return a.size(); }
  std::size_t dim() const { return W.cols; }

  bool operator==(const Params&) const = default;
};

struct InitConfig {
  double lambda = 1e-6;  // initialisation scale, > 0
  std::size_t m = 60;    // width
  std::uint64_t seed = 1;
};

/// Balanced Gaussian initialisation: w_j = lambda * g_j with g_j standard
/// Gaussian, a_j = s_j * ||w_j|| with s_j uniform on {-1,+1}. The identity
/// a_j = s_j * ||w_j|| holds bitwise.
inline Params init_balanced(const InitConfig& cfg, std::size_t d) {
  if (!(cfg.lambda > 0.0)) throw std::invalid_argument("init scale lambda must be > 0");
  if (cfg.m < 1) throw std::invalid_argument("width m must be >= 1");
  Rng rng(cfg.seed);
  Params p;
  p.W = Matrix(cfg.m, d);
  for (double& v : p.W.data) v = cfg.lambda * rng.gaussian();
  p.a.resize(cfg.m);
  for (std::size_t j = 0; j < cfg.m; ++j) p.a[j] = rng.rademacher() * nrm2(p.W.row(j));
  return p;
}

inline double forward(const Params& p, std::span<const double> x) {
  if (x.size() != p.dim())
    throw std::invalid_argument("forward: input has dim " + std::to_string(x.size()) +
                                ", network expects " + std::to_string(p.dim()));
  double out = 0.0;
  for (std::size_t j = 0; j < p.m(); ++j) {
    double pre = dot(p.W.row(j), x);
    if (pre > 0.0) out += p.a[j] * pre;
  }
  return out;
}

namespace detail {

inline void check_dims(const Params& p, const Dataset& ds) {
  if (p.dim() != ds.dim())
    throw std::invalid_argument("network dim " + std::to_string(p.dim()) +
                                " != dataset dim " + std::to_string(ds.dim()));
}

/// Predictions, residuals e_k = h(x_k) - y_k and preactivations <w_j, x_k>.
/// `pre` is m x n. Every consumer of the gradient goes through this so the
/// floating-point summation order is identical everywhere.
inline void evaluate(const Params& p, const Dataset& ds, Matrix& pre,
                     std::vector<double>& h, std::vector<double>& e) {
  const std::size_t m = p.m(), n = ds.n();
  if (pre.rows != m || pre.cols != n) pre = Matrix(m, n);
  h.assign(n, 0.0);
  e.resize(n);
  for (std::size_t j = 0; j < m; ++j) {
    auto wj = p.W.row(j);
    auto prej = pre.row(j);
    const double aj = p.a[j];
    for (std::size_t k = 0; k < n; ++k) {
      double v = dot(wj, ds.inputs.row(k));
      prej[k] = v;
      if (v > 0.0) h[k] += aj * v;
    }
  }
  for (std::size_t k = 0; k < n; ++k) e[k] = h[k] - ds.labels[k];
}

/// S_j = sum_k e_k * 1{pre_jk > 0} * x_k. Zero coefficients are skipped so
/// inactive samples leave the accumulator bits untouched.
inline void neuron_residual_sum(std::span<const double> pre_row,
                                std::span<const double> e, const Matrix& inputs,
                                std::span<double> out) {
  for (double& v : out) v = 0.0;
  for (std::size_t k = 0; k < e.size(); ++k) {
    if (pre_row[k] > 0.0 && e[k] != 0.0) axpy(e[k], inputs.row(k), out);
  }
}

}  // namespace detail

/// Mean squared error L = (1/2n) sum_k (h(x_k) - y_k)^2.
inline double loss(const Params& p, const Dataset& ds) {
  detail::check_dims(p, ds);
  double s = 0.0;
  for (std::size_t k = 0; k < ds.n(); ++k) {
    double r = forward(p, ds.inputs.row(k)) - ds.labels[k];
    s += r * r;
  }
  return s / (2.0 * static_cast<double>(ds.n()));
}

/// Loss restricted to samples of one label sign.
inline double loss_signed(const Params& p, const Dataset& ds, bool positive) {
  detail::check_dims(p, ds);
  double s = 0.0;
  for (std::size_t k = 0; k < ds.n(); ++k) {
    double y = ds.labels[k];
    if ((positive && y > 0.0) || (!positive && y < 0.0)) {
      double r = forward(p, ds.inputs.row(k)) - y;
      s += r * r;
    }
  }
  return s / (2.0 * static_cast<double>(ds.n()));
}

/// Exact (sub)gradient of the loss with the sub-derivative sigma'(0) = 0;
/// the activation indicator is the strict inequality <w_j, x_k> > 0.
inline Params gradient(const Params& p, const Dataset& ds) {
  detail::check_dims(p, ds);
  const std::size_t m = p.m(), n = ds.n(), d = p.dim();
  const double inv_n = 1.0 / static_cast<double>(n);
  Matrix pre;
  std::vector<double> h, e;
  detail::evaluate(p, ds, pre, h, e);

  Params g;
  g.a.assign(m, 0.0);
  g.W = Matrix(m, d, 0.0);
  std::vector<double> sum(d);
  for (std::size_t j = 0; j < m; ++j) {
    auto prej = pre.row(j);
    double ga = 0.0;
    for (std::size_t k = 0; k < n; ++k)
      if (prej[k] > 0.0) ga += e[k] * prej[k];
    g.a[j] = ga * inv_n;
    detail::neuron_residual_sum(prej, e, ds.inputs, sum);
    auto gw = g.W.row(j);
    for (std::size_t i = 0; i < d; ++i) gw[i] = p.a[j] * (sum[i] * inv_n);
  }
  return g;
}

/// Per-neuron drift vector D_j = -(1/n) sum_k 1{<w_j,x_k> > 0} (h(x_k)-y_k) x_k.
/// The layer ODEs read da_j/dt = <D_j, w_j> and dw_j/dt = a_j D_j, and
/// -a_j * D_j is bitwise the w_j-row of gradient().
inline std::vector<double> per_neuron_D(const Params& p, const Dataset& ds,
                                        std::size_t j) {
  detail::check_dims(p, ds);
  if (j >= p.m()) throw std::out_of_range("neuron index out of range");
  const std::size_t n = ds.n(), d = p.dim();
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> prej(n), h, e;
  {
    Matrix pre;
    detail::evaluate(p, ds, pre, h, e);
    for (std::size_t k = 0; k < n; ++k) prej[k] = pre(j, k);
  }
  std::vector<double> sum(d), out(d);
  detail::neuron_residual_sum(prej, e, ds.inputs, sum);
  for (std::size_t i = 0; i < d; ++i) out[i] = -(sum[i] * inv_n);
  return out;
}

/// Per-neuron conserved quantity a_j^2 - ||w_j||^2 (zero at balanced init;
/// drifts O(step) under Euler integration).
inline std::vector<double> balancedness_gap(const Params& p) {
  std::vector<double> gap(p.m());
  for (std::size_t j = 0; j < p.m(); ++j) {
    double norm = nrm2(p.W.row(j));
    gap[j] = p.a[j] * p.a[j] - norm * norm;
  }
  return gap;
}

/// Spherical coordinates of the hidden neurons: w_j = exp(rho_j) * wbar_j.
struct Spherical {
  std::vector<double> rho;     // ln ||w_j||; -inf for masked neurons
  Matrix wbar;                 // unit rows; zero rows for masked neurons
  std::vector<char> zero_mask; // 1 where ||w_j|| < norm_floor
};

inline Spherical to_spherical(const Params& p, double norm_floor = 1e-30) {
  if (!(norm_floor > 0.0)) throw std::invalid_argument("norm_floor must be > 0");
  Spherical s;
  s.rho.resize(p.m());
  s.wbar = Matrix(p.m(), p.dim(), 0.0);
  s.zero_mask.assign(p.m(), 0);
  for (std::size_t j = 0; j < p.m(); ++j) {
    double norm = nrm2(p.W.row(j));
    if (norm < norm_floor) {
      s.zero_mask[j] = 1;
      s.rho[j] = -std::numeric_limits<double>::infinity();
      continue;
    }
    s.rho[j] = std::log(norm);
    auto src = p.W.row(j);
    auto dst = s.wbar.row(j);
    for (std::size_t i = 0; i < p.dim(); ++i) dst[i] = src[i] / norm;
  }
  return s;
}

/// Variation-norm cost of the represented function: sum_j |a_j| * ||w_j||.
/// Equals ||theta||^2 / 2 for balanced parameters.
inline double f1_norm(const Params& p) {
  double s = 0.0;
  for (std::size_t j = 0; j < p.m(); ++j) s += std::abs(p.a[j]) * nrm2(p.W.row(j));
  return s;
}

inline double params_norm_sq(const Params& p) {
  double s = dot(p.a, p.a);
  s += dot(p.W.data, p.W.data);
  return s;
}

inline double params_dist(const Params& p, const Params& q) {
  double s = 0.0;
  for (std::size_t j = 0; j < p.m(); ++j) {
    double da = p.a[j] - q.a[j];
    s += da * da;
    auto pw = p.W.row(j);
    auto qw = q.W.row(j);
    for (std::size_t i = 0; i < p.dim(); ++i) {
      double dw = pw[i] - qw[i];
      s += dw * dw;
    }
  }
  return std::sqrt(s);
}

}  // namespace reluflow
