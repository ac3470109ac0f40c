#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "reluflow/linalg.hpp"
#include "reluflow/rng.hpp"

namespace reluflow {

/// A regression dataset: n input rows x_k in R^d with scalar labels y_k.
/// Immutable after construction; safe to share read-only across threads.
struct Dataset {
  Matrix inputs;               // n x d, rows are data points
  std::vector<double> labels;  // n
  std::string name;

  std::size_t n() const { return inputs.rows; }
  std::size_t dim() const { return inputs.cols; }
};

/// Result of checking the data assumptions the closed-form theory needs:
/// orthonormal inputs, non-zero labels, and distinct label energies
/// (sum of y^2 over positive labels != sum over negative labels).
struct AssumptionReport {
  bool orthonormal_ok = false;
  double max_ortho_dev = 0.0;  // max over pairs of |<x_k,x_k'> - 1{k==k'}|
  bool labels_nonzero_ok = false;
  bool energy_split_ok = false;
  double energy_gap = 0.0;  // |sum_{y>0} y^2 - sum_{y<0} y^2|
  // True iff the positive-label energy is the smaller one, i.e. negating
  // the labels would put the dataset in canonical orientation.
  bool swap_applied = false;
};

inline void check_well_formed(const Dataset& ds) {
  if (ds.n() == 0 || ds.dim() == 0) throw std::invalid_argument("empty dataset");
  if (ds.labels.size() != ds.n())
    throw std::invalid_argument("dataset has " + std::to_string(ds.n()) +
                                " inputs but " + std::to_string(ds.labels.size()) +
                                " labels");
  if (!all_finite(ds.inputs.data) || !all_finite(ds.labels))
    throw std::invalid_argument("dataset contains non-finite values");
}

inline AssumptionReport validate_dataset(const Dataset& ds,
                                         double tol_ortho = 1e-10,
                                         double tol_energy = 1e-12) {
  check_well_formed(ds);
  AssumptionReport rep;
  rep.max_ortho_dev = 0.0;
  for (std::size_t k = 0; k < ds.n(); ++k) {
    for (std::size_t l = k; l < ds.n(); ++l) {
      double target = (k == l) ? 1.0 : 0.0;
      double dev = std::abs(dot(ds.inputs.row(k), ds.inputs.row(l)) - target);
      if (dev > rep.max_ortho_dev) rep.max_ortho_dev = dev;
    }
  }
  rep.orthonormal_ok = rep.max_ortho_dev <= tol_ortho;

  rep.labels_nonzero_ok = true;
  double energy_pos = 0.0, energy_neg = 0.0;
  for (double y : ds.labels) {
    if (y == 0.0) rep.labels_nonzero_ok = false;
    if (y > 0.0) energy_pos += y * y;
    if (y < 0.0) energy_neg += y * y;
  }
  rep.energy_gap = std::abs(energy_pos - energy_neg);
  rep.energy_split_ok = rep.energy_gap > tol_energy;
  rep.swap_applied = energy_pos < energy_neg;
  return rep;
}

/// Dataset with x_k = k-th standard basis vector of R^d: the exactly
/// orthonormal instance every closed-form check can be run against.
inline Dataset make_canonical(std::size_t d, std::vector<double> y,
                              std::string name = "canonical") {
  if (y.empty()) throw std::invalid_argument("empty dataset");
  if (y.size() > d)
    throw std::invalid_argument("canonical dataset needs len(y) <= d, got " +
                                std::to_string(y.size()) + " > " + std::to_string(d));
  Dataset ds;
  ds.inputs = Matrix(y.size(), d, 0.0);
  for (std::size_t k = 0; k < y.size(); ++k) ds.inputs(k, k) = 1.0;
  ds.labels = std::move(y);
  ds.name = std::move(name);
  return ds;
}

/// Gaussian inputs labelled by a random ReLU teacher network.
/// Deterministic given the seed.
inline Dataset make_teacher_dataset(std::size_t n, std::size_t d,
                                    std::size_t teacher_width,
                                    std::uint64_t seed) {
  if (n < 1 || d < 1 || teacher_width < 1)
    throw std::invalid_argument("teacher dataset needs n, d, width >= 1");
  Rng rng(seed);
  Dataset ds;
  ds.name = "teacher";
  ds.inputs = Matrix(n, d);
  for (double& v : ds.inputs.data) v = rng.gaussian();
  Matrix teacher_w(teacher_width, d);
  for (double& v : teacher_w.data) v = rng.gaussian();
  std::vector<double> teacher_a(teacher_width);
  for (double& v : teacher_a) v = rng.gaussian();
  ds.labels.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    double out = 0.0;
    for (std::size_t q = 0; q < teacher_width; ++q) {
      double pre = dot(teacher_w.row(q), ds.inputs.row(k));
      if (pre > 0.0) out += teacher_a[q] * pre;
    }
    ds.labels[k] = out;
  }
  return ds;
}

namespace detail {
// Fixed 5-point non-orthogonal demo set: 1-d inputs with an appended bias
// coordinate, labels alternating in sign with unequal energies.
//   z      = -2.0, -0.75, 0.5, 1.25, 2.5
//   labels =  1.0, -1.5,  2.0, -0.5, 1.0
inline Dataset make_nonortho5() {
  Dataset ds;
  ds.name = "nonortho5";
  const double z[5] = {-2.0, -0.75, 0.5, 1.25, 2.5};
  const double y[5] = {1.0, -1.5, 2.0, -0.5, 1.0};
  ds.inputs = Matrix(5, 2);
  for (std::size_t k = 0; k < 5; ++k) {
    ds.inputs(k, 0) = z[k];
    ds.inputs(k, 1) = 1.0;
  }
  ds.labels.assign(y, y + 5);
  return ds;
}
}  // namespace detail

/// Highdim preset parameters: 75 Gaussian points in R^150 labelled by a
/// width-6 teacher, fixed seed.
inline constexpr std::size_t kHighdimN = 75;
inline constexpr std::size_t kHighdimD = 150;
inline constexpr std::size_t kHighdimTeacherWidth = 6;
inline constexpr std::uint64_t kHighdimSeed = 612;

inline Dataset preset(const std::string& name) {
  if (name == "toy2") {
    // Two points on a line with an appended bias coordinate; orthogonal
    // but not normalized.
    Dataset ds;
    ds.name = "toy2";
    ds.inputs = Matrix(2, 2);
    ds.inputs(0, 0) = -0.5;
    ds.inputs(0, 1) = 1.0;
    ds.inputs(1, 0) = 2.0;
    ds.inputs(1, 1) = 1.0;
    ds.labels = {-1.0, 1.0};
    return ds;
  }
  if (name == "nonortho5") return detail::make_nonortho5();
  if (name == "highdim") {
    Dataset ds = make_teacher_dataset(kHighdimN, kHighdimD, kHighdimTeacherWidth,
                                      kHighdimSeed);
    ds.name = "highdim";
    return ds;
  }
  if (name == "canonical") return make_canonical(2, {2.0, -1.0});
  throw std::invalid_argument("unknown preset '" + name +
                              "'; valid presets: toy2, nonortho5, highdim, canonical");
}

/// Returns a copy with all labels negated (swaps the roles of the positive
/// and negative label groups downstream).
inline Dataset negate_labels(const Dataset& ds) {
  Dataset out = ds;
  for (double& y : out.labels) y = -y;
  return out;
}

}  // namespace reluflow
