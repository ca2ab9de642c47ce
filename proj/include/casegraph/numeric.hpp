#pragma once

// Shared numeric substrate: log-sum-exp, activations, circular statistics,
// PCA, Mean-Shift, Adam and a finite-difference gradient oracle.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "casegraph/error.hpp"

namespace casegraph {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;
using Rng = std::mt19937_64;

inline constexpr double kPi = std::numbers::pi;

inline double log_sum_exp(std::span<const double> values) {
  if (values.empty()) throw ArgumentError("log_sum_exp: empty input");
  double hi = *std::max_element(values.begin(), values.end());
  if (values.size() == 1) return hi;
  if (hi == -std::numeric_limits<double>::infinity()) return hi;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - hi);
  return hi + std::log(acc);
}

inline double log_sum_exp(const Eigen::Ref<const Vector>& values) {
  return log_sum_exp(std::span<const double>(values.data(), static_cast<std::size_t>(values.size())));
}

/// Exact (erf) form.
inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

inline double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * kPi);
  return cdf + x * pdf;
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// log(sigmoid(x)) without overflow.
inline double log_sigmoid(double x) {
  if (x >= 0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

/// Maps any angle into (-pi, pi].
inline double wrap_angle(double a) {
  double r = std::remainder(a, 2.0 * kPi);  // [-pi, pi]
  if (r <= -kPi) r += 2.0 * kPi;
  return r;
}

inline double circular_mean(std::span<const double> angles) {
  if (angles.empty()) throw ArgumentError("circular_mean: empty input");
  double s = 0.0, c = 0.0;
  for (double a : angles) {
    s += std::sin(a);
    c += std::cos(a);
  }
  const double norm = std::hypot(s, c) / static_cast<double>(angles.size());
  if (norm < 1e-12) throw ArgumentError("circular_mean: undefined mean (resultant vector has zero length)");
  return wrap_angle(std::atan2(s, c));
}

/// Softmax of a row of logits, stable.
inline Vector softmax(const Eigen::Ref<const Vector>& logits) {
  Vector out = (logits.array() - logits.maxCoeff()).exp().matrix();
  out /= out.sum();
  return out;
}

inline bool all_finite(const Eigen::Ref<const Matrix>& m) { return m.allFinite(); }

// ---------------------------------------------------------------------------
// PCA

struct PcaModel {
  Vector mean;
  Matrix components;  // target_dim x input_dim, rows orthonormal
  Vector explained_variance;

  Eigen::Index target_dim() const { return components.rows(); }
  Eigen::Index input_dim() const { return components.cols(); }

  Vector transform(const Eigen::Ref<const Vector>& x) const { return components * (x - mean); }
  Matrix transform_rows(const Eigen::Ref<const Matrix>& rows) const {
    return (rows.rowwise() - mean.transpose()) * components.transpose();
  }
  Vector reconstruct(const Eigen::Ref<const Vector>& z) const { return mean + components.transpose() * z; }

  /// Sum of squared reconstruction residuals divided by (n - 1), comparable
  /// with the sum of discarded covariance eigenvalues.
  double reconstruction_error(const Eigen::Ref<const Matrix>& rows) const {
    if (rows.rows() < 2) return 0.0;
    Matrix centered = rows.rowwise() - mean.transpose();
    Matrix resid = centered - (centered * components.transpose()) * components;
    return resid.squaredNorm() / static_cast<double>(rows.rows() - 1);
  }
};

/// Sample covariance with the (n - 1) normalisation; rows are observations.
inline Matrix sample_covariance(const Eigen::Ref<const Matrix>& rows) {
  Vector mean = rows.colwise().mean().transpose();
  Matrix centered = rows.rowwise() - mean.transpose();
  return (centered.transpose() * centered) / static_cast<double>(rows.rows() - 1);
}

inline PcaModel pca_fit(const Eigen::Ref<const Matrix>& rows, Eigen::Index target_dim) {
  if (rows.rows() < 2) throw ArgumentError("pca_fit: need at least 2 points");
  if (target_dim < 1 || target_dim > rows.cols())
    throw ArgumentError("pca_fit: target_dim must lie in [1, input_dim]");
  if (!rows.allFinite()) throw ArgumentError("pca_fit: non-finite input");

  PcaModel model;
  model.mean = rows.colwise().mean().transpose();
  Matrix cov = sample_covariance(rows);
  if (cov.trace() <= 1e-24) throw ArgumentError("pca_fit: zero variance (all points identical)");

  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  if (eig.info() != Eigen::Success) throw Error("pca_fit: eigendecomposition failed");
  const Eigen::Index d = rows.cols();
  model.components.resize(target_dim, d);
  model.explained_variance.resize(target_dim);
  for (Eigen::Index k = 0; k < target_dim; ++k) {
    // eigenvalues come back ascending
    Vector v = eig.eigenvectors().col(d - 1 - k);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    model.components.row(k) = v.transpose();
    model.explained_variance(k) = std::max(0.0, eig.eigenvalues()(d - 1 - k));
  }
  return model;
}

inline PcaModel pca_fit(const std::vector<Vector>& points, Eigen::Index target_dim) {
  if (points.empty()) throw ArgumentError("pca_fit: need at least 2 points");
  Matrix rows(static_cast<Eigen::Index>(points.size()), points.front().size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].size() != rows.cols()) throw ArgumentError("pca_fit: ragged input");
    rows.row(static_cast<Eigen::Index>(i)) = points[i].transpose();
  }
  return pca_fit(rows, target_dim);
}

// ---------------------------------------------------------------------------
// Mean-Shift

enum class MeanShiftKernel { Flat, Gaussian };

struct MeanShiftConfig {
  double bandwidth = 0.0;  // 0 selects default_bandwidth()
  int max_iter = 300;
  double tol = 1e-7;
  MeanShiftKernel kernel = MeanShiftKernel::Flat;
};

struct MeanShiftResult {
  std::vector<Vector> modes;
  std::vector<int> assignments;  // point index -> mode index
  std::vector<int> mode_sizes;
  double bandwidth = 0.0;
};

/// Half the median pairwise distance over a strided subsample of at most 2000 points.
inline double default_bandwidth(const Eigen::Ref<const Matrix>& rows) {
  const Eigen::Index n = rows.rows();
  if (n < 2) return 1.0;
  const Eigen::Index stride = std::max<Eigen::Index>(1, (n + 1999) / 2000);
  std::vector<Eigen::Index> idx;
  for (Eigen::Index i = 0; i < n && idx.size() < 2000; i += stride) idx.push_back(i);
  std::vector<double> dists;
  dists.reserve(idx.size() * (idx.size() - 1) / 2);
  for (std::size_t a = 0; a < idx.size(); ++a)
    for (std::size_t b = a + 1; b < idx.size(); ++b)
      dists.push_back((rows.row(idx[a]) - rows.row(idx[b])).norm());
  if (dists.empty()) return 1.0;
  auto mid = dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2);
  std::nth_element(dists.begin(), mid, dists.end());
  double median = *mid;
  if (median <= 0.0) {
    // heavy duplication: fall back to the mean of the non-zero distances
    double sum = 0.0;
    int count = 0;
    for (double d : dists)
      if (d > 0.0) sum += d, ++count;
    if (count == 0) return 1.0;
    median = sum / count;
  }
  return 0.5 * median;
}

namespace detail {

inline bool lex_less(const Vector& a, const Vector& b) {
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a(i) < b(i)) return true;
    if (a(i) > b(i)) return false;
  }
  return false;
}

}  // namespace detail

inline MeanShiftResult mean_shift(const Eigen::Ref<const Matrix>& rows, const MeanShiftConfig& config = {}) {
  const Eigen::Index n = rows.rows();
  if (n < 1) throw ArgumentError("mean_shift: need at least one point");
  if (!rows.allFinite()) throw ArgumentError("mean_shift: non-finite input");
  double g = config.bandwidth;
  if (g == 0.0) g = default_bandwidth(rows);
  if (!(g > 0.0)) throw ArgumentError("mean_shift: bandwidth must be positive");
  const double g2 = g * g;

  std::vector<Vector> converged(static_cast<std::size_t>(n));
  for (Eigen::Index p = 0; p < n; ++p) {
    Vector b = rows.row(p).transpose();
    for (int it = 0; it < config.max_iter; ++it) {
      Vector acc = Vector::Zero(b.size());
      double weight = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double d2 = (rows.row(i).transpose() - b).squaredNorm();
        double w = 0.0;
        if (config.kernel == MeanShiftKernel::Flat) {
          w = d2 < g2 ? 1.0 : 0.0;
        } else {
          w = std::exp(-0.5 * d2 / g2);
        }
        if (w > 0.0) {
          acc += w * (rows.row(i).transpose() - b);
          weight += w;
        }
      }
      if (weight == 0.0) break;
      Vector shift = acc / weight;
      b += shift;
      if (shift.norm() < config.tol) break;
    }
    converged[static_cast<std::size_t>(p)] = std::move(b);
  }

  // Merge converged positions; visiting them in lexicographic order keeps
  // the result independent of input order.
  std::vector<std::size_t> order(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return detail::lex_less(converged[a], converged[b]); });

  const double merge_radius = 0.5 * g;
  std::vector<Vector> sums;
  std::vector<int> counts;
  std::vector<int> cluster_of(static_cast<std::size_t>(n), -1);
  for (std::size_t p : order) {
    int best = -1;
    double best_d = merge_radius;
    for (std::size_t m = 0; m < sums.size(); ++m) {
      const double d = (sums[m] / counts[m] - converged[p]).norm();
      if (d <= best_d) best_d = d, best = static_cast<int>(m);
    }
    if (best < 0) {
      sums.push_back(converged[p]);
      counts.push_back(1);
      cluster_of[p] = static_cast<int>(sums.size() - 1);
    } else {
      sums[static_cast<std::size_t>(best)] += converged[p];
      ++counts[static_cast<std::size_t>(best)];
      cluster_of[p] = best;
    }
  }

  // Collapse any pair of modes that drifted within the merge radius.
  std::vector<int> alias(sums.size());
  for (std::size_t i = 0; i < alias.size(); ++i) alias[i] = static_cast<int>(i);
  for (bool merged = true; merged;) {
    merged = false;
    double best_d = merge_radius;
    int ba = -1, bb = -1;
    for (std::size_t a = 0; a < sums.size(); ++a) {
      if (counts[a] == 0) continue;
      for (std::size_t b = a + 1; b < sums.size(); ++b) {
        if (counts[b] == 0) continue;
        const double d = (sums[a] / counts[a] - sums[b] / counts[b]).norm();
        if (d <= best_d) best_d = d, ba = static_cast<int>(a), bb = static_cast<int>(b);
      }
    }
    if (ba >= 0) {
      sums[static_cast<std::size_t>(ba)] += sums[static_cast<std::size_t>(bb)];
      counts[static_cast<std::size_t>(ba)] += counts[static_cast<std::size_t>(bb)];
      counts[static_cast<std::size_t>(bb)] = 0;
      for (int& a : alias)
        if (a == bb) a = ba;
      merged = true;
    }
  }

  std::vector<int> live;
  for (std::size_t m = 0; m < sums.size(); ++m)
    if (counts[m] > 0) live.push_back(static_cast<int>(m));
  std::sort(live.begin(), live.end(), [&](int a, int b) {
    return detail::lex_less(sums[static_cast<std::size_t>(a)] / counts[static_cast<std::size_t>(a)],
                            sums[static_cast<std::size_t>(b)] / counts[static_cast<std::size_t>(b)]);
  });
  std::vector<int> final_index(sums.size(), -1);
  MeanShiftResult result;
  result.bandwidth = g;
  for (std::size_t k = 0; k < live.size(); ++k) {
    const auto m = static_cast<std::size_t>(live[k]);
    final_index[m] = static_cast<int>(k);
    result.modes.push_back(sums[m] / counts[m]);
    result.mode_sizes.push_back(counts[m]);
  }
  result.assignments.resize(static_cast<std::size_t>(n));
  for (std::size_t p = 0; p < result.assignments.size(); ++p)
    result.assignments[p] = final_index[static_cast<std::size_t>(alias[static_cast<std::size_t>(cluster_of[p])])];
  return result;
}

inline MeanShiftResult mean_shift(const std::vector<Vector>& points, const MeanShiftConfig& config = {}) {
  if (points.empty()) throw ArgumentError("mean_shift: need at least one point");
  Matrix rows(static_cast<Eigen::Index>(points.size()), points.front().size());
  for (std::size_t i = 0; i < points.size(); ++i) rows.row(static_cast<Eigen::Index>(i)) = points[i].transpose();
  return mean_shift(rows, config);
}

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long step = 0;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
};

/// One bias-corrected Adam update. Moments are created zeroed on the first call.
inline void adam_step(std::span<Matrix* const> params, std::span<const Matrix* const> grads, AdamState& state) {
  if (params.size() != grads.size()) throw ArgumentError("adam_step: parameter/gradient count mismatch");
  if (state.first_moment.empty()) {
    for (const Matrix* p : params) {
      state.first_moment.push_back(Matrix::Zero(p->rows(), p->cols()));
      state.second_moment.push_back(Matrix::Zero(p->rows(), p->cols()));
    }
  }
  if (state.first_moment.size() != params.size()) throw ArgumentError("adam_step: state does not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->rows() != grads[i]->rows() || params[i]->cols() != grads[i]->cols() ||
        state.first_moment[i].rows() != params[i]->rows() || state.first_moment[i].cols() != params[i]->cols())
      throw ArgumentError("adam_step: shape mismatch at parameter " + std::to_string(i));
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& m = state.first_moment[i];
    Matrix& v = state.second_moment[i];
    const Matrix& g = *grads[i];
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseProduct(g);
    params[i]->array() -= state.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + state.epsilon);
  }
}

inline void adam_step(Matrix& param, const Matrix& grad, AdamState& state) {
  Matrix* p[] = {&param};
  const Matrix* g[] = {&grad};
  adam_step(std::span<Matrix* const>(p), std::span<const Matrix* const>(g), state);
}

// ---------------------------------------------------------------------------
// Gradient oracle

/// Central differences, one coordinate at a time.
inline Vector finite_diff_grad(const std::function<double(const Vector&)>& fn, const Vector& point,
                               double eps = 1e-6) {
  Vector grad(point.size());
  Vector x = point;
  for (Eigen::Index i = 0; i < point.size(); ++i) {
    const double orig = x(i);
    x(i) = orig + eps;
    const double up = fn(x);
    x(i) = orig - eps;
    const double down = fn(x);
    x(i) = orig;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw ArgumentError("finite_diff_grad: function is not finite near coordinate " + std::to_string(i));
    grad(i) = (up - down) / (2.0 * eps);
  }
  return grad;
}

/// ||a - b|| / max(||a||, ||b||); zero when both vanish.
inline double relative_error(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b) {
  const double scale = std::max(a.norm(), b.norm());
  if (scale == 0.0) return 0.0;
  return (a - b).norm() / scale;
}

// ---------------------------------------------------------------------------
// Random helpers

inline void fill_normal(Matrix& m, Rng& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
}

inline void fill_uniform(Matrix& m, Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
}

}  // namespace casegraph
