#pragma once

// Trainable tensors, the Adam-driven optimizer that owns them, and matrix
// (de)serialisation for checkpoints.

#include <cmath>
#include <string>
#include <vector>

#include "json.hpp"

#include "casegraph/numeric.hpp"

namespace casegraph {

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  bool decay = true;  // biases and embedding-free offsets set this false

  Parameter() = default;
  Parameter(std::string n, Eigen::Index rows, Eigen::Index cols, bool weight_decay = true)
      : name(std::move(n)), value(Matrix::Zero(rows, cols)), grad(Matrix::Zero(rows, cols)), decay(weight_decay) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

using ParameterList = std::vector<Parameter*>;

inline void zero_grads(const ParameterList& params) {
  for (Parameter* p : params) p->zero_grad();
}

inline double grad_norm(const ParameterList& params) {
  double sq = 0.0;
  for (const Parameter* p : params) sq += p->grad.squaredNorm();
  return std::sqrt(sq);
}

/// Rescales all gradients jointly so their global L2 norm is at most max_norm.
inline double clip_grad_norm(const ParameterList& params, double max_norm) {
  const double norm = grad_norm(params);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / (norm + 1e-12);
    for (Parameter* p : params) p->grad *= scale;
  }
  return norm;
}

/// Adds the L2 penalty gradient coeff * w to every parameter marked for decay.
inline void apply_weight_decay(const ParameterList& params, double coeff) {
  if (coeff == 0.0) return;
  for (Parameter* p : params)
    if (p->decay) p->grad += coeff * p->value;
}

inline Eigen::Index total_size(const ParameterList& params) {
  Eigen::Index n = 0;
  for (const Parameter* p : params) n += p->value.size();
  return n;
}

inline Vector flatten_values(const ParameterList& params) {
  Vector out(total_size(params));
  Eigen::Index off = 0;
  for (const Parameter* p : params) {
    out.segment(off, p->value.size()) = p->value.reshaped();
    off += p->value.size();
  }
  return out;
}

inline Vector flatten_grads(const ParameterList& params) {
  Vector out(total_size(params));
  Eigen::Index off = 0;
  for (const Parameter* p : params) {
    out.segment(off, p->grad.size()) = p->grad.reshaped();
    off += p->grad.size();
  }
  return out;
}

inline void assign_values(const ParameterList& params, const Vector& flat) {
  if (flat.size() != total_size(params)) throw ArgumentError("assign_values: size mismatch");
  Eigen::Index off = 0;
  for (Parameter* p : params) {
    p->value.reshaped() = flat.segment(off, p->value.size());
    off += p->value.size();
  }
}

/// Adam over a fixed parameter list. The list must not change between steps.
class AdamOptimizer {
 public:
  AdamOptimizer(ParameterList params, double learning_rate) : params_(std::move(params)) {
    state_.learning_rate = learning_rate;
  }

  void step() {
    std::vector<Matrix*> values;
    std::vector<const Matrix*> grads;
    values.reserve(params_.size());
    grads.reserve(params_.size());
    for (Parameter* p : params_) {
      values.push_back(&p->value);
      grads.push_back(&p->grad);
    }
    adam_step(std::span<Matrix* const>(values), std::span<const Matrix* const>(grads), state_);
  }

  double learning_rate() const { return state_.learning_rate; }
  void set_learning_rate(double lr) { state_.learning_rate = lr; }
  const AdamState& state() const { return state_; }

 private:
  ParameterList params_;
  AdamState state_;
};

// ---------------------------------------------------------------------------
// JSON helpers

inline nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  std::vector<double> data(static_cast<std::size_t>(m.size()));
  // row-major on disk
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data[k++] = m(r, c);
  j["data"] = std::move(data);
  return j;
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw DataError("matrix payload has wrong length");
  Matrix m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[k++].get<double>();
  return m;
}

inline nlohmann::json parameters_to_json(const ParameterList& params) {
  nlohmann::json j = nlohmann::json::object();
  for (const Parameter* p : params) j[p->name] = matrix_to_json(p->value);
  return j;
}

inline void parameters_from_json(const ParameterList& params, const nlohmann::json& j) {
  for (Parameter* p : params) {
    if (!j.contains(p->name)) throw DataError("checkpoint is missing parameter '" + p->name + "'");
    Matrix m = matrix_from_json(j.at(p->name));
    if (m.rows() != p->value.rows() || m.cols() != p->value.cols())
      throw DataError("checkpoint parameter '" + p->name + "' has the wrong shape");
    p->value = std::move(m);
    p->zero_grad();
  }
}

}  // namespace casegraph
