#pragma once

// Linear-chain CRF over BIO labels with virtual START/STOP states.
//
// Label layout: 0 = O, then B-x = 1 + 2k and I-x = 2 + 2k for entity type k.
// The transition matrix has L + 2 rows/cols; START = L, STOP = L + 1, and
// A(i, j) scores moving from label i to label j.

#include <map>
#include <string>
#include <vector>

#include "casegraph/numeric.hpp"

namespace casegraph {

inline constexpr double kForbiddenTransition = -10000.0;

class TagSet {
 public:
  TagSet() = default;
  explicit TagSet(std::vector<std::string> entity_types) : types_(std::move(entity_types)) {
    std::map<std::string, int> seen;
    for (std::size_t k = 0; k < types_.size(); ++k) {
      if (types_[k].empty()) throw ArgumentError("TagSet: empty entity type name");
      if (!seen.emplace(types_[k], static_cast<int>(k)).second)
        throw ArgumentError("TagSet: duplicate entity type '" + types_[k] + "'");
    }
    type_index_ = std::move(seen);
    labels_.push_back("O");
    for (const auto& t : types_) {
      labels_.push_back("B-" + t);
      labels_.push_back("I-" + t);
    }
    for (std::size_t i = 0; i < labels_.size(); ++i) label_index_[labels_[i]] = static_cast<int>(i);
  }

  int num_labels() const { return static_cast<int>(labels_.size()); }
  int start() const { return num_labels(); }
  int stop() const { return num_labels() + 1; }
  const std::vector<std::string>& entity_types() const { return types_; }
  const std::vector<std::string>& labels() const { return labels_; }

  static constexpr int outside() { return 0; }
  static int begin_of(int type) { return 1 + 2 * type; }
  static int inside_of(int type) { return 2 + 2 * type; }
  static bool is_begin(int label) { return label > 0 && label % 2 == 1; }
  static bool is_inside(int label) { return label > 0 && label % 2 == 0; }
  static int type_of(int label) { return label > 0 ? (label - 1) / 2 : -1; }

  bool has_type(const std::string& t) const { return type_index_.count(t) > 0; }
  int type_id(const std::string& t) const {
    auto it = type_index_.find(t);
    if (it == type_index_.end()) throw ArgumentError("unknown entity type '" + t + "'");
    return it->second;
  }
  int label_id(const std::string& label) const {
    auto it = label_index_.find(label);
    if (it == label_index_.end()) throw ArgumentError("unknown label '" + label + "'");
    return it->second;
  }
  const std::string& label_name(int id) const { return labels_.at(static_cast<std::size_t>(id)); }

  bool operator==(const TagSet& o) const { return types_ == o.types_; }

 private:
  std::vector<std::string> types_;
  std::vector<std::string> labels_;
  std::map<std::string, int> type_index_;
  std::map<std::string, int> label_index_;
};

/// Boolean legality over (L + 2)^2 transitions.
struct TransitionMask {
  int num_labels = 0;
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> allowed;

  bool operator()(int from, int to) const { return allowed(from, to); }

  /// Every real-label transition allowed; START/STOP wiring as usual.
  static TransitionMask unconstrained(int num_labels) {
    TransitionMask m;
    m.num_labels = num_labels;
    const int start = num_labels, stop = num_labels + 1;
    m.allowed.setConstant(num_labels + 2, num_labels + 2, true);
    for (int i = 0; i < num_labels + 2; ++i) {
      m.allowed(i, start) = false;
      m.allowed(stop, i) = false;
    }
    m.allowed(start, stop) = false;
    return m;
  }
};

inline TransitionMask build_transition_mask(const TagSet& tags) {
  const int l = tags.num_labels();
  TransitionMask m = TransitionMask::unconstrained(l);
  for (int to = 1; to < l; ++to) {
    if (!TagSet::is_inside(to)) continue;
    const int type = TagSet::type_of(to);
    for (int from = 0; from < l + 2; ++from)
      m.allowed(from, to) = (from == TagSet::begin_of(type) || from == TagSet::inside_of(type));
  }
  return m;
}

/// Writes the forbidden score into every masked-out entry.
inline void pin_forbidden(Matrix& transitions, const TransitionMask& mask) {
  for (Eigen::Index i = 0; i < transitions.rows(); ++i)
    for (Eigen::Index j = 0; j < transitions.cols(); ++j)
      if (!mask.allowed(i, j)) transitions(i, j) = kForbiddenTransition;
}

inline bool path_is_legal(const std::vector<int>& labels, const TransitionMask& mask) {
  if (labels.empty()) return true;
  const int start = mask.num_labels, stop = mask.num_labels + 1;
  if (!mask(start, labels.front())) return false;
  for (std::size_t i = 0; i + 1 < labels.size(); ++i)
    if (!mask(labels[i], labels[i + 1])) return false;
  return mask(labels.back(), stop);
}

namespace detail {

inline void check_crf_shapes(const Matrix& emissions, const Matrix& transitions) {
  if (emissions.rows() < 1) throw ArgumentError("crf: empty sequence");
  if (transitions.rows() != emissions.cols() + 2 || transitions.cols() != emissions.cols() + 2)
    throw ArgumentError("crf: transition matrix must be (L+2)x(L+2)");
}

}  // namespace detail

/// f(H, Y): transitions including START -> y_0 and y_{n-1} -> STOP, plus emissions.
inline double path_score(const Matrix& emissions, const Matrix& transitions, const std::vector<int>& labels) {
  detail::check_crf_shapes(emissions, transitions);
  if (static_cast<Eigen::Index>(labels.size()) != emissions.rows())
    throw ArgumentError("path_score: label sequence length does not match emissions");
  const auto l = static_cast<int>(emissions.cols());
  for (int y : labels)
    if (y < 0 || y >= l) throw ArgumentError("path_score: label out of range");
  double score = transitions(l, labels.front());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    score += emissions(static_cast<Eigen::Index>(i), labels[i]);
    if (i + 1 < labels.size()) score += transitions(labels[i], labels[i + 1]);
  }
  score += transitions(labels.back(), l + 1);
  return score;
}

namespace detail {

/// alpha(t, j): log-sum of prefix scores ending in label j at position t.
inline Matrix forward_scores(const Matrix& p, const Matrix& a) {
  const Eigen::Index n = p.rows(), l = p.cols();
  Matrix alpha(n, l);
  for (Eigen::Index j = 0; j < l; ++j) alpha(0, j) = a(l, j) + p(0, j);
  Vector tmp(l);
  for (Eigen::Index t = 1; t < n; ++t) {
    for (Eigen::Index j = 0; j < l; ++j) {
      for (Eigen::Index i = 0; i < l; ++i) tmp(i) = alpha(t - 1, i) + a(i, j);
      alpha(t, j) = log_sum_exp(tmp) + p(t, j);
    }
  }
  return alpha;
}

/// beta(t, i): log-sum of suffix scores after position t given label i there.
inline Matrix backward_scores(const Matrix& p, const Matrix& a) {
  const Eigen::Index n = p.rows(), l = p.cols();
  Matrix beta(n, l);
  for (Eigen::Index i = 0; i < l; ++i) beta(n - 1, i) = a(i, l + 1);
  Vector tmp(l);
  for (Eigen::Index t = n - 2; t >= 0; --t) {
    for (Eigen::Index i = 0; i < l; ++i) {
      for (Eigen::Index j = 0; j < l; ++j) tmp(j) = a(i, j) + p(t + 1, j) + beta(t + 1, j);
      beta(t, i) = log_sum_exp(tmp);
    }
  }
  return beta;
}

}  // namespace detail

inline double log_partition(const Matrix& emissions, const Matrix& transitions) {
  detail::check_crf_shapes(emissions, transitions);
  const Eigen::Index n = emissions.rows(), l = emissions.cols();
  Matrix alpha = detail::forward_scores(emissions, transitions);
  Vector last(l);
  for (Eigen::Index j = 0; j < l; ++j) last(j) = alpha(n - 1, j) + transitions(j, l + 1);
  return log_sum_exp(last);
}

struct CrfObjective {
  double value = 0.0;        // negative log-likelihood
  Matrix d_emissions;        // n x L
  Matrix d_transitions;      // (L+2) x (L+2), zero at masked entries
};

/// -log p(Y | H) with exact forward-backward gradients.
inline CrfObjective crf_nll(const Matrix& emissions, const Matrix& transitions, const std::vector<int>& labels,
                            const TransitionMask& mask) {
  detail::check_crf_shapes(emissions, transitions);
  if (mask.num_labels != emissions.cols()) throw ArgumentError("crf_nll: mask does not match label count");
  if (!path_is_legal(labels, mask)) throw DataError("crf_nll: gold label path violates the transition mask");
  const Eigen::Index n = emissions.rows(), l = emissions.cols();
  const int start = static_cast<int>(l), stop = static_cast<int>(l + 1);

  Matrix alpha = detail::forward_scores(emissions, transitions);
  Matrix beta = detail::backward_scores(emissions, transitions);
  Vector last(l);
  for (Eigen::Index j = 0; j < l; ++j) last(j) = alpha(n - 1, j) + transitions(j, stop);
  const double log_z = log_sum_exp(last);

  CrfObjective out;
  out.value = log_z - path_score(emissions, transitions, labels);
  out.d_emissions = ((alpha + beta).array() - log_z).exp().matrix();
  out.d_transitions = Matrix::Zero(l + 2, l + 2);
  for (Eigen::Index j = 0; j < l; ++j) {
    out.d_transitions(start, j) += out.d_emissions(0, j);
    out.d_transitions(j, stop) += out.d_emissions(n - 1, j);
  }
  for (Eigen::Index t = 0; t + 1 < n; ++t)
    for (Eigen::Index i = 0; i < l; ++i)
      for (Eigen::Index j = 0; j < l; ++j)
        out.d_transitions(i, j) +=
            std::exp(alpha(t, i) + transitions(i, j) + emissions(t + 1, j) + beta(t + 1, j) - log_z);

  // subtract the gold path's counts
  out.d_transitions(start, labels.front()) -= 1.0;
  out.d_transitions(labels.back(), stop) -= 1.0;
  for (std::size_t t = 0; t < labels.size(); ++t) {
    out.d_emissions(static_cast<Eigen::Index>(t), labels[t]) -= 1.0;
    if (t + 1 < labels.size()) out.d_transitions(labels[t], labels[t + 1]) -= 1.0;
  }
  for (Eigen::Index i = 0; i < l + 2; ++i)
    for (Eigen::Index j = 0; j < l + 2; ++j)
      if (!mask.allowed(i, j)) out.d_transitions(i, j) = 0.0;
  return out;
}

struct ViterbiResult {
  std::vector<int> labels;
  double score = 0.0;
};

/// Best path. Ties resolve to the lowest label index, scanning backwards from
/// the last position.
inline ViterbiResult viterbi(const Matrix& emissions, const Matrix& transitions) {
  detail::check_crf_shapes(emissions, transitions);
  const Eigen::Index n = emissions.rows(), l = emissions.cols();
  Matrix delta(n, l);
  Eigen::MatrixXi back(n, l);
  for (Eigen::Index j = 0; j < l; ++j) delta(0, j) = transitions(l, j) + emissions(0, j);
  for (Eigen::Index t = 1; t < n; ++t) {
    for (Eigen::Index j = 0; j < l; ++j) {
      double best = delta(t - 1, 0) + transitions(0, j);
      int arg = 0;
      for (Eigen::Index i = 1; i < l; ++i) {
        const double s = delta(t - 1, i) + transitions(i, j);
        if (s > best) best = s, arg = static_cast<int>(i);
      }
      delta(t, j) = best + emissions(t, j);
      back(t, j) = arg;
    }
  }
  double best = delta(n - 1, 0) + transitions(0, l + 1);
  int arg = 0;
  for (Eigen::Index j = 1; j < l; ++j) {
    const double s = delta(n - 1, j) + transitions(j, l + 1);
    if (s > best) best = s, arg = static_cast<int>(j);
  }
  ViterbiResult out;
  out.labels.resize(static_cast<std::size_t>(n));
  out.labels.back() = arg;
  for (Eigen::Index t = n - 1; t > 0; --t)
    out.labels[static_cast<std::size_t>(t - 1)] = back(t, out.labels[static_cast<std::size_t>(t)]);
  out.score = path_score(emissions, transitions, out.labels);
  return out;
}

/// Per-token argmax, used by the softmax-decoding variant.
inline std::vector<int> argmax_decode(const Matrix& emissions) {
  std::vector<int> out(static_cast<std::size_t>(emissions.rows()));
  for (Eigen::Index t = 0; t < emissions.rows(); ++t) {
    Eigen::Index arg = 0;
    double best = emissions(t, 0);
    for (Eigen::Index j = 1; j < emissions.cols(); ++j)
      if (emissions(t, j) > best) best = emissions(t, j), arg = j;
    out[static_cast<std::size_t>(t)] = static_cast<int>(arg);
  }
  return out;
}

/// Token-level cross entropy over softmax(emissions), summed over tokens.
inline CrfObjective softmax_nll(const Matrix& emissions, const std::vector<int>& labels) {
  if (static_cast<Eigen::Index>(labels.size()) != emissions.rows())
    throw ArgumentError("softmax_nll: label sequence length does not match emissions");
  CrfObjective out;
  out.d_emissions = Matrix(emissions.rows(), emissions.cols());
  for (Eigen::Index t = 0; t < emissions.rows(); ++t) {
    Vector row = emissions.row(t).transpose();
    const double lse = log_sum_exp(row);
    out.value += lse - row(labels[static_cast<std::size_t>(t)]);
    out.d_emissions.row(t) = (row.array() - lse).exp().matrix().transpose();
    out.d_emissions(t, labels[static_cast<std::size_t>(t)]) -= 1.0;
  }
  return out;
}

}  // namespace casegraph
