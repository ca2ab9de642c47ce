#pragma once

// Knowledge-graph embeddings: RotatE (with a TransE baseline), relation angle
// vectors, multi-semantic relation components and filtered link prediction.

#include <array>
#include <complex>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "casegraph/numeric.hpp"
#include "casegraph/params.hpp"

namespace casegraph {

using ComplexVector = Eigen::VectorXcd;

struct Triple {
  int head = 0;
  int relation = 0;
  int tail = 0;
  auto operator<=>(const Triple&) const = default;
};

enum class Partition { Train, Valid, Test };

class TripleStore {
 public:
  int add_entity(const std::string& name) { return intern(name, entities_, entity_index_); }
  int add_relation(const std::string& name) { return intern(name, relations_, relation_index_); }

  int entity_id(const std::string& name) const { return lookup(name, entity_index_, "entity"); }
  int relation_id(const std::string& name) const { return lookup(name, relation_index_, "relation"); }
  bool has_entity(const std::string& name) const { return entity_index_.count(name) > 0; }
  bool has_relation(const std::string& name) const { return relation_index_.count(name) > 0; }
  const std::string& entity_name(int id) const { return entities_.at(static_cast<std::size_t>(id)); }
  const std::string& relation_name(int id) const { return relations_.at(static_cast<std::size_t>(id)); }
  int num_entities() const { return static_cast<int>(entities_.size()); }
  int num_relations() const { return static_cast<int>(relations_.size()); }
  const std::vector<std::string>& entities() const { return entities_; }
  const std::vector<std::string>& relations() const { return relations_; }

  void add(Partition part, Triple t) {
    check(t);
    auto& seen = seen_[static_cast<std::size_t>(part)];
    if (!seen.insert(t).second)
      throw DataError("duplicate triple (" + entity_name(t.head) + ", " + relation_name(t.relation) + ", " +
                      entity_name(t.tail) + ") in one partition");
    triples(part).push_back(t);
    known_.insert(t);
  }

  void add(Partition part, const std::string& h, const std::string& r, const std::string& t) {
    add(part, Triple{add_entity(h), add_relation(r), add_entity(t)});
  }

  /// head<TAB>relation<TAB>tail, one per line.
  void load_tsv(std::istream& in, Partition part) {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      const auto a = line.find('\t');
      const auto b = a == std::string::npos ? a : line.find('\t', a + 1);
      if (b == std::string::npos || line.find('\t', b + 1) != std::string::npos)
        throw DataError("triple line " + std::to_string(lineno) + ": expected three tab-separated fields");
      add(part, line.substr(0, a), line.substr(a + 1, b - a - 1), line.substr(b + 1));
    }
  }

  void load_tsv(const std::string& path, Partition part) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open triple file '" + path + "'");
    load_tsv(in, part);
  }

  void write_tsv(std::ostream& out, Partition part) const {
    for (const auto& t : triples(part))
      out << entity_name(t.head) << '\t' << relation_name(t.relation) << '\t' << entity_name(t.tail) << '\n';
  }

  std::vector<Triple>& triples(Partition part) { return parts_[static_cast<std::size_t>(part)]; }
  const std::vector<Triple>& triples(Partition part) const { return parts_[static_cast<std::size_t>(part)]; }

  /// Known in any partition.
  bool is_known(const Triple& t) const { return known_.count(t) > 0; }

 private:
  static int intern(const std::string& name, std::vector<std::string>& names, std::map<std::string, int>& index) {
    auto [it, fresh] = index.emplace(name, static_cast<int>(names.size()));
    if (fresh) names.push_back(name);
    return it->second;
  }
  static int lookup(const std::string& name, const std::map<std::string, int>& index, const char* what) {
    auto it = index.find(name);
    if (it == index.end()) throw ArgumentError(std::string("unknown ") + what + " '" + name + "'");
    return it->second;
  }
  void check(const Triple& t) const {
    if (t.head < 0 || t.head >= num_entities() || t.tail < 0 || t.tail >= num_entities() || t.relation < 0 ||
        t.relation >= num_relations())
      throw ArgumentError("triple index out of range");
  }

  std::vector<std::string> entities_, relations_;
  std::map<std::string, int> entity_index_, relation_index_;
  std::array<std::vector<Triple>, 3> parts_;
  std::array<std::set<Triple>, 3> seen_;
  std::set<Triple> known_;
};

// ---------------------------------------------------------------------------
// Rotation primitives

enum class DistanceNorm { L1, L2 };

/// h_j * exp(i theta_j) per coordinate.
inline ComplexVector rotate_apply(const ComplexVector& h, const Vector& theta) {
  if (h.size() != theta.size()) throw ArgumentError("rotate_apply: dimension mismatch");
  ComplexVector out(h.size());
  for (Eigen::Index j = 0; j < h.size(); ++j) out(j) = h(j) * std::polar(1.0, theta(j));
  return out;
}

/// |h o r - t|: sum of coordinate moduli (L1) or the Euclidean norm (L2).
inline double rotate_score(const ComplexVector& h, const Vector& theta, const ComplexVector& t,
                           DistanceNorm norm = DistanceNorm::L1) {
  if (t.size() != h.size()) throw ArgumentError("rotate_score: dimension mismatch");
  const ComplexVector diff = rotate_apply(h, theta) - t;
  if (norm == DistanceNorm::L1) return diff.cwiseAbs().sum();
  return diff.norm();
}

/// arg(t_j) - arg(h_j), wrapped to (-pi, pi].
inline Vector relation_angle_vector(const ComplexVector& h, const ComplexVector& t) {
  if (h.size() != t.size()) throw ArgumentError("relation_angle_vector: dimension mismatch");
  Vector a(h.size());
  for (Eigen::Index j = 0; j < h.size(); ++j) {
    if (std::abs(h(j)) < 1e-12 || std::abs(t(j)) < 1e-12)
      throw DataError("relation_angle_vector: coordinate " + std::to_string(j) + " has zero modulus, phase undefined");
    a(j) = wrap_angle(std::arg(t(j)) - std::arg(h(j)));
  }
  return a;
}

// ---------------------------------------------------------------------------
// Models

enum class KgeKind { RotatE, TransE };

struct KgeTrainConfig {
  KgeKind kind = KgeKind::RotatE;
  int dim = 64;
  double gamma = 6.0;
  int negatives = 8;
  double learning_rate = 0.005;
  int epochs = 600;
  std::size_t batch_size = 32;
  int patience = 3;
  int eval_every = 10;
  bool adversarial = false;
  double adversarial_temperature = 1.0;
  DistanceNorm norm = DistanceNorm::L1;
  std::uint64_t seed = 1;

  void validate() const {
    if (dim < 1) throw ArgumentError("kge.dim must be >= 1");
    if (!(gamma > 0.0)) throw ArgumentError("kge.gamma must be > 0");
    if (negatives < 1) throw ArgumentError("kge.negatives must be >= 1");
    if (!(learning_rate > 0.0)) throw ArgumentError("kge.learning_rate must be > 0");
  }
};

struct SemanticComponents {
  Matrix phases;                   // k x D
  std::vector<std::size_t> sizes;  // members per component
  std::vector<int> assignments;    // per input angle vector

  Eigen::Index count() const { return phases.rows(); }
};

inline constexpr const char* kKgeCheckpointVersion = "casegraph.kge/1";

/// Entity table (RotatE: N x 2D with real parts then imaginary parts; TransE:
/// N x D) and relation table (RotatE phases or TransE translations, R x D).
class KgeModel {
 public:
  KgeModel(KgeKind kind, int num_entities, int num_relations, int dim, DistanceNorm norm = DistanceNorm::L1)
      : kind_(kind), dim_(dim), norm_(norm),
        entities_("kge.entities", num_entities, kind == KgeKind::RotatE ? 2 * dim : dim),
        relations_("kge.relations", num_relations, dim) {
    if (dim < 1) throw ArgumentError("embedding dimension must be >= 1");
  }

  KgeKind kind() const { return kind_; }
  int dim() const { return dim_; }
  DistanceNorm norm() const { return norm_; }
  int num_entities() const { return static_cast<int>(entities_.value.rows()); }
  int num_relations() const { return static_cast<int>(relations_.value.rows()); }
  Parameter& entity_table() { return entities_; }
  Parameter& relation_table() { return relations_; }
  const Matrix& entity_values() const { return entities_.value; }
  const Matrix& relation_values() const { return relations_.value; }
  ParameterList parameters() { return {&entities_, &relations_}; }

  void initialize(double gamma, Rng& rng) {
    const double range = (gamma + 2.0) / static_cast<double>(dim_);
    fill_uniform(entities_.value, rng, -range, range);
    if (kind_ == KgeKind::RotatE) fill_uniform(relations_.value, rng, -kPi, kPi);
    else fill_uniform(relations_.value, rng, -range, range);
    wrap_phases();
  }

  ComplexVector entity(int e) const {
    check_entity(e);
    if (kind_ != KgeKind::RotatE) throw ArgumentError("complex entity view needs a RotatE model");
    ComplexVector z(dim_);
    for (int j = 0; j < dim_; ++j) z(j) = {entities_.value(e, j), entities_.value(e, dim_ + j)};
    return z;
  }
  void set_entity(int e, const ComplexVector& z) {
    check_entity(e);
    if (z.size() != dim_) throw ArgumentError("set_entity: dimension mismatch");
    for (int j = 0; j < dim_; ++j) entities_.value(e, j) = z(j).real(), entities_.value(e, dim_ + j) = z(j).imag();
  }
  Vector phase(int r) const {
    check_relation(r);
    return relations_.value.row(r).transpose();
  }
  void set_phase(int r, const Vector& theta) {
    check_relation(r);
    relations_.value.row(r) = theta.unaryExpr([](double a) { return wrap_angle(a); }).transpose();
  }

  /// Distance under an explicit relation row (phases or translation).
  double distance(int h, const Vector& rel, int t) const {
    if (kind_ == KgeKind::RotatE) return rotate_score(entity(h), rel, entity(t), norm_);
    Vector diff = entities_.value.row(h).transpose() + rel - entities_.value.row(t).transpose();
    return norm_ == DistanceNorm::L1 ? diff.lpNorm<1>() : diff.norm();
  }
  double distance(int h, int r, int t) const { return distance(h, phase(r), t); }

  /// Accumulates scale * d(distance)/d(parameters) for one triple.
  void distance_grad(const Triple& tr, double scale) {
    if (kind_ == KgeKind::TransE) {
      Vector diff = entities_.value.row(tr.head).transpose() + relations_.value.row(tr.relation).transpose() -
                    entities_.value.row(tr.tail).transpose();
      Vector g;
      if (norm_ == DistanceNorm::L1) {
        g = diff.unaryExpr([](double a) { return static_cast<double>((a > 0) - (a < 0)); });
      } else {
        const double n = diff.norm();
        g = n > 1e-12 ? Vector(diff / n) : Vector(Vector::Zero(diff.size()));
      }
      entities_.grad.row(tr.head) += scale * g.transpose();
      relations_.grad.row(tr.relation) += scale * g.transpose();
      entities_.grad.row(tr.tail) -= scale * g.transpose();
      return;
    }
    const auto row_h = entities_.value.row(tr.head);
    const auto row_t = entities_.value.row(tr.tail);
    const auto theta = relations_.value.row(tr.relation);
    double l2 = 0.0;
    if (norm_ == DistanceNorm::L2) l2 = distance(tr.head, tr.relation, tr.tail);
    for (int j = 0; j < dim_; ++j) {
      const double a = row_h(j), b = row_h(dim_ + j), c = row_t(j), e = row_t(dim_ + j);
      const double cs = std::cos(theta(j)), sn = std::sin(theta(j));
      const double ur = a * cs - b * sn - c, ui = a * sn + b * cs - e;
      double gr, gi;
      if (norm_ == DistanceNorm::L1) {
        const double m = std::hypot(ur, ui);
        if (m < 1e-12) continue;
        gr = ur / m, gi = ui / m;
      } else {
        if (l2 < 1e-12) continue;
        gr = ur / l2, gi = ui / l2;
      }
      gr *= scale, gi *= scale;
      entities_.grad(tr.head, j) += gr * cs + gi * sn;
      entities_.grad(tr.head, dim_ + j) += -gr * sn + gi * cs;
      entities_.grad(tr.tail, j) -= gr;
      entities_.grad(tr.tail, dim_ + j) -= gi;
      relations_.grad(tr.relation, j) += -gr * (ui + e) + gi * (ur + c);
    }
  }

  void wrap_phases() {
    if (kind_ == KgeKind::RotatE) relations_.value = relations_.value.unaryExpr([](double a) { return wrap_angle(a); });
  }

  std::map<int, SemanticComponents>& components() { return components_; }
  const std::map<int, SemanticComponents>& components() const { return components_; }

  nlohmann::json to_json(const TripleStore* store = nullptr) const {
    nlohmann::json j;
    j["version"] = kKgeCheckpointVersion;
    j["kind"] = kind_ == KgeKind::RotatE ? "rotate" : "transe";
    j["dim"] = dim_;
    j["norm"] = norm_ == DistanceNorm::L1 ? "l1" : "l2";
    j["entities"] = matrix_to_json(entities_.value);
    j["relations"] = matrix_to_json(relations_.value);
    if (store) {
      j["entity_names"] = store->entities();
      j["relation_names"] = store->relations();
    }
    j["components"] = nlohmann::json::object();
    for (const auto& [r, c] : components_)
      j["components"][std::to_string(r)] = {{"phases", matrix_to_json(c.phases)}, {"sizes", c.sizes}};
    return j;
  }

  static KgeModel from_json(const nlohmann::json& j) {
    const auto version = j.at("version").get<std::string>();
    if (version != kKgeCheckpointVersion)
      throw DataError("KGE checkpoint version '" + version + "' does not match expected '" + kKgeCheckpointVersion + "'");
    Matrix ent = matrix_from_json(j.at("entities"));
    Matrix rel = matrix_from_json(j.at("relations"));
    const KgeKind kind = j.at("kind").get<std::string>() == "rotate" ? KgeKind::RotatE : KgeKind::TransE;
    KgeModel m(kind, static_cast<int>(ent.rows()), static_cast<int>(rel.rows()), j.at("dim").get<int>(),
               j.value("norm", std::string("l1")) == "l2" ? DistanceNorm::L2 : DistanceNorm::L1);
    if (ent.cols() != m.entities_.value.cols() || rel.cols() != m.dim_) throw DataError("KGE checkpoint shape mismatch");
    m.entities_.value = std::move(ent);
    m.relations_.value = std::move(rel);
    const nlohmann::json comps = j.value("components", nlohmann::json::object());
    for (const auto& [key, c] : comps.items()) {
      SemanticComponents sc;
      sc.phases = matrix_from_json(c.at("phases"));
      sc.sizes = c.at("sizes").get<std::vector<std::size_t>>();
      m.components_[std::stoi(key)] = std::move(sc);
    }
    return m;
  }

 private:
  void check_entity(int e) const {
    if (e < 0 || e >= num_entities()) throw ArgumentError("entity id out of range");
  }
  void check_relation(int r) const {
    if (r < 0 || r >= num_relations()) throw ArgumentError("relation id out of range");
  }

  KgeKind kind_;
  int dim_;
  DistanceNorm norm_;
  Parameter entities_;
  Parameter relations_;
  std::map<int, SemanticComponents> components_;
};

// ---------------------------------------------------------------------------
// Training

/// -log sigmoid(gamma - d) - sum_i w_i log sigmoid(d_i' - gamma). Uniform
/// weights are 1/k; self-adversarial weights are a softmax over
/// temperature * (gamma - d_i') and are held constant in the gradient.
/// Gradients are accumulated (times scale) when `accumulate` is set.
inline double kge_loss(KgeModel& model, const Triple& positive, const std::vector<Triple>& negatives, double gamma,
                       bool adversarial, double temperature, double scale, bool accumulate) {
  if (negatives.empty()) throw ArgumentError("kge_loss: at least one negative required");
  const double d = model.distance(positive.head, positive.relation, positive.tail);
  double loss = -log_sigmoid(gamma - d);
  if (accumulate) model.distance_grad(positive, scale * sigmoid(d - gamma));
  std::vector<double> dn(negatives.size()), w(negatives.size(), 1.0 / static_cast<double>(negatives.size()));
  for (std::size_t i = 0; i < negatives.size(); ++i)
    dn[i] = model.distance(negatives[i].head, negatives[i].relation, negatives[i].tail);
  if (adversarial) {
    std::vector<double> logits(dn.size());
    for (std::size_t i = 0; i < dn.size(); ++i) logits[i] = temperature * (gamma - dn[i]);
    const double z = log_sum_exp(logits);
    for (std::size_t i = 0; i < dn.size(); ++i) w[i] = std::exp(logits[i] - z);
  }
  for (std::size_t i = 0; i < negatives.size(); ++i) {
    loss -= w[i] * log_sigmoid(dn[i] - gamma);
    if (accumulate) model.distance_grad(negatives[i], -scale * w[i] * sigmoid(gamma - dn[i]));
  }
  return loss;
}

/// Replaces head or tail (fair coin) with a uniformly drawn entity.
inline std::vector<Triple> corrupt(const Triple& t, int num_entities, int count, Rng& rng) {
  std::bernoulli_distribution side(0.5);
  std::uniform_int_distribution<int> pick(0, num_entities - 1);
  std::vector<Triple> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    Triple n = t;
    if (side(rng)) n.head = pick(rng);
    else n.tail = pick(rng);
    out.push_back(n);
  }
  return out;
}

struct LinkPredictionMetrics {
  double mrr = 0.0;
  double hits1 = 0.0;
  double hits3 = 0.0;
  double hits10 = 0.0;
  double mean_rank = 0.0;
  std::size_t queries = 0;
};

/// Higher is more plausible.
using TripleScorer = std::function<double(int head, int relation, int tail)>;

/// Filtered ranking of every test triple's tail (and head when both_sides).
/// Ties take the mean of the tied positions.
inline LinkPredictionMetrics eval_link_prediction(const TripleStore& store, const TripleScorer& scorer,
                                                  Partition part = Partition::Test, bool both_sides = true) {
  LinkPredictionMetrics m;
  const auto& tests = store.triples(part);
  if (tests.empty()) return m;
  const int n = store.num_entities();
  auto add_rank = [&](double rank) {
    m.mrr += 1.0 / rank;
    m.hits1 += rank <= 1.0;
    m.hits3 += rank <= 3.0;
    m.hits10 += rank <= 10.0;
    m.mean_rank += rank;
    ++m.queries;
  };
  for (const auto& t : tests) {
    for (int side = 0; side < (both_sides ? 2 : 1); ++side) {
      const double truth = scorer(t.head, t.relation, t.tail);
      long greater = 0, ties = 0;
      for (int e = 0; e < n; ++e) {
        Triple c = t;
        (side == 0 ? c.tail : c.head) = e;
        if (c == t || store.is_known(c)) continue;
        const double s = scorer(c.head, c.relation, c.tail);
        if (s > truth) ++greater;
        else if (s == truth) ++ties;
      }
      add_rank(1.0 + static_cast<double>(greater) + static_cast<double>(ties) / 2.0);
    }
  }
  const auto q = static_cast<double>(m.queries);
  m.mrr /= q, m.hits1 /= q, m.hits3 /= q, m.hits10 /= q, m.mean_rank /= q;
  return m;
}

struct KgeTrainReport {
  std::vector<double> epoch_loss;
  std::vector<double> valid_mrr;
  std::vector<double> learning_rates;  // per evaluation
};

inline KgeModel train_kge(const TripleStore& store, const KgeTrainConfig& config, KgeTrainReport* report = nullptr) {
  config.validate();
  const auto& train = store.triples(Partition::Train);
  if (train.empty()) throw ArgumentError("train_kge: empty train partition");
  Rng rng(config.seed);
  Rng neg_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  KgeModel model(config.kind, store.num_entities(), store.num_relations(), config.dim, config.norm);
  model.initialize(config.gamma, rng);
  ParameterList params = model.parameters();
  AdamOptimizer opt(params, config.learning_rate);

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t batch = std::max<std::size_t>(1, config.batch_size);
  double best_mrr = -1.0;
  int stale = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t b = 0; b < order.size(); b += batch) {
      const std::size_t e = std::min(order.size(), b + batch);
      zero_grads(params);
      const double scale = 1.0 / static_cast<double>(e - b);
      for (std::size_t k = b; k < e; ++k) {
        const Triple& pos = train[order[k]];
        auto negs = corrupt(pos, store.num_entities(), config.negatives, neg_rng);
        total += kge_loss(model, pos, negs, config.gamma, config.adversarial, config.adversarial_temperature, scale, true);
      }
      opt.step();
      model.wrap_phases();
    }
    if (report) report->epoch_loss.push_back(total / static_cast<double>(train.size()));
    const bool eval_now = config.eval_every > 0 && (epoch + 1) % config.eval_every == 0;
    if (eval_now && !store.triples(Partition::Valid).empty()) {
      const auto metrics = eval_link_prediction(
          store, [&](int h, int r, int t) { return -model.distance(h, r, t); }, Partition::Valid);
      if (report) report->valid_mrr.push_back(metrics.mrr), report->learning_rates.push_back(opt.learning_rate());
      if (metrics.mrr > best_mrr) {
        best_mrr = metrics.mrr;
        stale = 0;
      } else if (++stale >= config.patience) {
        opt.set_learning_rate(opt.learning_rate() / 2.0);
        stale = 0;
      }
    }
  }
  return model;
}

// ---------------------------------------------------------------------------
// Multi-semantic relation components

/// One angle vector per training (h, t) pair of relation r.
inline Matrix collect_relation_angles(const TripleStore& store, const KgeModel& model, int relation) {
  std::vector<Vector> rows;
  for (const auto& t : store.triples(Partition::Train))
    if (t.relation == relation) rows.push_back(relation_angle_vector(model.entity(t.head), model.entity(t.tail)));
  if (rows.empty())
    throw DataError("relation '" + store.relation_name(relation) + "' has no training triples");
  Matrix out(static_cast<Eigen::Index>(rows.size()), model.dim());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  return out;
}

struct DeriveConfig {
  int pca_dim = 2;
  double bandwidth = 0.0;  // 0 selects the median heuristic
  MeanShiftKernel kernel = MeanShiftKernel::Flat;
  std::size_t min_cluster_size = 2;
  std::size_t min_pairs_for_merge = 4;
  bool arithmetic_mean = false;
};

struct DerivedComponents {
  SemanticComponents components;
  Matrix reduced;  // PCA coordinates of every angle vector
  double bandwidth = 0.0;
};

inline Vector average_angles(const Matrix& rows, bool arithmetic) {
  Vector v(rows.cols());
  for (Eigen::Index j = 0; j < rows.cols(); ++j) {
    if (arithmetic) {
      v(j) = wrap_angle(rows.col(j).mean());
    } else {
      std::vector<double> col(rows.col(j).data(), rows.col(j).data() + rows.rows());
      v(j) = circular_mean(col);
    }
  }
  return v;
}

/// PCA-reduce, Mean-Shift in the reduced space, fold small clusters into the
/// nearest large one, then average each cluster in the full angle space.
inline DerivedComponents derive_components(const Matrix& angles, const DeriveConfig& config = {}) {
  const Eigen::Index c = angles.rows(), d = angles.cols();
  if (c < 1) throw ArgumentError("derive_components: no angle vectors");
  if (config.pca_dim < 1 || config.pca_dim > d)
    throw ArgumentError("derive_components: pca_dim " + std::to_string(config.pca_dim) + " outside 1.." + std::to_string(d));

  DerivedComponents out;
  std::vector<int> assign(static_cast<std::size_t>(c), 0);
  Matrix centered = angles.rowwise() - angles.colwise().mean();
  const bool degenerate = c < 2 || centered.squaredNorm() <= 1e-24;
  if (degenerate) {
    out.reduced = Matrix::Zero(c, config.pca_dim);
  } else {
    PcaModel pca = pca_fit(angles, config.pca_dim);
    out.reduced = pca.transform_rows(angles);
    MeanShiftConfig ms;
    ms.bandwidth = config.bandwidth;
    ms.kernel = config.kernel;
    MeanShiftResult res = mean_shift(out.reduced, ms);
    out.bandwidth = res.bandwidth;
    assign = res.assignments;
    std::vector<std::size_t> sizes(res.mode_sizes.begin(), res.mode_sizes.end());
    const auto k = static_cast<int>(res.modes.size());
    if (static_cast<std::size_t>(c) >= config.min_pairs_for_merge) {
      std::vector<int> target(static_cast<std::size_t>(k));
      std::iota(target.begin(), target.end(), 0);
      for (int m = 0; m < k; ++m) {
        if (sizes[static_cast<std::size_t>(m)] >= config.min_cluster_size) continue;
        double best = std::numeric_limits<double>::infinity();
        for (int o = 0; o < k; ++o) {
          if (sizes[static_cast<std::size_t>(o)] < config.min_cluster_size) continue;
          const double dist = (res.modes[static_cast<std::size_t>(m)] - res.modes[static_cast<std::size_t>(o)]).norm();
          if (dist < best) best = dist, target[static_cast<std::size_t>(m)] = o;
        }
      }
      // renumber surviving clusters in their original (sorted-mode) order
      std::map<int, int> renumber;
      for (int m = 0; m < k; ++m)
        if (target[static_cast<std::size_t>(m)] == m) renumber.emplace(m, static_cast<int>(renumber.size()));
      for (auto& a : assign) a = renumber.at(target[static_cast<std::size_t>(a)]);
    }
  }

  const int k = *std::max_element(assign.begin(), assign.end()) + 1;
  out.components.phases.resize(k, d);
  out.components.sizes.assign(static_cast<std::size_t>(k), 0);
  for (int m = 0; m < k; ++m) {
    std::vector<Eigen::Index> members;
    for (Eigen::Index i = 0; i < c; ++i)
      if (assign[static_cast<std::size_t>(i)] == m) members.push_back(i);
    out.components.sizes[static_cast<std::size_t>(m)] = members.size();
    out.components.phases.row(m) = average_angles(angles(members, Eigen::all), config.arithmetic_mean).transpose();
  }
  out.components.assignments = std::move(assign);
  return out;
}

struct MsreScore {
  double score = 0.0;
  Eigen::Index component = 0;
};

/// max_k -|h o v_k - t|; the lowest index wins ties.
inline MsreScore msre_score(const ComplexVector& h, const Matrix& components, const ComplexVector& t,
                            DistanceNorm norm = DistanceNorm::L1) {
  if (components.rows() < 1) throw ArgumentError("msre_score: no components");
  MsreScore best{-std::numeric_limits<double>::infinity(), 0};
  for (Eigen::Index k = 0; k < components.rows(); ++k) {
    const double s = -rotate_score(h, components.row(k).transpose(), t, norm);
    if (s > best.score) best = {s, k};
  }
  return best;
}

/// Relation scorer that uses derived components where present and the
/// model's own relation row otherwise.
inline TripleScorer msre_scorer(const KgeModel& model) {
  return [&model](int h, int r, int t) {
    auto it = model.components().find(r);
    if (it == model.components().end() || model.kind() != KgeKind::RotatE) return -model.distance(h, r, t);
    return msre_score(model.entity(h), it->second.phases, model.entity(t), model.norm()).score;
  };
}

inline TripleScorer plain_scorer(const KgeModel& model) {
  return [&model](int h, int r, int t) { return -model.distance(h, r, t); };
}

struct CompletionQuery {
  std::optional<int> head;
  int relation = 0;
  std::optional<int> tail;
};

struct RankedEntity {
  int entity = 0;
  double score = 0.0;
};

/// Every entity as the missing end of the query, best first (ties by id).
/// `filtered` drops entities that already complete a known triple.
inline std::vector<RankedEntity> complete(const TripleStore& store, const TripleScorer& scorer,
                                          const CompletionQuery& q, bool filtered = false) {
  if (q.head.has_value() == q.tail.has_value())
    throw ArgumentError("completion query needs exactly one of head or tail");
  if (q.relation < 0 || q.relation >= store.num_relations()) throw ArgumentError("unknown relation in query");
  const int fixed = q.head ? *q.head : *q.tail;
  if (fixed < 0 || fixed >= store.num_entities()) throw ArgumentError("unknown entity in query");
  std::vector<RankedEntity> out;
  for (int e = 0; e < store.num_entities(); ++e) {
    Triple t = q.head ? Triple{fixed, q.relation, e} : Triple{e, q.relation, fixed};
    if (filtered && store.is_known(t)) continue;
    out.push_back({e, scorer(t.head, t.relation, t.tail)});
  }
  std::stable_sort(out.begin(), out.end(), [](const RankedEntity& a, const RankedEntity& b) { return a.score > b.score; });
  return out;
}

// ---------------------------------------------------------------------------
// Relation patterns

enum class Pattern { Symmetric, Antisymmetric, Inverse, Composition };

struct PatternCheck {
  bool holds = false;
  Vector residuals;
  double fraction_within = 0.0;
};

inline PatternCheck pattern_residuals(Pattern p, const std::vector<Vector>& phases, double tol, double min_fraction) {
  const std::size_t need = p == Pattern::Inverse ? 2 : p == Pattern::Composition ? 3 : 1;
  if (phases.size() != need) throw ArgumentError("check_pattern: wrong number of phase vectors for this pattern");
  for (const auto& v : phases)
    if (v.size() != phases[0].size()) throw ArgumentError("check_pattern: dimension mismatch");
  PatternCheck out;
  const Eigen::Index d = phases[0].size();
  out.residuals.resize(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    double r = 0.0;
    switch (p) {
      case Pattern::Symmetric:
      case Pattern::Antisymmetric:
        // distance of theta to the nearer of 0 and pi
        r = std::min(std::abs(wrap_angle(phases[0](j))), std::abs(wrap_angle(phases[0](j) - kPi)));
        break;
      case Pattern::Inverse:
        r = std::abs(wrap_angle(phases[0](j) + phases[1](j)));
        break;
      case Pattern::Composition:
        r = std::abs(wrap_angle(phases[0](j) - phases[1](j) - phases[2](j)));
        break;
    }
    out.residuals(j) = r;
  }
  const auto within = (out.residuals.array() <= tol).count();
  out.fraction_within = d > 0 ? static_cast<double>(within) / static_cast<double>(d) : 1.0;
  if (p == Pattern::Antisymmetric) out.holds = within < d;
  else out.holds = out.fraction_within >= min_fraction;
  return out;
}

/// Phase-vector form: symmetric <=> 2 theta = 0, inverse <=> t1 + t2 = 0,
/// composition <=> t1 = t2 + t3 (all mod 2 pi, per coordinate within tol).
inline PatternCheck check_pattern(Pattern p, const std::vector<Vector>& phases, double tol, double min_fraction = 1.0) {
  return pattern_residuals(p, phases, tol, min_fraction);
}

/// Component-set form: the verdict holds if some choice of one component per
/// relation satisfies it; the best such choice is reported.
inline PatternCheck check_pattern(Pattern p, const std::vector<const Matrix*>& components, double tol,
                                  double min_fraction = 1.0) {
  std::vector<Eigen::Index> idx(components.size(), 0);
  std::optional<PatternCheck> best;
  while (true) {
    std::vector<Vector> pick;
    for (std::size_t i = 0; i < components.size(); ++i) pick.push_back(components[i]->row(idx[i]).transpose());
    PatternCheck c = pattern_residuals(p, pick, tol, min_fraction);
    const bool better = !best || (c.holds && !best->holds) ||
                        (c.holds == best->holds && (p == Pattern::Antisymmetric ? c.fraction_within < best->fraction_within
                                                                                : c.fraction_within > best->fraction_within));
    if (better) best = c;
    std::size_t pos = 0;
    while (pos < idx.size() && ++idx[pos] == components[pos]->rows()) idx[pos++] = 0;
    if (pos == idx.size()) break;
  }
  return *best;
}

/// Plot-ready "pair,pc1,pc2,component" rows for one relation.
inline void write_angle_projection(std::ostream& out, const DerivedComponents& derived) {
  out << "pair,pc1,pc2,component\n";
  char buf[96];
  for (Eigen::Index i = 0; i < derived.reduced.rows(); ++i) {
    const double x = derived.reduced(i, 0);
    const double y = derived.reduced.cols() > 1 ? derived.reduced(i, 1) : 0.0;
    std::snprintf(buf, sizeof buf, "%ld,%.6f,%.6f,%d\n", static_cast<long>(i), x, y,
                  derived.components.assignments[static_cast<std::size_t>(i)]);
    out << buf;
  }
}

}  // namespace casegraph
