#pragma once

// Multitask relation classifier: sentence/entity pooling, feature fusion,
// type-aware softmax classification, and a translational margin loss on the
// averaged entity features used as an auxiliary objective.

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "casegraph/crf.hpp"
#include "casegraph/encoder.hpp"
#include "casegraph/ner.hpp"

namespace casegraph {

struct RelationType {
  std::string name;
  int id = 0;
  std::vector<std::pair<std::string, std::string>> pairs;  // allowed (head type, tail type)
};

/// Relation inventory plus the catch-all "Other" class, which is always the
/// last label index.
class RelationSchema {
 public:
  RelationSchema() = default;
  RelationSchema(std::vector<std::string> entity_types, std::vector<RelationType> relations,
                 std::string other = "Other", bool example = false)
      : entity_types_(std::move(entity_types)), relations_(std::move(relations)), other_(std::move(other)),
        example_(example) {
    std::set<std::string> types(entity_types_.begin(), entity_types_.end());
    for (std::size_t r = 0; r < relations_.size(); ++r) {
      const auto& rel = relations_[r];
      if (rel.name == other_) throw DataError("schema: substantive relation may not reuse the Other name");
      if (!index_.emplace(rel.name, static_cast<int>(r)).second)
        throw DataError("schema: duplicate relation '" + rel.name + "'");
      for (const auto& [h, t] : rel.pairs) {
        if (!types.count(h) || !types.count(t))
          throw DataError("schema: relation '" + rel.name + "' references unknown entity type");
        allowed_[{h, t}].insert(static_cast<int>(r));
      }
    }
    index_.emplace(other_, static_cast<int>(relations_.size()));
  }

  const std::vector<std::string>& entity_types() const { return entity_types_; }
  const std::vector<RelationType>& relations() const { return relations_; }
  const std::string& other() const { return other_; }
  bool is_example() const { return example_; }

  int num_substantive() const { return static_cast<int>(relations_.size()); }
  int num_labels() const { return num_substantive() + 1; }
  int other_id() const { return num_substantive(); }
  bool has_label(const std::string& name) const { return index_.count(name) > 0; }
  int label_id(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ArgumentError("unknown relation label '" + name + "'");
    return it->second;
  }
  const std::string& label_name(int id) const {
    if (id == other_id()) return other_;
    return relations_.at(static_cast<std::size_t>(id)).name;
  }
  std::vector<std::string> label_names() const {
    std::vector<std::string> out;
    for (int i = 0; i < num_labels(); ++i) out.push_back(label_name(i));
    return out;
  }

  /// Some relation admits the ordered type pair.
  bool admissible(const std::string& head, const std::string& tail) const { return allowed_.count({head, tail}) > 0; }
  bool allows(int relation, const std::string& head, const std::string& tail) const {
    if (relation == other_id()) return true;
    auto it = allowed_.find({head, tail});
    return it != allowed_.end() && it->second.count(relation) > 0;
  }
  std::size_t conceptual_triple_count() const {
    std::size_t n = 0;
    for (const auto& r : relations_) n += r.pairs.size();
    return n;
  }

  /// Every schema type must be present in the tag set.
  void check_against(const TagSet& tags) const {
    for (const auto& t : entity_types_)
      if (!tags.has_type(t)) throw DataError("schema entity type '" + t + "' is missing from the tag set");
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["example"] = example_;
    j["entity_types"] = entity_types_;
    j["other"] = other_;
    j["relations"] = nlohmann::json::array();
    for (const auto& r : relations_) {
      nlohmann::json jr;
      jr["id"] = r.id;
      jr["name"] = r.name;
      jr["pairs"] = nlohmann::json::array();
      for (const auto& [h, t] : r.pairs) jr["pairs"].push_back({h, t});
      j["relations"].push_back(jr);
    }
    return j;
  }

  static RelationSchema from_json(const nlohmann::json& j) {
    std::vector<RelationType> rels;
    for (const auto& jr : j.at("relations")) {
      RelationType r;
      r.name = jr.at("name").get<std::string>();
      r.id = jr.value("id", static_cast<int>(rels.size()) + 1);
      for (const auto& p : jr.at("pairs")) r.pairs.emplace_back(p.at(0).get<std::string>(), p.at(1).get<std::string>());
      rels.push_back(std::move(r));
    }
    return RelationSchema(j.at("entity_types").get<std::vector<std::string>>(), std::move(rels),
                          j.value("other", std::string("Other")), j.value("example", false));
  }

  bool operator==(const RelationSchema& o) const { return to_json() == o.to_json(); }

 private:
  std::vector<std::string> entity_types_;
  std::vector<RelationType> relations_;
  std::string other_ = "Other";
  bool example_ = false;
  std::map<std::string, int> index_;
  std::map<std::pair<std::string, std::string>, std::set<int>> allowed_;
};

struct EntitySlot {
  std::size_t start = 0;
  std::size_t end = 0;  // exclusive
  std::string type;
};

struct RelationInstance {
  std::vector<std::string> tokens;
  EntitySlot e1;
  EntitySlot e2;
  std::string label;  // empty at inference time
  // provenance within the candidate generator's input
  std::size_t sentence = 0;
  std::size_t head_mention = 0;
  std::size_t tail_mention = 0;
};

inline void validate_instance(const RelationInstance& inst, const RelationSchema& schema) {
  const auto n = inst.tokens.size();
  for (const EntitySlot* e : {&inst.e1, &inst.e2})
    if (e->start >= e->end || e->end > n) throw DataError("relation instance: entity span outside sentence");
  if (inst.e1.start == inst.e2.start && inst.e1.end == inst.e2.end)
    throw DataError("relation instance: identical entity spans");
  if (!inst.label.empty()) {
    if (!schema.has_label(inst.label)) throw DataError("relation instance: unknown label '" + inst.label + "'");
    if (!schema.allows(schema.label_id(inst.label), inst.e1.type, inst.e2.type))
      throw DataError("relation instance: (" + inst.e1.type + ", " + inst.e2.type + ") is not admissible for '" +
                      inst.label + "'");
  }
}

inline std::vector<RelationInstance> read_relation_instances(std::istream& in) {
  std::vector<RelationInstance> out;
  std::string line;
  std::size_t lineno = 0;
  auto slot = [](const nlohmann::json& j) {
    EntitySlot e;
    e.start = j.at("span").at(0).get<std::size_t>();
    e.end = j.at("span").at(1).get<std::size_t>();
    e.type = j.at("type").get<std::string>();
    return e;
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      RelationInstance r;
      r.tokens = j.at("tokens").get<std::vector<std::string>>();
      r.e1 = slot(j.at("e1"));
      r.e2 = slot(j.at("e2"));
      r.label = j.value("label", std::string());
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("instance line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline void write_relation_instances(std::ostream& out, const std::vector<RelationInstance>& instances) {
  for (const auto& r : instances) {
    nlohmann::json j;
    j["tokens"] = r.tokens;
    j["e1"] = {{"span", {r.e1.start, r.e1.end}}, {"type", r.e1.type}};
    j["e2"] = {{"span", {r.e2.start, r.e2.end}}, {"type", r.e2.type}};
    j["label"] = r.label;
    out << j.dump() << '\n';
  }
}

// ---------------------------------------------------------------------------
// Feature maps

/// tanh(H_start W_sent).
inline Vector sentence_feature(const Matrix& hidden, const Matrix& w_sent) {
  if (hidden.rows() < 1 || hidden.cols() != w_sent.rows()) throw ArgumentError("sentence_feature: dimension mismatch");
  return (hidden.row(0) * w_sent).array().tanh().matrix().transpose();
}

/// Mean of the hidden rows covering a token span. Token i lives in row i + 1
/// because row 0 is the sequence-start slot.
inline Vector entity_feature(const Matrix& hidden, std::size_t start, std::size_t end) {
  if (end <= start) throw ArgumentError("entity_feature: empty span");
  if (static_cast<Eigen::Index>(end) + 1 > hidden.rows()) throw ArgumentError("entity_feature: span outside sentence");
  const auto len = static_cast<Eigen::Index>(end - start);
  return hidden.middleRows(static_cast<Eigen::Index>(start) + 1, len).colwise().mean().transpose();
}

/// gelu([F_sent ; F_ent1 ; F_ent2] W_fused + b_fused).
inline Vector fuse(const Vector& f_sent, const Vector& f_ent1, const Vector& f_ent2, const Matrix& w_fused,
                   const Vector& b_fused) {
  if (f_sent.size() + f_ent1.size() + f_ent2.size() != w_fused.rows() || w_fused.cols() != b_fused.size())
    throw ArgumentError("fuse: dimension mismatch");
  Vector x(w_fused.rows());
  x << f_sent, f_ent1, f_ent2;
  Vector z = w_fused.transpose() * x + b_fused;
  return z.unaryExpr([](double v) { return gelu(v); });
}

/// -sum log p(gold) over the batch.
inline double ce_loss(const std::vector<Vector>& distributions, const std::vector<int>& gold) {
  if (distributions.empty() || distributions.size() != gold.size()) throw ArgumentError("ce_loss: empty or ragged batch");
  double loss = 0.0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i] < 0 || gold[i] >= distributions[i].size()) throw ArgumentError("ce_loss: gold label out of range");
    loss -= std::log(distributions[i](gold[i]));
  }
  return loss;
}

inline double l1_distance(const Vector& head, const Vector& rel, const Vector& tail) {
  return (head + rel - tail).lpNorm<1>();
}

/// [gamma + d(e1 + r_true, e2) - d(e1 + r_fake, e2)]_+ with the L1 distance.
inline double translation_margin_loss(const Vector& f_ent1, const Vector& f_ent2, const Vector& true_rel,
                                      const Vector& fake_rel, double gamma) {
  if (f_ent1.size() != f_ent2.size() || f_ent1.size() != true_rel.size() || true_rel.size() != fake_rel.size())
    throw ArgumentError("translation_margin_loss: entity and relation dimensions differ");
  return std::max(0.0, gamma + l1_distance(f_ent1, true_rel, f_ent2) - l1_distance(f_ent1, fake_rel, f_ent2));
}

/// Batch form over relation-embedding rows; true and fake labels must differ.
inline double translation_margin_loss(const std::vector<Vector>& f_ent1, const std::vector<Vector>& f_ent2,
                                      const std::vector<int>& true_rel, const std::vector<int>& fake_rel, double gamma,
                                      const Matrix& relation_embeddings) {
  double total = 0.0;
  for (std::size_t i = 0; i < f_ent1.size(); ++i) {
    if (true_rel[i] == fake_rel[i]) throw ArgumentError("translation_margin_loss: true and fake relation coincide");
    total += translation_margin_loss(f_ent1[i], f_ent2[i], relation_embeddings.row(true_rel[i]).transpose(),
                                     relation_embeddings.row(fake_rel[i]).transpose(), gamma);
  }
  return total;
}

/// Uniform over substantive relations other than true_rel.
inline int sample_fake_relation(const RelationSchema& schema, int true_rel, Rng& rng) {
  const int n = schema.num_substantive();
  const bool true_is_substantive = true_rel >= 0 && true_rel < n;
  const int pool = true_is_substantive ? n - 1 : n;
  if (pool < 1) throw ArgumentError("sample_fake_relation: schema needs at least two relation labels");
  std::uniform_int_distribution<int> pick(0, pool - 1);
  int r = pick(rng);
  if (true_is_substantive && r >= true_rel) ++r;
  return r;
}

struct MultitaskLossConfig {
  double lambda = 1e-5;
  double gamma = 1.0;

  void validate() const {
    if (!(lambda > 0.0)) throw ArgumentError("MultitaskLossConfig: lambda must be > 0");
    if (!(gamma > 0.0)) throw ArgumentError("MultitaskLossConfig: gamma must be > 0");
  }
};

inline double total_loss(double l1, double l2, double lambda) {
  if (!(lambda > 0.0)) throw ArgumentError("total_loss: lambda must be > 0");
  return l1 + lambda * l2;
}

// ---------------------------------------------------------------------------
// Candidate generation

enum class CandidateMode { Training, Inference };

struct SentenceMentions {
  std::vector<std::string> tokens;
  std::vector<EntityMention> mentions;
  /// Gold relations as (head mention, tail mention) -> relation name; training only.
  std::map<std::pair<std::size_t, std::size_t>, std::string> gold;
};

/// Ordered mention pairs whose type pair some relation admits. In training
/// mode unrelated pairs become "Other" and survive with probability keep_prob.
inline std::vector<RelationInstance> generate_candidates(const std::vector<SentenceMentions>& sentences,
                                                         const RelationSchema& schema, CandidateMode mode,
                                                         double keep_prob, Rng& rng) {
  std::vector<RelationInstance> out;
  std::bernoulli_distribution keep(std::clamp(keep_prob, 0.0, 1.0));
  for (std::size_t s = 0; s < sentences.size(); ++s) {
    const auto& sent = sentences[s];
    for (std::size_t i = 0; i < sent.mentions.size(); ++i) {
      for (std::size_t j = 0; j < sent.mentions.size(); ++j) {
        if (i == j) continue;
        const auto& a = sent.mentions[i];
        const auto& b = sent.mentions[j];
        if (a.start == b.start && a.end == b.end) continue;
        if (!schema.admissible(a.type, b.type)) continue;
        RelationInstance inst{sent.tokens, {a.start, a.end, a.type}, {b.start, b.end, b.type}, {}, s, i, j};
        if (mode == CandidateMode::Training) {
          auto it = sent.gold.find({i, j});
          if (it != sent.gold.end()) {
            inst.label = it->second;
          } else {
            if (!keep(rng)) continue;
            inst.label = schema.other();
          }
        }
        out.push_back(std::move(inst));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Metrics

struct MacroScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::map<std::string, PrfScore> per_class;
};

/// Unweighted mean of per-class scores over the classes seen in gold or
/// predictions; "Other" participates only when include_other is set.
inline MacroScores macro_f1(const std::vector<std::string>& gold, const std::vector<std::string>& predicted,
                            bool include_other, const std::string& other = "Other") {
  if (gold.size() != predicted.size()) throw ArgumentError("macro_f1: gold and predicted lengths differ");
  std::set<std::string> classes;
  for (const auto& g : gold) classes.insert(g);
  for (const auto& p : predicted) classes.insert(p);
  if (!include_other) classes.erase(other);
  MacroScores out;
  if (classes.empty()) return out;
  for (const auto& c : classes) {
    long tp = 0, pred = 0, g = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
      if (predicted[i] == c) ++pred;
      if (gold[i] == c) ++g;
      if (predicted[i] == c && gold[i] == c) ++tp;
    }
    PrfScore s = prf_from_counts(tp, pred, g);
    out.per_class[c] = s;
    out.precision += s.precision;
    out.recall += s.recall;
    out.f1 += s.f1;
  }
  const auto k = static_cast<double>(classes.size());
  out.precision /= k;
  out.recall /= k;
  out.f1 /= k;
  return out;
}

// ---------------------------------------------------------------------------
// Model

struct ReConfig {
  int entity_type_dim = 128;
  int relation_dim = 768;  // must equal encoder.hidden_dim
  int fusion_dim = 0;      // 0 means "same as the encoder hidden dim"
  MultitaskLossConfig loss;
  bool translation_task = true;
  bool other_in_translation = false;
  double weight_decay = 0.01;
  double dropout = 0.1;
  std::size_t batch_size = 16;
  double clip_norm = 2.0;
  double learning_rate = 2e-5;
  int epochs = 50;
  std::size_t max_len = 400;
  ConvEncoderConfig encoder;
  std::uint64_t seed = 1;
};

inline constexpr const char* kReCheckpointVersion = "casegraph.re/1";

/// Per-instance intermediates kept for the backward pass.
struct RelationForward {
  EncoderTrace trace;
  Matrix hidden;
  Vector f_sent, f_ent1, f_ent2, fused_pre, fused, fused_dropped, final_features, probs;
  Vector dropout;
};

class RelationModel {
 public:
  RelationModel(RelationSchema schema, std::unique_ptr<TokenEncoder> encoder, int type_dim, int relation_dim,
                int fusion_dim, Rng& rng)
      : RelationModel(std::move(schema), std::move(encoder), type_dim, relation_dim, fusion_dim) {
    const double dh = static_cast<double>(encoder_->hidden_dim());
    fill_normal(w_sent_.value, rng, 1.0 / std::sqrt(dh));
    fill_normal(w_fused_.value, rng, 1.0 / std::sqrt(static_cast<double>(w_fused_.value.rows())));
    fill_normal(w_final_.value, rng, 1.0 / std::sqrt(static_cast<double>(w_final_.value.rows())));
    fill_normal(type_embedding_.value, rng, 1.0);
    fill_normal(relation_embedding_.value, rng, 1.0 / std::sqrt(dh));
  }

  RelationModel(const RelationModel& o)
      : schema_(o.schema_), type_index_(o.type_index_), encoder_(o.encoder_->clone()), w_sent_(o.w_sent_),
        w_fused_(o.w_fused_), b_fused_(o.b_fused_), w_final_(o.w_final_), type_embedding_(o.type_embedding_),
        relation_embedding_(o.relation_embedding_) {}

  const RelationSchema& schema() const { return schema_; }
  TokenEncoder& encoder() { return *encoder_; }
  const Matrix& relation_embeddings() const { return relation_embedding_.value; }
  const Matrix& type_embeddings() const { return type_embedding_.value; }
  Eigen::Index type_dim() const { return type_embedding_.value.cols(); }

  ParameterList head_parameters() {
    return {&w_sent_, &w_fused_, &b_fused_, &w_final_, &type_embedding_, &relation_embedding_};
  }
  ParameterList parameters() {
    ParameterList p = encoder_->parameters();
    for (Parameter* h : head_parameters()) p.push_back(h);
    return p;
  }

  int type_id(const std::string& t) const {
    auto it = type_index_.find(t);
    if (it == type_index_.end()) throw ArgumentError("unknown entity type '" + t + "'");
    return it->second;
  }

  /// Softmax over relation labels for F_final = typeEmb(t1) ; typeEmb(t2) ; F_fused.
  Vector classify(const Vector& fused, const std::string& type1, const std::string& type2) const {
    return softmax(w_final_.value.transpose() * final_features(fused, type_id(type1), type_id(type2)));
  }

  RelationForward forward(const RelationInstance& inst, const Vector* dropout) const {
    RelationForward f;
    f.hidden = encoder_->forward(inst.tokens, &f.trace);
    f.f_sent = sentence_feature(f.hidden, w_sent_.value);
    f.f_ent1 = entity_feature(f.hidden, inst.e1.start, inst.e1.end);
    f.f_ent2 = entity_feature(f.hidden, inst.e2.start, inst.e2.end);
    Vector x(w_fused_.value.rows());
    x << f.f_sent, f.f_ent1, f.f_ent2;
    f.fused_pre = w_fused_.value.transpose() * x + b_fused_.value.row(0).transpose();
    f.fused = f.fused_pre.unaryExpr([](double v) { return gelu(v); });
    if (dropout) {
      f.dropout = *dropout;
      f.fused_dropped = f.fused.cwiseProduct(*dropout);
    } else {
      f.fused_dropped = f.fused;
    }
    f.final_features = final_features(f.fused_dropped, type_id(inst.e1.type), type_id(inst.e2.type));
    f.probs = softmax(w_final_.value.transpose() * f.final_features);
    return f;
  }

  struct InstanceLoss {
    double classification = 0.0;
    double translation = 0.0;
  };

  /// Accumulates d(scale * (L1 + lambda * L2)) into the parameter gradients.
  /// fake_rel < 0 skips the translation term for this instance.
  InstanceLoss accumulate(const RelationInstance& inst, int gold, int fake_rel, double lambda, double gamma,
                          double scale, const Vector* dropout) {
    RelationForward f = forward(inst, dropout);
    InstanceLoss loss;
    loss.classification = -std::log(f.probs(gold));

    Vector d_logits = f.probs;
    d_logits(gold) -= 1.0;
    d_logits *= scale;
    w_final_.grad.noalias() += f.final_features * d_logits.transpose();
    Vector d_final = w_final_.value * d_logits;
    const Eigen::Index de = type_dim();
    type_embedding_.grad.row(type_id(inst.e1.type)) += d_final.head(de).transpose();
    type_embedding_.grad.row(type_id(inst.e2.type)) += d_final.segment(de, de).transpose();
    Vector d_fused = d_final.tail(f.fused.size());
    if (dropout) d_fused = d_fused.cwiseProduct(f.dropout);
    Vector d_pre = d_fused.cwiseProduct(f.fused_pre.unaryExpr([](double v) { return gelu_grad(v); }));
    Vector x(w_fused_.value.rows());
    x << f.f_sent, f.f_ent1, f.f_ent2;
    w_fused_.grad.noalias() += x * d_pre.transpose();
    b_fused_.grad.row(0) += d_pre.transpose();
    Vector dx = w_fused_.value * d_pre;
    const Eigen::Index df = f.f_sent.size(), dh = f.f_ent1.size();
    Vector d_sent = dx.head(df);
    Vector d_e1 = dx.segment(df, dh);
    Vector d_e2 = dx.tail(dh);

    if (fake_rel >= 0) {
      if (fake_rel == gold) throw ArgumentError("translation term: true and fake relation coincide");
      const Vector r_true = relation_embedding_.value.row(gold).transpose();
      const Vector r_fake = relation_embedding_.value.row(fake_rel).transpose();
      const Vector u = f.f_ent1 + r_true - f.f_ent2;
      const Vector v = f.f_ent1 + r_fake - f.f_ent2;
      const double hinge = gamma + u.lpNorm<1>() - v.lpNorm<1>();
      if (hinge > 0.0) {
        loss.translation = hinge;
        const double c = scale * lambda;
        const Vector su = u.unaryExpr([](double a) { return static_cast<double>((a > 0) - (a < 0)); });
        const Vector sv = v.unaryExpr([](double a) { return static_cast<double>((a > 0) - (a < 0)); });
        d_e1 += c * (su - sv);
        d_e2 += c * (sv - su);
        relation_embedding_.grad.row(gold) += c * su.transpose();
        relation_embedding_.grad.row(fake_rel) -= c * sv.transpose();
      }
    }

    Vector d_s = d_sent.cwiseProduct((1.0 - f.f_sent.array().square()).matrix());
    w_sent_.grad.noalias() += f.hidden.row(0).transpose() * d_s.transpose();
    Matrix d_hidden = Matrix::Zero(f.hidden.rows(), f.hidden.cols());
    d_hidden.row(0) += (w_sent_.value * d_s).transpose();
    const auto add_span = [&](const EntitySlot& e, const Vector& g) {
      const double inv = 1.0 / static_cast<double>(e.end - e.start);
      for (std::size_t t = e.start; t < e.end; ++t) d_hidden.row(static_cast<Eigen::Index>(t) + 1) += inv * g.transpose();
    };
    add_span(inst.e1, d_e1);
    add_span(inst.e2, d_e2);
    encoder_->backward(f.trace, d_hidden);
    return loss;
  }

  /// Loss value only (no gradients), matching accumulate() without dropout.
  double loss(const RelationInstance& inst, int gold, int fake_rel, double lambda, double gamma) const {
    RelationForward f = forward(inst, nullptr);
    double l1 = -std::log(f.probs(gold));
    double l2 = 0.0;
    if (fake_rel >= 0)
      l2 = translation_margin_loss(f.f_ent1, f.f_ent2, relation_embedding_.value.row(gold).transpose(),
                                   relation_embedding_.value.row(fake_rel).transpose(), gamma);
    return l1 + lambda * l2;
  }

  Vector predict_proba(const RelationInstance& inst) const { return forward(inst, nullptr).probs; }

  int predict_id(const RelationInstance& inst) const {
    Vector p = predict_proba(inst);
    Eigen::Index arg = 0;
    p.maxCoeff(&arg);
    return static_cast<int>(arg);
  }

  std::string predict(const RelationInstance& inst) const { return schema_.label_name(predict_id(inst)); }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["version"] = kReCheckpointVersion;
    j["schema"] = schema_.to_json();
    j["encoder"] = encoder_->to_json();
    auto self = const_cast<RelationModel*>(this);
    j["head"] = parameters_to_json(self->head_parameters());
    j["dims"] = {{"type", type_embedding_.value.cols()},
                 {"relation", relation_embedding_.value.cols()},
                 {"fusion", w_fused_.value.cols()}};
    return j;
  }

  static RelationModel from_json(const nlohmann::json& j) {
    const auto version = j.at("version").get<std::string>();
    if (version != kReCheckpointVersion)
      throw DataError("RE checkpoint version '" + version + "' does not match expected '" + kReCheckpointVersion + "'");
    const auto& d = j.at("dims");
    RelationModel m(RelationSchema::from_json(j.at("schema")), encoder_from_json(j.at("encoder")),
                    d.at("type").get<int>(), d.at("relation").get<int>(), d.at("fusion").get<int>());
    parameters_from_json(m.head_parameters(), j.at("head"));
    return m;
  }

 private:
  RelationModel(RelationSchema schema, std::unique_ptr<TokenEncoder> encoder, int type_dim, int relation_dim,
                int fusion_dim)
      : schema_(std::move(schema)), encoder_(std::move(encoder)) {
    const Eigen::Index dh = encoder_->hidden_dim();
    if (relation_dim != dh)
      throw ArgumentError("relation embedding dim (" + std::to_string(relation_dim) +
                          ") must equal the encoder hidden dim (" + std::to_string(dh) + ")");
    const Eigen::Index df = fusion_dim > 0 ? fusion_dim : dh;
    for (std::size_t i = 0; i < schema_.entity_types().size(); ++i) type_index_[schema_.entity_types()[i]] = static_cast<int>(i);
    w_sent_ = Parameter("re.w_sent", dh, df);
    w_fused_ = Parameter("re.w_fused", df + 2 * dh, df);
    b_fused_ = Parameter("re.b_fused", 1, df, false);
    w_final_ = Parameter("re.w_final", 2 * type_dim + df, schema_.num_labels());
    type_embedding_ = Parameter("re.type_embedding", static_cast<Eigen::Index>(schema_.entity_types().size()), type_dim);
    relation_embedding_ = Parameter("re.relation_embedding", schema_.num_labels(), relation_dim);
  }

  Vector final_features(const Vector& fused, int t1, int t2) const {
    const Eigen::Index de = type_dim();
    Vector out(2 * de + fused.size());
    out << type_embedding_.value.row(t1).transpose(), type_embedding_.value.row(t2).transpose(), fused;
    return out;
  }

  RelationSchema schema_;
  std::map<std::string, int> type_index_;
  std::unique_ptr<TokenEncoder> encoder_;
  Parameter w_sent_, w_fused_, b_fused_, w_final_, type_embedding_, relation_embedding_;
};

struct ReTrainReport {
  std::vector<double> epoch_classification;  // mean per instance
  std::vector<double> epoch_translation;
};

/// Schema and span checks for every gold instance; throws on the first problem.
inline void validate_relation_corpus(const std::vector<RelationInstance>& instances, const RelationSchema& schema) {
  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (instances[i].label.empty()) throw DataError("instance " + std::to_string(i) + " has no gold label");
    try {
      validate_instance(instances[i], schema);
    } catch (const DataError& e) {
      throw DataError("instance " + std::to_string(i) + ": " + e.what());
    }
  }
}

inline RelationModel train_re(const std::vector<RelationInstance>& instances, const RelationSchema& schema,
                              const ReConfig& config, ReTrainReport* report = nullptr) {
  if (instances.empty()) throw ArgumentError("train_re: no training instances");
  if (config.translation_task) config.loss.validate();
  validate_relation_corpus(instances, schema);

  Rng rng(config.seed);
  Rng dropout_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  Rng fake_rng(config.seed ^ 0xc2b2ae3d27d4eb4fULL);
  std::vector<std::vector<std::string>> token_lists;
  for (const auto& inst : instances) token_lists.push_back(inst.tokens);
  auto encoder = std::make_unique<ConvEncoder>(Vocabulary::build(token_lists, config.encoder.min_count), config.encoder, rng);
  RelationModel model(schema, std::move(encoder), config.entity_type_dim, config.relation_dim, config.fusion_dim, rng);

  std::vector<int> gold;
  for (const auto& inst : instances) gold.push_back(schema.label_id(inst.label));

  ParameterList params = model.parameters();
  AdamOptimizer opt(params, config.learning_rate);
  std::vector<std::size_t> order(instances.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t batch = std::max<std::size_t>(1, config.batch_size);
  const Eigen::Index fused_dim = config.fusion_dim > 0 ? config.fusion_dim : config.encoder.hidden_dim;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double l1_total = 0.0, l2_total = 0.0;
    for (std::size_t b = 0; b < order.size(); b += batch) {
      const std::size_t e = std::min(order.size(), b + batch);
      zero_grads(params);
      for (std::size_t k = b; k < e; ++k) {
        const std::size_t i = order[k];
        Vector drop;
        const Vector* drop_ptr = nullptr;
        if (config.dropout > 0.0) {
          drop = dropout_mask(fused_dim, 1, config.dropout, dropout_rng).col(0);
          drop_ptr = &drop;
        }
        int fake = -1;
        const bool is_other = gold[i] == schema.other_id();
        if (config.translation_task && schema.num_substantive() >= 2 - (is_other ? 1 : 0)) {
          const int f = sample_fake_relation(schema, gold[i], fake_rng);
          if (!is_other || config.other_in_translation) fake = f;
        }
        // sum within the batch
        auto loss = model.accumulate(instances[i], gold[i], fake, config.loss.lambda, config.loss.gamma, 1.0, drop_ptr);
        l1_total += loss.classification;
        l2_total += loss.translation;
      }
      apply_weight_decay(params, config.weight_decay);
      clip_grad_norm(params, config.clip_norm);
      opt.step();
    }
    if (report) {
      report->epoch_classification.push_back(l1_total / static_cast<double>(instances.size()));
      report->epoch_translation.push_back(l2_total / static_cast<double>(instances.size()));
    }
  }
  return model;
}

}  // namespace casegraph
