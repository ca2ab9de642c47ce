#pragma once

// CRF entity tagger over a token encoder: mention codec, span metrics,
// training loop and checkpoints.

#include <algorithm>
#include <array>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "casegraph/crf.hpp"
#include "casegraph/encoder.hpp"

namespace casegraph {

struct EntityMention {
  std::size_t start = 0;  // token index
  std::size_t end = 0;    // exclusive
  std::string type;
  std::string text;

  auto operator<=>(const EntityMention&) const = default;
};

/// Maximal B-x I-x* runs. A stray I-x (no open mention of type x) opens a new
/// mention as if it were B-x.
inline std::vector<EntityMention> decode_mentions(const std::vector<std::string>& tokens,
                                                  const std::vector<std::string>& labels) {
  if (tokens.size() != labels.size()) throw ArgumentError("decode_mentions: tokens and labels differ in length");
  std::vector<EntityMention> out;
  bool open = false;
  EntityMention cur;
  auto close = [&](std::size_t end) {
    if (!open) return;
    cur.end = end;
    cur.text = join_tokens(tokens, cur.start, cur.end);
    out.push_back(cur);
    open = false;
  };
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::string& lab = labels[i];
    if (lab.size() > 2 && (lab[0] == 'B' || lab[0] == 'I') && lab[1] == '-') {
      const std::string type = lab.substr(2);
      if (lab[0] == 'I' && open && cur.type == type) continue;
      close(i);
      cur = EntityMention{i, i, type, {}};
      open = true;
    } else {
      close(i);
    }
  }
  close(labels.size());
  return out;
}

inline std::vector<std::string> encode_mentions(std::size_t length, const std::vector<EntityMention>& mentions) {
  std::vector<std::string> labels(length, "O");
  for (const auto& m : mentions) {
    if (m.start >= m.end || m.end > length) throw ArgumentError("encode_mentions: mention span out of range");
    for (std::size_t i = m.start; i < m.end; ++i) {
      if (labels[i] != "O") throw ArgumentError("encode_mentions: overlapping mentions");
      labels[i] = (i == m.start ? "B-" : "I-") + m.type;
    }
  }
  return labels;
}

struct PrfScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long true_positives = 0;
  long predicted = 0;
  long gold = 0;
};

/// Precision/recall/F1 from counts. With nothing predicted and nothing to
/// find, all three are 1.
inline PrfScore prf_from_counts(long tp, long predicted, long gold) {
  PrfScore s{0, 0, 0, tp, predicted, gold};
  if (predicted == 0 && gold == 0) {
    s.precision = s.recall = s.f1 = 1.0;
    return s;
  }
  s.precision = predicted > 0 ? static_cast<double>(tp) / static_cast<double>(predicted) : 0.0;
  s.recall = gold > 0 ? static_cast<double>(tp) / static_cast<double>(gold) : 0.0;
  s.f1 = (s.precision + s.recall) > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

struct SpanScores {
  PrfScore overall;
  std::map<std::string, PrfScore> per_type;
};

/// Exact span and exact type matching, sentence by sentence.
inline SpanScores span_f1(const std::vector<std::vector<EntityMention>>& gold,
                          const std::vector<std::vector<EntityMention>>& predicted) {
  if (gold.size() != predicted.size()) throw ArgumentError("span_f1: gold and predicted sentence counts differ");
  using Key = std::tuple<std::size_t, std::size_t, std::size_t, std::string>;
  std::set<Key> g, p;
  for (std::size_t s = 0; s < gold.size(); ++s) {
    for (const auto& m : gold[s]) g.emplace(s, m.start, m.end, m.type);
    for (const auto& m : predicted[s]) p.emplace(s, m.start, m.end, m.type);
  }
  std::map<std::string, std::array<long, 3>> counts;  // tp, predicted, gold
  long tp = 0;
  for (const auto& k : p) {
    ++counts[std::get<3>(k)][1];
    if (g.count(k)) ++tp, ++counts[std::get<3>(k)][0];
  }
  for (const auto& k : g) ++counts[std::get<3>(k)][2];
  SpanScores out;
  out.overall = prf_from_counts(tp, static_cast<long>(p.size()), static_cast<long>(g.size()));
  for (const auto& [type, c] : counts) out.per_type[type] = prf_from_counts(c[0], c[1], c[2]);
  return out;
}

// ---------------------------------------------------------------------------
// Corpus

struct LabeledSentence {
  std::vector<std::string> tokens;
  std::vector<std::string> labels;
};

inline std::vector<LabeledSentence> read_ner_corpus(std::istream& in) {
  std::vector<LabeledSentence> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      LabeledSentence s{j.at("tokens").get<std::vector<std::string>>(), j.at("labels").get<std::vector<std::string>>()};
      if (s.tokens.size() != s.labels.size()) throw DataError("tokens/labels length mismatch");
      out.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("corpus line " + std::to_string(lineno) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("corpus line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline void write_ner_corpus(std::ostream& out, const std::vector<LabeledSentence>& corpus) {
  for (const auto& s : corpus) {
    nlohmann::json j;
    j["tokens"] = s.tokens;
    j["labels"] = s.labels;
    out << j.dump() << '\n';
  }
}

inline bool is_split_punctuation(const std::string& tok) {
  static const std::set<std::string> kPunct = {",", ";", ":", ".", "!", "?"};
  return kPunct.count(tok) > 0;
}

/// Cuts a sequence longer than max_len into pieces, preferring a cut right
/// after the punctuation token closest to the middle and never cutting in
/// front of an I- label. Returns [begin, end) token ranges.
inline std::vector<std::pair<std::size_t, std::size_t>> split_long_sequence(const std::vector<std::string>& tokens,
                                                                            const std::vector<std::string>* labels,
                                                                            std::size_t max_len) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::vector<std::pair<std::size_t, std::size_t>> todo = {{0, tokens.size()}};
  auto cut_ok = [&](std::size_t at) { return !labels || (*labels)[at].rfind("I-", 0) != 0; };
  while (!todo.empty()) {
    auto [b, e] = todo.back();
    todo.pop_back();
    if (e - b <= max_len || max_len == 0) {
      out.emplace_back(b, e);
      continue;
    }
    const std::size_t mid = b + (e - b) / 2;
    std::size_t cut = 0;
    std::size_t best_dist = std::numeric_limits<std::size_t>::max();
    for (std::size_t i = b; i + 1 < e; ++i) {
      if (!is_split_punctuation(tokens[i]) || !cut_ok(i + 1)) continue;
      const std::size_t at = i + 1;
      const std::size_t dist = at > mid ? at - mid : mid - at;
      if (dist < best_dist) best_dist = dist, cut = at;
    }
    if (cut == 0) {
      cut = b + max_len;
      while (cut > b + 1 && !cut_ok(cut)) --cut;
    }
    todo.emplace_back(cut, e);
    todo.emplace_back(b, cut);
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// Model

enum class NerDecoder { Crf, Softmax };

struct NerConfig {
  std::size_t max_len = 400;
  double weight_decay = 0.01;
  double dropout = 0.1;
  std::size_t batch_size = 16;
  double clip_norm = 2.0;
  double lr_crf = 1e-5;
  double lr_softmax = 2e-5;
  double learning_rate = 0.0;  // 0 selects the decoder's default
  int epochs = 30;
  NerDecoder decoder = NerDecoder::Crf;
  ConvEncoderConfig encoder;
  std::uint64_t seed = 1;

  double effective_learning_rate() const {
    if (learning_rate > 0.0) return learning_rate;
    return decoder == NerDecoder::Crf ? lr_crf : lr_softmax;
  }
};

inline constexpr const char* kNerCheckpointVersion = "casegraph.ner/1";

class NerModel {
 public:
  NerModel(TagSet tags, std::unique_ptr<TokenEncoder> encoder, NerDecoder decoder, Rng& rng)
      : tags_(std::move(tags)), mask_(build_transition_mask(tags_)), encoder_(std::move(encoder)), decoder_(decoder) {
    allocate();
    fill_normal(emission_weight_.value, rng, 1.0 / std::sqrt(static_cast<double>(encoder_->hidden_dim())));
    fill_normal(transitions_.value, rng, 0.01);
    pin_forbidden(transitions_.value, mask_);
  }

  NerModel(const NerModel& o)
      : tags_(o.tags_), mask_(o.mask_), encoder_(o.encoder_->clone()), decoder_(o.decoder_),
        emission_weight_(o.emission_weight_), emission_bias_(o.emission_bias_), transitions_(o.transitions_) {}

  const TagSet& tags() const { return tags_; }
  const TransitionMask& mask() const { return mask_; }
  NerDecoder decoder() const { return decoder_; }
  TokenEncoder& encoder() { return *encoder_; }
  const Matrix& transitions() const { return transitions_.value; }

  ParameterList parameters() {
    ParameterList p = encoder_->parameters();
    p.push_back(&emission_weight_);
    p.push_back(&emission_bias_);
    if (decoder_ == NerDecoder::Crf) p.push_back(&transitions_);
    return p;
  }

  /// Emission scores P (n x L); dropout applied when `mask` is non-null.
  Matrix emissions(const std::vector<std::string>& tokens, const Matrix* dropout, EncoderTrace* trace,
                   Matrix* top = nullptr) const {
    Matrix hidden = encoder_->forward(tokens, trace);
    Matrix body = hidden.bottomRows(hidden.rows() - 1);
    if (dropout) body = body.cwiseProduct(*dropout);
    Matrix p = body * emission_weight_.value;
    p.rowwise() += emission_bias_.value.row(0);
    if (top) *top = std::move(body);
    return p;
  }

  /// Loss on one sentence; gradients are accumulated into the parameters.
  double accumulate(const std::vector<std::string>& tokens, const std::vector<int>& labels, double scale,
                    Rng* dropout_rng, double dropout_p) {
    EncoderTrace trace;
    Matrix drop;
    const Matrix* drop_ptr = nullptr;
    if (dropout_rng && dropout_p > 0.0) {
      drop = dropout_mask(static_cast<Eigen::Index>(tokens.size()), encoder_->hidden_dim(), dropout_p, *dropout_rng);
      drop_ptr = &drop;
    }
    Matrix top;
    Matrix p = emissions(tokens, drop_ptr, &trace, &top);
    CrfObjective obj = decoder_ == NerDecoder::Crf ? crf_nll(p, transitions_.value, labels, mask_)
                                                   : softmax_nll(p, labels);
    if (decoder_ == NerDecoder::Crf) transitions_.grad += scale * obj.d_transitions;
    Matrix dp = scale * obj.d_emissions;
    emission_weight_.grad.noalias() += top.transpose() * dp;
    emission_bias_.grad.row(0) += dp.colwise().sum();
    Matrix d_body = dp * emission_weight_.value.transpose();
    if (drop_ptr) d_body = d_body.cwiseProduct(drop);
    Matrix d_hidden = Matrix::Zero(d_body.rows() + 1, d_body.cols());
    d_hidden.bottomRows(d_body.rows()) = d_body;
    encoder_->backward(trace, d_hidden);
    return scale * obj.value;
  }

  /// Loss without touching gradients (inference mode).
  double loss(const std::vector<std::string>& tokens, const std::vector<int>& labels) const {
    Matrix p = emissions(tokens, nullptr, nullptr);
    return decoder_ == NerDecoder::Crf ? crf_nll(p, transitions_.value, labels, mask_).value
                                       : softmax_nll(p, labels).value;
  }

  std::vector<int> predict_ids(const std::vector<std::string>& tokens) const {
    if (tokens.empty()) return {};
    Matrix p = emissions(tokens, nullptr, nullptr);
    return decoder_ == NerDecoder::Crf ? viterbi(p, transitions_.value).labels : argmax_decode(p);
  }

  std::vector<std::string> predict(const std::vector<std::string>& tokens, std::size_t max_len = 400) const {
    std::vector<std::string> out;
    out.reserve(tokens.size());
    for (auto [b, e] : split_long_sequence(tokens, nullptr, max_len)) {
      std::vector<std::string> piece(tokens.begin() + static_cast<std::ptrdiff_t>(b),
                                     tokens.begin() + static_cast<std::ptrdiff_t>(e));
      for (int id : predict_ids(piece)) out.push_back(tags_.label_name(id));
    }
    return out;
  }

  std::vector<EntityMention> mentions(const std::vector<std::string>& tokens) const {
    return decode_mentions(tokens, predict(tokens));
  }

  std::vector<int> label_ids(const std::vector<std::string>& labels) const {
    std::vector<int> ids;
    ids.reserve(labels.size());
    for (const auto& l : labels) ids.push_back(tags_.label_id(l));
    return ids;
  }

  /// Restores the forbidden entries after an optimizer step.
  void pin() { pin_forbidden(transitions_.value, mask_); }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["version"] = kNerCheckpointVersion;
    j["entity_types"] = tags_.entity_types();
    j["decoder"] = decoder_ == NerDecoder::Crf ? "crf" : "softmax";
    j["encoder"] = encoder_->to_json();
    auto self = const_cast<NerModel*>(this);
    j["head"] = parameters_to_json({&self->emission_weight_, &self->emission_bias_, &self->transitions_});
    return j;
  }

  static NerModel from_json(const nlohmann::json& j) {
    const auto version = j.at("version").get<std::string>();
    if (version != kNerCheckpointVersion)
      throw DataError("NER checkpoint version '" + version + "' does not match expected '" + kNerCheckpointVersion + "'");
    TagSet tags(j.at("entity_types").get<std::vector<std::string>>());
    NerDecoder dec = j.at("decoder").get<std::string>() == "crf" ? NerDecoder::Crf : NerDecoder::Softmax;
    NerModel m(std::move(tags), encoder_from_json(j.at("encoder")), dec);
    parameters_from_json({&m.emission_weight_, &m.emission_bias_, &m.transitions_}, j.at("head"));
    return m;
  }

 private:
  NerModel(TagSet tags, std::unique_ptr<TokenEncoder> encoder, NerDecoder decoder)
      : tags_(std::move(tags)), mask_(build_transition_mask(tags_)), encoder_(std::move(encoder)), decoder_(decoder) {
    allocate();
  }

  void allocate() {
    const auto l = static_cast<Eigen::Index>(tags_.num_labels());
    emission_weight_ = Parameter("ner.emission_weight", encoder_->hidden_dim(), l);
    emission_bias_ = Parameter("ner.emission_bias", 1, l, false);
    transitions_ = Parameter("ner.transitions", l + 2, l + 2, false);
  }

  TagSet tags_;
  TransitionMask mask_;
  std::unique_ptr<TokenEncoder> encoder_;
  NerDecoder decoder_;
  Parameter emission_weight_;
  Parameter emission_bias_;
  Parameter transitions_;
};

struct NerTrainReport {
  std::vector<double> epoch_loss;  // mean per-sentence loss
};

/// Validates gold labels against the BIO mask; throws listing bad sentences.
inline void validate_ner_corpus(const std::vector<LabeledSentence>& corpus, const TagSet& tags) {
  const TransitionMask mask = build_transition_mask(tags);
  std::vector<std::size_t> bad;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& s = corpus[i];
    bool ok = s.tokens.size() == s.labels.size();
    std::vector<int> ids;
    if (ok) {
      for (const auto& l : s.labels) {
        try {
          ids.push_back(tags.label_id(l));
        } catch (const ArgumentError&) {
          ok = false;
          break;
        }
      }
    }
    if (ok) ok = path_is_legal(ids, mask);
    if (!ok) bad.push_back(i);
  }
  if (!bad.empty()) {
    std::ostringstream os;
    os << "illegal gold label sequences in sentences:";
    for (std::size_t k = 0; k < bad.size() && k < 20; ++k) os << ' ' << bad[k];
    if (bad.size() > 20) os << " ... (" << bad.size() << " total)";
    throw DataError(os.str());
  }
}

/// Breaks over-long sentences into max_len-bounded pieces.
inline std::vector<LabeledSentence> split_corpus(const std::vector<LabeledSentence>& corpus, std::size_t max_len) {
  std::vector<LabeledSentence> out;
  for (const auto& s : corpus) {
    for (auto [b, e] : split_long_sequence(s.tokens, &s.labels, max_len)) {
      LabeledSentence piece;
      piece.tokens.assign(s.tokens.begin() + static_cast<std::ptrdiff_t>(b), s.tokens.begin() + static_cast<std::ptrdiff_t>(e));
      piece.labels.assign(s.labels.begin() + static_cast<std::ptrdiff_t>(b), s.labels.begin() + static_cast<std::ptrdiff_t>(e));
      out.push_back(std::move(piece));
    }
  }
  return out;
}

inline NerModel train_ner(const std::vector<LabeledSentence>& corpus, const TagSet& tags, const NerConfig& config,
                          NerTrainReport* report = nullptr) {
  if (corpus.empty()) throw ArgumentError("train_ner: empty corpus");
  validate_ner_corpus(corpus, tags);
  std::vector<LabeledSentence> data = split_corpus(corpus, config.max_len);
  std::erase_if(data, [](const LabeledSentence& s) { return s.tokens.empty(); });

  Rng rng(config.seed);
  Rng dropout_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::vector<std::string>> token_lists;
  for (const auto& s : data) token_lists.push_back(s.tokens);
  auto encoder = std::make_unique<ConvEncoder>(Vocabulary::build(token_lists, config.encoder.min_count), config.encoder, rng);
  NerModel model(tags, std::move(encoder), config.decoder, rng);

  std::vector<std::vector<int>> ids;
  for (const auto& s : data) ids.push_back(model.label_ids(s.labels));

  ParameterList params = model.parameters();
  AdamOptimizer opt(params, config.effective_learning_rate());
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t batch = std::max<std::size_t>(1, config.batch_size);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t b = 0; b < order.size(); b += batch) {
      const std::size_t e = std::min(order.size(), b + batch);
      zero_grads(params);
      const double scale = 1.0 / static_cast<double>(e - b);
      for (std::size_t k = b; k < e; ++k) {
        const std::size_t i = order[k];
        total += model.accumulate(data[i].tokens, ids[i], scale, &dropout_rng, config.dropout) / scale;
      }
      apply_weight_decay(params, config.weight_decay);
      clip_grad_norm(params, config.clip_norm);
      opt.step();
      model.pin();
    }
    if (report) report->epoch_loss.push_back(total / static_cast<double>(data.size()));
  }
  return model;
}

}  // namespace casegraph
