#pragma once

// Tokenisation, vocabulary with unknown-word signatures, and the pluggable
// token encoder contract with its convolutional reference implementation.

#include <cctype>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "casegraph/params.hpp"

namespace casegraph {

/// Whitespace split, then leading/trailing punctuation peeled into separate
/// tokens. Internal punctuation ("AB-1234", "3.5") stays attached.
inline std::vector<std::string> tokenize(std::string_view text) {
  static constexpr std::string_view kLead = "(\"'[";
  static constexpr std::string_view kTrail = ".,;:!?)\"']";
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i >= text.size()) break;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    std::string_view word = text.substr(i, j - i);
    std::vector<std::string> tail;
    while (!word.empty() && kLead.find(word.front()) != std::string_view::npos) {
      out.emplace_back(1, word.front());
      word.remove_prefix(1);
    }
    while (!word.empty() && kTrail.find(word.back()) != std::string_view::npos) {
      tail.emplace_back(1, word.back());
      word.remove_suffix(1);
    }
    if (!word.empty()) out.emplace_back(word);
    out.insert(out.end(), tail.rbegin(), tail.rend());
    i = j;
  }
  return out;
}

inline std::string join_tokens(const std::vector<std::string>& tokens, std::size_t begin, std::size_t end) {
  std::string s;
  for (std::size_t i = begin; i < end; ++i) {
    if (i > begin) s += ' ';
    s += tokens[i];
  }
  return s;
}

/// Token-to-id map. Rare and unseen words fall back to shape signatures so
/// that e.g. an unseen plate number still looks like a plate number.
class Vocabulary {
 public:
  static constexpr int kStart = 0;

  Vocabulary() {
    for (const char* s : {"[CLS]", "<unk>", "<unk-num>", "<unk-alnum-dash>", "<unk-alnum>", "<unk-cap>",
                          "<unk-lower>", "<unk-punct>"})
      add(s);
  }

  static Vocabulary build(const std::vector<std::vector<std::string>>& sentences, int min_count = 2) {
    std::map<std::string, int> counts;
    for (const auto& s : sentences)
      for (const auto& t : s) ++counts[t];
    Vocabulary v;
    for (const auto& [tok, c] : counts)
      if (c >= min_count) v.add(tok);
    return v;
  }

  static std::string signature(std::string_view tok) {
    bool digit = false, alpha = false, dash = false, upper = false, other = false;
    for (char ch : tok) {
      const auto c = static_cast<unsigned char>(ch);
      if (std::isdigit(c)) digit = true;
      else if (std::isalpha(c)) {
        alpha = true;
        if (std::isupper(c)) upper = true;
      } else if (ch == '-') dash = true;
      else other = true;
    }
    if (digit && !alpha) return "<unk-num>";
    if (digit && alpha && dash) return "<unk-alnum-dash>";
    if (digit && alpha) return "<unk-alnum>";
    if (alpha && !tok.empty() && std::isupper(static_cast<unsigned char>(tok.front()))) return "<unk-cap>";
    if (alpha) return upper ? "<unk-cap>" : "<unk-lower>";
    if (other || dash) return "<unk-punct>";
    return "<unk>";
  }

  int id(const std::string& tok) const {
    if (auto it = index_.find(tok); it != index_.end()) return it->second;
    return index_.at(signature(tok));
  }

  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }

  static Vocabulary from_words(const std::vector<std::string>& words) {
    Vocabulary v;
    for (const auto& w : words) v.add(w);
    return v;
  }

 private:
  void add(const std::string& w) {
    if (index_.emplace(w, static_cast<int>(words_.size())).second) words_.push_back(w);
  }

  std::vector<std::string> words_;
  std::map<std::string, int> index_;
};

/// Intermediate values an encoder keeps between forward and backward.
struct EncoderTrace {
  std::vector<int> ids;
  Matrix unfolded;
  Matrix pre_activation;
};

/// Any trainable map from a token sequence to hidden states H of shape
/// (n + 1) x hidden_dim, where row 0 is the sequence-start slot.
class TokenEncoder {
 public:
  virtual ~TokenEncoder() = default;
  virtual Eigen::Index hidden_dim() const = 0;
  virtual Matrix forward(const std::vector<std::string>& tokens, EncoderTrace* trace) const = 0;
  /// Accumulates parameter gradients given dL/dH.
  virtual void backward(const EncoderTrace& trace, const Matrix& d_hidden) = 0;
  virtual ParameterList parameters() = 0;
  virtual nlohmann::json to_json() const = 0;
  virtual std::unique_ptr<TokenEncoder> clone() const = 0;
};

struct ConvEncoderConfig {
  int embedding_dim = 64;
  int hidden_dim = 768;
  int window = 5;
  int min_count = 2;
};

/// Token-embedding table followed by one width-`window` convolution with gelu.
class ConvEncoder final : public TokenEncoder {
 public:
  ConvEncoder(Vocabulary vocab, ConvEncoderConfig config, Rng& rng)
      : vocab_(std::move(vocab)), config_(config) {
    if (config_.window < 1 || config_.window % 2 == 0) throw ArgumentError("encoder window must be odd and positive");
    allocate();
    fill_normal(embedding_.value, rng, 0.5);
    fill_normal(conv_weight_.value, rng, 1.0 / std::sqrt(static_cast<double>(config_.window * config_.embedding_dim)));
  }

  ConvEncoder(const ConvEncoder& other)
      : vocab_(other.vocab_), config_(other.config_), embedding_(other.embedding_),
        conv_weight_(other.conv_weight_), conv_bias_(other.conv_bias_) {}

  static std::unique_ptr<ConvEncoder> from_json(const nlohmann::json& j) {
    ConvEncoderConfig cfg;
    cfg.embedding_dim = j.at("embedding_dim").get<int>();
    cfg.hidden_dim = j.at("hidden_dim").get<int>();
    cfg.window = j.at("window").get<int>();
    auto enc = std::unique_ptr<ConvEncoder>(
        new ConvEncoder(Vocabulary::from_words(j.at("vocab").get<std::vector<std::string>>()), cfg));
    parameters_from_json(enc->parameters(), j.at("params"));
    return enc;
  }

  Eigen::Index hidden_dim() const override { return config_.hidden_dim; }
  const Vocabulary& vocab() const { return vocab_; }
  const ConvEncoderConfig& config() const { return config_; }

  Matrix forward(const std::vector<std::string>& tokens, EncoderTrace* trace) const override {
    const auto rows = static_cast<Eigen::Index>(tokens.size() + 1);
    const int e = config_.embedding_dim;
    const int half = config_.window / 2;
    std::vector<int> ids;
    ids.reserve(tokens.size() + 1);
    ids.push_back(Vocabulary::kStart);
    for (const auto& t : tokens) ids.push_back(vocab_.id(t));

    Matrix unfolded = Matrix::Zero(rows, static_cast<Eigen::Index>(config_.window) * e);
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (int o = -half; o <= half; ++o) {
        const Eigen::Index src = i + o;
        if (src < 0 || src >= rows) continue;
        unfolded.block(i, static_cast<Eigen::Index>(o + half) * e, 1, e) = embedding_.value.row(ids[static_cast<std::size_t>(src)]);
      }
    }
    Matrix pre = unfolded * conv_weight_.value;
    pre.rowwise() += conv_bias_.value.row(0);
    Matrix hidden = pre.unaryExpr([](double x) { return gelu(x); });
    if (trace) {
      trace->ids = std::move(ids);
      trace->unfolded = std::move(unfolded);
      trace->pre_activation = std::move(pre);
    }
    return hidden;
  }

  void backward(const EncoderTrace& trace, const Matrix& d_hidden) override {
    const int e = config_.embedding_dim;
    const int half = config_.window / 2;
    const Eigen::Index rows = d_hidden.rows();
    Matrix d_pre = d_hidden.cwiseProduct(trace.pre_activation.unaryExpr([](double x) { return gelu_grad(x); }));
    conv_weight_.grad.noalias() += trace.unfolded.transpose() * d_pre;
    conv_bias_.grad.row(0) += d_pre.colwise().sum();
    Matrix d_unfolded = d_pre * conv_weight_.value.transpose();
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (int o = -half; o <= half; ++o) {
        const Eigen::Index src = i + o;
        if (src < 0 || src >= rows) continue;
        embedding_.grad.row(trace.ids[static_cast<std::size_t>(src)]) +=
            d_unfolded.block(i, static_cast<Eigen::Index>(o + half) * e, 1, e);
      }
    }
  }

  ParameterList parameters() override { return {&embedding_, &conv_weight_, &conv_bias_}; }

  nlohmann::json to_json() const override {
    nlohmann::json j;
    j["kind"] = "conv";
    j["embedding_dim"] = config_.embedding_dim;
    j["hidden_dim"] = config_.hidden_dim;
    j["window"] = config_.window;
    j["vocab"] = vocab_.words();
    auto self = const_cast<ConvEncoder*>(this);
    j["params"] = parameters_to_json(self->parameters());
    return j;
  }

  std::unique_ptr<TokenEncoder> clone() const override { return std::make_unique<ConvEncoder>(*this); }

 private:
  ConvEncoder(Vocabulary vocab, ConvEncoderConfig config) : vocab_(std::move(vocab)), config_(config) { allocate(); }

  void allocate() {
    const auto v = static_cast<Eigen::Index>(vocab_.size());
    embedding_ = Parameter("encoder.embedding", v, config_.embedding_dim);
    conv_weight_ = Parameter("encoder.conv_weight", static_cast<Eigen::Index>(config_.window) * config_.embedding_dim,
                             config_.hidden_dim);
    conv_bias_ = Parameter("encoder.conv_bias", 1, config_.hidden_dim, false);
  }

  Vocabulary vocab_;
  ConvEncoderConfig config_;
  Parameter embedding_;
  Parameter conv_weight_;
  Parameter conv_bias_;
};

inline std::unique_ptr<TokenEncoder> encoder_from_json(const nlohmann::json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "conv") return ConvEncoder::from_json(j);
  throw DataError("unknown encoder kind '" + kind + "'");
}

/// Inverted dropout mask (entries 0 or 1/(1-p)).
inline Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
  if (p <= 0.0) return Matrix::Ones(rows, cols);
  std::bernoulli_distribution keep(1.0 - p);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = keep(rng) ? 1.0 / (1.0 - p) : 0.0;
  return m;
}

}  // namespace casegraph
