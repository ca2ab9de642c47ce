#pragma once

// Mention and fact-triple extraction over preprocessed sentences.

#include <string>
#include <vector>

#include "casegraph/ner.hpp"
#include "casegraph/relation.hpp"

namespace casegraph::pipeline {

struct SentenceEntities {
  std::vector<std::string> tokens;
  std::vector<EntityMention> mentions;
};

struct FactTriple {
  std::size_t sentence = 0;
  EntityMention head;
  std::string relation;
  EntityMention tail;
  double confidence = 0.0;
};

inline std::string describe_types(const std::vector<std::string>& types) {
  std::string s = "[";
  for (std::size_t i = 0; i < types.size(); ++i) s += (i ? "," : "") + types[i];
  return s + "]";
}

/// Tokenises and labels each sentence with a model trained on `expected`.
inline std::vector<SentenceEntities> run_ner(const std::vector<std::string>& sentences, const NerModel& model,
                                             const TagSet& expected, std::size_t max_len = 400) {
  if (!(model.tags() == expected))
    throw DataError(std::string("NER model (") + kNerCheckpointVersion + ", types " +
                    describe_types(model.tags().entity_types()) + ") does not match the expected tag set " +
                    describe_types(expected.entity_types()));
  std::vector<SentenceEntities> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) {
    SentenceEntities e;
    e.tokens = tokenize(s);
    if (!e.tokens.empty()) e.mentions = decode_mentions(e.tokens, model.predict(e.tokens, max_len));
    out.push_back(std::move(e));
  }
  return out;
}

/// Classifies every admissible ordered mention pair; "Other" is dropped.
inline std::vector<FactTriple> run_relation_extraction(const std::vector<SentenceEntities>& sentences,
                                                       const RelationModel& model, const RelationSchema& schema) {
  if (!(model.schema() == schema)) throw DataError("relation model schema does not match the pipeline schema");
  std::vector<SentenceMentions> input;
  for (const auto& s : sentences) input.push_back({s.tokens, s.mentions, {}});
  Rng unused(0);
  std::vector<FactTriple> out;
  for (const auto& inst : generate_candidates(input, schema, CandidateMode::Inference, 1.0, unused)) {
    const Vector probs = model.predict_proba(inst);
    Eigen::Index best = 0;
    probs.maxCoeff(&best);
    if (static_cast<int>(best) == schema.other_id()) continue;
    const auto& sent = sentences[inst.sentence];
    out.push_back({inst.sentence, sent.mentions[inst.head_mention], schema.label_name(static_cast<int>(best)),
                   sent.mentions[inst.tail_mention], probs(best)});
  }
  return out;
}

}  // namespace casegraph::pipeline
