#pragma once

// Document-to-graph orchestration.

#include <functional>
#include <string>
#include <vector>

#include "casegraph/pipeline/export.hpp"
#include "casegraph/pipeline/extract.hpp"
#include "casegraph/pipeline/graph.hpp"
#include "casegraph/pipeline/preprocess.hpp"
#include "casegraph/pipeline/segment.hpp"

namespace casegraph::pipeline {

/// A component failure, labelled with the pipeline step it happened in.
class StepError : public Error {
 public:
  StepError(int step, const std::string& name, const std::string& what)
      : Error("step " + std::to_string(step) + " (" + name + "): " + what), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

struct BuildResult {
  std::vector<Segment> segments;
  CaseInfo info;
  std::vector<FactSentence> sentences;
  std::vector<SentenceEntities> entities;
  std::vector<FactTriple> triples;
  CaseGraph graph;
};

template <class F>
auto run_step(int step, const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StepError&) {
    throw;
  } catch (const std::exception& e) {
    throw StepError(step, name, e.what());
  }
}

inline BuildResult build_case_graph(const CaseDocument& doc, const NerModel& ner, const RelationModel& re,
                                    const RuleSet& rules, const RelationSchema& schema) {
  BuildResult r;
  r.segments = run_step(1, "segmentation", [&] { return segment_document(doc, rules); });
  r.info = run_step(2, "structured extraction", [&] { return extract_structured(doc, r.segments, rules); });
  r.sentences = run_step(3, "preprocessing",
                         [&] { return preprocess_facts(facts_text(doc, r.segments, rules), r.info, rules); });
  r.entities = run_step(4, "entity recognition", [&] {
    std::vector<std::string> texts;
    for (const auto& s : r.sentences) texts.push_back(s.text);
    return run_ner(texts, ner, TagSet(schema.entity_types()));
  });
  r.triples = run_step(5, "relation extraction", [&] { return run_relation_extraction(r.entities, re, schema); });
  r.graph = run_step(6, "knowledge fusion", [&] {
    std::vector<std::string> sources;
    for (const auto& s : r.sentences) sources.push_back(s.original);
    auto g = fuse_knowledge(doc.id, r.info, r.triples, sources, rules);
    g.validate();
    return g;
  });
  return r;
}

}  // namespace casegraph::pipeline
