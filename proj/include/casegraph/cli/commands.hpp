#pragma once

// The casegraph commands. Each reads its section of a RunConfig, writes its
// artifacts and returns a machine-readable summary.

#include <algorithm>
#include <array>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "casegraph/cli/config.hpp"
#include "casegraph/kge.hpp"
#include "casegraph/pipeline/build.hpp"
#include "casegraph/pipeline/synthetic.hpp"

namespace casegraph::cli {

namespace fs = std::filesystem;

struct Summary {
  std::string command;
  bool ok = true;
  std::string error;
  nlohmann::json metrics = nlohmann::json::object();
  std::vector<std::string> artifacts;

  nlohmann::json to_json() const {
    nlohmann::json j = {{"command", command}, {"status", ok ? "ok" : "error"}, {"metrics", metrics}, {"artifacts", artifacts}};
    if (!ok) j["error"] = error;
    return j;
  }
};

/// A failure inside one stage of a command.
class StageError : public Error {
 public:
  StageError(const std::string& stage, const std::string& what) : Error(stage + ": " + what) {}
};

template <class F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

// ---------------------------------------------------------------------------
// File helpers

inline std::ifstream open_input(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open '" + p.string() + "'");
  return in;
}

inline nlohmann::json read_json_file(const fs::path& p) {
  auto in = open_input(p);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("'" + p.string() + "' is not valid JSON: " + e.what());
  }
}

/// Writes via `fill` and records the path as an artifact.
inline void write_artifact(Summary& s, const fs::path& p, const std::function<void(std::ostream&)>& fill) {
  std::error_code ec;
  if (p.has_parent_path()) fs::create_directories(p.parent_path(), ec);
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write '" + p.string() + "'");
  fill(out);
  out.flush();
  if (!out) throw IoError("failed writing '" + p.string() + "'");
  s.artifacts.push_back(p.string());
}

inline RelationSchema load_schema(const RunConfig& cfg) {
  const auto p = cfg.input("schema");
  return stage("load schema", [&] { return RelationSchema::from_json(read_json_file(p)); });
}

inline std::vector<pipeline::CaseDocument> read_documents(const fs::path& p) {
  auto in = open_input(p);
  std::vector<pipeline::CaseDocument> docs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      docs.push_back({j.at("id").get<std::string>(), j.at("text").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      throw DataError("document line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return docs;
}

inline void write_documents(std::ostream& out, const std::vector<pipeline::CaseDocument>& docs) {
  for (const auto& d : docs) out << nlohmann::json{{"id", d.id}, {"text", d.text}}.dump() << '\n';
}

// ---------------------------------------------------------------------------
// Config sections

inline ConvEncoderConfig read_encoder(Section s) {
  ConvEncoderConfig c;
  c.embedding_dim = s.get("embedding_dim", c.embedding_dim);
  c.hidden_dim = s.get("hidden_dim", c.hidden_dim);
  c.window = s.get("window", c.window);
  c.min_count = s.get("min_count", c.min_count);
  if (c.embedding_dim < 1) s.fail("embedding_dim", "must be >= 1");
  if (c.hidden_dim < 1) s.fail("hidden_dim", "must be >= 1");
  if (c.window < 1 || c.window % 2 == 0) s.fail("window", "must be a positive odd integer");
  if (c.min_count < 1) s.fail("min_count", "must be >= 1");
  s.finish();
  return c;
}

template <class T>
void require_positive(Section& s, const std::string& key, T v) {
  if (!(v > T{})) s.fail(key, "must be > 0");
}

inline void require_probability(Section& s, const std::string& key, double v, bool closed = false) {
  if (!(v >= 0.0) || (closed ? v > 1.0 : v >= 1.0)) s.fail(key, closed ? "must lie in [0, 1]" : "must lie in [0, 1)");
}

inline NerConfig read_ner_config(const RunConfig& cfg) {
  Section s = cfg.section("ner");
  NerConfig c;
  c.max_len = s.get("max_len", c.max_len);
  c.weight_decay = s.get("weight_decay", c.weight_decay);
  c.dropout = s.get("dropout", c.dropout);
  c.batch_size = s.get("batch_size", c.batch_size);
  c.clip_norm = s.get("clip_norm", c.clip_norm);
  c.lr_crf = s.get("lr_crf", c.lr_crf);
  c.lr_softmax = s.get("lr_softmax", c.lr_softmax);
  c.learning_rate = s.get("learning_rate", c.learning_rate);
  c.epochs = s.get("epochs", c.epochs);
  const auto decoder = s.get<std::string>("decoder", "crf");
  if (decoder == "crf") c.decoder = NerDecoder::Crf;
  else if (decoder == "softmax") c.decoder = NerDecoder::Softmax;
  else s.fail("decoder", "must be \"crf\" or \"softmax\"");
  c.encoder = read_encoder(s.section("encoder"));
  c.seed = s.get("seed", cfg.seed());
  require_positive(s, "max_len", c.max_len);
  require_positive(s, "batch_size", c.batch_size);
  require_positive(s, "epochs", c.epochs);
  require_positive(s, "lr_crf", c.lr_crf);
  require_positive(s, "lr_softmax", c.lr_softmax);
  require_positive(s, "clip_norm", c.clip_norm);
  if (c.learning_rate < 0.0) s.fail("learning_rate", "must be >= 0 (0 selects the decoder default)");
  if (c.weight_decay < 0.0) s.fail("weight_decay", "must be >= 0");
  require_probability(s, "dropout", c.dropout);
  s.finish();
  return c;
}

inline ReConfig read_re_config(const RunConfig& cfg) {
  Section s = cfg.section("re");
  ReConfig c;
  c.encoder = read_encoder(s.section("encoder"));
  c.entity_type_dim = s.get("entity_type_dim", c.entity_type_dim);
  c.relation_dim = s.get("relation_dim", c.encoder.hidden_dim);
  c.fusion_dim = s.get("fusion_dim", c.fusion_dim);
  c.loss.lambda = s.get("lambda", c.loss.lambda);
  c.loss.gamma = s.get("gamma", c.loss.gamma);
  c.translation_task = s.get("translation_task", c.translation_task);
  c.other_in_translation = s.get("other_in_translation", c.other_in_translation);
  c.weight_decay = s.get("weight_decay", c.weight_decay);
  c.dropout = s.get("dropout", c.dropout);
  c.batch_size = s.get("batch_size", c.batch_size);
  c.clip_norm = s.get("clip_norm", c.clip_norm);
  c.learning_rate = s.get("learning_rate", c.learning_rate);
  c.epochs = s.get("epochs", c.epochs);
  c.max_len = s.get("max_len", c.max_len);
  c.seed = s.get("seed", cfg.seed());
  require_positive(s, "entity_type_dim", c.entity_type_dim);
  if (c.relation_dim != c.encoder.hidden_dim) s.fail("relation_dim", "must equal re.encoder.hidden_dim");
  if (c.fusion_dim < 0) s.fail("fusion_dim", "must be >= 0");
  require_positive(s, "lambda", c.loss.lambda);
  require_positive(s, "gamma", c.loss.gamma);
  require_positive(s, "batch_size", c.batch_size);
  require_positive(s, "epochs", c.epochs);
  require_positive(s, "learning_rate", c.learning_rate);
  require_positive(s, "clip_norm", c.clip_norm);
  require_positive(s, "max_len", c.max_len);
  if (c.weight_decay < 0.0) s.fail("weight_decay", "must be >= 0");
  require_probability(s, "dropout", c.dropout);
  s.finish();
  return c;
}

inline KgeTrainConfig read_kge_config(const RunConfig& cfg) {
  Section s = cfg.section("kge");
  KgeTrainConfig c;
  const auto kind = s.get<std::string>("kind", "rotate");
  if (kind == "rotate") c.kind = KgeKind::RotatE;
  else if (kind == "transe") c.kind = KgeKind::TransE;
  else s.fail("kind", "must be \"rotate\" or \"transe\"");
  c.dim = s.get("dim", c.dim);
  c.gamma = s.get("gamma", c.gamma);
  c.negatives = s.get("negatives", c.negatives);
  c.learning_rate = s.get("learning_rate", c.learning_rate);
  c.epochs = s.get("epochs", c.epochs);
  c.batch_size = s.get("batch_size", c.batch_size);
  c.patience = s.get("patience", c.patience);
  c.eval_every = s.get("eval_every", c.eval_every);
  c.adversarial = s.get("adversarial", c.adversarial);
  c.adversarial_temperature = s.get("adversarial_temperature", c.adversarial_temperature);
  const auto norm = s.get<std::string>("norm", "l1");
  if (norm == "l1") c.norm = DistanceNorm::L1;
  else if (norm == "l2") c.norm = DistanceNorm::L2;
  else s.fail("norm", "must be \"l1\" or \"l2\"");
  c.seed = s.get("seed", cfg.seed());
  require_positive(s, "dim", c.dim);
  require_positive(s, "gamma", c.gamma);
  require_positive(s, "negatives", c.negatives);
  require_positive(s, "learning_rate", c.learning_rate);
  require_positive(s, "epochs", c.epochs);
  require_positive(s, "batch_size", c.batch_size);
  require_positive(s, "patience", c.patience);
  require_positive(s, "eval_every", c.eval_every);
  require_positive(s, "adversarial_temperature", c.adversarial_temperature);
  s.finish();
  return c;
}

struct DeriveSection {
  DeriveConfig derive;
  std::vector<std::string> relations;  // empty means every relation
};

inline DeriveSection read_derive_config(const RunConfig& cfg) {
  Section s = cfg.section("derive");
  DeriveSection out;
  auto& c = out.derive;
  c.pca_dim = s.get("pca_dim", c.pca_dim);
  c.bandwidth = s.get("bandwidth", c.bandwidth);
  const auto kernel = s.get<std::string>("kernel", "flat");
  if (kernel == "flat") c.kernel = MeanShiftKernel::Flat;
  else if (kernel == "gaussian") c.kernel = MeanShiftKernel::Gaussian;
  else s.fail("kernel", "must be \"flat\" or \"gaussian\"");
  c.min_cluster_size = s.get("min_cluster_size", c.min_cluster_size);
  c.min_pairs_for_merge = s.get("min_pairs_for_merge", c.min_pairs_for_merge);
  c.arithmetic_mean = s.get("arithmetic_mean", c.arithmetic_mean);
  out.relations = s.get("relations", std::vector<std::string>{});
  require_positive(s, "pca_dim", c.pca_dim);
  if (c.bandwidth < 0.0) s.fail("bandwidth", "must be >= 0 (0 selects the median heuristic)");
  require_positive(s, "min_cluster_size", c.min_cluster_size);
  s.finish();
  return out;
}

// ---------------------------------------------------------------------------
// Metric helpers

inline nlohmann::json prf_json(const PrfScore& s) {
  return {{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1},
          {"true_positives", s.true_positives}, {"predicted", s.predicted}, {"gold", s.gold}};
}

inline nlohmann::json span_json(const SpanScores& s) {
  nlohmann::json j = prf_json(s.overall);
  j["per_type"] = nlohmann::json::object();
  for (const auto& [t, v] : s.per_type) j["per_type"][t] = v.f1;
  return j;
}

inline nlohmann::json macro_json(const MacroScores& m) {
  nlohmann::json j = {{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}};
  j["per_class"] = nlohmann::json::object();
  for (const auto& [c, v] : m.per_class) j["per_class"][c] = v.f1;
  return j;
}

inline nlohmann::json link_json(const LinkPredictionMetrics& m) {
  return {{"mrr", m.mrr},   {"hits1", m.hits1},         {"hits3", m.hits3},
          {"hits10", m.hits10}, {"mean_rank", m.mean_rank}, {"queries", m.queries}};
}

inline SpanScores evaluate_ner(const NerModel& model, const std::vector<LabeledSentence>& corpus) {
  std::vector<std::vector<EntityMention>> gold, pred;
  for (const auto& s : corpus) {
    gold.push_back(decode_mentions(s.tokens, s.labels));
    pred.push_back(model.mentions(s.tokens));
  }
  return span_f1(gold, pred);
}

struct ReEvaluation {
  MacroScores with_other;
  MacroScores without_other;
};

inline ReEvaluation evaluate_re(const RelationModel& model, const std::vector<RelationInstance>& instances,
                                const RelationSchema& schema) {
  std::vector<std::string> gold, pred;
  for (const auto& inst : instances) {
    gold.push_back(inst.label);
    pred.push_back(model.predict(inst));
  }
  return {macro_f1(gold, pred, true, schema.other()), macro_f1(gold, pred, false, schema.other())};
}

// ---------------------------------------------------------------------------
// Knowledge-graph files

inline constexpr const char* kKgTrain = "train.tsv";
inline constexpr const char* kKgValid = "valid.tsv";
inline constexpr const char* kKgTest = "test.tsv";

/// Loads the triple files under `dir`. With `names` (from a checkpoint) the
/// id assignment is replayed first and unknown names are rejected.
inline TripleStore load_kg(const fs::path& dir, const nlohmann::json* names = nullptr) {
  TripleStore store;
  if (names) {
    for (const auto& e : names->at("entity_names")) store.add_entity(e.get<std::string>());
    for (const auto& r : names->at("relation_names")) store.add_relation(r.get<std::string>());
  }
  const auto entities = store.num_entities(), relations = store.num_relations();
  const std::pair<const char*, Partition> parts[] = {{kKgTrain, Partition::Train}, {kKgValid, Partition::Valid},
                                                     {kKgTest, Partition::Test}};
  for (const auto& [file, part] : parts) {
    const fs::path p = dir / file;
    if (part != Partition::Train && !fs::exists(p)) continue;
    auto in = open_input(p);
    store.load_tsv(in, part);
  }
  if (names && (store.num_entities() != entities || store.num_relations() != relations))
    throw DataError("triple files name entities or relations unknown to the checkpoint");
  return store;
}

/// Gold-graph edges as global triples. Nodes of `shared_types` keep their
/// ids across documents; all others are scoped by document.
inline std::vector<std::array<std::string, 3>> graph_triples(const std::vector<pipeline::CaseGraph>& graphs,
                                                             const std::set<std::string>& shared_types) {
  std::vector<std::array<std::string, 3>> out;
  std::set<std::array<std::string, 3>> seen;
  for (const auto& g : graphs) {
    auto global = [&](const std::string& id) {
      const auto* n = g.node(id);
      return n && shared_types.count(n->type) ? id : g.document_id + "/" + id;
    };
    for (const auto& e : g.edges) {
      std::array<std::string, 3> t{global(e.source), e.relation, global(e.target)};
      if (seen.insert(t).second) out.push_back(t);
    }
  }
  return out;
}

struct KgSplit {
  std::vector<std::array<std::string, 3>> train, valid, test;
};

/// Random split; held-out triples whose entities or relation never occur in
/// train are moved back to train.
inline KgSplit split_triples(std::vector<std::array<std::string, 3>> triples, double valid_fraction,
                             double test_fraction, Rng& rng) {
  std::shuffle(triples.begin(), triples.end(), rng);
  const auto n = triples.size();
  const auto n_valid = static_cast<std::size_t>(valid_fraction * static_cast<double>(n));
  const auto n_test = static_cast<std::size_t>(test_fraction * static_cast<double>(n));
  KgSplit s;
  std::vector<std::array<std::string, 3>> held;
  for (std::size_t i = 0; i < n; ++i) (i < n_valid + n_test ? held : s.train).push_back(triples[i]);
  std::set<std::string> entities, relations;
  for (const auto& t : s.train) entities.insert(t[0]), entities.insert(t[2]), relations.insert(t[1]);
  for (std::size_t i = 0; i < held.size(); ++i) {
    const auto& t = held[i];
    if (!entities.count(t[0]) || !entities.count(t[2]) || !relations.count(t[1])) {
      s.train.push_back(t);
      entities.insert(t[0]), entities.insert(t[2]), relations.insert(t[1]);
      continue;
    }
    (i < n_valid ? s.valid : s.test).push_back(t);
  }
  return s;
}

inline void write_triples(std::ostream& out, const std::vector<std::array<std::string, 3>>& triples) {
  for (const auto& t : triples) out << t[0] << '\t' << t[1] << '\t' << t[2] << '\n';
}

// ---------------------------------------------------------------------------
// Commands

inline Summary cmd_gen_corpus(const RunConfig& cfg) {
  Summary sum{"gen-corpus"};
  Section s = cfg.section("gen_corpus");
  const auto n_docs = s.get<std::size_t>("documents", 600);
  const double train_fraction = s.get("train_fraction", 0.8);
  const double keep_prob = s.get("keep_prob", 0.5);
  const double kg_valid = s.get("kg_valid_fraction", 0.1);
  const double kg_test = s.get("kg_test_fraction", 0.1);
  const auto shared = s.get("kg_shared_types", std::vector<std::string>{"LIAB", "POLICY", "INJURY", "DEATH", "V12", "V13",
                                                                        "V14", "V15", "V16", "V17", "V18", "V19", "V20"});
  if (n_docs < 2) s.fail("documents", "must be >= 2");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) s.fail("train_fraction", "must lie in (0, 1)");
  require_probability(s, "keep_prob", keep_prob, true);
  require_probability(s, "kg_valid_fraction", kg_valid);
  require_probability(s, "kg_test_fraction", kg_test);
  if (kg_valid + kg_test >= 1.0) s.fail("kg_test_fraction", "plus kg_valid_fraction must be < 1");
  s.finish();
  const auto seed = cfg.seed();
  const auto schema = load_schema(cfg);
  const fs::path dir = cfg.path("corpus");

  const TagSet tags(schema.entity_types());
  auto docs = stage("generate documents", [&] { return pipeline::generate_synthetic_corpus(seed, n_docs, schema, tags); });
  auto n_train = static_cast<std::size_t>(train_fraction * static_cast<double>(n_docs));
  n_train = std::clamp<std::size_t>(n_train, 1, n_docs - 1);
  const std::vector<pipeline::SyntheticDocument> train(docs.begin(), docs.begin() + static_cast<std::ptrdiff_t>(n_train));
  const std::vector<pipeline::SyntheticDocument> test(docs.begin() + static_cast<std::ptrdiff_t>(n_train), docs.end());

  Rng rng(seed);
  const auto re_train = generate_candidates(pipeline::relation_sentences(train), schema, CandidateMode::Training, keep_prob, rng);
  const auto re_test = generate_candidates(pipeline::relation_sentences(test), schema, CandidateMode::Training, keep_prob, rng);

  std::vector<pipeline::CaseGraph> all_graphs;
  for (const auto& d : docs) all_graphs.push_back(d.graph);
  const auto kg = split_triples(graph_triples(all_graphs, {shared.begin(), shared.end()}), kg_valid, kg_test, rng);

  auto documents = [](const std::vector<pipeline::SyntheticDocument>& ds) {
    std::vector<pipeline::CaseDocument> out;
    for (const auto& d : ds) out.push_back(d.document);
    return out;
  };
  auto graphs = [](const std::vector<pipeline::SyntheticDocument>& ds) {
    std::vector<pipeline::CaseGraph> out;
    for (const auto& d : ds) out.push_back(d.graph);
    return out;
  };
  stage("write corpus", [&] {
    write_artifact(sum, dir / "documents_train.jsonl", [&](std::ostream& o) { write_documents(o, documents(train)); });
    write_artifact(sum, dir / "documents_test.jsonl", [&](std::ostream& o) { write_documents(o, documents(test)); });
    write_artifact(sum, dir / "annotations.jsonl", [&](std::ostream& o) {
      for (const auto& d : docs) o << pipeline::to_json(d).dump() << '\n';
    });
    write_artifact(sum, dir / "ner_train.jsonl", [&](std::ostream& o) { write_ner_corpus(o, pipeline::ner_sentences(train)); });
    write_artifact(sum, dir / "ner_test.jsonl", [&](std::ostream& o) { write_ner_corpus(o, pipeline::ner_sentences(test)); });
    write_artifact(sum, dir / "re_train.jsonl", [&](std::ostream& o) { write_relation_instances(o, re_train); });
    write_artifact(sum, dir / "re_test.jsonl", [&](std::ostream& o) { write_relation_instances(o, re_test); });
    write_artifact(sum, dir / "gold_graphs_train.jsonl", [&](std::ostream& o) { pipeline::write_graphs_jsonl(o, graphs(train)); });
    write_artifact(sum, dir / "gold_graphs_test.jsonl", [&](std::ostream& o) { pipeline::write_graphs_jsonl(o, graphs(test)); });
    write_artifact(sum, dir / "kg" / kKgTrain, [&](std::ostream& o) { write_triples(o, kg.train); });
    write_artifact(sum, dir / "kg" / kKgValid, [&](std::ostream& o) { write_triples(o, kg.valid); });
    write_artifact(sum, dir / "kg" / kKgTest, [&](std::ostream& o) { write_triples(o, kg.test); });
    return 0;
  });

  std::size_t sentences = 0, mentions = 0, relations = 0;
  for (const auto& d : docs)
    for (const auto& st : d.sentences) ++sentences, mentions += st.mentions.size(), relations += st.relations.size();
  sum.metrics = {{"documents", docs.size()},
                 {"train_documents", train.size()},
                 {"test_documents", test.size()},
                 {"sentences", sentences},
                 {"mentions", mentions},
                 {"relations", relations},
                 {"re_train_instances", re_train.size()},
                 {"re_test_instances", re_test.size()},
                 {"kg_triples", {{"train", kg.train.size()}, {"valid", kg.valid.size()}, {"test", kg.test.size()}}}};
  return sum;
}

inline Summary cmd_train_ner(const RunConfig& cfg) {
  Summary sum{"train-ner"};
  const auto config = read_ner_config(cfg);
  const auto schema = load_schema(cfg);
  const fs::path corpus_dir = cfg.input("corpus");
  const fs::path ckpt = cfg.path("checkpoints") / "ner.json";
  const auto corpus = stage("load corpus", [&] {
    auto in = open_input(corpus_dir / "ner_train.jsonl");
    return read_ner_corpus(in);
  });
  const TagSet tags(schema.entity_types());
  NerTrainReport report;
  const auto model = stage("train", [&] { return train_ner(corpus, tags, config, &report); });
  stage("write checkpoint", [&] {
    write_artifact(sum, ckpt, [&](std::ostream& o) { o << model.to_json().dump() << '\n'; });
    return 0;
  });
  sum.metrics["sentences"] = corpus.size();
  sum.metrics["epochs"] = config.epochs;
  sum.metrics["learning_rate"] = config.effective_learning_rate();
  sum.metrics["epoch_loss"] = report.epoch_loss;
  const fs::path test_path = corpus_dir / "ner_test.jsonl";
  if (fs::exists(test_path)) {
    const auto test = stage("load test corpus", [&] {
      auto in = open_input(test_path);
      return read_ner_corpus(in);
    });
    sum.metrics["test_sentences"] = test.size();
    sum.metrics["test_span"] = span_json(stage("evaluate", [&] { return evaluate_ner(model, test); }));
  }
  return sum;
}

inline Summary cmd_train_re(const RunConfig& cfg) {
  Summary sum{"train-re"};
  const auto config = read_re_config(cfg);
  const auto schema = load_schema(cfg);
  const fs::path corpus_dir = cfg.input("corpus");
  const fs::path ckpt = cfg.path("checkpoints") / "re.json";
  const auto instances = stage("load instances", [&] {
    auto in = open_input(corpus_dir / "re_train.jsonl");
    return read_relation_instances(in);
  });
  ReTrainReport report;
  const auto model = stage("train", [&] { return train_re(instances, schema, config, &report); });
  stage("write checkpoint", [&] {
    write_artifact(sum, ckpt, [&](std::ostream& o) { o << model.to_json().dump() << '\n'; });
    return 0;
  });
  sum.metrics["instances"] = instances.size();
  sum.metrics["epochs"] = config.epochs;
  sum.metrics["epoch_classification_loss"] = report.epoch_classification;
  sum.metrics["epoch_translation_loss"] = report.epoch_translation;
  const fs::path test_path = corpus_dir / "re_test.jsonl";
  if (fs::exists(test_path)) {
    const auto test = stage("load test instances", [&] {
      auto in = open_input(test_path);
      return read_relation_instances(in);
    });
    const auto ev = stage("evaluate", [&] {
      validate_relation_corpus(test, schema);
      return evaluate_re(model, test, schema);
    });
    sum.metrics["test_instances"] = test.size();
    sum.metrics["test_macro"] = macro_json(ev.with_other);
    sum.metrics["test_macro_without_other"] = macro_json(ev.without_other);
  }
  return sum;
}

inline Summary cmd_train_kge(const RunConfig& cfg) {
  Summary sum{"train-kge"};
  const auto config = read_kge_config(cfg);
  const fs::path kg_dir = cfg.input("kg");
  const fs::path ckpt = cfg.path("checkpoints") / "kge.json";
  const auto store = stage("load triples", [&] { return load_kg(kg_dir); });
  KgeTrainReport report;
  const auto model = stage("train", [&] { return train_kge(store, config, &report); });
  stage("write checkpoint", [&] {
    write_artifact(sum, ckpt, [&](std::ostream& o) { o << model.to_json(&store).dump() << '\n'; });
    return 0;
  });
  sum.metrics["entities"] = store.num_entities();
  sum.metrics["relations"] = store.num_relations();
  sum.metrics["triples"] = {{"train", store.triples(Partition::Train).size()},
                            {"valid", store.triples(Partition::Valid).size()},
                            {"test", store.triples(Partition::Test).size()}};
  sum.metrics["epochs_run"] = report.epoch_loss.size();
  sum.metrics["final_loss"] = report.epoch_loss.empty() ? 0.0 : report.epoch_loss.back();
  sum.metrics["valid_mrr"] = report.valid_mrr;
  if (!store.triples(Partition::Test).empty())
    sum.metrics["test"] = link_json(stage("evaluate", [&] { return eval_link_prediction(store, plain_scorer(model)); }));
  return sum;
}

inline std::string file_safe(const std::string& name) {
  std::string out;
  for (char c : name) out += std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' ? c : '_';
  return out;
}

inline Summary cmd_derive_components(const RunConfig& cfg) {
  Summary sum{"derive-components"};
  const auto section = read_derive_config(cfg);
  const fs::path kg_dir = cfg.input("kg");
  const fs::path ckpt_dir = cfg.path("checkpoints");
  const fs::path out_dir = cfg.path("output");
  const auto ckpt_json = stage("load checkpoint", [&] { return read_json_file(ckpt_dir / "kge.json"); });
  auto model = stage("load checkpoint", [&] { return KgeModel::from_json(ckpt_json); });
  if (model.kind() != KgeKind::RotatE) throw StageError("load checkpoint", "component derivation needs a RotatE checkpoint");
  const auto store = stage("load triples", [&] { return load_kg(kg_dir, &ckpt_json); });

  std::vector<int> relations;
  if (section.relations.empty()) {
    for (int r = 0; r < store.num_relations(); ++r) relations.push_back(r);
  } else {
    for (const auto& name : section.relations) {
      if (!store.has_relation(name)) throw ConfigError("config field 'derive.relations': unknown relation '" + name + "'");
      relations.push_back(store.relation_id(name));
    }
  }

  sum.metrics["relations"] = nlohmann::json::object();
  model.components().clear();
  for (int r : relations) {
    const auto& name = store.relation_name(r);
    bool has_pairs = false;
    for (const auto& t : store.triples(Partition::Train)) has_pairs = has_pairs || t.relation == r;
    if (!has_pairs) continue;
    const auto derived = stage("derive components", [&] {
      const Matrix angles = collect_relation_angles(store, model, r);
      DeriveConfig dc = section.derive;
      dc.pca_dim = std::min<int>(dc.pca_dim, static_cast<int>(angles.cols()));
      return derive_components(angles, dc);
    });
    model.components()[r] = derived.components;
    sum.metrics["relations"][name] = {{"pairs", derived.reduced.rows()},
                                      {"components", derived.components.count()},
                                      {"sizes", derived.components.sizes},
                                      {"bandwidth", derived.bandwidth}};
    stage("write projection", [&] {
      write_artifact(sum, out_dir / "projections" / (file_safe(name) + ".csv"),
                     [&](std::ostream& o) { write_angle_projection(o, derived); });
      return 0;
    });
  }
  stage("write checkpoint", [&] {
    write_artifact(sum, ckpt_dir / "kge_msre.json", [&](std::ostream& o) { o << model.to_json(&store).dump() << '\n'; });
    return 0;
  });
  if (!store.triples(Partition::Test).empty()) {
    sum.metrics["test_single_phase"] = link_json(stage("evaluate", [&] { return eval_link_prediction(store, plain_scorer(model)); }));
    sum.metrics["test_msre"] = link_json(stage("evaluate", [&] { return eval_link_prediction(store, msre_scorer(model)); }));
  }
  return sum;
}

inline Summary cmd_complete(const RunConfig& cfg) {
  Summary sum{"complete"};
  Section s = cfg.section("complete");
  const bool has_head = s.has("head"), has_tail = s.has("tail");
  const auto head = s.get<std::string>("head", "");
  const auto tail = s.get<std::string>("tail", "");
  const auto relation = s.require<std::string>("relation");
  const auto top_k = s.get<std::size_t>("top_k", 10);
  const bool filtered = s.get("filtered", true);
  const bool use_components = s.get("use_components", true);
  if (has_head == has_tail) s.fail(has_head ? "tail" : "head", "exactly one of complete.head and complete.tail must be set");
  require_positive(s, "top_k", top_k);
  s.finish();
  const fs::path kg_dir = cfg.input("kg");
  const fs::path ckpt_path = cfg.path("checkpoints") / (use_components ? "kge_msre.json" : "kge.json");
  const fs::path out_dir = cfg.path("output");
  const auto ckpt_json = stage("load checkpoint", [&] { return read_json_file(ckpt_path); });
  const auto model = stage("load checkpoint", [&] { return KgeModel::from_json(ckpt_json); });
  const auto store = stage("load triples", [&] { return load_kg(kg_dir, &ckpt_json); });

  CompletionQuery q;
  if (!store.has_relation(relation)) throw ConfigError("config field 'complete.relation': unknown relation '" + relation + "'");
  q.relation = store.relation_id(relation);
  const std::string& given = has_head ? head : tail;
  if (!store.has_entity(given))
    throw ConfigError(std::string("config field 'complete.") + (has_head ? "head" : "tail") + "': unknown entity '" + given + "'");
  (has_head ? q.head : q.tail) = store.entity_id(given);

  const auto scorer = use_components ? msre_scorer(model) : plain_scorer(model);
  const auto ranked = stage("complete", [&] { return complete(store, scorer, q, filtered); });
  nlohmann::json results = nlohmann::json::array();
  for (std::size_t i = 0; i < ranked.size() && i < top_k; ++i)
    results.push_back({{"rank", i + 1}, {"entity", store.entity_name(ranked[i].entity)}, {"score", ranked[i].score}});
  nlohmann::json query = {{"relation", relation}, {has_head ? "head" : "tail", given}, {"filtered", filtered},
                          {"use_components", use_components}};
  sum.metrics = {{"query", query}, {"candidates", ranked.size()}, {"results", results}};
  stage("write results", [&] {
    write_artifact(sum, out_dir / "completion.json", [&](std::ostream& o) { o << sum.metrics.dump(2) << '\n'; });
    return 0;
  });
  return sum;
}

inline Summary cmd_build_kg(const RunConfig& cfg) {
  Summary sum{"build-kg"};
  Section s = cfg.section("build");
  const auto format_name = s.get<std::string>("format", "jsonl");
  pipeline::ExportFormat format;
  try {
    format = pipeline::export_format_from(format_name);
  } catch (const ArgumentError&) {
    s.fail("format", "must be \"jsonl\" or \"bulk_csv\"");
  }
  s.finish();
  const auto schema = load_schema(cfg);
  const fs::path docs_path = cfg.input("documents");
  const fs::path rules_path = cfg.input("rules");
  const fs::path ckpt_dir = cfg.path("checkpoints");
  const fs::path out_dir = cfg.path("output");
  const auto rules = stage("load rules", [&] { return pipeline::RuleSet::load(rules_path.string()); });
  const auto docs = stage("load documents", [&] { return read_documents(docs_path); });
  const auto ner = stage("load NER checkpoint", [&] { return NerModel::from_json(read_json_file(ckpt_dir / "ner.json")); });
  const auto re = stage("load RE checkpoint", [&] { return RelationModel::from_json(read_json_file(ckpt_dir / "re.json")); });

  std::vector<pipeline::CaseGraph> graphs;
  std::size_t nodes = 0, edges = 0, warnings = 0, sentences = 0, ambiguous = 0;
  for (const auto& d : docs) {
    pipeline::BuildResult r;
    try {
      r = pipeline::build_case_graph(d, ner, re, rules, schema);
    } catch (const pipeline::StepError& e) {
      throw StageError("document '" + d.id + "'", e.what());
    }
    nodes += r.graph.nodes.size();
    edges += r.graph.edges.size();
    warnings += r.graph.warnings.size();
    sentences += r.sentences.size();
    for (const auto& fs_ : r.sentences) ambiguous += fs_.ambiguous;
    graphs.push_back(std::move(r.graph));
  }
  stage("export", [&] {
    write_artifact(sum, out_dir / "graphs.jsonl", [&](std::ostream& o) { pipeline::write_graphs_jsonl(o, graphs); });
    for (auto& p : pipeline::export_graphs(graphs, (out_dir / "export").string(), format)) sum.artifacts.push_back(p);
    return 0;
  });
  sum.metrics = {{"documents", docs.size()}, {"sentences", sentences}, {"ambiguous_sentences", ambiguous},
                 {"nodes", nodes},          {"edges", edges},         {"warnings", warnings}};
  return sum;
}

inline std::vector<pipeline::CaseGraph> read_graph_file(const fs::path& p) {
  auto in = open_input(p);
  return pipeline::read_graphs_jsonl(in);
}

inline Summary cmd_eval(const RunConfig& cfg) {
  Summary sum{"eval"};
  Section s = cfg.section("eval");
  const auto task = s.get<std::string>("task", "graph");
  if (task != "graph" && task != "ner" && task != "re") s.fail("task", "must be \"graph\", \"ner\" or \"re\"");
  s.finish();
  sum.metrics["task"] = task;
  if (task == "graph") {
    const auto gold_path = cfg.input("gold_graphs");
    const auto pred_path = cfg.input("predicted_graphs");
    auto gold = stage("load gold graphs", [&] { return read_graph_file(gold_path); });
    auto pred = stage("load predicted graphs", [&] { return read_graph_file(pred_path); });
    auto by_id = [](std::vector<pipeline::CaseGraph>& gs) {
      std::sort(gs.begin(), gs.end(), [](const auto& a, const auto& b) { return a.document_id < b.document_id; });
    };
    by_id(gold);
    by_id(pred);
    stage("align graphs", [&] {
      if (gold.size() != pred.size()) throw DataError("gold has " + std::to_string(gold.size()) + " graphs, predictions " + std::to_string(pred.size()));
      for (std::size_t i = 0; i < gold.size(); ++i)
        if (gold[i].document_id != pred[i].document_id)
          throw DataError("no prediction for document '" + gold[i].document_id + "'");
      return 0;
    });
    sum.metrics["documents"] = gold.size();
    sum.metrics["graph"] = prf_json(pipeline::graph_match(gold, pred));
    std::size_t exact = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) exact += pipeline::graph_match(gold[i], pred[i]).f1 == 1.0;
    sum.metrics["exact_documents"] = exact;
    return sum;
  }
  const auto schema = load_schema(cfg);
  const fs::path corpus_dir = cfg.input("corpus");
  const fs::path ckpt_dir = cfg.path("checkpoints");
  if (task == "ner") {
    const auto model = stage("load NER checkpoint", [&] { return NerModel::from_json(read_json_file(ckpt_dir / "ner.json")); });
    const auto test = stage("load test corpus", [&] {
      auto in = open_input(corpus_dir / "ner_test.jsonl");
      return read_ner_corpus(in);
    });
    sum.metrics["sentences"] = test.size();
    sum.metrics["span"] = span_json(stage("evaluate", [&] { return evaluate_ner(model, test); }));
    return sum;
  }
  const auto model = stage("load RE checkpoint", [&] { return RelationModel::from_json(read_json_file(ckpt_dir / "re.json")); });
  const auto test = stage("load test instances", [&] {
    auto in = open_input(corpus_dir / "re_test.jsonl");
    auto v = read_relation_instances(in);
    validate_relation_corpus(v, schema);
    return v;
  });
  const auto ev = stage("evaluate", [&] { return evaluate_re(model, test, schema); });
  sum.metrics["instances"] = test.size();
  sum.metrics["macro"] = macro_json(ev.with_other);
  sum.metrics["macro_without_other"] = macro_json(ev.without_other);
  return sum;
}

// ---------------------------------------------------------------------------
// Dispatch

inline const std::map<std::string, std::function<Summary(const RunConfig&)>>& command_table() {
  static const std::map<std::string, std::function<Summary(const RunConfig&)>> table = {
      {"gen-corpus", cmd_gen_corpus},   {"train-ner", cmd_train_ner},
      {"train-re", cmd_train_re},       {"train-kge", cmd_train_kge},
      {"derive-components", cmd_derive_components}, {"complete", cmd_complete},
      {"build-kg", cmd_build_kg},       {"eval", cmd_eval}};
  return table;
}

struct Outcome {
  Summary summary;
  int exit_code = 0;
};

/// Runs one command end to end. Never throws: failures become an error
/// summary with a nonzero exit code (2 for configuration problems).
inline Outcome execute(const std::string& command, const std::string& config_path,
                       const std::vector<std::string>& overrides = {}) {
  Outcome out;
  out.summary.command = command;
  try {
    const auto& table = command_table();
    auto it = table.find(command);
    if (it == table.end()) throw ConfigError("unknown command '" + command + "'");
    const RunConfig cfg = RunConfig::load(config_path, overrides);
    out.summary = it->second(cfg);
  } catch (const ConfigError& e) {
    out.summary.ok = false;
    out.summary.error = e.what();
    out.exit_code = 2;
  } catch (const std::exception& e) {
    out.summary.ok = false;
    out.summary.error = e.what();
    out.exit_code = 1;
  }
  if (!out.summary.ok) {
    out.summary.metrics = nlohmann::json::object();
    out.summary.artifacts.clear();
  }
  return out;
}

}  // namespace casegraph::cli
