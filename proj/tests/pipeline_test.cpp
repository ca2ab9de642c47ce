#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "casegraph/pipeline/build.hpp"
#include "casegraph/pipeline/synthetic.hpp"

using namespace casegraph;
using namespace casegraph::pipeline;

namespace {

const std::string kData = CASEGRAPH_SOURCE_DIR "/data";

const RelationSchema& schema() {
  static const RelationSchema s = [] {
    std::ifstream in(kData + "/example_schema.json");
    return RelationSchema::from_json(nlohmann::json::parse(in));
  }();
  return s;
}

const RuleSet& rules() {
  static const RuleSet r = RuleSet::load(kData + "/example_rules.json");
  return r;
}

TagSet tags() { return TagSet(schema().entity_types()); }

const std::vector<SyntheticDocument>& corpus() {
  static const auto docs = generate_synthetic_corpus(11, 60, schema(), tags());
  return docs;
}

struct Models {
  NerModel ner;
  RelationModel re;
};

/// Small models trained on the first 50 documents of corpus().
const Models& models() {
  static const Models m = [] {
    std::vector<SyntheticDocument> train(corpus().begin(), corpus().begin() + 50);
    NerConfig nc;
    nc.encoder = {16, 48, 5, 2};
    nc.learning_rate = 3e-3;
    nc.epochs = 6;
    ReConfig rc;
    rc.encoder = {16, 48, 5, 2};
    rc.relation_dim = 48;
    rc.entity_type_dim = 8;
    rc.learning_rate = 3e-3;
    rc.epochs = 8;
    Rng rng(5);
    auto inst = generate_candidates(relation_sentences(train), schema(), CandidateMode::Training, 0.5, rng);
    return Models{train_ner(ner_sentences(train), tags(), nc), train_re(inst, schema(), rc)};
  }();
  return m;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::string temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("casegraph_pipeline_" + name);
  std::filesystem::remove_all(dir);
  return dir.string();
}

const char* kTwoPlaintiffs =
    "Civil Judgment of First Instance on a Motor Vehicle Traffic Accident Liability Dispute\n"
    "Case No. (2019) Su 0102 Min Chu 1234\n"
    "Xuanwu District People's Court of Nanjing\n"
    "Plaintiff: Li Wei, male, residing in Nanjing.\n"
    "Plaintiff: Wang Fang, female, residing in Nanjing.\n"
    "Agent ad litem: Zhao Lei, lawyer.\n"
    "Defendant: Zhang Min, male, residing in Suzhou.\n"
    "After trial, the court found the following facts:\n"
    "On May 3 2019, the defendant was driving small car AB-1234 along Zhongshan Road. The plaintiff suffered head "
    "injuries.\n"
    "The court holds that the claim is supported.\n";

}  // namespace

// ---------------------------------------------------------------------------
// Rules and segmentation

TEST(Segmentation, SyntheticDocumentHasAllStructuredTypes) {
  const auto& d = corpus().front();
  const auto segs = segment_document(d.document, rules());
  std::set<SegmentType> types;
  for (const auto& s : segs) types.insert(s.type);
  for (auto t : {SegmentType::Title, SegmentType::CaseNumber, SegmentType::Court, SegmentType::PartyInfo,
                 SegmentType::Facts})
    EXPECT_TRUE(types.count(t)) << to_string(t);
  EXPECT_FALSE(facts_text(d.document, segs, rules()).empty());
  EXPECT_EQ(segs, d.segments);
}

TEST(Segmentation, NoRuleHitGivesOneOtherSegment) {
  CaseDocument doc{"x", "nothing here\nmatches any rule\n"};
  const auto segs = segment_document(doc, rules());
  ASSERT_EQ(segs.size(), 1u);
  EXPECT_EQ(segs[0].type, SegmentType::Other);
  EXPECT_EQ(segs[0].begin, 0u);
  EXPECT_EQ(segs[0].end, doc.text.size());
}

TEST(Segmentation, HigherPriorityWinsDeterministically) {
  auto make = [](int title_priority, int court_priority) {
    return RuleSet::from_json({{"segments",
                                {{{"target", "title"}, {"pattern", "Court"}, {"priority", title_priority}},
                                 {{"target", "court"}, {"pattern", "People's Court"}, {"priority", court_priority}}}}});
  };
  CaseDocument doc{"x", "Xuanwu People's Court\n"};
  for (int run = 0; run < 3; ++run) {
    EXPECT_EQ(segment_document(doc, make(1, 2)).at(0).type, SegmentType::Court);
    EXPECT_EQ(segment_document(doc, make(3, 2)).at(0).type, SegmentType::Title);
  }
}

TEST(Segmentation, PartitionProperty) {
  std::mt19937_64 rng(21);
  const std::vector<std::string> pool = {"Civil Judgment of X", "Case No. 12", "A People's Court", "Plaintiff: A, b.",
                                         "After trial, the court found the following facts:", "free text.", "",
                                         "The court holds that x.", "more facts here", "\r"};
  for (int trial = 0; trial < 200; ++trial) {
    std::string text;
    const int lines = 1 + static_cast<int>(rng() % 12);
    for (int i = 0; i < lines; ++i) {
      text += pool[rng() % pool.size()];
      if (i + 1 < lines || rng() % 2) text += '\n';
    }
    if (text.empty()) text = "x";
    CaseDocument doc{"p", text};
    const auto segs = segment_document(doc, rules());
    ASSERT_FALSE(segs.empty());
    EXPECT_EQ(segs.front().begin, 0u);
    EXPECT_EQ(segs.back().end, text.size());
    for (std::size_t i = 1; i < segs.size(); ++i) {
      EXPECT_EQ(segs[i].begin, segs[i - 1].end);
      EXPECT_NE(segs[i].type, segs[i - 1].type);
    }
    for (const auto& s : segs) EXPECT_LT(s.begin, s.end);
  }
}

TEST(Segmentation, Errors) {
  RuleSet empty;
  EXPECT_THROW(segment_document({"x", "text"}, empty), ArgumentError);
  EXPECT_THROW(segment_document({"x", ""}, rules()), DataError);
  EXPECT_THROW(RuleSet::from_json({{"segments", nlohmann::json::array()}}), ArgumentError);
  EXPECT_THROW(RuleSet::from_json({{"segments", {{{"target", "title"}, {"pattern", "(unclosed"}}}}}), DataError);
  EXPECT_THROW(RuleSet::from_json({{"segments",
                                    {{{"target", "title"}, {"pattern", "a"}, {"priority", 1}},
                                     {{"target", "title"}, {"pattern", "b"}, {"priority", 1}}}}}),
               DataError);
  EXPECT_THROW(RuleSet::from_json({{"segments", {{{"target", "preamble"}, {"pattern", "a"}}}}}), DataError);
  EXPECT_THROW(RuleSet::load("/nonexistent/rules.json"), DataError);
}

// ---------------------------------------------------------------------------
// Structured extraction

TEST(StructuredExtraction, TwoPlaintiffsOneDefendant) {
  CaseDocument doc{"t", kTwoPlaintiffs};
  const auto info = extract_structured(doc, segment_document(doc, rules()), rules());
  ASSERT_EQ(info.parties.size(), 3u);
  EXPECT_EQ(info.parties[0].name, "Li Wei");
  EXPECT_EQ(info.parties[0].role, "plaintiff");
  EXPECT_EQ(info.parties[1].name, "Wang Fang");
  EXPECT_EQ(info.parties[1].role, "plaintiff");
  EXPECT_EQ(info.parties[2].name, "Zhang Min");
  EXPECT_EQ(info.parties[2].role, "defendant");
  EXPECT_EQ(info.parties[2].info, "male, residing in Suzhou.");
  EXPECT_EQ(info.case_number, "(2019) Su 0102 Min Chu 1234");
  EXPECT_EQ(info.court, "Xuanwu District People's Court of Nanjing");
  EXPECT_TRUE(info.missing_fields.empty());
}

TEST(StructuredExtraction, MatchesGeneratorTruth) {
  for (const auto& d : corpus()) {
    const auto info = extract_structured(d.document, segment_document(d.document, rules()), rules());
    EXPECT_EQ(info.parties, d.info.parties);
    EXPECT_EQ(info.title, d.info.title);
    EXPECT_EQ(info.case_number, d.info.case_number);
    EXPECT_EQ(info.court, d.info.court);
    EXPECT_EQ(info.aliases, d.info.aliases);
    EXPECT_TRUE(info.missing_fields.empty());
  }
}

TEST(StructuredExtraction, EmptyPartySegmentIsReportedMissing) {
  CaseDocument doc{"t", "Civil Judgment of X\nCase No. (2019) Su 0102 Min Chu 1\nA People's Court\n"};
  const auto info = extract_structured(doc, segment_document(doc, rules()), rules());
  EXPECT_TRUE(info.parties.empty());
  EXPECT_EQ(info.missing_fields, std::vector<std::string>{"parties"});
}

TEST(StructuredExtraction, MalformedCaseNumberIsReportedMissing) {
  CaseDocument doc{"t", "Civil Judgment of X\nCase No. 2019-garbled\nA People's Court\nPlaintiff: Li Wei, male.\n"};
  const auto info = extract_structured(doc, segment_document(doc, rules()), rules());
  EXPECT_TRUE(info.case_number.empty());
  EXPECT_EQ(info.missing_fields, std::vector<std::string>{"case_number"});
}

TEST(StructuredExtraction, PartyAliasIsCaptured) {
  CaseDocument doc{"t",
                   "Defendant: Ping An Property Insurance Company Nanjing Branch (hereinafter referred to as \"Ping An "
                   "Nanjing\"), domiciled in Nanjing.\n"};
  const auto info = extract_structured(doc, segment_document(doc, rules()), rules());
  ASSERT_EQ(info.parties.size(), 1u);
  EXPECT_EQ(info.parties[0].name, "Ping An Property Insurance Company Nanjing Branch");
  EXPECT_EQ(info.parties[0].aliases, std::vector<std::string>{"Ping An Nanjing"});
  EXPECT_EQ(info.parties[0].info, "domiciled in Nanjing.");
  ASSERT_EQ(info.aliases.size(), 1u);
  EXPECT_EQ(info.aliases[0].first, "Ping An Property Insurance Company Nanjing Branch");
}

// ---------------------------------------------------------------------------
// Preprocessing

TEST(Preprocessing, SolePlaintiffIsSubstituted) {
  CaseInfo info;
  info.parties.push_back({"plaintiff", "A. Smith", "", "", {}});
  const auto out = preprocess_facts("The plaintiff drove north.", info, rules());
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].text, "A. Smith drove north.");
  EXPECT_EQ(out[0].original, "The plaintiff drove north.");
  EXPECT_FALSE(out[0].ambiguous);
}

TEST(Preprocessing, NoRoleWordsOnlySplits) {
  CaseInfo info;
  info.parties.push_back({"plaintiff", "A. Smith", "", "", {}});
  const auto out = preprocess_facts("Li Wei drove north. It rained!  Then what? done", info, rules());
  ASSERT_EQ(out.size(), 4u);
  EXPECT_EQ(out[0].text, "Li Wei drove north.");
  EXPECT_EQ(out[1].text, "It rained!");
  EXPECT_EQ(out[2].text, "Then what?");
  EXPECT_EQ(out[3].text, "done");
  for (const auto& s : out) EXPECT_EQ(s.text, s.original);
}

TEST(Preprocessing, SharedRoleIsLeftAndFlagged) {
  CaseInfo info;
  info.parties.push_back({"plaintiff", "Li Wei", "", "", {}});
  info.parties.push_back({"plaintiff", "Wang Fang", "", "", {}});
  info.parties.push_back({"defendant", "Zhang Min", "", "", {}});
  const auto out = preprocess_facts("The plaintiff was hit by the defendant.", info, rules());
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].text, "The plaintiff was hit by Zhang Min.");
  EXPECT_TRUE(out[0].ambiguous);
  EXPECT_EQ(out[0].unresolved_roles, std::vector<std::string>{"plaintiff"});
}

TEST(Preprocessing, InitialsDoNotEndSentences) {
  EXPECT_EQ(split_sentences("Seen by J. Doe today. Next one."),
            (std::vector<std::string>{"Seen by J. Doe today.", "Next one."}));
  EXPECT_EQ(split_sentences("Plate AB-1234.Next"), std::vector<std::string>{"Plate AB-1234.Next"});
  EXPECT_TRUE(split_sentences("  \n ").empty());
}

TEST(Preprocessing, MatchesGeneratorSentences) {
  for (const auto& d : corpus()) {
    const auto segs = segment_document(d.document, rules());
    const auto info = extract_structured(d.document, segs, rules());
    const auto out = preprocess_facts(facts_text(d.document, segs, rules()), info, rules());
    ASSERT_EQ(out.size(), d.sentences.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      EXPECT_EQ(out[i].original, d.sentences[i].original);
      EXPECT_EQ(tokenize(out[i].text), d.sentences[i].tokens);
      EXPECT_FALSE(out[i].ambiguous);
    }
  }
}

// ---------------------------------------------------------------------------
// Extraction steps

TEST(RunNer, EmptyInputGivesEmptyOutput) { EXPECT_TRUE(run_ner({}, models().ner, tags()).empty()); }

TEST(RunNer, TagSetMismatchNamesVersions) {
  try {
    run_ner({"x"}, models().ner, TagSet({"NP", "MV"}));
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find(kNerCheckpointVersion), std::string::npos);
    EXPECT_NE(what.find("[NP,MV]"), std::string::npos);
  }
}

TEST(RunNer, FindsPlantedVehicleAndPerson) {
  const auto out = run_ner({"On May 3 2019, Li Wei was driving small car AB-1234 along Zhongshan Road."}, models().ner, tags());
  ASSERT_EQ(out.size(), 1u);
  std::set<std::pair<std::string, std::string>> found;
  for (const auto& m : out[0].mentions) found.emplace(m.type, m.text);
  EXPECT_TRUE(found.count({"NP", "Li Wei"}));
  EXPECT_TRUE(found.count({"MV", "small car AB-1234"}));
}

TEST(RunRelationExtraction, NoAdmissiblePairsGivesNoTriples) {
  SentenceEntities s{tokenize("Li Wei met Wang Fang ."), {{0, 2, "NP", "Li Wei"}, {3, 5, "NP", "Wang Fang"}}};
  EXPECT_TRUE(run_relation_extraction({s}, models().re, schema()).empty());
}

TEST(RunRelationExtraction, PlantedDrivingIsPredicted) {
  SentenceEntities s{tokenize("On May 3 2019 , Li Wei was driving small car AB-1234 along Zhongshan Road ."),
                     {{1, 4, "TIME", "May 3 2019"}, {5, 7, "NP", "Li Wei"}, {9, 12, "MV", "small car AB-1234"},
                      {13, 15, "LOC", "Zhongshan Road"}}};
  const auto triples = run_relation_extraction({s}, models().re, schema());
  bool driving = false;
  for (const auto& t : triples) driving |= t.relation == "Driving" && t.head.text == "Li Wei" && t.tail.type == "MV";
  EXPECT_TRUE(driving);
}

TEST(RunRelationExtraction, OtherPredictionsAreDropped) {
  std::vector<SentenceEntities> input;
  for (const auto& d : corpus())
    for (const auto& s : d.sentences) input.push_back({s.tokens, s.mentions});
  const auto triples = run_relation_extraction(input, models().re, schema());
  std::vector<SentenceMentions> sm;
  for (const auto& s : input) sm.push_back({s.tokens, s.mentions, {}});
  Rng rng(0);
  std::size_t substantive = 0;
  for (const auto& inst : generate_candidates(sm, schema(), CandidateMode::Inference, 1.0, rng))
    substantive += models().re.predict(inst) != schema().other() ? 1 : 0;
  EXPECT_EQ(triples.size(), substantive);
  for (const auto& t : triples) {
    EXPECT_NE(t.relation, schema().other());
    EXPECT_GT(t.confidence, 0.0);
    EXPECT_LE(t.confidence, 1.0);
  }
}

TEST(RunRelationExtraction, SchemaMismatchIsAnError) {
  RelationSchema other(schema().entity_types(), {{"Driving", 1, {{"NP", "MV"}}}}, "Other", true);
  EXPECT_THROW(run_relation_extraction({}, models().re, other), DataError);
}

// ---------------------------------------------------------------------------
// Fusion

namespace {

FactTriple triple(const std::string& ht, const std::string& h, const std::string& rel, const std::string& tt,
                  const std::string& t, std::size_t sentence = 0, double confidence = 0.9) {
  return {sentence, {0, 1, ht, h}, rel, {0, 1, tt, t}, confidence};
}

const GraphNode* node_with_alias(const CaseGraph& g, const std::string& alias) {
  for (const auto& n : g.nodes)
    if (std::find(n.aliases.begin(), n.aliases.end(), alias) != n.aliases.end()) return &n;
  return nullptr;
}

}  // namespace

TEST(Fusion, AliasRuleMergesSurfaces) {
  RuleSet r = rules();
  r.organization = CompiledPattern("(Co\\.|Company)$");
  const std::string text = "The car was owned by X Transport Co. (hereinafter \"X Co.\") at the time.";
  r.aliases = {CompiledPattern("([A-Z][A-Za-z0-9&.'-]*(?: [A-Z][A-Za-z0-9&.'-]*)*) \\(hereinafter \"([^\"]+)\"\\)")};
  CaseInfo info;
  info.aliases = find_aliases(text, r);
  ASSERT_EQ(info.aliases.size(), 1u);
  EXPECT_EQ(info.aliases[0], std::make_pair(std::string("X Transport Co."), std::string("X Co.")));
  const auto g = fuse_knowledge("d", info, {triple("NNP", "X Co.", "Owns", "MV", "car AB-1234")}, {text}, r);
  const auto* n = node_with_alias(g, "X Co.");
  ASSERT_NE(n, nullptr);
  EXPECT_EQ(n->aliases, (std::vector<std::string>{"X Co.", "X Transport Co."}));
  g.validate();
}

TEST(Fusion, SharedPlateMerges) {
  const auto g = fuse_knowledge("d", {},
                                {triple("NP", "Li Wei", "Driving", "MV", "small car AB-1234", 0),
                                 triple("MV", "vehicle AB-1234", "Accident", "NMV", "bicycle", 1)},
                                {"s0", "s1"}, rules());
  const auto* a = node_with_alias(g, "small car AB-1234");
  ASSERT_NE(a, nullptr);
  EXPECT_EQ(a, node_with_alias(g, "vehicle AB-1234"));
  EXPECT_EQ(a->id, "MV|vehicle AB-1234");
  EXPECT_EQ(g.edges.size(), 2u);
}

TEST(Fusion, SameSurfaceDifferentTypesStaySeparate) {
  const auto g = fuse_knowledge("d", {},
                                {triple("NP", "Jinling", "Driving", "MV", "Jinling"), triple("NP", "Li Wei", "Owns", "MV", "bus AB-1234")},
                                {"s0"}, rules());
  EXPECT_NE(g.node("NP|Jinling"), nullptr);
  EXPECT_NE(g.node("MV|Jinling"), nullptr);
  ASSERT_EQ(g.warnings.size(), 1u);
  EXPECT_NE(g.warnings[0].find("Jinling"), std::string::npos);
}

TEST(Fusion, PartiesAlignToMentionsAndCaseNodeCarriesAttributes) {
  CaseDocument doc{"t", kTwoPlaintiffs};
  const auto info = extract_structured(doc, segment_document(doc, rules()), rules());
  const auto g = fuse_knowledge("t", info, {triple("NP", "Zhang Min", "Driving", "MV", "small car AB-1234")}, {"s0"},
                                rules());
  const auto* c = g.node("Case|(2019) Su 0102 Min Chu 1234");
  ASSERT_NE(c, nullptr);
  EXPECT_EQ(c->attributes.at("court"), "Xuanwu District People's Court of Nanjing");
  const auto* z = g.node("NP|Zhang Min");
  ASSERT_NE(z, nullptr);
  EXPECT_EQ(z->attributes.at("role"), "defendant");
  EXPECT_EQ(g.nodes.size(), 5u);  // case, three parties, vehicle
  std::size_t party_edges = 0;
  for (const auto& e : g.edges) party_edges += e.source == c->id ? 1 : 0;
  EXPECT_EQ(party_edges, 3u);
  g.validate();
}

TEST(Fusion, AliasMergingIsAnEquivalenceClosure) {
  // a~b by alias, b~c by plate: all three share one node
  CaseInfo info;
  info.aliases = {{"Hengtong truck AB-1234", "the Hengtong truck"}};
  const auto g = fuse_knowledge("d", info,
                                {triple("NP", "Li Wei", "Driving", "MV", "the Hengtong truck", 0),
                                 triple("NP", "Li Wei", "Owns", "MV", "Hengtong truck AB-1234", 1),
                                 triple("MV", "vehicle AB-1234", "Accident", "NP", "Wang Fang", 2)},
                                {"s0", "s1", "s2"}, rules());
  const auto* n = node_with_alias(g, "the Hengtong truck");
  ASSERT_NE(n, nullptr);
  EXPECT_EQ(n, node_with_alias(g, "Hengtong truck AB-1234"));
  EXPECT_EQ(n, node_with_alias(g, "vehicle AB-1234"));
}

TEST(Fusion, IdempotentOnGeneratedGraphs) {
  std::mt19937_64 rng(4);
  const std::vector<std::pair<std::string, std::string>> pool = {
      {"NP", "Li Wei"},          {"NP", "Wang Fang"},        {"MV", "bus AB-1234"},     {"MV", "vehicle AB-1234"},
      {"MV", "van CD-5678"},     {"NMV", "bicycle"},         {"NP", "bus AB-1234"},     {"NNP", "Ping An Nanjing"},
      {"NNP", "Ping An Property Insurance Company Nanjing Branch"}, {"LIAB", "full responsibility"}};
  const std::vector<std::string> relations = {"Driving", "Owns", "Accident", "Responsible"};
  for (int trial = 0; trial < 100; ++trial) {
    CaseInfo info;
    if (rng() % 2) info.parties.push_back({"plaintiff", "Li Wei", "male.", "Plaintiff: Li Wei, male.", {}});
    if (rng() % 2)
      info.parties.push_back({"defendant", "Ping An Property Insurance Company Nanjing Branch", "", "Defendant: Ping An",
                              {"Ping An Nanjing"}});
    if (rng() % 2) info.aliases = {{"bus AB-1234", "the bus"}};
    std::vector<FactTriple> triples;
    const int n = static_cast<int>(rng() % 8);
    for (int i = 0; i < n; ++i) {
      const auto& h = pool[rng() % pool.size()];
      const auto& t = pool[rng() % pool.size()];
      triples.push_back(triple(h.first, h.second, relations[rng() % relations.size()], t.first, t.second,
                               static_cast<std::size_t>(i), 0.5 + 0.01 * static_cast<double>(rng() % 50)));
    }
    std::vector<std::string> sources;
    for (int i = 0; i < n; ++i) sources.push_back("s" + std::to_string(i));
    const auto once = fuse_knowledge("d", info, triples, sources, rules());
    once.validate();
    const auto twice = fuse_graph(once, rules());
    EXPECT_EQ(once, twice) << "trial " << trial;
  }
  for (const auto& d : corpus()) EXPECT_EQ(fuse_graph(d.graph, rules()), d.graph);
}

TEST(Fusion, GoldTriplesReproduceGoldGraph) {
  for (const auto& d : corpus()) {
    std::vector<FactTriple> triples;
    std::vector<std::string> sources;
    for (std::size_t s = 0; s < d.sentences.size(); ++s) {
      sources.push_back(d.sentences[s].original);
      for (const auto& [pair, rel] : d.sentences[s].relations)
        triples.push_back({s, d.sentences[s].mentions[pair.first], rel, d.sentences[s].mentions[pair.second], 1.0});
    }
    const auto g = fuse_knowledge(d.document.id, d.info, triples, sources, rules());
    EXPECT_DOUBLE_EQ(graph_match(d.graph, g).f1, 1.0) << d.document.id;
    EXPECT_TRUE(g.warnings.empty());
  }
}

TEST(GraphMatch, Examples) {
  const auto& g = corpus().front().graph;
  EXPECT_DOUBLE_EQ(graph_match(g, g).f1, 1.0);
  CaseGraph missing = g;
  missing.edges.pop_back();
  const auto s = graph_match(g, missing);
  EXPECT_DOUBLE_EQ(s.precision, 1.0);
  EXPECT_LT(s.recall, 1.0);
  EXPECT_DOUBLE_EQ(graph_match(CaseGraph{}, CaseGraph{}).f1, 1.0);
}

// ---------------------------------------------------------------------------
// Export

namespace {

CaseGraph golden_graph() {
  CaseGraph g;
  g.document_id = "case-7";
  g.sources = {"Li Wei was driving small car AB-1234.", "Defendant: Li Wei, male, \"Nanjing\"."};
  g.nodes = {{"Case|(2019) Su 0102 Min Chu 7", "Case", {{"court", "Xuanwu District People's Court, Nanjing"}}, {}},
             {"MV|small car AB-1234", "MV", {{"name", "small car AB-1234"}}, {"small car AB-1234"}},
             {"NP|Li Wei", "NP", {{"name", "Li Wei"}, {"role", "defendant"}}, {"Li Wei", "the defendant"}}};
  g.edges = {{"Case|(2019) Su 0102 Min Chu 7", "NP|Li Wei", "HasDefendant", "party_info", 1, 1.0},
             {"NP|Li Wei", "MV|small car AB-1234", "Driving", "facts", 0, 0.987654321}};
  return g;
}

}  // namespace

TEST(Export, GoldenFiles) {
  const auto g = golden_graph();
  g.validate();
  for (const auto& [format, stem] : {std::pair{ExportFormat::BulkCsv, std::string("csv")}, {ExportFormat::Jsonl, "jsonl"}}) {
    const auto dir = temp_dir("golden_" + stem);
    const auto paths = export_graph(g, dir, format);
    ASSERT_EQ(paths.size(), 2u);
    for (const auto& p : paths) {
      const auto name = std::filesystem::path(p).filename().string();
      EXPECT_EQ(read_file(p), read_file(CASEGRAPH_TEST_DATA "/golden/" + name)) << name;
    }
  }
}

TEST(Export, EmptyGraphWritesHeadersOnly) {
  const auto dir = temp_dir("empty");
  export_graph(CaseGraph{}, dir, ExportFormat::BulkCsv);
  EXPECT_EQ(read_file(dir + "/nodes.csv"), "id:ID,type:LABEL,name,aliases:string[],attributes\n");
  EXPECT_EQ(read_file(dir + "/edges.csv"), ":START_ID,:END_ID,:TYPE,confidence:double,segment,sentence:int,evidence\n");
  export_graph(CaseGraph{}, dir, ExportFormat::Jsonl);
  EXPECT_EQ(read_file(dir + "/nodes.jsonl"), "");
}

TEST(Export, ByteStable) {
  for (auto format : {ExportFormat::BulkCsv, ExportFormat::Jsonl}) {
    const auto a = export_graphs({corpus()[0].graph, corpus()[1].graph}, temp_dir("stable_a"), format);
    const auto b = export_graphs({corpus()[0].graph, corpus()[1].graph}, temp_dir("stable_b"), format);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(read_file(a[i]), read_file(b[i]));
  }
}

TEST(Export, SeveralGraphsGetScopedIds) {
  const auto dir = temp_dir("scoped");
  export_graphs({corpus()[0].graph, corpus()[1].graph}, dir, ExportFormat::BulkCsv);
  std::istringstream in(read_file(dir + "/nodes.csv"));
  std::string line;
  std::getline(in, line);
  std::set<std::string> ids;
  while (std::getline(in, line)) EXPECT_TRUE(ids.insert(line.substr(0, line.find(','))).second) << line;
  EXPECT_EQ(ids.size(), corpus()[0].graph.nodes.size() + corpus()[1].graph.nodes.size());
}

TEST(Export, UnwritablePathIsAnError) {
  const auto file = temp_dir("blocker");
  std::ofstream(file) << "x";
  EXPECT_THROW(export_graph(golden_graph(), file + "/sub", ExportFormat::Jsonl), IoError);
  EXPECT_THROW(export_format_from("graphml"), ArgumentError);
}

// ---------------------------------------------------------------------------
// End to end

TEST(BuildCaseGraph, HeldOutDocumentsMatchGold) {
  std::vector<CaseGraph> gold, predicted;
  for (std::size_t i = 50; i < corpus().size(); ++i) {
    const auto& d = corpus()[i];
    gold.push_back(d.graph);
    predicted.push_back(build_case_graph(d.document, models().ner, models().re, rules(), schema()).graph);
  }
  EXPECT_GE(graph_match(gold, predicted).f1, 0.95);
}

TEST(BuildCaseGraph, ProvenanceResolvesToDocumentText) {
  for (std::size_t i = 50; i < corpus().size(); ++i) {
    const auto& d = corpus()[i];
    const auto g = build_case_graph(d.document, models().ner, models().re, rules(), schema()).graph;
    g.validate();
    for (const auto& e : g.edges) {
      const auto& src = g.sources.at(static_cast<std::size_t>(e.sentence));
      EXPECT_NE(d.document.text.find(src), std::string::npos) << src;
      EXPECT_TRUE(e.segment == "facts" || e.segment == "party_info");
    }
  }
}

TEST(BuildCaseGraph, Deterministic) {
  const auto& d = corpus().back();
  const auto a = build_case_graph(d.document, models().ner, models().re, rules(), schema()).graph;
  const auto b = build_case_graph(d.document, models().ner, models().re, rules(), schema()).graph;
  EXPECT_EQ(a, b);
}

TEST(BuildCaseGraph, EmptyFactsGiveCaseAndParties) {
  std::string text = kTwoPlaintiffs;
  text = text.substr(0, text.find("After trial"));
  const auto r = build_case_graph({"t", text}, models().ner, models().re, rules(), schema());
  EXPECT_EQ(r.graph.nodes.size(), 4u);
  EXPECT_EQ(r.graph.edges.size(), 3u);
  EXPECT_TRUE(r.sentences.empty());
}

TEST(BuildCaseGraph, EmptyTextFailsAtStepOne) {
  try {
    build_case_graph({"t", ""}, models().ner, models().re, rules(), schema());
    FAIL() << "expected StepError";
  } catch (const StepError& e) {
    EXPECT_EQ(e.step(), 1);
    EXPECT_NE(std::string(e.what()).find("step 1"), std::string::npos);
  }
}

// ---------------------------------------------------------------------------
// Synthetic corpus

TEST(SyntheticCorpus, SameSeedSameBytes) {
  const auto a = generate_synthetic_corpus(1, 1, schema(), tags());
  const auto b = generate_synthetic_corpus(1, 1, schema(), tags());
  EXPECT_EQ(to_json(a[0]).dump(), to_json(b[0]).dump());
  EXPECT_EQ(a[0].graph, b[0].graph);
  const auto c = generate_synthetic_corpus(2, 1, schema(), tags());
  EXPECT_NE(to_json(a[0]).dump(), to_json(c[0]).dump());
}

TEST(SyntheticCorpus, GoldPairsAreAllCandidates) {
  const auto sentences = relation_sentences(corpus());
  Rng rng(3);
  const auto inst = generate_candidates(sentences, schema(), CandidateMode::Training, 0.0, rng);
  std::size_t gold = 0;
  for (const auto& s : sentences) gold += s.gold.size();
  EXPECT_EQ(inst.size(), gold);
  for (const auto& i : inst) EXPECT_NE(i.label, schema().other());
}

TEST(SyntheticCorpus, GoldLabelsAreLegal) {
  EXPECT_NO_THROW(validate_ner_corpus(ner_sentences(corpus()), tags()));
  for (const auto& d : corpus()) d.graph.validate();
}

TEST(SyntheticCorpus, Errors) {
  EXPECT_THROW(generate_synthetic_corpus(1, 0, schema(), tags()), ArgumentError);
  EXPECT_THROW(generate_synthetic_corpus(1, 1, schema(), TagSet({"NP", "MV"})), DataError);
  RelationSchema narrow(schema().entity_types(), {{"Driving", 1, {{"NP", "MV"}}}}, "Other", true);
  EXPECT_THROW(generate_synthetic_corpus(1, 1, narrow, tags()), DataError);
}

TEST(ExampleSchema, SizesAndMarking) {
  EXPECT_TRUE(schema().is_example());
  EXPECT_EQ(schema().entity_types().size(), 20u);
  EXPECT_EQ(schema().num_substantive(), 9);
  EXPECT_EQ(schema().conceptual_triple_count(), 30u);
  for (const char* r : {"Driving", "Ride", "Accident", "Other"}) EXPECT_TRUE(schema().has_label(r));
  for (int v = 12; v <= 20; ++v) EXPECT_TRUE(tags().has_type("V" + std::to_string(v)));
}

// ---------------------------------------------------------------------------
// Segment evaluation

TEST(SegmentEval, PerfectPredictionScoresOne) {
  std::vector<std::vector<Segment>> gold;
  for (const auto& d : corpus()) gold.push_back(d.segments);
  const auto s = segment_eval(gold, gold);
  for (const auto& [type, score] : s.exact) EXPECT_DOUBLE_EQ(score.f1, 1.0) << type;
}

TEST(SegmentEval, SyntheticCorpusSegmentsPerfectly) {
  std::vector<std::vector<Segment>> gold, predicted;
  for (const auto& d : corpus()) {
    gold.push_back(d.segments);
    predicted.push_back(segment_document(d.document, rules()));
  }
  const auto s = segment_eval(gold, predicted);
  EXPECT_EQ(s.exact.size(), 6u);
  for (const auto& [type, score] : s.exact) EXPECT_DOUBLE_EQ(score.f1, 1.0) << type;
}

TEST(SegmentEval, ShiftedFactsFailExactButPassOverlap) {
  const std::vector<Segment> gold = {{SegmentType::Title, 0, 10}, {SegmentType::Facts, 10, 50}, {SegmentType::Other, 50, 60}};
  const std::vector<Segment> shifted = {{SegmentType::Title, 0, 10}, {SegmentType::Other, 10, 20}, {SegmentType::Facts, 20, 60}};
  const auto s = segment_eval({gold}, {shifted});
  EXPECT_DOUBLE_EQ(s.exact.at("facts").f1, 0.0);
  EXPECT_DOUBLE_EQ(s.overlap.at("facts").f1, 1.0);
  EXPECT_DOUBLE_EQ(s.exact.at("title").f1, 1.0);
  EXPECT_THROW(segment_eval({gold}, {}), ArgumentError);
}
