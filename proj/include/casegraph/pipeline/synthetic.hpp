#pragma once

// Template-generated English traffic-accident judgments with full gold
// annotation: segments, case info, labelled fact sentences and case graphs.

#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "casegraph/pipeline/graph.hpp"
#include "casegraph/pipeline/preprocess.hpp"

namespace casegraph::pipeline {

struct SyntheticSentence {
  std::string original;  // as written in the facts, role words included
  std::vector<std::string> tokens;  // after referent completion
  std::vector<EntityMention> mentions;
  std::map<std::pair<std::size_t, std::size_t>, std::string> relations;
};

struct SyntheticDocument {
  CaseDocument document;
  std::vector<Segment> segments;
  CaseInfo info;
  std::vector<SyntheticSentence> sentences;
  CaseGraph graph;
};

namespace synth {

inline const std::vector<std::string> kSurnames = {"Li", "Wang", "Zhang", "Liu", "Chen", "Yang", "Zhao", "Huang", "Zhou", "Wu",
                                                   "Xu", "Sun", "Hu", "Zhu", "Gao", "Lin", "He", "Guo", "Ma", "Luo"};
inline const std::vector<std::string> kGiven = {"Wei", "Fang", "Min", "Jing", "Qiang", "Lei", "Jun", "Yang", "Yong", "Yan",
                                                "Jie", "Tao", "Ming", "Chao", "Xiu", "Hua", "Ping", "Gang", "Hui", "Na"};
inline const std::vector<std::string> kCities = {"Nanjing", "Suzhou", "Wuxi", "Changzhou", "Yangzhou", "Nantong", "Xuzhou", "Taizhou"};
inline const std::vector<std::string> kDistricts = {"Xuanwu", "Qinhuai", "Jianye", "Gulou", "Qixia", "Yuhuatai", "Jiangning", "Pukou"};
inline const std::vector<std::string> kInsurers = {"Ping An", "Taiping", "Dadi", "Tianan", "Yongan", "Huatai", "Sunshine", "Guoshou"};
inline const std::vector<std::string> kFirms = {"Hengtong", "Yunda", "Xinglong", "Huayu", "Jinling", "Tongda", "Shunfeng", "Haitian"};
inline const std::vector<std::string> kMotorKinds = {"small car", "heavy truck", "light truck", "bus", "van", "sedan", "motorcycle", "minibus"};
inline const std::vector<std::string> kNonMotor = {"electric bicycle", "bicycle", "tricycle", "electric tricycle", "scooter"};
inline const std::vector<std::string> kRoads = {"Zhongshan", "Jiefang", "Renmin", "Heping", "Jianshe", "Xinhua", "Changjiang",
                                                "Huaihai", "Yingbin", "Longpan", "Hongwu", "Beijing"};
inline const std::vector<std::string> kRoadKinds = {"Road", "Street", "Avenue"};
inline const std::vector<std::string> kMonths = {"January", "February", "March", "April", "May", "June", "July",
                                                 "August", "September", "October", "November", "December"};
inline const std::vector<std::string> kInjuries = {"fractured left leg", "head injuries", "broken arm", "multiple rib fractures",
                                                   "spinal injury", "soft tissue contusions", "concussion", "fractured pelvis"};
inline const std::vector<std::string> kDeaths = {"died on the spot", "died after failed rescue", "died in hospital"};
inline const std::vector<std::string> kProperty = {"mobile phone", "laptop computer", "wrist watch", "roadside fence", "shop window"};
inline const std::vector<std::string> kPolicies = {"compulsory traffic insurance", "commercial third party liability insurance",
                                                   "third party liability insurance"};
inline const std::vector<std::string> kLiability = {"full responsibility", "primary responsibility", "secondary responsibility",
                                                    "equal responsibility", "no responsibility"};
inline const std::vector<std::pair<std::string, std::string>> kViolations = {
    {"V12", "speeding"},          {"V13", "drunk driving"},          {"V14", "running a red light"},
    {"V15", "driving without a license"}, {"V16", "failing to yield"}, {"V17", "illegal lane change"},
    {"V18", "overloading"},       {"V19", "fatigue driving"},        {"V20", "driving an unregistered vehicle"}};

inline const std::vector<std::string> kRequiredTypes = {"NP", "NNP", "MV", "NMV", "DEATH", "INJURY", "PROP", "LOC",
                                                        "TIME", "POLICY", "LIAB", "V12", "V13", "V14", "V15", "V16",
                                                        "V17", "V18", "V19", "V20"};

inline std::string detokenize(const std::vector<std::string>& tokens) {
  std::string s;
  for (const auto& t : tokens) {
    const bool attach = t == "," || t == "." || t == ":" || t == ";" || t == "!" || t == "?";
    if (!s.empty() && !attach) s += ' ';
    s += t;
  }
  return s;
}

struct Entity {
  std::string type;
  std::string surface;     // first-mention surface
  std::string later;       // surface for later mentions (may equal surface)
  int party = -1;          // index into CaseInfo::parties
  std::string role_word;   // written instead of the name when non-empty
};

/// Builds one sentence while tracking the written and the completed token
/// streams side by side.
class SentenceBuilder {
 public:
  SentenceBuilder& word(const std::string& text) {
    for (auto& t : tokenize(text)) {
      raw_.push_back(t);
      tokens_.push_back(std::move(t));
    }
    return *this;
  }

  /// Appends a mention of entity `e`; returns its mention index.
  std::size_t mention(int e, const Entity& ent, bool later, bool use_role_word, bool capitalise) {
    const std::string& surface = later ? ent.later : ent.surface;
    if (use_role_word && !ent.role_word.empty()) {
      std::string rw = ent.role_word;
      if (capitalise) rw[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(rw[0])));
      for (auto& t : tokenize(rw)) raw_.push_back(std::move(t));
    } else {
      for (auto& t : tokenize(surface)) raw_.push_back(std::move(t));
    }
    const auto toks = tokenize(surface);
    const std::size_t start = tokens_.size();
    tokens_.insert(tokens_.end(), toks.begin(), toks.end());
    mentions_.push_back({start, tokens_.size(), ent.type, join_tokens(tokens_, start, tokens_.size())});
    entity_of_.push_back(e);
    return mentions_.size() - 1;
  }

  void relate(std::size_t head, std::size_t tail, const std::string& rel) { relations_[{head, tail}] = rel; }

  SyntheticSentence finish() const {
    return {detokenize(raw_), tokens_, mentions_, relations_};
  }
  const std::vector<int>& entity_of() const { return entity_of_; }

 private:
  std::vector<std::string> raw_, tokens_;
  std::vector<EntityMention> mentions_;
  std::vector<int> entity_of_;
  std::map<std::pair<std::size_t, std::size_t>, std::string> relations_;
};

class DocumentWriter {
 public:
  DocumentWriter(std::uint64_t seed, std::size_t index) : rng_(seed * 0x9e3779b97f4a7c15ULL + index + 1), index_(index) {}

  SyntheticDocument write();

 private:
  std::size_t pick(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_); }
  bool chance(double p) { return std::bernoulli_distribution(p)(rng_); }
  template <class T>
  const T& pick_from(const std::vector<T>& v) { return v[pick(v.size())]; }

  /// Distinct draws per document so that different entities never share a surface.
  std::string fresh(const std::vector<std::string>& pool, const std::string& tag) {
    for (;;) {
      const auto& s = pick_from(pool);
      if (used_[tag].insert(s).second) return s;
    }
  }

  std::string person_name() {
    for (;;) {
      std::string n = pick_from(kSurnames) + " " + pick_from(kGiven);
      if (used_["name"].insert(n).second) return n;
    }
  }

  std::string plate() {
    for (;;) {
      std::string p;
      p += static_cast<char>('A' + pick(26));
      p += static_cast<char>('A' + pick(26));
      p += '-';
      for (int i = 0; i < 4; ++i) p += static_cast<char>('0' + pick(10));
      if (used_["plate"].insert(p).second) return p;
    }
  }

  std::string person_info() {
    const bool male = chance(0.5);
    return std::string(male ? "male" : "female") + ", born on " + std::to_string(1950 + pick(50)) + "-0" +
           std::to_string(1 + pick(9)) + "-1" + std::to_string(pick(10)) + ", residing in " + pick_from(kCities);
  }

  int add_party(const std::string& role, const std::string& name, const std::string& info, const std::string& alias,
                const std::string& type) {
    Party p;
    p.role = role;
    p.name = name;
    p.info = info;
    std::string line = (role == "plaintiff" ? "Plaintiff: " : "Defendant: ") + name;
    if (!alias.empty()) {
      line += " (hereinafter referred to as \"" + alias + "\")";
      p.aliases.push_back(alias);
      info_.aliases.emplace_back(name, alias);
    }
    line += ", " + info + ".";
    p.info += ".";
    p.line = line;
    info_.parties.push_back(p);
    Entity e{type, alias.empty() ? name : alias, alias.empty() ? name : alias,
             static_cast<int>(info_.parties.size()) - 1, {}};
    entities_.push_back(e);
    return static_cast<int>(entities_.size()) - 1;
  }

  int add_entity(const std::string& type, const std::string& surface, const std::string& later = {}) {
    entities_.push_back({type, surface, later.empty() ? surface : later, -1, {}});
    return static_cast<int>(entities_.size()) - 1;
  }

  void push(const SentenceBuilder& b) {
    sentences_.push_back(b.finish());
    sentence_entities_.push_back(b.entity_of());
  }

  Rng rng_;
  std::size_t index_;
  std::map<std::string, std::set<std::string>> used_;
  CaseInfo info_;
  std::vector<Entity> entities_;
  std::vector<SyntheticSentence> sentences_;
  std::vector<std::vector<int>> sentence_entities_;
};

inline SyntheticDocument DocumentWriter::write() {
  // cast of the story
  const int plaintiffs = chance(0.3) ? 2 : 1;
  const std::string insurer_brand = pick_from(kInsurers), city = pick_from(kCities);
  const bool has_insurer = chance(0.6);
  const int owner_mode = static_cast<int>(pick(3));  // 0 driver owns, 1 company defendant, 2 person defendant
  const int victim_mode = static_cast<int>(pick(3));  // 0 pedestrian, 1 non-motor rider, 2 motorist

  std::vector<int> victims;
  for (int i = 0; i < plaintiffs; ++i) victims.push_back(add_party("plaintiff", person_name(), person_info(), {}, "NP"));
  const int driver = add_party("defendant", person_name(), person_info(), {}, "NP");
  int owner = driver;
  if (owner_mode == 1) {
    const std::string firm = city + " " + fresh(kFirms, "firm") + " Transport Company";
    owner = add_party("defendant", firm, "domiciled in " + city, {}, "NNP");
  } else if (owner_mode == 2) {
    owner = add_party("defendant", person_name(), person_info(), {}, "NP");
  }
  int insurer = -1;
  if (has_insurer)
    insurer = add_party("defendant", insurer_brand + " Property Insurance Company " + city + " Branch",
                        "domiciled in " + city, insurer_brand + " " + city, "NNP");
  if (info_.holders("plaintiff").size() == 1) entities_[static_cast<std::size_t>(victims[0])].role_word = "the plaintiff";
  if (info_.holders("defendant").size() == 1) entities_[static_cast<std::size_t>(driver)].role_word = "the defendant";

  const std::string plate1 = plate();
  const int mv1 = add_entity("MV", fresh(kMotorKinds, "mv") + " " + plate1, chance(0.5) ? "vehicle " + plate1 : "");
  auto role = [&](int e) { return !entities_[static_cast<std::size_t>(e)].role_word.empty() && chance(0.6); };
  auto ent = [&](int e) -> const Entity& { return entities_[static_cast<std::size_t>(e)]; };

  {  // when, where and who drove
    const int time = add_entity("TIME", pick_from(kMonths) + " " + std::to_string(1 + pick(28)) + " " +
                                            std::to_string(2015 + pick(8)));
    const int loc = add_entity("LOC", pick_from(kRoads) + " " + pick_from(kRoadKinds));
    SentenceBuilder b;
    b.word("On");
    const auto t = b.mention(time, ent(time), false, false, false);
    b.word(",");
    const auto d = b.mention(driver, ent(driver), false, role(driver), false);
    b.word("was driving");
    const auto v = b.mention(mv1, ent(mv1), false, false, false);
    b.word("along");
    const auto l = b.mention(loc, ent(loc), false, false, false);
    b.word(".");
    b.relate(d, v, "Driving");
    b.relate(v, l, "OccurredAt");
    b.relate(v, t, "OccurredAt");
    push(b);
  }

  const int victim = victims[0];
  int victim_vehicle = -1;
  if (victim_mode == 0) {
    SentenceBuilder b;
    b.word("The");
    const auto v = b.mention(mv1, ent(mv1), true, false, false);
    b.word("struck the pedestrian");
    const auto p = b.mention(victim, ent(victim), false, false, false);
    b.word(".");
    b.relate(v, p, "Accident");
    push(b);
  } else if (victim_mode == 1) {
    victim_vehicle = add_entity("NMV", pick_from(kNonMotor));
    SentenceBuilder a;
    const bool cap = role(victim);
    const auto p = a.mention(victim, ent(victim), false, cap, true);
    a.word("was riding");
    const auto n = a.mention(victim_vehicle, ent(victim_vehicle), false, false, false);
    a.word("in the same direction .");
    a.relate(p, n, "Ride");
    push(a);
    SentenceBuilder b;
    b.word("The");
    const auto v = b.mention(mv1, ent(mv1), true, false, false);
    b.word("collided with the");
    const auto n2 = b.mention(victim_vehicle, ent(victim_vehicle), false, false, false);
    b.word(".");
    b.relate(v, n2, "Accident");
    push(b);
  } else {
    const std::string plate2 = plate();
    victim_vehicle = add_entity("MV", fresh(kMotorKinds, "mv") + " " + plate2, chance(0.5) ? "vehicle " + plate2 : "");
    SentenceBuilder a;
    const auto p = a.mention(victim, ent(victim), false, role(victim), true);
    a.word("was driving");
    const auto w = a.mention(victim_vehicle, ent(victim_vehicle), false, false, false);
    a.word("in the opposite lane .");
    a.relate(p, w, "Driving");
    push(a);
    SentenceBuilder b;
    b.word("The");
    const auto v = b.mention(mv1, ent(mv1), true, false, false);
    b.word("collided with the");
    const auto w2 = b.mention(victim_vehicle, ent(victim_vehicle), true, false, false);
    b.word(".");
    b.relate(v, w2, "Accident");
    push(b);
  }

  if (plaintiffs == 2) {
    const int carried = victim_mode == 2 ? victim_vehicle : mv1;
    SentenceBuilder b;
    const auto p = b.mention(victims[1], ent(victims[1]), false, false, true);
    b.word("was a passenger in");
    const auto v = b.mention(carried, ent(carried), true, false, false);
    b.word(".");
    b.relate(p, v, "Ride");
    push(b);
  }

  for (int v : victims) {
    SentenceBuilder b;
    const auto p = b.mention(v, ent(v), false, role(v), true);
    if (chance(0.2)) {
      const int death = add_entity("DEATH", fresh(kDeaths, "death"));
      const auto d = b.mention(death, ent(death), false, false, false);
      b.relate(p, d, "Suffers");
    } else {
      const int injury = add_entity("INJURY", fresh(kInjuries, "injury"));
      b.word("suffered");
      const auto i = b.mention(injury, ent(injury), false, false, false);
      b.word("in the accident");
      b.relate(p, i, "Suffers");
    }
    b.word(".");
    push(b);
    if (chance(0.3)) {
      const int prop = add_entity("PROP", fresh(kProperty, "prop"));
      SentenceBuilder c;
      const auto p2 = c.mention(v, ent(v), false, role(v), true);
      c.word("also lost a");
      const auto q = c.mention(prop, ent(prop), false, false, false);
      c.word("worth " + std::to_string(200 + 100 * pick(30)) + " yuan .");
      c.relate(p2, q, "Suffers");
      push(c);
    }
  }

  if (chance(0.8)) {
    const auto& [vtype, vsurface] = pick_from(kViolations);
    const int violation = add_entity(vtype, vsurface);
    SentenceBuilder b;
    b.word("The traffic police found that");
    const auto d = b.mention(driver, ent(driver), false, role(driver), false);
    b.word("was guilty of");
    const auto x = b.mention(violation, ent(violation), false, false, false);
    b.word(".");
    b.relate(d, x, "Violates");
    push(b);
  }

  {
    SentenceBuilder b;
    if (owner_mode == 1) {
      b.word("The");
      const auto v = b.mention(mv1, ent(mv1), true, false, false);
      b.word("is registered to");
      const auto o = b.mention(owner, ent(owner), false, false, false);
      b.word(".");
      b.relate(o, v, "Owns");
    } else {
      const auto o = b.mention(owner, ent(owner), false, owner == driver && role(owner), true);
      b.word("is the registered owner of");
      const auto v = b.mention(mv1, ent(mv1), true, false, false);
      b.word(".");
      b.relate(o, v, "Owns");
    }
    push(b);
  }

  if (insurer >= 0) {
    const int policy = add_entity("POLICY", pick_from(kPolicies));
    SentenceBuilder b;
    b.word("The");
    const auto v = b.mention(mv1, ent(mv1), true, false, false);
    b.word("was insured by");
    const auto i = b.mention(insurer, ent(insurer), false, false, false);
    b.word("under");
    b.mention(policy, ent(policy), false, false, false);
    b.word(".");
    b.relate(i, v, "Insures");
    push(b);
  }

  {
    const int liab1 = add_entity("LIAB", fresh(kLiability, "liab"));
    SentenceBuilder b;
    b.word("The traffic police determined that");
    const auto d = b.mention(driver, ent(driver), false, role(driver), false);
    b.word("bears");
    const auto l1 = b.mention(liab1, ent(liab1), false, false, false);
    b.relate(d, l1, "Responsible");
    if (chance(0.5)) {
      const int liab2 = add_entity("LIAB", fresh(kLiability, "liab"));
      b.word("for the accident and");
      const auto p = b.mention(victim, ent(victim), false, role(victim), false);
      b.word("bears");
      const auto l2 = b.mention(liab2, ent(liab2), false, false, false);
      b.relate(p, l2, "Responsible");
    } else {
      b.word("for the accident");
    }
    b.word(".");
    push(b);
  }

  // document text
  const auto& plaintiff0 = info_.parties[static_cast<std::size_t>(ent(victims[0]).party)];
  const auto& driver_party = info_.parties[static_cast<std::size_t>(ent(driver).party)];
  info_.title = "Civil Judgment of First Instance on a Motor Vehicle Traffic Accident Liability Dispute between " +
                plaintiff0.name + " and " + driver_party.name;
  const std::string year = std::to_string(2016 + pick(8));
  info_.case_number = "(" + year + ") Su 0" + std::to_string(100 + pick(900)) + " Min Chu " + std::to_string(1 + pick(9999));
  info_.court = pick_from(kDistricts) + " District People's Court of " + city;

  SyntheticDocument doc;
  doc.document.id = "case-" + std::to_string(index_ + 1);
  std::string& text = doc.document.text;
  auto line = [&](SegmentType type, const std::string& content) {
    const std::size_t begin = text.size();
    text += content + "\n";
    if (!doc.segments.empty() && doc.segments.back().type == type) doc.segments.back().end = text.size();
    else doc.segments.push_back({type, begin, text.size()});
  };
  line(SegmentType::Title, info_.title);
  line(SegmentType::CaseNumber, "Case No. " + info_.case_number);
  line(SegmentType::Court, info_.court);
  bool agent_written = false;
  for (const auto& p : info_.parties) {
    line(SegmentType::PartyInfo, p.line);
    if (p.role == "plaintiff" && !agent_written && chance(0.5)) {
      line(SegmentType::PartyInfo, "Agent ad litem: " + person_name() + ", lawyer of " + city + " " +
                                       pick_from(kFirms) + " Law Firm.");
      agent_written = true;
    }
  }
  line(SegmentType::Facts, "After trial, the court found the following facts:");
  std::string paragraph;
  const std::size_t split_at = sentences_.size() / 2;
  for (std::size_t i = 0; i < sentences_.size(); ++i) {
    if (i == split_at && !paragraph.empty()) {
      line(SegmentType::Facts, paragraph);
      paragraph.clear();
    }
    paragraph += (paragraph.empty() ? "" : " ") + sentences_[i].original;
  }
  if (!paragraph.empty()) line(SegmentType::Facts, paragraph);
  line(SegmentType::Other, "The court holds that the traffic police determination is adopted and the losses shall be "
                           "compensated according to the liability shares.");
  line(SegmentType::Other, "Judgment is as follows: compensation shall be paid within ten days after this judgment "
                           "takes effect.");

  // gold graph
  CaseGraph& g = doc.graph;
  g.document_id = doc.document.id;
  for (const auto& s : sentences_) g.sources.push_back(s.original);
  GraphNode case_node{std::string(kCaseNodeType) + "|" + info_.case_number, kCaseNodeType,
                      {{"case_number", info_.case_number}, {"court", info_.court}, {"document_id", doc.document.id},
                       {"title", info_.title}},
                      {}};
  std::map<int, std::set<std::string>> surfaces;
  std::set<int> in_graph;
  std::vector<GraphEdge> edges;
  for (std::size_t s = 0; s < sentences_.size(); ++s)
    for (const auto& [pair, rel] : sentences_[s].relations) {
      const int h = sentence_entities_[s][pair.first], t = sentence_entities_[s][pair.second];
      surfaces[h].insert(sentences_[s].mentions[pair.first].text);
      surfaces[t].insert(sentences_[s].mentions[pair.second].text);
      in_graph.insert(h);
      in_graph.insert(t);
    }
  std::map<int, std::string> node_id;
  for (std::size_t e = 0; e < entities_.size(); ++e) {
    const auto& en = entities_[e];
    const int id = static_cast<int>(e);
    if (en.party < 0 && !in_graph.count(id)) continue;
    GraphNode n;
    n.type = en.type;
    std::set<std::string> aliases = surfaces[id];
    std::string name;
    if (en.party >= 0) {
      const auto& p = info_.parties[static_cast<std::size_t>(en.party)];
      name = p.name;
      aliases.insert(p.name);
      aliases.insert(p.aliases.begin(), p.aliases.end());
      n.attributes["role"] = p.role;
      n.attributes["info"] = p.info;
    } else {
      for (const auto& s : aliases)
        if (name.empty() || s.size() < name.size() || (s.size() == name.size() && s < name)) name = s;
    }
    n.attributes["name"] = name;
    n.id = n.type + "|" + name;
    n.aliases.assign(aliases.begin(), aliases.end());
    node_id[id] = n.id;
    g.nodes.push_back(std::move(n));
    if (en.party >= 0) {
      const auto& p = info_.parties[static_cast<std::size_t>(en.party)];
      g.sources.push_back(p.line);
      edges.push_back({case_node.id, node_id[id], party_relation(p.role), "party_info",
                       static_cast<int>(g.sources.size()) - 1, 1.0});
    }
  }
  for (std::size_t s = 0; s < sentences_.size(); ++s)
    for (const auto& [pair, rel] : sentences_[s].relations)
      edges.push_back({node_id[sentence_entities_[s][pair.first]], node_id[sentence_entities_[s][pair.second]], rel,
                       "facts", static_cast<int>(s), 1.0});
  g.nodes.push_back(std::move(case_node));
  g.edges = std::move(edges);
  detail::finish(g);

  doc.info = info_;
  doc.sentences = std::move(sentences_);
  return doc;
}

}  // namespace synth

/// Deterministic under `seed`; document i depends only on (seed, i).
inline std::vector<SyntheticDocument> generate_synthetic_corpus(std::uint64_t seed, std::size_t n_docs,
                                                                const RelationSchema& schema, const TagSet& tags) {
  if (n_docs < 1) throw ArgumentError("generate_synthetic_corpus: n_docs must be at least 1");
  for (const auto& t : synth::kRequiredTypes) {
    if (!tags.has_type(t)) throw DataError("synthetic generator needs entity type '" + t + "' missing from the tag set");
    if (std::find(schema.entity_types().begin(), schema.entity_types().end(), t) == schema.entity_types().end())
      throw DataError("synthetic generator needs entity type '" + t + "' missing from the schema");
  }
  schema.check_against(tags);
  std::vector<SyntheticDocument> docs;
  docs.reserve(n_docs);
  for (std::size_t i = 0; i < n_docs; ++i) {
    docs.push_back(synth::DocumentWriter(seed, i).write());
    for (const auto& s : docs.back().sentences)
      for (const auto& [pair, rel] : s.relations) {
        const auto& h = s.mentions[pair.first].type;
        const auto& t = s.mentions[pair.second].type;
        if (!schema.has_label(rel) || !schema.allows(schema.label_id(rel), h, t))
          throw DataError("schema does not admit " + rel + "(" + h + ", " + t + ") used by the generator");
      }
  }
  return docs;
}

inline std::vector<LabeledSentence> ner_sentences(const std::vector<SyntheticDocument>& docs) {
  std::vector<LabeledSentence> out;
  for (const auto& d : docs)
    for (const auto& s : d.sentences) out.push_back({s.tokens, encode_mentions(s.tokens.size(), s.mentions)});
  return out;
}

inline std::vector<SentenceMentions> relation_sentences(const std::vector<SyntheticDocument>& docs) {
  std::vector<SentenceMentions> out;
  for (const auto& d : docs)
    for (const auto& s : d.sentences) out.push_back({s.tokens, s.mentions, s.relations});
  return out;
}

inline nlohmann::json to_json(const SyntheticDocument& d) {
  nlohmann::json j;
  j["id"] = d.document.id;
  j["text"] = d.document.text;
  j["segments"] = nlohmann::json::array();
  for (const auto& s : d.segments) j["segments"].push_back({{"type", to_string(s.type)}, {"begin", s.begin}, {"end", s.end}});
  j["sentences"] = nlohmann::json::array();
  for (const auto& s : d.sentences) {
    nlohmann::json js;
    js["tokens"] = s.tokens;
    js["labels"] = encode_mentions(s.tokens.size(), s.mentions);
    js["relations"] = nlohmann::json::array();
    for (const auto& [pair, rel] : s.relations)
      js["relations"].push_back({{"head", pair.first}, {"tail", pair.second}, {"relation", rel}});
    j["sentences"].push_back(std::move(js));
  }
  return j;
}

}  // namespace casegraph::pipeline
