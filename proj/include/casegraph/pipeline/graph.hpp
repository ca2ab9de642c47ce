#pragma once

// Case knowledge graph and rule-based entity alignment.

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "casegraph/pipeline/extract.hpp"
#include "casegraph/pipeline/segment.hpp"

namespace casegraph::pipeline {

inline constexpr const char* kCaseNodeType = "Case";

struct GraphNode {
  std::string id;
  std::string type;
  std::map<std::string, std::string> attributes;
  std::vector<std::string> aliases;  // sorted

  bool operator==(const GraphNode&) const = default;
};

struct GraphEdge {
  std::string source;
  std::string target;
  std::string relation;
  std::string segment;  // segment type the evidence came from
  int sentence = -1;    // index into CaseGraph::sources
  double confidence = 1.0;

  bool operator==(const GraphEdge&) const = default;
};

struct CaseGraph {
  std::string document_id;
  std::vector<GraphNode> nodes;  // sorted by id
  std::vector<GraphEdge> edges;  // sorted by (source, relation, target)
  std::vector<std::string> sources;  // provenance texts, as written in the document
  std::vector<std::string> warnings;

  bool operator==(const CaseGraph&) const = default;

  const GraphNode* node(const std::string& id) const {
    auto it = std::lower_bound(nodes.begin(), nodes.end(), id, [](const GraphNode& n, const std::string& k) { return n.id < k; });
    return it != nodes.end() && it->id == id ? &*it : nullptr;
  }

  void validate() const {
    std::set<std::tuple<std::string, std::string, std::string>> seen;
    for (std::size_t i = 1; i < nodes.size(); ++i)
      if (!(nodes[i - 1].id < nodes[i].id)) throw DataError("graph nodes not sorted or duplicated at '" + nodes[i].id + "'");
    for (const auto& e : edges) {
      if (!node(e.source) || !node(e.target))
        throw DataError("edge " + e.source + " -" + e.relation + "-> " + e.target + " has a missing endpoint");
      if (!seen.emplace(e.source, e.relation, e.target).second)
        throw DataError("duplicate edge " + e.source + " -" + e.relation + "-> " + e.target);
      if (e.sentence < 0 || static_cast<std::size_t>(e.sentence) >= sources.size())
        throw DataError("edge " + e.source + " -" + e.relation + "-> " + e.target + " has no provenance");
    }
  }
};

/// Exact-match F1 over node (id, type) and edge (source, relation, target) keys.
inline PrfScore graph_match(const CaseGraph& gold, const CaseGraph& predicted) {
  auto keys = [](const CaseGraph& g) {
    std::set<std::string> k;
    for (const auto& n : g.nodes) k.insert("N\x1f" + n.id + "\x1f" + n.type);
    for (const auto& e : g.edges) k.insert("E\x1f" + e.source + "\x1f" + e.relation + "\x1f" + e.target);
    return k;
  };
  const auto g = keys(gold), p = keys(predicted);
  long tp = 0;
  for (const auto& k : p) tp += g.count(k);
  return prf_from_counts(tp, static_cast<long>(p.size()), static_cast<long>(g.size()));
}

inline PrfScore graph_match(const std::vector<CaseGraph>& gold, const std::vector<CaseGraph>& predicted) {
  if (gold.size() != predicted.size()) throw ArgumentError("graph_match: graph counts differ");
  long tp = 0, pred = 0, g = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const auto s = graph_match(gold[i], predicted[i]);
    tp += s.true_positives;
    pred += s.predicted;
    g += s.gold;
  }
  return prf_from_counts(tp, pred, g);
}

// ---------------------------------------------------------------------------
// Fusion

inline std::string party_relation(const std::string& role) {
  if (role == "plaintiff") return "HasPlaintiff";
  if (role == "defendant") return "HasDefendant";
  return "HasParty";
}

inline std::string party_type(const Party& p, const RuleSet& rules) {
  return std::regex_search(p.name, rules.organization.re) ? "NNP" : "NP";
}

inline std::string case_node_id(const CaseInfo& info, const std::string& document_id) {
  return std::string(kCaseNodeType) + "|" + (info.case_number.empty() ? document_id : info.case_number);
}

namespace detail {

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), std::size_t{0}); }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) x = parent_[x] = parent_[parent_[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  }

 private:
  std::vector<std::size_t> parent_;
};

struct FusionItem {
  std::string type;
  std::set<std::string> surfaces;
  std::optional<Party> party;
};

struct FusionResult {
  std::vector<GraphNode> nodes;
  std::vector<std::string> item_node;  // node id per item
  std::vector<std::string> warnings;
};

inline void add_warning(std::vector<std::string>& warnings, std::string w) {
  if (std::find(warnings.begin(), warnings.end(), w) == warnings.end()) warnings.push_back(std::move(w));
}

/// Union-find over items: same type and same surface, an alias pair linking
/// two surfaces of one type, or a shared plate token within one type.
inline FusionResult merge_items(std::vector<FusionItem> items,
                                const std::vector<std::pair<std::string, std::string>>& alias_pairs,
                                const RuleSet& rules) {
  FusionResult out;
  for (const auto& [a, b] : alias_pairs)
    for (auto& item : items)
      if (item.surfaces.count(a) || item.surfaces.count(b)) {
        item.surfaces.insert(a);
        item.surfaces.insert(b);
      }

  DisjointSets sets(items.size());
  std::map<std::pair<std::string, std::string>, std::size_t> by_key;
  std::map<std::string, std::set<std::string>> surface_types;
  for (std::size_t i = 0; i < items.size(); ++i) {
    for (const auto& s : items[i].surfaces) {
      surface_types[s].insert(items[i].type);
      auto [it, fresh] = by_key.emplace(std::make_pair(items[i].type, s), i);
      if (!fresh) sets.unite(it->second, i);
      for (auto m = std::sregex_iterator(s.begin(), s.end(), rules.plate.re); m != std::sregex_iterator(); ++m) {
        auto [pit, pfresh] = by_key.emplace(std::make_pair(items[i].type, "\x1fplate:" + m->str()), i);
        if (!pfresh) sets.unite(pit->second, i);
      }
    }
  }
  for (const auto& [surface, types] : surface_types) {
    if (types.size() < 2) continue;
    std::string list;
    for (const auto& t : types) list += (list.empty() ? "" : ", ") + t;
    add_warning(out.warnings, "surface '" + surface + "' appears with types " + list + "; kept separate");
  }

  std::map<std::size_t, std::vector<std::size_t>> classes;
  for (std::size_t i = 0; i < items.size(); ++i) classes[sets.find(i)].push_back(i);
  out.item_node.resize(items.size());
  for (const auto& [root, members] : classes) {
    GraphNode node;
    node.type = items[root].type;
    std::set<std::string> surfaces;
    const Party* party = nullptr;
    for (auto i : members) {
      surfaces.insert(items[i].surfaces.begin(), items[i].surfaces.end());
      if (items[i].party && (!party || items[i].party->name < party->name)) {
        if (party && party->name != items[i].party->name)
          add_warning(out.warnings, "parties '" + party->name + "' and '" + items[i].party->name + "' aligned to one node");
        party = &*items[i].party;
      }
    }
    std::string name;
    if (party) {
      name = party->name;
      node.attributes["role"] = party->role;
      if (!party->info.empty()) node.attributes["info"] = party->info;
    } else {
      for (const auto& s : surfaces)
        if (name.empty() || s.size() < name.size()) name = s;
    }
    node.attributes["name"] = name;
    node.id = node.type + "|" + name;
    node.aliases.assign(surfaces.begin(), surfaces.end());
    for (auto i : members) out.item_node[i] = node.id;
    out.nodes.push_back(std::move(node));
  }
  return out;
}

inline void finish(CaseGraph& g) {
  std::sort(g.nodes.begin(), g.nodes.end(), [](const GraphNode& a, const GraphNode& b) { return a.id < b.id; });
  std::map<std::tuple<std::string, std::string, std::string>, GraphEdge> unique;
  for (auto& e : g.edges) {
    auto key = std::make_tuple(e.source, e.relation, e.target);
    auto it = unique.find(key);
    if (it == unique.end()) {
      unique.emplace(key, e);
      continue;
    }
    if (e.sentence < it->second.sentence) {
      it->second.sentence = e.sentence;
      it->second.segment = e.segment;
    }
    it->second.confidence = std::max(it->second.confidence, e.confidence);
  }
  g.edges.clear();
  for (auto& [k, e] : unique) g.edges.push_back(std::move(e));
  // nodes merged under one id collapse here
  g.nodes.erase(std::unique(g.nodes.begin(), g.nodes.end(),
                            [](const GraphNode& a, const GraphNode& b) { return a.id == b.id; }),
                g.nodes.end());
}

}  // namespace detail

/// Parties become nodes linked from a case node; triple endpoints are merged
/// by alias, plate token or exact same-type surface, and party names align
/// the mentions that refer to them.
inline CaseGraph fuse_knowledge(const std::string& document_id, const CaseInfo& info,
                                const std::vector<FactTriple>& triples, const std::vector<std::string>& fact_sources,
                                const RuleSet& rules) {
  CaseGraph g;
  g.document_id = document_id;
  g.sources = fact_sources;

  std::vector<detail::FusionItem> items;
  for (const auto& p : info.parties) {
    detail::FusionItem item{party_type(p, rules), {p.name}, p};
    item.surfaces.insert(p.aliases.begin(), p.aliases.end());
    items.push_back(std::move(item));
  }
  const std::size_t party_count = items.size();
  for (const auto& t : triples) {
    items.push_back({t.head.type, {t.head.text}, std::nullopt});
    items.push_back({t.tail.type, {t.tail.text}, std::nullopt});
  }
  auto merged = detail::merge_items(std::move(items), info.aliases, rules);
  g.warnings = std::move(merged.warnings);

  GraphNode case_node;
  case_node.id = case_node_id(info, document_id);
  case_node.type = kCaseNodeType;
  case_node.attributes["document_id"] = document_id;
  if (!info.title.empty()) case_node.attributes["title"] = info.title;
  if (!info.case_number.empty()) case_node.attributes["case_number"] = info.case_number;
  if (!info.court.empty()) case_node.attributes["court"] = info.court;
  g.nodes.push_back(std::move(case_node));

  std::set<std::string> used;
  for (std::size_t i = 0; i < party_count; ++i) {
    const auto& p = info.parties[i];
    auto src = std::find(g.sources.begin(), g.sources.end(), p.line);
    int sentence = static_cast<int>(src - g.sources.begin());
    if (src == g.sources.end()) g.sources.push_back(p.line);
    g.edges.push_back({g.nodes.front().id, merged.item_node[i], party_relation(p.role), "party_info", sentence, 1.0});
    used.insert(merged.item_node[i]);
  }
  for (std::size_t t = 0; t < triples.size(); ++t) {
    const auto& h = merged.item_node[party_count + 2 * t];
    const auto& tl = merged.item_node[party_count + 2 * t + 1];
    g.edges.push_back({h, tl, triples[t].relation, "facts", static_cast<int>(triples[t].sentence), triples[t].confidence});
    used.insert(h);
    used.insert(tl);
  }
  for (auto& n : merged.nodes)
    if (used.count(n.id)) g.nodes.push_back(std::move(n));
  detail::finish(g);
  return g;
}

/// Re-applies the alignment rules to a graph's own nodes. A graph produced
/// by fuse_knowledge comes back unchanged.
inline CaseGraph fuse_graph(const CaseGraph& graph, const RuleSet& rules) {
  CaseGraph g;
  g.document_id = graph.document_id;
  g.sources = graph.sources;
  g.warnings = graph.warnings;
  std::vector<detail::FusionItem> items;
  std::vector<const GraphNode*> item_source;
  for (const auto& n : graph.nodes) {
    if (n.type == kCaseNodeType) {
      g.nodes.push_back(n);
      continue;
    }
    detail::FusionItem item{n.type, {n.aliases.begin(), n.aliases.end()}, std::nullopt};
    if (auto role = n.attributes.find("role"); role != n.attributes.end()) {
      Party p;
      p.role = role->second;
      p.name = n.attributes.count("name") ? n.attributes.at("name") : n.id.substr(n.id.find('|') + 1);
      if (auto info = n.attributes.find("info"); info != n.attributes.end()) p.info = info->second;
      item.surfaces.insert(p.name);
      item.party = std::move(p);
    }
    items.push_back(std::move(item));
    item_source.push_back(&n);
  }
  auto merged = detail::merge_items(std::move(items), {}, rules);
  for (auto& w : merged.warnings) detail::add_warning(g.warnings, std::move(w));
  std::map<std::string, std::string> renamed;
  for (std::size_t i = 0; i < item_source.size(); ++i) renamed[item_source[i]->id] = merged.item_node[i];
  for (auto& n : merged.nodes) g.nodes.push_back(std::move(n));
  for (auto e : graph.edges) {
    if (auto it = renamed.find(e.source); it != renamed.end()) e.source = it->second;
    if (auto it = renamed.find(e.target); it != renamed.end()) e.target = it->second;
    g.edges.push_back(std::move(e));
  }
  detail::finish(g);
  return g;
}

}  // namespace casegraph::pipeline
