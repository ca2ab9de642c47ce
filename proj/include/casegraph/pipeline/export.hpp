#pragma once

// Graph export: JSON lines, and CSV in the bulk-import header convention.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "casegraph/pipeline/graph.hpp"

namespace casegraph::pipeline {

enum class ExportFormat { Jsonl, BulkCsv };

inline ExportFormat export_format_from(const std::string& name) {
  if (name == "jsonl") return ExportFormat::Jsonl;
  if (name == "bulk_csv" || name == "csv") return ExportFormat::BulkCsv;
  throw ArgumentError("unknown export format '" + name + "' (expected jsonl or bulk_csv)");
}

inline nlohmann::json node_to_json(const GraphNode& n) {
  return {{"id", n.id}, {"type", n.type}, {"attributes", n.attributes}, {"aliases", n.aliases}};
}

inline nlohmann::json edge_to_json(const GraphEdge& e, const CaseGraph& g) {
  nlohmann::json j = {{"source", e.source},     {"target", e.target},     {"relation", e.relation},
                      {"segment", e.segment},   {"sentence", e.sentence}, {"confidence", e.confidence}};
  if (e.sentence >= 0 && static_cast<std::size_t>(e.sentence) < g.sources.size())
    j["evidence"] = g.sources[static_cast<std::size_t>(e.sentence)];
  return j;
}

/// Whole-graph form, lossless, for storing gold and predicted graphs.
inline nlohmann::json graph_to_json(const CaseGraph& g) {
  nlohmann::json j;
  j["document_id"] = g.document_id;
  j["nodes"] = nlohmann::json::array();
  for (const auto& n : g.nodes) j["nodes"].push_back(node_to_json(n));
  j["edges"] = nlohmann::json::array();
  for (const auto& e : g.edges)
    j["edges"].push_back({{"source", e.source},   {"target", e.target},     {"relation", e.relation},
                          {"segment", e.segment}, {"sentence", e.sentence}, {"confidence", e.confidence}});
  j["sources"] = g.sources;
  j["warnings"] = g.warnings;
  return j;
}

inline CaseGraph graph_from_json(const nlohmann::json& j) {
  CaseGraph g;
  try {
    g.document_id = j.at("document_id").get<std::string>();
    for (const auto& n : j.at("nodes"))
      g.nodes.push_back({n.at("id").get<std::string>(), n.at("type").get<std::string>(),
                         n.value("attributes", std::map<std::string, std::string>{}),
                         n.value("aliases", std::vector<std::string>{})});
    for (const auto& e : j.at("edges"))
      g.edges.push_back({e.at("source").get<std::string>(), e.at("target").get<std::string>(),
                         e.at("relation").get<std::string>(), e.value("segment", std::string()),
                         e.value("sentence", -1), e.value("confidence", 1.0)});
    g.sources = j.value("sources", std::vector<std::string>{});
    g.warnings = j.value("warnings", std::vector<std::string>{});
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed graph record: ") + e.what());
  }
  detail::finish(g);
  return g;
}

inline void write_graphs_jsonl(std::ostream& out, const std::vector<CaseGraph>& graphs) {
  for (const auto& g : graphs) out << graph_to_json(g).dump() << '\n';
}

inline std::vector<CaseGraph> read_graphs_jsonl(std::istream& in) {
  std::vector<CaseGraph> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(graph_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw DataError("graph line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline void write_nodes_jsonl(std::ostream& out, const CaseGraph& g) {
  for (const auto& n : g.nodes) out << node_to_json(n).dump() << '\n';
}

inline void write_edges_jsonl(std::ostream& out, const CaseGraph& g) {
  for (const auto& e : g.edges) out << edge_to_json(e, g).dump() << '\n';
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

inline std::string format_confidence(double c) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", c);
  return buf;
}

inline void write_nodes_csv(std::ostream& out, const CaseGraph& g) {
  out << "id:ID,type:LABEL,name,aliases:string[],attributes\n";
  for (const auto& n : g.nodes) {
    std::string aliases, attrs;
    for (const auto& a : n.aliases) aliases += (aliases.empty() ? "" : ";") + a;
    for (const auto& [k, v] : n.attributes) attrs += (attrs.empty() ? "" : ";") + k + "=" + v;
    const auto name = n.attributes.count("name") ? n.attributes.at("name") : n.id;
    out << csv_field(n.id) << ',' << csv_field(n.type) << ',' << csv_field(name) << ',' << csv_field(aliases) << ','
        << csv_field(attrs) << '\n';
  }
}

inline void write_edges_csv(std::ostream& out, const CaseGraph& g) {
  out << ":START_ID,:END_ID,:TYPE,confidence:double,segment,sentence:int,evidence\n";
  for (const auto& e : g.edges) {
    const std::string evidence = e.sentence >= 0 && static_cast<std::size_t>(e.sentence) < g.sources.size()
                                     ? g.sources[static_cast<std::size_t>(e.sentence)]
                                     : std::string();
    out << csv_field(e.source) << ',' << csv_field(e.target) << ',' << csv_field(e.relation) << ','
        << format_confidence(e.confidence) << ',' << csv_field(e.segment) << ',' << e.sentence << ','
        << csv_field(evidence) << '\n';
  }
}

/// Node ids prefixed with the document id, so several graphs can share one
/// import without id collisions.
inline CaseGraph scoped(const CaseGraph& g) {
  CaseGraph out = g;
  const std::string prefix = g.document_id + "/";
  for (auto& n : out.nodes) n.id = prefix + n.id;
  for (auto& e : out.edges) {
    e.source = prefix + e.source;
    e.target = prefix + e.target;
  }
  return out;
}

/// Writes the two files for `format` into `dir` (created if needed) and
/// returns their paths. Several graphs go into one pair of files with
/// document-scoped ids.
inline std::vector<std::string> export_graphs(const std::vector<CaseGraph>& graphs, const std::string& dir,
                                              ExportFormat format) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  const bool csv = format == ExportFormat::BulkCsv;
  const fs::path nodes = fs::path(dir) / (csv ? "nodes.csv" : "nodes.jsonl");
  const fs::path edges = fs::path(dir) / (csv ? "edges.csv" : "edges.jsonl");
  std::ofstream n(nodes, std::ios::binary), e(edges, std::ios::binary);
  if (!n || !e) throw IoError("cannot write graph export into '" + dir + "'");
  if (csv) {
    std::ostringstream nb, eb;
    bool first = true;
    for (const auto& graph : graphs) {
      const CaseGraph g = graphs.size() > 1 ? scoped(graph) : graph;
      std::ostringstream gn, ge;
      write_nodes_csv(gn, g);
      write_edges_csv(ge, g);
      auto body = [&](const std::string& s) { return first ? s : s.substr(s.find('\n') + 1); };
      nb << body(gn.str());
      eb << body(ge.str());
      first = false;
    }
    if (graphs.empty()) {
      write_nodes_csv(nb, CaseGraph{});
      write_edges_csv(eb, CaseGraph{});
    }
    n << nb.str();
    e << eb.str();
  } else {
    for (const auto& graph : graphs) {
      const CaseGraph g = graphs.size() > 1 ? scoped(graph) : graph;
      write_nodes_jsonl(n, g);
      write_edges_jsonl(e, g);
    }
  }
  n.flush();
  e.flush();
  if (!n || !e) throw IoError("failed writing graph export into '" + dir + "'");
  return {nodes.string(), edges.string()};
}

inline std::vector<std::string> export_graph(const CaseGraph& graph, const std::string& dir, ExportFormat format) {
  return export_graphs({graph}, dir, format);
}

}  // namespace casegraph::pipeline
