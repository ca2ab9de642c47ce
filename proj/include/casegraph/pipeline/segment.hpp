#pragma once

// Rule-based segment labelling and structured-field extraction for judgment
// documents.

#include <algorithm>
#include <array>
#include <fstream>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "casegraph/error.hpp"
#include "casegraph/ner.hpp"

namespace casegraph::pipeline {

enum class SegmentType { Title, CaseNumber, Court, PartyInfo, Facts, Other };

inline const std::vector<std::string>& segment_type_names() {
  static const std::vector<std::string> names = {"title", "case_number", "court", "party_info", "facts", "other"};
  return names;
}

inline std::string to_string(SegmentType t) { return segment_type_names()[static_cast<std::size_t>(t)]; }

inline SegmentType segment_type_from(const std::string& name) {
  const auto& names = segment_type_names();
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<SegmentType>(i);
  throw DataError("unknown segment type '" + name + "'");
}

struct CompiledPattern {
  std::string source;
  std::regex re;

  CompiledPattern() = default;
  explicit CompiledPattern(std::string pattern) : source(std::move(pattern)) {
    try {
      re = std::regex(source, std::regex::ECMAScript);
    } catch (const std::regex_error& e) {
      throw DataError("rule pattern does not compile: '" + source + "' (" + e.what() + ")");
    }
  }
};

struct SegmentRule {
  SegmentType target = SegmentType::Other;
  CompiledPattern pattern;
  int priority = 0;
  bool continues = false;  // following unmatched lines inherit the type
};

struct FieldRule {
  std::string field;
  SegmentType segment = SegmentType::Other;
  CompiledPattern pattern;
  int group = 1;
  int priority = 0;
};

struct PartyRule {
  CompiledPattern pattern;
  int role_group = 1;
  int name_group = 2;
  int info_group = 3;
  std::map<std::string, std::string> roles;  // surface -> plaintiff | defendant | other
};

/// Declarative rule set: segment rules, field captures, party lines, facts
/// header, role words for referent completion, alias and plate patterns.
struct RuleSet {
  std::vector<SegmentRule> segments;
  std::vector<FieldRule> fields;
  PartyRule party;
  std::optional<CompiledPattern> facts_header;
  std::map<std::string, CompiledPattern> role_words;
  std::vector<CompiledPattern> aliases;  // group 1 = full form, group 2 = short form
  CompiledPattern plate{"[A-Z]{2}-[0-9]{4}"};
  CompiledPattern organization{"(Company|Corporation|Branch|Ltd|Bureau|Group)$"};
  std::vector<std::string> mandatory_fields = {"title", "case_number", "court", "parties"};

  void validate() const {
    if (segments.empty()) throw ArgumentError("rule set has no segment rules");
    std::set<std::pair<SegmentType, int>> seen;
    for (const auto& r : segments)
      if (!seen.emplace(r.target, r.priority).second)
        throw DataError("duplicate priority " + std::to_string(r.priority) + " for segment target '" +
                        to_string(r.target) + "'");
  }

  static RuleSet from_json(const nlohmann::json& j) {
    RuleSet rs;
    for (const auto& r : j.at("segments"))
      rs.segments.push_back({segment_type_from(r.at("target").get<std::string>()), CompiledPattern(r.at("pattern")),
                             r.value("priority", 0), r.value("continues", false)});
    for (const auto& f : j.value("fields", nlohmann::json::array()))
      rs.fields.push_back({f.at("field").get<std::string>(), segment_type_from(f.at("segment").get<std::string>()),
                           CompiledPattern(f.at("pattern")), f.value("group", 1), f.value("priority", 0)});
    if (j.contains("party")) {
      const auto& p = j.at("party");
      rs.party.pattern = CompiledPattern(p.at("pattern"));
      rs.party.role_group = p.value("role_group", 1);
      rs.party.name_group = p.value("name_group", 2);
      rs.party.info_group = p.value("info_group", 3);
      rs.party.roles = p.value("roles", std::map<std::string, std::string>{});
    }
    if (j.contains("facts_header")) rs.facts_header = CompiledPattern(j.at("facts_header"));
    const nlohmann::json role_words = j.value("role_words", nlohmann::json::object());
    for (const auto& [role, pat] : role_words.items())
      rs.role_words.emplace(role, CompiledPattern(pat.get<std::string>()));
    for (const auto& a : j.value("aliases", nlohmann::json::array())) rs.aliases.emplace_back(a.get<std::string>());
    if (j.contains("plate_pattern")) rs.plate = CompiledPattern(j.at("plate_pattern"));
    if (j.contains("organization_pattern")) rs.organization = CompiledPattern(j.at("organization_pattern"));
    if (j.contains("mandatory_fields")) rs.mandatory_fields = j.at("mandatory_fields").get<std::vector<std::string>>();
    rs.validate();
    return rs;
  }

  static RuleSet load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open rule file '" + path + "'");
    try {
      return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("rule file '" + path + "': " + e.what());
    }
  }
};

// ---------------------------------------------------------------------------

struct CaseDocument {
  std::string id;
  std::string text;
};

struct Segment {
  SegmentType type = SegmentType::Other;
  std::size_t begin = 0;  // byte offsets, end exclusive
  std::size_t end = 0;

  auto operator<=>(const Segment&) const = default;
};

struct Line {
  std::size_t begin = 0;
  std::size_t end = 0;  // excludes the newline
  std::size_t next = 0;  // start of the following line
};

inline std::vector<Line> split_lines(const std::string& text) {
  std::vector<Line> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    const std::size_t end = nl == std::string::npos ? text.size() : nl;
    lines.push_back({pos, end, nl == std::string::npos ? text.size() : nl + 1});
    pos = lines.back().next;
  }
  return lines;
}

/// Each line takes the type of its highest-priority matching rule (earlier
/// rules win exact ties); unmatched lines continue the previous segment when
/// its rule allows, otherwise they are `other`. Adjacent lines of one type
/// form a segment, so the result partitions the text.
inline std::vector<Segment> segment_document(const CaseDocument& doc, const RuleSet& rules) {
  if (rules.segments.empty()) throw ArgumentError("segment_document: zero rules");
  if (doc.text.empty()) throw DataError("segment_document: empty document '" + doc.id + "'");
  std::vector<Segment> out;
  bool continuing = false;
  SegmentType continued = SegmentType::Other;
  for (const Line& line : split_lines(doc.text)) {
    std::string content = doc.text.substr(line.begin, line.end - line.begin);
    if (!content.empty() && content.back() == '\r') content.pop_back();
    const SegmentRule* best = nullptr;
    for (const auto& r : rules.segments)
      if ((!best || r.priority > best->priority) && std::regex_search(content, r.pattern.re)) best = &r;
    SegmentType type = SegmentType::Other;
    if (best) {
      type = best->target;
      continuing = best->continues;
      continued = type;
    } else if (continuing) {
      type = continued;
    }
    if (!out.empty() && out.back().type == type && out.back().end == line.begin) out.back().end = line.next;
    else out.push_back({type, line.begin, line.next});
  }
  return out;
}

inline std::string segment_text(const CaseDocument& doc, const Segment& s) {
  return doc.text.substr(s.begin, s.end - s.begin);
}

// ---------------------------------------------------------------------------
// Structured information

struct Party {
  std::string role;  // plaintiff | defendant | other
  std::string name;
  std::string info;
  std::string line;  // source line in the document
  std::vector<std::string> aliases;

  bool operator==(const Party&) const = default;
};

struct CaseInfo {
  std::string title;
  std::string case_number;
  std::string court;
  std::vector<Party> parties;
  std::vector<std::pair<std::string, std::string>> aliases;  // (full form, short form) anywhere in the document
  std::vector<std::string> missing_fields;

  std::vector<const Party*> holders(const std::string& role) const {
    std::vector<const Party*> out;
    for (const auto& p : parties)
      if (p.role == role) out.push_back(&p);
    return out;
  }
};

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::pair<std::string, std::string>> find_aliases(const std::string& text, const RuleSet& rules) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& rule : rules.aliases) {
    for (auto it = std::sregex_iterator(text.begin(), text.end(), rule.re); it != std::sregex_iterator(); ++it) {
      const auto& m = *it;
      if (m.size() < 3) continue;
      auto pair = std::make_pair(trim(m[1].str()), trim(m[2].str()));
      if (!pair.first.empty() && !pair.second.empty() &&
          std::find(out.begin(), out.end(), pair) == out.end())
        out.push_back(std::move(pair));
    }
  }
  return out;
}

/// Field captures and party lines. Anything mandatory that fails to match is
/// listed in missing_fields rather than raised.
inline CaseInfo extract_structured(const CaseDocument& doc, const std::vector<Segment>& segments, const RuleSet& rules) {
  CaseInfo info;
  std::map<std::string, int> best_priority;
  auto set_field = [&](const std::string& field, const std::string& value) {
    if (field == "title") info.title = value;
    else if (field == "case_number") info.case_number = value;
    else if (field == "court") info.court = value;
  };
  for (const auto& seg : segments) {
    const std::string text = segment_text(doc, seg);
    for (const Line& line : split_lines(text)) {
      const std::string content = trim(text.substr(line.begin, line.end - line.begin));
      if (content.empty()) continue;
      for (const auto& rule : rules.fields) {
        if (rule.segment != seg.type) continue;
        std::smatch m;
        if (!std::regex_search(content, m, rule.pattern.re)) continue;
        if (rule.group >= static_cast<int>(m.size()) || !m[static_cast<std::size_t>(rule.group)].matched) continue;
        auto it = best_priority.find(rule.field);
        if (it != best_priority.end() && it->second >= rule.priority) continue;
        best_priority[rule.field] = rule.priority;
        set_field(rule.field, trim(m[static_cast<std::size_t>(rule.group)].str()));
      }
      if (seg.type == SegmentType::PartyInfo && !rules.party.pattern.source.empty()) {
        std::smatch m;
        if (!std::regex_search(content, m, rules.party.pattern.re)) continue;
        auto group = [&](int g) {
          return g > 0 && g < static_cast<int>(m.size()) && m[static_cast<std::size_t>(g)].matched
                     ? trim(m[static_cast<std::size_t>(g)].str())
                     : std::string();
        };
        Party p;
        const std::string role_surface = group(rules.party.role_group);
        auto role = rules.party.roles.find(role_surface);
        p.role = role != rules.party.roles.end() ? role->second : "other";
        p.name = group(rules.party.name_group);
        p.info = group(rules.party.info_group);
        p.line = content;
        for (const auto& [full, short_form] : find_aliases(content, rules))
          if (full == p.name || p.name.ends_with(full)) p.aliases.push_back(short_form);
        if (!p.name.empty()) info.parties.push_back(std::move(p));
      }
    }
  }
  info.aliases = find_aliases(doc.text, rules);
  for (const auto& f : rules.mandatory_fields) {
    const bool missing = (f == "title" && info.title.empty()) || (f == "case_number" && info.case_number.empty()) ||
                         (f == "court" && info.court.empty()) || (f == "parties" && info.parties.empty());
    if (missing) info.missing_fields.push_back(f);
  }
  return info;
}

// ---------------------------------------------------------------------------
// Evaluation

struct SegmentScores {
  std::map<std::string, PrfScore> exact;
  std::map<std::string, PrfScore> overlap;
};

/// Per-type scores over aligned documents: exact spans, and an overlap
/// variant where a prediction counts if it shares a byte with a gold segment
/// of the same type (recall counted symmetrically).
inline SegmentScores segment_eval(const std::vector<std::vector<Segment>>& gold,
                                  const std::vector<std::vector<Segment>>& predicted) {
  if (gold.size() != predicted.size()) throw ArgumentError("segment_eval: document counts differ");
  std::map<std::string, std::array<long, 5>> c;  // exact tp, pred, gold, overlap-precision hits, overlap-recall hits
  auto overlaps = [](const Segment& a, const Segment& b) {
    return a.type == b.type && a.begin < b.end && b.begin < a.end;
  };
  for (std::size_t d = 0; d < gold.size(); ++d) {
    std::set<Segment> g(gold[d].begin(), gold[d].end());
    for (const auto& p : predicted[d]) {
      auto& row = c[to_string(p.type)];
      ++row[1];
      if (g.count(p)) ++row[0];
      if (std::any_of(gold[d].begin(), gold[d].end(), [&](const Segment& x) { return overlaps(p, x); })) ++row[3];
    }
    for (const auto& s : gold[d]) {
      auto& row = c[to_string(s.type)];
      ++row[2];
      if (std::any_of(predicted[d].begin(), predicted[d].end(), [&](const Segment& x) { return overlaps(s, x); }))
        ++row[4];
    }
  }
  SegmentScores out;
  for (const auto& [type, r] : c) {
    out.exact[type] = prf_from_counts(r[0], r[1], r[2]);
    PrfScore o;
    o.predicted = r[1];
    o.gold = r[2];
    o.precision = r[1] > 0 ? static_cast<double>(r[3]) / static_cast<double>(r[1]) : (r[2] == 0 ? 1.0 : 0.0);
    o.recall = r[2] > 0 ? static_cast<double>(r[4]) / static_cast<double>(r[2]) : (r[1] == 0 ? 1.0 : 0.0);
    o.f1 = o.precision + o.recall > 0 ? 2 * o.precision * o.recall / (o.precision + o.recall) : 0.0;
    out.overlap[type] = o;
  }
  return out;
}

}  // namespace casegraph::pipeline
