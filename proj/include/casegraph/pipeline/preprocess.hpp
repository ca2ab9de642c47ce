#pragma once

// Facts text, sentence splitting and single-holder referent completion.

#include <cctype>
#include <regex>
#include <string>
#include <vector>

#include "casegraph/pipeline/segment.hpp"

namespace casegraph::pipeline {

struct FactSentence {
  std::string original;  // as written in the document
  std::string text;      // after referent completion
  bool ambiguous = false;
  std::vector<std::string> unresolved_roles;
};

/// Body of every facts segment with the header phrase removed, joined by
/// newlines.
inline std::string facts_text(const CaseDocument& doc, const std::vector<Segment>& segments, const RuleSet& rules) {
  std::string out;
  for (const auto& seg : segments) {
    if (seg.type != SegmentType::Facts) continue;
    std::string text = segment_text(doc, seg);
    if (rules.facts_header) {
      std::smatch m;
      if (std::regex_search(text, m, rules.facts_header->re) && m.position(0) == 0) text = text.substr(m.length(0));
    }
    text = trim(text);
    if (text.empty()) continue;
    if (!out.empty()) out += '\n';
    out += text;
  }
  return out;
}

/// Splits after '.', '!' or '?' when followed by whitespace or the end, except
/// after a lone capital initial such as the "A." in "A. Smith".
inline std::vector<std::string> split_sentences(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  auto emit = [&](std::size_t end) {
    std::string s = trim(text.substr(start, end - start));
    if (!s.empty()) out.push_back(std::move(s));
    start = end;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '\n' && i + 1 < text.size() && text[i + 1] == '\n') {
      emit(i);
      continue;
    }
    if (c != '.' && c != '!' && c != '?') continue;
    if (i + 1 < text.size() && !std::isspace(static_cast<unsigned char>(text[i + 1]))) continue;
    if (c == '.' && i >= 1 && std::isupper(static_cast<unsigned char>(text[i - 1])) &&
        (i == 1 || std::isspace(static_cast<unsigned char>(text[i - 2]))))
      continue;
    emit(i + 1);
  }
  emit(text.size());
  return out;
}

/// Role words are replaced by the party's name when exactly one party holds
/// the role; otherwise the word stays and the sentence is flagged.
inline std::vector<FactSentence> preprocess_facts(const std::string& facts, const CaseInfo& info, const RuleSet& rules) {
  std::vector<FactSentence> out;
  for (auto& raw : split_sentences(facts)) {
    FactSentence s{raw, raw, false, {}};
    for (const auto& [role, pattern] : rules.role_words) {
      if (!std::regex_search(s.text, pattern.re)) continue;
      const auto holders = info.holders(role);
      if (holders.size() == 1) {
        std::string literal;
        for (char ch : holders.front()->name) literal += ch == '$' ? std::string("$$") : std::string(1, ch);
        s.text = std::regex_replace(s.text, pattern.re, literal);
      } else {
        s.ambiguous = true;
        s.unresolved_roles.push_back(role);
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace casegraph::pipeline
