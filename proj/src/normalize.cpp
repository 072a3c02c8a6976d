#include "maldet/normalize.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "maldet/errors.hpp"

namespace maldet {
namespace {

bool is_ws(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

char lower_ascii(char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

bool is_hex_digit(char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
}

// 0x8 followed by exactly 7 hex digits starting at `pos` of a lowercased
// string, with no further hex digit after (so 0x800000000 is not a hit).
bool error_code_at(std::string_view s, std::size_t pos) {
  if (pos + 10 > s.size()) return false;
  if (s[pos] != '0' || s[pos + 1] != 'x' || s[pos + 2] != '8') return false;
  for (std::size_t i = pos + 3; i < pos + 10; ++i) {
    if (!is_hex_digit(s[i])) return false;
  }
  return pos + 10 == s.size() || !is_hex_digit(s[pos + 10]);
}

bool contains_error_code(std::string_view s) {
  for (std::size_t i = 0; i + 10 <= s.size(); ++i) {
    if (error_code_at(s, i)) return true;
  }
  return false;
}

std::string collapse_backslashes(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    if (c == '\\' && !out.empty() && out.back() == '\\') continue;
    out.push_back(c);
  }
  return out;
}

bool rule_matches(const NormalizationRule& rule, std::string_view canonical,
                  std::size_t raw_len, std::size_t long_string_threshold) {
  using Kind = NormalizationRule::Kind;
  switch (rule.kind) {
    case Kind::Prefix:
      return canonical.substr(0, rule.parameter.size()) == rule.parameter;
    case Kind::DrivePath:
      return canonical.size() >= 3 && canonical[1] == ':' &&
             canonical[2] == '\\' && canonical[0] >= 'a' && canonical[0] <= 'z';
    case Kind::Contains:
      return collapse_backslashes(canonical).find(rule.parameter) !=
             std::string::npos;
    case Kind::ErrorCode: {
      if (canonical.size() == 10 && error_code_at(canonical, 0)) return true;
      return canonical.find("error") != std::string_view::npos &&
             contains_error_code(canonical);
    }
    case Kind::LongString:
      return raw_len >= long_string_threshold;
  }
  return false;
}

}  // namespace

std::string_view to_string(SequenceMode mode) {
  switch (mode) {
    case SequenceMode::Full: return "full";
    case SequenceMode::ApiOnly: return "api_only";
    case SequenceMode::Tagged: return "tagged";
  }
  return "full";
}

SequenceMode sequence_mode_from_string(std::string_view name) {
  if (name == "full") return SequenceMode::Full;
  if (name == "api_only") return SequenceMode::ApiOnly;
  if (name == "tagged") return SequenceMode::Tagged;
  throw std::invalid_argument("unknown sequence mode: " + std::string(name));
}

NormalizationRules NormalizationRules::defaults() {
  using Kind = NormalizationRule::Kind;
  NormalizationRules r;
  r.rules = {
      {"<url>", Kind::Prefix, "http://"},
      {"<url>", Kind::Prefix, "https://"},
      {"<path>", Kind::DrivePath, ""},
      {"<path>", Kind::Prefix, "\\\\"},
      {"<google>", Kind::Contains, "google\\temp"},
      {"<error>", Kind::ErrorCode, ""},
      {"<string>", Kind::LongString, ""},
  };
  return r;
}

NormalizationRules NormalizationRules::from_stream(std::istream& in) {
  using Kind = NormalizationRule::Kind;
  NormalizationRules out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::size_t t1 = line.find('\t');
    if (t1 == std::string::npos) {
      throw FormatError("rules line " + std::to_string(lineno) +
                        ": expected placeholder<TAB>kind<TAB>parameter");
    }
    std::size_t t2 = line.find('\t', t1 + 1);
    std::string placeholder = line.substr(0, t1);
    std::string kind = t2 == std::string::npos ? line.substr(t1 + 1)
                                               : line.substr(t1 + 1, t2 - t1 - 1);
    std::string param = t2 == std::string::npos ? "" : line.substr(t2 + 1);

    if (kind == "strip-set") {
      out.symbol_strip_set = param;
    } else if (kind == "long-string-threshold") {
      out.long_string_threshold = std::stoull(param);
    } else if (kind == "prefix") {
      out.rules.push_back({placeholder, Kind::Prefix, param});
    } else if (kind == "drive-path") {
      out.rules.push_back({placeholder, Kind::DrivePath, ""});
    } else if (kind == "contains") {
      out.rules.push_back({placeholder, Kind::Contains, param});
    } else if (kind == "error-code") {
      out.rules.push_back({placeholder, Kind::ErrorCode, ""});
    } else if (kind == "long-string") {
      out.rules.push_back({placeholder, Kind::LongString, ""});
    } else {
      throw FormatError("rules line " + std::to_string(lineno) +
                        ": unknown pattern-kind " + kind);
    }
  }
  return out;
}

NormalizationRules NormalizationRules::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open rules file: " + path.string());
  return from_stream(in);
}

std::vector<std::string> NormalizationRules::placeholders() const {
  std::vector<std::string> out;
  for (const auto& rule : rules) {
    if (std::find(out.begin(), out.end(), rule.placeholder) == out.end()) {
      out.push_back(rule.placeholder);
    }
  }
  return out;
}

std::string normalize_word(std::string_view raw, const NormalizationRules& rules) {
  std::size_t begin = 0;
  std::size_t end = raw.size();
  while (begin < end && is_ws(raw[begin])) ++begin;
  while (end > begin && is_ws(raw[end - 1])) --end;
  std::string_view trimmed = raw.substr(begin, end - begin);

  // Placeholders are fixed points regardless of the strip-set config.
  for (const auto& rule : rules.rules) {
    if (trimmed == rule.placeholder) return rule.placeholder;
  }

  std::string canonical;
  canonical.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) {
    char c = raw[i];
    if (rules.symbol_strip_set.find(c) != std::string::npos) continue;
    canonical.push_back(lower_ascii(c));
  }

  for (const auto& rule : rules.rules) {
    if (rule_matches(rule, canonical, raw.size(), rules.long_string_threshold)) {
      return rule.placeholder;
    }
  }
  return canonical;
}

std::vector<std::string> normalize_tokens(std::string_view raw,
                                          const NormalizationRules& rules) {
  std::vector<std::string> out;
  std::string first = normalize_word(raw, rules);
  if (first.find_first_of(" \t\n\r") == std::string::npos) {
    if (!first.empty()) out.push_back(std::move(first));
    return out;
  }
  std::size_t i = 0;
  while (i < first.size()) {
    while (i < first.size() && is_ws(first[i])) ++i;
    std::size_t j = i;
    while (j < first.size() && !is_ws(first[j])) ++j;
    if (j > i) {
      std::string w = normalize_word(std::string_view(first).substr(i, j - i), rules);
      if (!w.empty()) out.push_back(std::move(w));
    }
    i = j;
  }
  return out;
}

WordSequence flatten_report(const Report& report, const NormalizationRules& rules,
                            SequenceMode mode) {
  WordSequence seq;
  seq.mode = mode;
  if (mode == SequenceMode::Tagged) seq.push(std::string(kStartTag), WordKind::Tag);

  bool first_call = true;
  for (const auto& call : report.calls) {
    if (mode == SequenceMode::Tagged && !first_call) {
      seq.push(std::string(kSepTag), WordKind::Tag);
    }
    first_call = false;

    std::string lib = normalize_word(call.library, rules);
    if (!lib.empty()) seq.push(std::move(lib), WordKind::Library);
    std::string name = normalize_word(call.api_name, rules);
    if (!name.empty()) seq.push(std::move(name), WordKind::ApiName);

    if (mode == SequenceMode::ApiOnly) continue;
    for (const auto& arg : call.args) {
      for (auto& w : normalize_tokens(arg, rules)) {
        seq.push(std::move(w), WordKind::Argument);
      }
    }
    if (call.ret_val) {
      for (auto& w : normalize_tokens(*call.ret_val, rules)) {
        seq.push(std::move(w), WordKind::ReturnValue);
      }
    }
  }
  if (mode == SequenceMode::Tagged) seq.push(std::string(kEndTag), WordKind::Tag);
  return seq;
}

}  // namespace maldet
