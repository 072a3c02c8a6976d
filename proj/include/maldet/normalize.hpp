#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "maldet/report.hpp"

namespace maldet {

inline constexpr std::string_view kStartTag = "[START]";
inline constexpr std::string_view kEndTag = "[END]";
inline constexpr std::string_view kSepTag = "[SEP]";

enum class SequenceMode { Full, ApiOnly, Tagged };

std::string_view to_string(SequenceMode mode);
SequenceMode sequence_mode_from_string(std::string_view name);

// Role of a word in the flattened stream. Reserved-token selection only
// considers Library/ApiName words.
enum class WordKind : std::uint8_t {
  Library,
  ApiName,
  Argument,
  ReturnValue,
  Tag,
};

struct WordSequence {
  std::vector<std::string> words;
  std::vector<WordKind> kinds;  // parallel to words
  SequenceMode mode = SequenceMode::Full;

  void push(std::string word, WordKind kind) {
    words.push_back(std::move(word));
    kinds.push_back(kind);
  }
  std::size_t size() const { return words.size(); }
};

struct NormalizationRule {
  enum class Kind {
    Prefix,      // canonical form starts with `parameter`
    DrivePath,   // "c:\..." style path
    Contains,    // contains `parameter`, backslash runs collapsed first
    ErrorCode,   // 0x8 + 7 hex digits, bare or alongside the word "error"
    LongString,  // raw length >= long_string_threshold
  };
  std::string placeholder;
  Kind kind = Kind::Prefix;
  std::string parameter;
};

// Ordered first-match-wins placeholder rules plus the symbol policy.
// Matching happens on the canonical form of a word (whitespace-trimmed,
// strip-set symbols removed, ASCII-lowercased), which makes
// normalize_word idempotent by construction; the long-string rule tests
// the raw input length.
struct NormalizationRules {
  std::vector<NormalizationRule> rules;
  std::size_t long_string_threshold = 100;
  std::string symbol_strip_set = "\"'()[]{},;`!?*|^~";

  static NormalizationRules defaults();
  // Line format: placeholder<TAB>pattern-kind<TAB>parameter, '#' comments.
  // pattern-kind is one of prefix|drive-path|contains|error-code|long-string,
  // plus the pseudo-kinds strip-set and long-string-threshold.
  static NormalizationRules from_stream(std::istream& in);
  static NormalizationRules from_file(const std::filesystem::path& path);

  // All placeholders, in rule order without duplicates.
  std::vector<std::string> placeholders() const;
};

// Single-word normalization: the first matching placeholder, otherwise
// the canonical (lowercased, symbol-stripped) input. May return an empty
// string or a string with interior whitespace; flatten_report splits and
// drops those.
std::string normalize_word(std::string_view raw, const NormalizationRules& rules);

// normalize_word plus whitespace splitting: fragments are re-normalized
// individually and empties dropped.
std::vector<std::string> normalize_tokens(std::string_view raw,
                                          const NormalizationRules& rules);

// Flattens a report into the word stream for the requested mode:
//   Full    - per call: library, api name, normalized args, normalized ret
//   ApiOnly - per call: library, api name
//   Tagged  - [START] + full-mode call groups joined by [SEP] + [END]
WordSequence flatten_report(const Report& report, const NormalizationRules& rules,
                            SequenceMode mode);

}  // namespace maldet
