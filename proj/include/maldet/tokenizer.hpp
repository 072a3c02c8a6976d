#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "maldet/normalize.hpp"

namespace maldet {

inline constexpr std::string_view kPadToken = "<pad>";
inline constexpr std::string_view kUnkToken = "<unk>";

inline constexpr std::int32_t kPadId = 0;
inline constexpr std::int32_t kUnkId = 1;
inline constexpr std::int32_t kStartId = 2;
inline constexpr std::int32_t kEndId = 3;
inline constexpr std::int32_t kSepId = 4;

// Hybrid vocabulary: five specials, reserved whole words (top API names,
// placeholders, structural tags), then WordPiece alphabet and merges.
// Ids are dense 0..size()-1 in that order.
struct Vocabulary {
  std::vector<std::string> id_to_token;
  std::unordered_map<std::string, std::int32_t> token_to_id;
  std::set<std::string> reserved;
  std::string continuation_prefix = "##";
  std::size_t target_size = 5500;

  std::size_t size() const { return id_to_token.size(); }
  bool contains(std::string_view token) const {
    return token_to_id.find(std::string(token)) != token_to_id.end();
  }
  // -1 when absent.
  std::int32_t id_of(std::string_view token) const {
    auto it = token_to_id.find(std::string(token));
    return it == token_to_id.end() ? -1 : it->second;
  }
  bool is_reserved(std::string_view word) const {
    return reserved.find(std::string(word)) != reserved.end();
  }
  // Appends token if its string is new; either way returns its id.
  std::int32_t add(const std::string& token);
};

// Fixed-length id sequence: ids.size() == context_len, ids[true_len..]
// are all PAD.
struct TokenSequence {
  std::vector<std::int32_t> ids;
  std::int32_t true_len = 0;
};

// A tokenized, labeled sample as consumed by training and evaluation.
struct EncodedSample {
  std::string id;
  int label = 0;
  TokenSequence seq;
};

// Splits a word into its unicode scalars (one element per code point;
// bytes of invalid sequences become single-byte elements). Training and
// encoding share this so both sides agree on the alphabet.
std::vector<std::string> utf8_chars(std::string_view word);

// Top-k most frequent Library/ApiName words (ties broken by lexicographic
// order) plus every placeholder and structural tag.
std::set<std::string> select_reserved_tokens(const std::vector<WordSequence>& corpus,
                                             std::size_t top_k,
                                             const NormalizationRules& rules);

// Smallest k whose top-k API-name words cover `coverage` of all
// Library/ApiName occurrences, capped so |reserved| stays within cap.
std::size_t auto_top_k(const std::vector<WordSequence>& corpus,
                       const NormalizationRules& rules, double coverage = 0.95,
                       std::size_t cap = 2500);

struct TrainVocabOptions {
  std::size_t target_size = 5500;
  std::uint64_t min_pair_count = 2;
};

// WordPiece training over word frequencies. Repeatedly merges the
// adjacent piece pair maximizing
//     count(pair) / (count(left) * count(right))
// (exact integer arithmetic, ties broken lexicographically by (left,
// right)), until the vocabulary reaches target_size or no pair occurs at
// least min_pair_count times. Words covered by a reserved token are
// excluded from the statistics.
Vocabulary train_vocab_from_counts(const std::map<std::string, std::uint64_t>& word_counts,
                                   const std::set<std::string>& reserved,
                                   const TrainVocabOptions& options);

Vocabulary train_vocab(const std::vector<WordSequence>& corpus,
                       const std::set<std::string>& reserved,
                       const TrainVocabOptions& options);

// Greedy longest-match-first segmentation; non-initial pieces carry the
// continuation prefix. Returns an empty vector when the word cannot be
// segmented. With exclude_whole_word the full-word match is skipped (used
// by the vetting report to ask how a reserved name would split).
std::vector<std::string> segment_word(std::string_view word, const Vocabulary& vocab,
                                      bool exclude_whole_word = false);

// Reserved word -> single id; other words -> greedy WordPiece pieces or
// UNK; the id stream is truncated to context_len (head kept) and padded.
TokenSequence encode(const WordSequence& seq, const Vocabulary& vocab,
                     std::size_t context_len);

// Ids -> words: PAD dropped, continuation pieces joined to their head.
// Throws UnknownId on out-of-range ids.
std::vector<std::string> decode(const std::vector<std::int32_t>& ids,
                                const Vocabulary& vocab);

struct VettingEntry {
  std::string word;
  std::size_t piece_count = 0;  // 0 => would not segment at all (UNK)
};

// Reserved API names that would split into >= 4 pieces (or none) if they
// were not reserved — the automated stand-in for manual dictionary review.
std::vector<VettingEntry> vet_reserved(const Vocabulary& vocab,
                                       const NormalizationRules& rules);

// Text format, bit-exact across save/load/save:
//   maldet-vocab v1 target=<N> cont=<prefix>
//   <flags>\t<token>          (flags: s special, r reserved, w piece)
void save_vocabulary(const Vocabulary& vocab, const std::filesystem::path& path);
Vocabulary load_vocabulary(const std::filesystem::path& path);

}  // namespace maldet
