#include "maldet/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "maldet/errors.hpp"

namespace maldet {
namespace {

constexpr std::string_view kVocabHeaderPrefix = "maldet-vocab v1 ";

struct PairCount {
  std::uint64_t pair = 0;
  std::uint64_t left = 0;
  std::uint64_t right = 0;
};

// score(a) > score(b) with exact integer arithmetic:
//   a.pair / (a.left * a.right)  ?  b.pair / (b.left * b.right)
// cross-multiplied in 128 bits so spec-mandated ties are exact.
bool score_greater(const PairCount& a, const PairCount& b) {
  using u128 = unsigned __int128;
  u128 lhs = static_cast<u128>(a.pair) * (static_cast<u128>(b.left) * b.right);
  u128 rhs = static_cast<u128>(b.pair) * (static_cast<u128>(a.left) * a.right);
  return lhs > rhs;
}

bool score_equal(const PairCount& a, const PairCount& b) {
  using u128 = unsigned __int128;
  u128 lhs = static_cast<u128>(a.pair) * (static_cast<u128>(b.left) * b.right);
  u128 rhs = static_cast<u128>(b.pair) * (static_cast<u128>(a.left) * a.right);
  return lhs == rhs;
}

std::size_t utf8_len(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xe) return 3;
  if ((lead >> 3) == 0x1e) return 4;
  return 1;  // invalid lead byte: treat as a single-byte scalar
}

}  // namespace

std::int32_t Vocabulary::add(const std::string& token) {
  auto it = token_to_id.find(token);
  if (it != token_to_id.end()) return it->second;
  auto id = static_cast<std::int32_t>(id_to_token.size());
  id_to_token.push_back(token);
  token_to_id.emplace(token, id);
  return id;
}

std::vector<std::string> utf8_chars(std::string_view word) {
  std::vector<std::string> chars;
  std::size_t i = 0;
  while (i < word.size()) {
    std::size_t n = utf8_len(static_cast<unsigned char>(word[i]));
    if (i + n > word.size()) n = 1;
    // continuation bytes must all be 10xxxxxx, otherwise fall back to 1
    for (std::size_t k = 1; k < n; ++k) {
      if ((static_cast<unsigned char>(word[i + k]) & 0xc0) != 0x80) {
        n = 1;
        break;
      }
    }
    chars.emplace_back(word.substr(i, n));
    i += n;
  }
  return chars;
}

std::set<std::string> select_reserved_tokens(const std::vector<WordSequence>& corpus,
                                             std::size_t top_k,
                                             const NormalizationRules& rules) {
  std::map<std::string, std::uint64_t> counts;
  for (const auto& seq : corpus) {
    for (std::size_t i = 0; i < seq.words.size(); ++i) {
      if (seq.kinds[i] == WordKind::Library || seq.kinds[i] == WordKind::ApiName) {
        ++counts[seq.words[i]];
      }
    }
  }
  std::vector<std::pair<std::string, std::uint64_t>> ranked(counts.begin(),
                                                            counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  std::set<std::string> reserved;
  for (std::size_t i = 0; i < ranked.size() && i < top_k; ++i) {
    reserved.insert(ranked[i].first);
  }
  for (const auto& p : rules.placeholders()) reserved.insert(p);
  reserved.insert(std::string(kStartTag));
  reserved.insert(std::string(kEndTag));
  reserved.insert(std::string(kSepTag));
  return reserved;
}

std::size_t auto_top_k(const std::vector<WordSequence>& corpus,
                       const NormalizationRules& rules, double coverage,
                       std::size_t cap) {
  std::map<std::string, std::uint64_t> counts;
  std::uint64_t total = 0;
  for (const auto& seq : corpus) {
    for (std::size_t i = 0; i < seq.words.size(); ++i) {
      if (seq.kinds[i] == WordKind::Library || seq.kinds[i] == WordKind::ApiName) {
        ++counts[seq.words[i]];
        ++total;
      }
    }
  }
  if (total == 0) return 0;

  std::vector<std::uint64_t> ranked;
  ranked.reserve(counts.size());
  for (const auto& [_, c] : counts) ranked.push_back(c);
  std::sort(ranked.begin(), ranked.end(), std::greater<>());

  const std::size_t extras = rules.placeholders().size() + 3;  // tags
  const std::size_t k_cap = cap > extras ? cap - extras : 0;
  std::uint64_t cum = 0;
  std::size_t k = 0;
  for (; k < ranked.size() && k < k_cap; /**/) {
    if (static_cast<double>(cum) >= coverage * static_cast<double>(total)) break;
    cum += ranked[k];
    ++k;
  }
  return k;
}

Vocabulary train_vocab_from_counts(const std::map<std::string, std::uint64_t>& word_counts,
                                   const std::set<std::string>& reserved,
                                   const TrainVocabOptions& options) {
  Vocabulary vocab;
  vocab.target_size = options.target_size;
  vocab.reserved = reserved;
  vocab.add(std::string(kPadToken));
  vocab.add(std::string(kUnkToken));
  vocab.add(std::string(kStartTag));
  vocab.add(std::string(kEndTag));
  vocab.add(std::string(kSepTag));
  for (const auto& r : reserved) vocab.add(r);

  if (word_counts.empty()) {
    throw CorpusTooSmall("tokenizer training corpus is empty");
  }

  // Working segmentations of the trainable words (reserved-covered words
  // carry no sub-token statistics).
  std::vector<std::vector<std::string>> segs;
  std::vector<std::uint64_t> freq;
  for (const auto& [word, count] : word_counts) {
    if (reserved.count(word) || word.empty()) continue;
    auto chars = utf8_chars(word);
    std::vector<std::string> pieces;
    pieces.reserve(chars.size());
    for (std::size_t i = 0; i < chars.size(); ++i) {
      pieces.push_back(i == 0 ? chars[i] : vocab.continuation_prefix + chars[i]);
    }
    segs.push_back(std::move(pieces));
    freq.push_back(count);
  }

  // Alphabet: initial characters first, then continuations, each sorted.
  std::set<std::string> initial, continuation;
  for (const auto& pieces : segs) {
    for (std::size_t i = 0; i < pieces.size(); ++i) {
      (i == 0 ? initial : continuation).insert(pieces[i]);
    }
  }
  for (const auto& t : initial) vocab.add(t);
  for (const auto& t : continuation) vocab.add(t);

  if (vocab.size() > options.target_size) {
    throw CorpusTooSmall("base vocabulary (" + std::to_string(vocab.size()) +
                         " tokens) already exceeds target size " +
                         std::to_string(options.target_size));
  }

  while (vocab.size() < options.target_size) {
    // Gather sub-token and adjacent-pair frequencies.
    std::map<std::string, std::uint64_t> piece_count;
    std::map<std::pair<std::string, std::string>, std::uint64_t> pair_count;
    for (std::size_t w = 0; w < segs.size(); ++w) {
      const auto& pieces = segs[w];
      for (const auto& p : pieces) piece_count[p] += freq[w];
      for (std::size_t i = 0; i + 1 < pieces.size(); ++i) {
        pair_count[{pieces[i], pieces[i + 1]}] += freq[w];
      }
    }

    const std::pair<std::string, std::string>* best = nullptr;
    PairCount best_counts;
    for (const auto& [pair, pc] : pair_count) {
      if (pc < options.min_pair_count) continue;
      PairCount cand{pc, piece_count[pair.first], piece_count[pair.second]};
      if (!best || score_greater(cand, best_counts) ||
          (score_equal(cand, best_counts) && pair < *best)) {
        best = &pair;
        best_counts = cand;
      }
    }
    if (!best) break;

    const std::string left = best->first;
    const std::string right = best->second;
    std::string merged = left;
    merged += std::string_view(right).substr(vocab.continuation_prefix.size());
    vocab.add(merged);

    for (auto& pieces : segs) {
      for (std::size_t i = 0; i + 1 < pieces.size();) {
        if (pieces[i] == left && pieces[i + 1] == right) {
          pieces[i] = merged;
          pieces.erase(pieces.begin() + static_cast<std::ptrdiff_t>(i) + 1);
        } else {
          ++i;
        }
      }
    }
  }
  return vocab;
}

Vocabulary train_vocab(const std::vector<WordSequence>& corpus,
                       const std::set<std::string>& reserved,
                       const TrainVocabOptions& options) {
  std::map<std::string, std::uint64_t> counts;
  for (const auto& seq : corpus) {
    for (const auto& w : seq.words) ++counts[w];
  }
  return train_vocab_from_counts(counts, reserved, options);
}

std::vector<std::string> segment_word(std::string_view word, const Vocabulary& vocab,
                                      bool exclude_whole_word) {
  std::vector<std::string> pieces;
  if (word.empty()) return pieces;
  std::size_t pos = 0;
  while (pos < word.size()) {
    std::size_t best_len = 0;
    std::string best_piece;
    for (std::size_t len = word.size() - pos; len >= 1; --len) {
      std::string candidate;
      if (pos > 0) candidate = vocab.continuation_prefix;
      candidate.append(word.substr(pos, len));
      if (exclude_whole_word && pos == 0 && len == word.size()) continue;
      if (vocab.contains(candidate)) {
        best_len = len;
        best_piece = std::move(candidate);
        break;
      }
    }
    if (best_len == 0) return {};  // unsegmentable
    pieces.push_back(std::move(best_piece));
    pos += best_len;
  }
  return pieces;
}

TokenSequence encode(const WordSequence& seq, const Vocabulary& vocab,
                     std::size_t context_len) {
  std::vector<std::int32_t> ids;
  for (const auto& word : seq.words) {
    if (word.empty()) continue;
    if (vocab.is_reserved(word)) {
      std::int32_t id = vocab.id_of(word);
      ids.push_back(id >= 0 ? id : kUnkId);
      continue;
    }
    auto pieces = segment_word(word, vocab);
    if (pieces.empty()) {
      ids.push_back(kUnkId);
    } else {
      for (const auto& p : pieces) ids.push_back(vocab.id_of(p));
    }
  }

  TokenSequence out;
  out.true_len = static_cast<std::int32_t>(std::min(ids.size(), context_len));
  ids.resize(context_len, kPadId);  // truncates the tail or pads, as needed
  out.ids = std::move(ids);
  return out;
}

std::vector<std::string> decode(const std::vector<std::int32_t>& ids,
                                const Vocabulary& vocab) {
  std::vector<std::string> words;
  for (std::int32_t id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab.size()) {
      throw UnknownId("token id " + std::to_string(id) + " not in vocabulary of " +
                      std::to_string(vocab.size()));
    }
    if (id == kPadId) continue;
    const std::string& token = vocab.id_to_token[static_cast<std::size_t>(id)];
    if (token.size() > vocab.continuation_prefix.size() &&
        token.compare(0, vocab.continuation_prefix.size(),
                      vocab.continuation_prefix) == 0 &&
        !words.empty()) {
      words.back() += token.substr(vocab.continuation_prefix.size());
    } else {
      words.push_back(token);
    }
  }
  return words;
}

std::vector<VettingEntry> vet_reserved(const Vocabulary& vocab,
                                       const NormalizationRules& rules) {
  std::set<std::string> non_api;
  for (const auto& p : rules.placeholders()) non_api.insert(p);
  non_api.insert(std::string(kStartTag));
  non_api.insert(std::string(kEndTag));
  non_api.insert(std::string(kSepTag));

  std::vector<VettingEntry> out;
  for (const auto& word : vocab.reserved) {
    if (non_api.count(word)) continue;
    auto pieces = segment_word(word, vocab, /*exclude_whole_word=*/true);
    if (pieces.empty()) {
      out.push_back({word, 0});
    } else if (pieces.size() >= 4) {
      out.push_back({word, pieces.size()});
    }
  }
  return out;
}

void save_vocabulary(const Vocabulary& vocab, const std::filesystem::path& path) {
  std::ofstream outf(path, std::ios::binary);
  if (!outf) throw FormatError("cannot write vocabulary file: " + path.string());
  outf << kVocabHeaderPrefix << "target=" << vocab.target_size
       << " cont=" << vocab.continuation_prefix << "\n";
  for (std::size_t id = 0; id < vocab.id_to_token.size(); ++id) {
    const std::string& token = vocab.id_to_token[id];
    std::string flags;
    if (id < 5) flags += 's';
    if (vocab.reserved.count(token)) flags += 'r';
    if (flags.empty()) flags = "w";
    outf << flags << '\t' << token << '\n';
  }
}

Vocabulary load_vocabulary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open vocabulary file: " + path.string());
  std::string header;
  if (!std::getline(in, header) ||
      header.compare(0, kVocabHeaderPrefix.size(), kVocabHeaderPrefix) != 0) {
    throw FormatError("not a maldet-vocab v1 file: " + path.string());
  }

  Vocabulary vocab;
  {
    std::istringstream hs(header.substr(kVocabHeaderPrefix.size()));
    std::string field;
    while (hs >> field) {
      if (field.rfind("target=", 0) == 0) {
        vocab.target_size = std::stoull(field.substr(7));
      } else if (field.rfind("cont=", 0) == 0) {
        vocab.continuation_prefix = field.substr(5);
      }
    }
  }

  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw FormatError("vocabulary line without flags: " + line);
    }
    std::string flags = line.substr(0, tab);
    std::string token = line.substr(tab + 1);
    std::int32_t id = vocab.add(token);
    if (flags.find('r') != std::string::npos) vocab.reserved.insert(token);
    (void)id;
  }
  if (vocab.size() < 5) {
    throw FormatError("vocabulary too small to contain the special tokens");
  }
  return vocab;
}

}  // namespace maldet
