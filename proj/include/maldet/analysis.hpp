#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "maldet/normalize.hpp"
#include "maldet/report.hpp"
#include "maldet/tokenizer.hpp"

namespace maldet {

struct TrigramEntry {
  std::array<std::string, 3> words;
  std::uint64_t count = 0;
};

// Per-class top trigrams (0 = benign, 1 = malware), sorted by descending
// count then lexicographically. Computed over normalized full-mode word
// streams with a stride-1 sliding window.
struct TrigramTable {
  std::array<std::vector<TrigramEntry>, 2> per_class;
  std::array<std::uint64_t, 2> sequence_count{0, 0};

  // Count normalized by the class's sequence count.
  static double prominence(const TrigramEntry& e, std::uint64_t sequences) {
    return sequences == 0 ? 0.0
                          : static_cast<double>(e.count) /
                                static_cast<double>(sequences);
  }
};

// When per_sample_presence is set each sequence contributes at most one
// count per distinct trigram.
TrigramTable trigram_counts(std::span<const WordSequence> sequences,
                            std::span<const int> labels, std::size_t top_n,
                            bool per_sample_presence = false);

std::string trigram_report_json(const TrigramTable& table);
std::string trigram_report_text(const TrigramTable& table);

// Exact true_len distribution of encoded sequences.
struct LengthStats {
  std::vector<std::uint64_t> counts;  // counts[len], len 0..max observed
  std::uint64_t total = 0;

  double fraction_at_most(std::size_t n) const;
};

LengthStats length_stats(std::span<const TokenSequence> sequences);

std::string length_report_json(const LengthStats& stats,
                               std::size_t bucket_width = 50);
std::string length_report_text(const LengthStats& stats,
                               std::size_t bucket_width = 50);

// Synthetic corpus recipe. Both classes draw calls from the same weighted
// background pool; the planted call (library/api also present in the
// background) differs only through its first argument. Each sample has
// max(2, round(planted_slot_fraction * n_calls)) insertion slots and each
// slot realizes the planted call with the class's injection probability,
// so injection 1.0 plants into every malware sample and injection 0.0
// leaves the classes identically distributed.
struct SyntheticSpec {
  std::int32_t n_benign = 0;
  std::int32_t n_malware = 0;
  double injection_malware = 1.0;
  double injection_benign = 0.0;
  std::int32_t benign_calls_min = 20;
  std::int32_t benign_calls_max = 200;
  std::int32_t malware_calls_min = 20;
  std::int32_t malware_calls_max = 200;
  double planted_slot_fraction = 0.12;
  std::string planted_library = "kernel32";
  std::string planted_api = "GetProcAddress";
  std::string planted_arg = "0x7c0ffee0";
  std::uint64_t min_report_bytes = 4224;  // padded above the 4 KB filter
  std::uint64_t seed = 0;

  void validate() const;  // throws InvalidSpec

  // The planted trigram as it appears post-normalization.
  std::array<std::string, 3> planted_trigram(const NormalizationRules& rules) const;
};

struct GeneratedCorpus {
  std::vector<LabeledSample> samples;      // parsed back from the written files
  std::filesystem::path manifest_path;
  std::size_t planted_benign = 0;          // samples containing the planted call
  std::size_t planted_malware = 0;
};

// Writes reports/<id>.json files plus manifest.csv under out_dir and
// returns the corpus re-parsed through parse_report. Byte-identical for
// a fixed spec.
GeneratedCorpus generate_synthetic(const SyntheticSpec& spec,
                                   const std::filesystem::path& out_dir);

}  // namespace maldet
