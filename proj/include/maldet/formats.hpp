#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "maldet/normalize.hpp"
#include "maldet/tokenizer.hpp"
#include "maldet/trainer.hpp"

namespace maldet {

// A normalized word stream with its label, as handed between the ingest,
// tokenizer-training and analysis stages.
struct NormalizedSample {
  std::string id;
  int label = 0;
  WordSequence words;
};

struct SequencesFile {
  SequenceMode mode = SequenceMode::Full;
  std::vector<NormalizedSample> samples;
};

// Tab-separated text: header line, then id, label, space-joined words and
// a per-word kind string (l/a/g/r/t).
void save_sequences(const std::filesystem::path& path, const SequencesFile& data);
SequencesFile load_sequences(const std::filesystem::path& path);

struct EncodedFile {
  std::int32_t context_len = 0;
  std::vector<EncodedSample> samples;
};

// Binary id sequences (only the true_len prefix is stored; PAD is
// reconstructed on load).
void save_encoded(const std::filesystem::path& path, const EncodedFile& data);
EncodedFile load_encoded(const std::filesystem::path& path);

std::string history_to_json(const TrainHistory& history);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace maldet
