#include "maldet/formats.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "maldet/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "encoded-file writer assumes a little-endian host");

namespace maldet {
namespace {

constexpr std::string_view kSequencesHeader = "# maldet-sequences v1 mode=";
constexpr char kEncodedMagic[8] = {'M', 'D', 'E', 'N', 'C', '0', '0', '1'};

char kind_to_char(WordKind k) {
  switch (k) {
    case WordKind::Library: return 'l';
    case WordKind::ApiName: return 'a';
    case WordKind::Argument: return 'g';
    case WordKind::ReturnValue: return 'r';
    case WordKind::Tag: return 't';
  }
  return 'g';
}

WordKind kind_from_char(char c) {
  switch (c) {
    case 'l': return WordKind::Library;
    case 'a': return WordKind::ApiName;
    case 'g': return WordKind::Argument;
    case 'r': return WordKind::ReturnValue;
    case 't': return WordKind::Tag;
    default: throw FormatError(std::string("unknown word-kind flag: ") + c);
  }
}

template <typename T>
void write_pod(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw FormatError("truncated encoded-sequences file");
  return value;
}

}  // namespace

void save_sequences(const std::filesystem::path& path, const SequencesFile& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write sequences file: " + path.string());
  out << kSequencesHeader << to_string(data.mode) << "\n";
  for (const auto& s : data.samples) {
    out << s.id << '\t' << s.label << '\t';
    for (std::size_t i = 0; i < s.words.words.size(); ++i) {
      if (i) out << ' ';
      out << s.words.words[i];
    }
    out << '\t';
    for (WordKind k : s.words.kinds) out << kind_to_char(k);
    out << '\n';
  }
}

SequencesFile load_sequences(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open sequences file: " + path.string());
  std::string header;
  if (!std::getline(in, header) ||
      header.compare(0, kSequencesHeader.size(), kSequencesHeader) != 0) {
    throw FormatError("not a maldet-sequences v1 file: " + path.string());
  }
  SequencesFile data;
  data.mode = sequence_mode_from_string(header.substr(kSequencesHeader.size()));

  std::string line;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t t1 = line.find('\t');
    std::size_t t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    std::size_t t3 = t2 == std::string::npos ? t2 : line.find('\t', t2 + 1);
    if (t3 == std::string::npos) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) +
                        ": expected 4 tab-separated fields");
    }
    NormalizedSample sample;
    sample.id = line.substr(0, t1);
    std::string label = line.substr(t1 + 1, t2 - t1 - 1);
    if (label == "0") {
      sample.label = 0;
    } else if (label == "1") {
      sample.label = 1;
    } else {
      throw FormatError(path.string() + ":" + std::to_string(lineno) +
                        ": label must be 0 or 1");
    }
    sample.words.mode = data.mode;

    std::string words = line.substr(t2 + 1, t3 - t2 - 1);
    std::istringstream ws(words);
    std::string w;
    while (ws >> w) sample.words.words.push_back(w);
    std::string kinds = line.substr(t3 + 1);
    if (kinds.size() != sample.words.words.size()) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) +
                        ": kind string length does not match word count");
    }
    for (char c : kinds) sample.words.kinds.push_back(kind_from_char(c));
    data.samples.push_back(std::move(sample));
  }
  return data;
}

void save_encoded(const std::filesystem::path& path, const EncodedFile& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write encoded file: " + path.string());
  out.write(kEncodedMagic, sizeof(kEncodedMagic));
  write_pod<std::int32_t>(out, data.context_len);
  write_pod<std::uint64_t>(out, data.samples.size());
  for (const auto& s : data.samples) {
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s.id.size()));
    out.write(s.id.data(), static_cast<std::streamsize>(s.id.size()));
    write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(s.label));
    write_pod<std::int32_t>(out, s.seq.true_len);
    out.write(reinterpret_cast<const char*>(s.seq.ids.data()),
              static_cast<std::streamsize>(sizeof(std::int32_t) * s.seq.true_len));
  }
  if (!out) throw FormatError("failed writing encoded file: " + path.string());
}

EncodedFile load_encoded(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open encoded file: " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kEncodedMagic, sizeof(kEncodedMagic)) != 0) {
    throw FormatError("not a maldet encoded-sequences file: " + path.string());
  }
  EncodedFile data;
  data.context_len = read_pod<std::int32_t>(in);
  auto count = read_pod<std::uint64_t>(in);
  data.samples.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    EncodedSample s;
    auto idlen = read_pod<std::uint32_t>(in);
    s.id.resize(idlen);
    in.read(s.id.data(), idlen);
    s.label = read_pod<std::uint8_t>(in);
    s.seq.true_len = read_pod<std::int32_t>(in);
    if (s.seq.true_len < 0 || s.seq.true_len > data.context_len) {
      throw FormatError("encoded sample true_len out of range");
    }
    s.seq.ids.resize(static_cast<std::size_t>(data.context_len), kPadId);
    in.read(reinterpret_cast<char*>(s.seq.ids.data()),
            static_cast<std::streamsize>(sizeof(std::int32_t) * s.seq.true_len));
    if (!in) throw FormatError("truncated encoded-sequences file");
    data.samples.push_back(std::move(s));
  }
  return data;
}

std::string history_to_json(const TrainHistory& history) {
  nlohmann::ordered_json doc;
  nlohmann::ordered_json epochs = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < history.epochs.size(); ++i) {
    const auto& e = history.epochs[i];
    epochs.push_back({{"epoch", i + 1},
                      {"train_loss", e.train_loss},
                      {"train_accuracy", e.train_accuracy},
                      {"val_loss", e.val_loss},
                      {"val_accuracy", e.val_accuracy}});
  }
  doc["epochs"] = std::move(epochs);
  doc["stopped_epoch"] = history.stopped_epoch;
  doc["best_epoch"] = history.best_epoch;
  doc["diverged"] = history.diverged;
  return doc.dump(2) + "\n";
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write file: " + path.string());
  out << text;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return std::move(buf).str();
}

}  // namespace maldet
