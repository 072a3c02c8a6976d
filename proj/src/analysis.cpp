#include "maldet/analysis.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "maldet/errors.hpp"
#include "maldet/rng.hpp"

namespace maldet {
namespace {

using Trigram = std::array<std::string, 3>;

// ---------------------------------------------------------------------------
// background API pool
// ---------------------------------------------------------------------------

enum class ArgKind { Addr, Flag, SmallInt, Name, Path, Url, RegPath, GoogleRel };

struct CallTemplate {
  const char* library;
  const char* api;
  double weight;
  std::vector<ArgKind> args;
  bool has_ret;
};

const std::vector<CallTemplate>& background_pool() {
  static const std::vector<CallTemplate> pool = {
      {"kernel32", "GetProcAddress", 10.0, {ArgKind::Addr, ArgKind::Name}, true},
      {"kernel32", "LoadLibraryA", 6.0, {ArgKind::Name}, true},
      {"kernel32", "GetModuleHandleA", 5.0, {ArgKind::Name}, true},
      {"kernel32", "CloseHandle", 5.0, {ArgKind::Addr}, true},
      {"kernel32", "VirtualAlloc", 4.0, {ArgKind::Addr, ArgKind::SmallInt, ArgKind::Flag}, true},
      {"kernel32", "CreateFileA", 4.0, {ArgKind::Path, ArgKind::Flag}, true},
      {"kernel32", "HeapAlloc", 3.5, {ArgKind::Addr, ArgKind::Flag, ArgKind::SmallInt}, true},
      {"kernel32", "WriteFile", 3.0, {ArgKind::Addr, ArgKind::SmallInt}, true},
      {"kernel32", "ReadFile", 3.0, {ArgKind::Addr, ArgKind::SmallInt}, true},
      {"kernel32", "GetCurrentProcessId", 2.5, {}, true},
      {"kernel32", "GetTickCount", 2.5, {}, true},
      {"kernel32", "Sleep", 2.0, {ArgKind::SmallInt}, false},
      {"kernel32", "GetSystemTimeAsFileTime", 2.0, {ArgKind::Addr}, false},
      {"kernel32", "CreateThread", 2.0, {ArgKind::Addr, ArgKind::Addr}, true},
      {"kernel32", "GetTempPathA", 1.5, {ArgKind::GoogleRel}, true},
      {"kernel32", "ExitProcess", 1.0, {ArgKind::SmallInt}, false},
      {"ntdll", "RtlAllocateHeap", 3.0, {ArgKind::Addr, ArgKind::SmallInt}, true},
      {"ntdll", "NtClose", 2.0, {ArgKind::Addr}, true},
      {"ntdll", "LdrLoadDll", 2.0, {ArgKind::Name}, true},
      {"ntdll", "NtQueryInformationProcess", 1.5, {ArgKind::Addr, ArgKind::Flag}, true},
      {"user32", "GetSystemMetrics", 2.0, {ArgKind::SmallInt}, true},
      {"user32", "LoadIconA", 1.0, {ArgKind::Addr}, true},
      {"user32", "MessageBoxA", 0.8, {ArgKind::Addr, ArgKind::Name}, true},
      {"advapi32", "RegOpenKeyExA", 2.0, {ArgKind::RegPath}, true},
      {"advapi32", "RegQueryValueExA", 2.0, {ArgKind::RegPath, ArgKind::Name}, true},
      {"advapi32", "CryptAcquireContextA", 0.8, {ArgKind::Flag}, true},
      {"msvcrt", "malloc", 2.0, {ArgKind::SmallInt}, true},
      {"msvcrt", "memset", 2.0, {ArgKind::Addr, ArgKind::SmallInt}, true},
      {"msvcrt", "strlen", 1.0, {ArgKind::Name}, true},
      {"ws2_32", "WSAStartup", 1.0, {ArgKind::Flag}, true},
      {"ws2_32", "socket", 0.8, {ArgKind::SmallInt, ArgKind::SmallInt}, true},
      {"ws2_32", "connect", 0.8, {ArgKind::Url}, true},
      {"ole32", "CoInitialize", 1.0, {ArgKind::Addr}, true},
      {"ole32", "CoCreateInstance", 0.8, {ArgKind::Addr, ArgKind::Flag}, true},
      {"shell32", "ShellExecuteA", 0.8, {ArgKind::Path}, true},
  };
  return pool;
}

const std::vector<std::string>& addr_pool() {
  static const std::vector<std::string> pool = {
      "0x401000",   "0x402400",   "0x403800",   "0x410000",   "0x41fc00",
      "0x450000",   "0x7000000",  "0x70001a0",  "0x7000480",  "0x75300000",
      "0x75f01000", "0x76a20000", "0x77550000", "0x77561234", "0x7ffe0000",
      "0x7ffe0300", "0x10001000", "0x10002200", "0x2f0000",   "0x300000",
      "0x14000a00", "0x140100f0", "0x1a0000",   "0x1b4000"};
  return pool;
}

const std::vector<std::string>& name_pool() {
  static const std::vector<std::string> pool = {
      "kernel32.dll", "user32.dll",  "ntdll.dll",     "advapi32.dll",
      "ws2_32.dll",   "CreateFileA", "VirtualFree",   "GetLastError",
      "HeapFree",     "lstrlenA",    "GetVersionExA", "IsDebuggerPresent"};
  return pool;
}

const std::vector<std::string>& path_pool() {
  static const std::vector<std::string> pool = {
      "C:\\Windows\\System32\\kernel32.dll",
      "C:\\Windows\\System32\\drivers\\etc\\hosts",
      "C:\\Users\\user\\AppData\\Local\\Temp\\out.tmp",
      "C:\\ProgramData\\update\\cache.bin",
      "C:\\Users\\user\\Documents\\report.doc",
      "\\\\share\\public\\drop.bin"};
  return pool;
}

const std::vector<std::string>& url_pool() {
  static const std::vector<std::string> pool = {
      "http://update.example.net/check", "https://cdn.example.org/pkg.bin",
      "http://203.0.113.7/gate.php"};
  return pool;
}

const std::vector<std::string>& google_rel_pool() {
  static const std::vector<std::string> pool = {
      "Google\\Temp\\cache01.tmp", "google\\temp\\session.dat"};
  return pool;
}

const std::vector<std::string>& reg_pool() {
  static const std::vector<std::string> pool = {
      "HKEY_LOCAL_MACHINE\\Software\\Microsoft\\Windows\\CurrentVersion",
      "HKEY_CURRENT_USER\\Software\\Classes",
      "HKEY_LOCAL_MACHINE\\System\\CurrentControlSet\\Services"};
  return pool;
}

const std::vector<std::string>& ret_pool() {
  static const std::vector<std::string> pool = {
      "0x0", "0x1", "0x1", "0x57", "0x401000", "0x75300000", "0x7ffe0000",
      "0x10001000", "0x80004005"};
  return pool;
}

std::string pick(const std::vector<std::string>& pool, Rng& rng) {
  return pool[static_cast<std::size_t>(rng.below(pool.size()))];
}

std::string make_arg(ArgKind kind, Rng& rng) {
  switch (kind) {
    case ArgKind::Addr: return pick(addr_pool(), rng);
    case ArgKind::Flag: {
      static const std::vector<std::string> flags = {"0x0",  "0x1",  "0x20",
                                                     "0x40", "0x80", "0x104"};
      return pick(flags, rng);
    }
    case ArgKind::SmallInt:
      return std::to_string(rng.below(1024));
    case ArgKind::Name: return pick(name_pool(), rng);
    case ArgKind::Path: return pick(path_pool(), rng);
    case ArgKind::Url: return pick(url_pool(), rng);
    case ArgKind::RegPath: return pick(reg_pool(), rng);
    case ArgKind::GoogleRel: return pick(google_rel_pool(), rng);
  }
  return {};
}

std::string random_alnum(std::size_t n, Rng& rng) {
  static const char alphabet[] =
      "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";
  std::string s(n, 'a');
  for (auto& c : s) c = alphabet[rng.below(sizeof(alphabet) - 1)];
  return s;
}

struct RawCall {
  std::string api_name;  // "lib.Name"
  std::vector<std::string> args;
  std::string ret;  // empty => omitted
};

nlohmann::ordered_json calls_to_json(std::span<const RawCall> calls) {
  nlohmann::ordered_json apis = nlohmann::ordered_json::array();
  for (const auto& c : calls) {
    nlohmann::ordered_json entry;
    entry["api_name"] = c.api_name;
    entry["args"] = c.args;
    if (!c.ret.empty()) entry["ret_val"] = c.ret;
    apis.push_back(std::move(entry));
  }
  return apis;
}

}  // namespace

// ---------------------------------------------------------------------------
// trigram table
// ---------------------------------------------------------------------------

TrigramTable trigram_counts(std::span<const WordSequence> sequences,
                            std::span<const int> labels, std::size_t top_n,
                            bool per_sample_presence) {
  if (sequences.size() != labels.size()) {
    throw LengthMismatch("trigram_counts: sequences and labels differ in length");
  }
  std::array<std::map<Trigram, std::uint64_t>, 2> counts;
  TrigramTable table;
  for (std::size_t s = 0; s < sequences.size(); ++s) {
    const auto& words = sequences[s].words;
    auto cls = static_cast<std::size_t>(labels[s] == 1 ? 1 : 0);
    ++table.sequence_count[cls];
    if (words.size() < 3) continue;
    if (per_sample_presence) {
      std::set<Trigram> seen;
      for (std::size_t i = 0; i + 2 < words.size(); ++i) {
        seen.insert({words[i], words[i + 1], words[i + 2]});
      }
      for (const auto& t : seen) ++counts[cls][t];
    } else {
      for (std::size_t i = 0; i + 2 < words.size(); ++i) {
        ++counts[cls][{words[i], words[i + 1], words[i + 2]}];
      }
    }
  }

  for (std::size_t cls = 0; cls < 2; ++cls) {
    std::vector<TrigramEntry> entries;
    entries.reserve(counts[cls].size());
    for (const auto& [trigram, count] : counts[cls]) {
      entries.push_back({trigram, count});
    }
    std::sort(entries.begin(), entries.end(),
              [](const TrigramEntry& a, const TrigramEntry& b) {
                if (a.count != b.count) return a.count > b.count;
                return a.words < b.words;
              });
    if (entries.size() > top_n) entries.resize(top_n);
    table.per_class[cls] = std::move(entries);
  }
  return table;
}

std::string trigram_report_json(const TrigramTable& table) {
  nlohmann::ordered_json doc;
  static const char* names[2] = {"benign", "malware"};
  for (std::size_t cls = 0; cls < 2; ++cls) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto& e : table.per_class[cls]) {
      rows.push_back({{"trigram", e.words},
                      {"count", e.count},
                      {"per_sequence",
                       TrigramTable::prominence(e, table.sequence_count[cls])}});
    }
    doc[names[cls]] = {{"sequences", table.sequence_count[cls]},
                       {"top", std::move(rows)}};
  }
  return doc.dump(2) + "\n";
}

std::string trigram_report_text(const TrigramTable& table) {
  std::ostringstream out;
  static const char* names[2] = {"benign", "malware"};
  for (std::size_t cls = 0; cls < 2; ++cls) {
    out << "# " << names[cls] << " (" << table.sequence_count[cls]
        << " sequences)\n";
    out << std::left << std::setw(6) << "rank" << std::setw(12) << "count"
        << std::setw(14) << "per-seq"
        << "trigram\n";
    std::size_t rank = 1;
    for (const auto& e : table.per_class[cls]) {
      std::ostringstream tri;
      tri << e.words[0] << ' ' << e.words[1] << ' ' << e.words[2];
      out << std::left << std::setw(6) << rank++ << std::setw(12) << e.count
          << std::setw(14) << std::fixed << std::setprecision(4)
          << TrigramTable::prominence(e, table.sequence_count[cls]) << tri.str()
          << "\n";
    }
    out << "\n";
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// sequence-length statistics
// ---------------------------------------------------------------------------

double LengthStats::fraction_at_most(std::size_t n) const {
  if (total == 0) return 0.0;
  std::uint64_t acc = 0;
  for (std::size_t len = 0; len < counts.size() && len <= n; ++len) {
    acc += counts[len];
  }
  return static_cast<double>(acc) / static_cast<double>(total);
}

LengthStats length_stats(std::span<const TokenSequence> sequences) {
  LengthStats stats;
  std::size_t max_len = 0;
  for (const auto& s : sequences) {
    max_len = std::max(max_len, static_cast<std::size_t>(s.true_len));
  }
  stats.counts.assign(max_len + 1, 0);
  for (const auto& s : sequences) {
    ++stats.counts[static_cast<std::size_t>(s.true_len)];
    ++stats.total;
  }
  if (sequences.empty()) stats.counts.clear();
  return stats;
}

std::string length_report_json(const LengthStats& stats, std::size_t bucket_width) {
  nlohmann::ordered_json doc;
  doc["total"] = stats.total;
  nlohmann::ordered_json buckets = nlohmann::ordered_json::array();
  for (std::size_t lo = 0; lo < stats.counts.size(); lo += bucket_width) {
    std::uint64_t c = 0;
    std::size_t hi = std::min(stats.counts.size(), lo + bucket_width);
    for (std::size_t i = lo; i < hi; ++i) c += stats.counts[i];
    buckets.push_back({{"from", lo}, {"to", hi - 1}, {"count", c}});
  }
  doc["buckets"] = std::move(buckets);
  doc["fraction_at_most"] = {{"50", stats.fraction_at_most(50)},
                             {"150", stats.fraction_at_most(150)},
                             {"500", stats.fraction_at_most(500)}};
  return doc.dump(2) + "\n";
}

std::string length_report_text(const LengthStats& stats, std::size_t bucket_width) {
  std::ostringstream out;
  out << "sequences: " << stats.total << "\n";
  out << std::left << std::setw(16) << "length" << "count\n";
  for (std::size_t lo = 0; lo < stats.counts.size(); lo += bucket_width) {
    std::uint64_t c = 0;
    std::size_t hi = std::min(stats.counts.size(), lo + bucket_width);
    for (std::size_t i = lo; i < hi; ++i) c += stats.counts[i];
    std::ostringstream range;
    range << lo << "-" << hi - 1;
    out << std::left << std::setw(16) << range.str() << c << "\n";
  }
  for (std::size_t n : {std::size_t{50}, std::size_t{150}, std::size_t{500}}) {
    out << "fraction <= " << n << ": " << std::fixed << std::setprecision(4)
        << stats.fraction_at_most(n) << "\n";
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// synthetic corpus
// ---------------------------------------------------------------------------

void SyntheticSpec::validate() const {
  if (n_benign < 0 || n_malware < 0) {
    throw InvalidSpec("sample counts must be non-negative");
  }
  if (injection_malware < 0.0 || injection_malware > 1.0 ||
      injection_benign < 0.0 || injection_benign > 1.0) {
    throw InvalidSpec("injection probabilities must lie in [0, 1]");
  }
  if (benign_calls_min < 1 || malware_calls_min < 1 ||
      benign_calls_max < benign_calls_min ||
      malware_calls_max < malware_calls_min) {
    throw InvalidSpec("call-count ranges must satisfy 1 <= min <= max");
  }
  if (planted_slot_fraction < 0.0 || planted_slot_fraction > 1.0) {
    throw InvalidSpec("planted_slot_fraction must lie in [0, 1]");
  }
  if (planted_library.empty() || planted_api.empty() || planted_arg.empty()) {
    throw InvalidSpec("planted trigram components must be non-empty");
  }
}

std::array<std::string, 3> SyntheticSpec::planted_trigram(
    const NormalizationRules& rules) const {
  return {normalize_word(planted_library, rules),
          normalize_word(planted_api, rules), normalize_word(planted_arg, rules)};
}

GeneratedCorpus generate_synthetic(const SyntheticSpec& spec,
                                   const std::filesystem::path& out_dir) {
  spec.validate();
  const auto reports_dir = out_dir / "reports";
  std::filesystem::create_directories(reports_dir);

  GeneratedCorpus corpus;
  corpus.manifest_path = out_dir / "manifest.csv";
  std::ofstream manifest(corpus.manifest_path, std::ios::binary);
  if (!manifest) {
    throw Error("cannot write manifest: " + corpus.manifest_path.string());
  }
  manifest << "# synthetic corpus, seed=" << spec.seed << "\n";

  const auto& pool = background_pool();
  std::vector<double> weights;
  weights.reserve(pool.size());
  for (const auto& t : pool) weights.push_back(t.weight);

  const std::string planted_name = spec.planted_library + "." + spec.planted_api;

  struct ClassPlan {
    int label;
    std::int32_t count;
    std::int32_t calls_min, calls_max;
    double injection;
    const char* prefix;
  };
  const ClassPlan plans[2] = {
      {0, spec.n_benign, spec.benign_calls_min, spec.benign_calls_max,
       spec.injection_benign, "ben"},
      {1, spec.n_malware, spec.malware_calls_min, spec.malware_calls_max,
       spec.injection_malware, "mal"},
  };

  for (const auto& plan : plans) {
    for (std::int32_t index = 0; index < plan.count; ++index) {
      Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(plan.label) + 1,
                          static_cast<std::uint64_t>(index)));
      const auto n_calls = static_cast<std::int32_t>(
          rng.uniform_int(plan.calls_min, plan.calls_max));

      std::vector<RawCall> calls;
      calls.reserve(static_cast<std::size_t>(n_calls) + 8);
      for (std::int32_t c = 0; c < n_calls; ++c) {
        const auto& tmpl = pool[rng.pick_weighted(weights)];
        RawCall call;
        call.api_name = std::string(tmpl.library) + "." + tmpl.api;
        for (ArgKind kind : tmpl.args) call.args.push_back(make_arg(kind, rng));
        if (tmpl.has_ret && rng.bernoulli(0.7)) call.ret = pick(ret_pool(), rng);
        calls.push_back(std::move(call));
      }

      // planted insertions
      const auto slots = std::max<std::int64_t>(
          2, std::llround(spec.planted_slot_fraction * n_calls));
      bool planted = false;
      for (std::int64_t s = 0; s < slots; ++s) {
        if (!rng.bernoulli(plan.injection)) continue;
        RawCall call;
        call.api_name = planted_name;
        call.args = {spec.planted_arg};
        call.ret = pick(addr_pool(), rng);
        auto pos = static_cast<std::ptrdiff_t>(rng.below(calls.size() + 1));
        calls.insert(calls.begin() + pos, std::move(call));
        planted = true;
      }
      if (planted) {
        ++(plan.label == 1 ? corpus.planted_malware : corpus.planted_benign);
      }

      // pad the first call's argument list so the report clears the size
      // filter; the pad normalizes to a single <string> word
      nlohmann::ordered_json doc;
      char idbuf[16];
      std::snprintf(idbuf, sizeof(idbuf), "%s%05d", plan.prefix, index);
      doc["sha256"] = idbuf;
      doc["emulation_ok"] = true;

      std::size_t split_at = calls.size();
      if (calls.size() > 3 && rng.bernoulli(0.3)) {
        split_at = 1 + static_cast<std::size_t>(rng.below(calls.size() - 1));
      }
      auto build_doc = [&](const std::vector<RawCall>& cs) {
        nlohmann::ordered_json entry_points = nlohmann::ordered_json::array();
        nlohmann::ordered_json ep1;
        ep1["ep_type"] = "module_entry";
        ep1["apis"] = calls_to_json(std::span(cs.data(), split_at));
        entry_points.push_back(std::move(ep1));
        if (split_at < cs.size()) {
          nlohmann::ordered_json ep2;
          ep2["ep_type"] = "export_entry";
          ep2["apis"] =
              calls_to_json(std::span(cs.data() + split_at, cs.size() - split_at));
          entry_points.push_back(std::move(ep2));
        }
        doc["entry_points"] = std::move(entry_points);
        return doc.dump();
      };

      std::string body = build_doc(calls);
      std::size_t deficit = body.size() < spec.min_report_bytes
                                ? spec.min_report_bytes - body.size()
                                : 0;
      calls.front().args.push_back(random_alnum(std::max<std::size_t>(100, deficit), rng));
      body = build_doc(calls);

      const std::string filename = std::string(idbuf) + ".json";
      const auto path = reports_dir / filename;
      {
        std::ofstream out(path, std::ios::binary);
        out << body;
      }
      manifest << "reports/" << filename << "," << plan.label << "\n";

      Report report = parse_report(body, idbuf);
      corpus.samples.push_back(LabeledSample{std::move(report), plan.label});
    }
  }
  return corpus;
}

}  // namespace maldet
