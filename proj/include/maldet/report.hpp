#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace maldet {

// One emulated API invocation.
struct ApiCall {
  std::string library;  // empty when the reported name carried no "lib." prefix
  std::string api_name;
  std::vector<std::string> args;
  std::optional<std::string> ret_val;
};

// Parsed emulation report. `calls` preserves emulation order; `byte_size`
// is the size of the source document, which drives the 4 KB filter.
struct Report {
  std::string id;
  std::uint64_t byte_size = 0;
  std::vector<ApiCall> calls;
};

struct LabeledSample {
  Report report;
  int label = 0;  // 0 = benign, 1 = malware
};

struct SplitRatios {
  double train = 0.70;
  double validation = 0.15;
  double test = 0.15;
};

struct DatasetSplit {
  std::vector<LabeledSample> train;
  std::vector<LabeledSample> validation;
  std::vector<LabeledSample> test;
  std::uint64_t seed = 0;
};

// Parses the accepted report subset (JSON with entry_points[*].apis[*]
// carrying api_name / args / ret_val; everything else is ignored).
// Throws MalformedReport for undecodable input and EmptyReport when no
// API call could be extracted.
Report parse_report(std::string_view bytes, const std::string& id);

struct FilterResult {
  std::vector<LabeledSample> kept;
  std::size_t discarded = 0;
};

// Keeps samples whose report byte_size >= min_bytes, preserving order.
FilterResult filter_reports(std::vector<LabeledSample> samples,
                            std::uint64_t min_bytes);

// Stratified per-class assignment, reusable for anything labeled: returns
// one part index (0 train, 1 validation, 2 test) per input position.
// Per class, a seeded Fisher-Yates shuffle picks which samples land in
// which part and largest-remainder apportioning fixes the part sizes, so
// each part's class count is within 1 of the exact ratio share.
std::vector<int> stratified_assignment(const std::vector<int>& labels,
                                       const SplitRatios& ratios,
                                       std::uint64_t seed);

// Splits into train/validation/test. Requires ratios summing to 1 (1e-9)
// and at least 3 samples in each class; parts keep the input order.
DatasetSplit split_dataset(const std::vector<LabeledSample>& samples,
                           const SplitRatios& ratios, std::uint64_t seed);

struct LoadResult {
  std::vector<LabeledSample> samples;
  std::size_t skipped = 0;  // rows whose report failed to load or parse
};

// Loads a `path,label` manifest ('#' comments allowed). Relative report
// paths resolve against reports_base, or the manifest's directory when
// reports_base is empty. Unreadable or unparseable reports are skipped
// with a warning on stderr; bad rows raise ManifestSyntax.
LoadResult load_manifest(const std::filesystem::path& manifest_path,
                         const std::filesystem::path& reports_base = {});

}  // namespace maldet
