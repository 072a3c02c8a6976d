#include "maldet/report.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "maldet/errors.hpp"
#include "maldet/rng.hpp"

namespace maldet {
namespace {

using nlohmann::json;

std::optional<std::string> scalar_to_string(const json& v) {
  switch (v.type()) {
    case json::value_t::string:
      return v.get<std::string>();
    case json::value_t::number_integer:
      return std::to_string(v.get<std::int64_t>());
    case json::value_t::number_unsigned:
      return std::to_string(v.get<std::uint64_t>());
    case json::value_t::number_float:
      return v.dump();
    case json::value_t::boolean:
      return v.get<bool>() ? std::string("true") : std::string("false");
    default:
      return std::nullopt;  // null, arrays, objects carry no argument text
  }
}

void extract_call(const json& entry, std::vector<ApiCall>& out) {
  if (!entry.is_object()) return;
  auto name_it = entry.find("api_name");
  if (name_it == entry.end() || !name_it->is_string()) return;
  std::string full = name_it->get<std::string>();
  if (full.empty()) return;

  ApiCall call;
  // "lib.Name" splits at the last dot; names without a dot keep an empty
  // library.
  auto dot = full.rfind('.');
  if (dot != std::string::npos && dot > 0 && dot + 1 < full.size()) {
    call.library = full.substr(0, dot);
    call.api_name = full.substr(dot + 1);
  } else {
    call.api_name = full;
  }

  auto args_it = entry.find("args");
  if (args_it != entry.end() && args_it->is_array()) {
    for (const auto& a : *args_it) {
      if (auto s = scalar_to_string(a)) call.args.push_back(std::move(*s));
    }
  }
  auto ret_it = entry.find("ret_val");
  if (ret_it != entry.end()) call.ret_val = scalar_to_string(*ret_it);

  out.push_back(std::move(call));
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot open file: " + p.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return std::move(buf).str();
}

}  // namespace

Report parse_report(std::string_view bytes, const std::string& id) {
  json doc = json::parse(bytes, nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded() || !doc.is_object()) {
    throw MalformedReport("report " + id + ": not a JSON object");
  }
  auto eps = doc.find("entry_points");
  if (eps == doc.end() || !eps->is_array()) {
    throw MalformedReport("report " + id + ": missing entry_points array");
  }

  Report report;
  report.id = id;
  report.byte_size = bytes.size();
  for (const auto& ep : *eps) {
    if (!ep.is_object()) continue;
    auto apis = ep.find("apis");
    if (apis == ep.end() || !apis->is_array()) continue;
    for (const auto& entry : *apis) extract_call(entry, report.calls);
  }
  if (report.calls.empty()) {
    throw EmptyReport("report " + id + ": no API calls");
  }
  return report;
}

FilterResult filter_reports(std::vector<LabeledSample> samples,
                            std::uint64_t min_bytes) {
  FilterResult result;
  result.kept.reserve(samples.size());
  for (auto& s : samples) {
    if (s.report.byte_size >= min_bytes) {
      result.kept.push_back(std::move(s));
    } else {
      ++result.discarded;
    }
  }
  return result;
}

std::vector<int> stratified_assignment(const std::vector<int>& labels,
                                       const SplitRatios& ratios,
                                       std::uint64_t seed) {
  const std::array<double, 3> r{ratios.train, ratios.validation, ratios.test};
  double sum = r[0] + r[1] + r[2];
  if (std::abs(sum - 1.0) > 1e-9 || r[0] < 0 || r[1] < 0 || r[2] < 0) {
    throw std::invalid_argument("split ratios must be non-negative and sum to 1");
  }

  std::vector<int> assignment(labels.size(), 0);
  Rng rng(seed);
  for (int cls : {0, 1}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == cls) idx.push_back(i);
    }
    if (idx.empty()) continue;
    rng.shuffle(idx);

    // Largest-remainder apportioning of this class across the parts.
    const auto n = static_cast<double>(idx.size());
    std::array<std::size_t, 3> count{};
    std::array<double, 3> frac{};
    std::size_t assigned = 0;
    for (int p = 0; p < 3; ++p) {
      double exact = n * r[p];
      count[p] = static_cast<std::size_t>(exact);
      frac[p] = exact - static_cast<double>(count[p]);
      assigned += count[p];
    }
    std::array<int, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return frac[a] > frac[b]; });
    for (std::size_t k = 0; assigned < idx.size(); ++k, ++assigned) {
      ++count[order[k % 3]];
    }

    std::size_t pos = 0;
    for (int p = 0; p < 3; ++p) {
      for (std::size_t k = 0; k < count[p]; ++k, ++pos) {
        assignment[idx[pos]] = p;
      }
    }
  }
  return assignment;
}

DatasetSplit split_dataset(const std::vector<LabeledSample>& samples,
                           const SplitRatios& ratios, std::uint64_t seed) {
  std::array<std::size_t, 2> per_class{};
  std::vector<int> labels;
  labels.reserve(samples.size());
  for (const auto& s : samples) {
    labels.push_back(s.label);
    ++per_class[s.label == 1 ? 1 : 0];
  }
  if (per_class[0] < 3 || per_class[1] < 3) {
    throw InsufficientClassSamples(
        "stratified split needs at least 3 samples per class (got " +
        std::to_string(per_class[0]) + " benign, " +
        std::to_string(per_class[1]) + " malware)");
  }

  auto assignment = stratified_assignment(labels, ratios, seed);
  DatasetSplit split;
  split.seed = seed;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    switch (assignment[i]) {
      case 0: split.train.push_back(samples[i]); break;
      case 1: split.validation.push_back(samples[i]); break;
      default: split.test.push_back(samples[i]); break;
    }
  }
  return split;
}

LoadResult load_manifest(const std::filesystem::path& manifest_path,
                         const std::filesystem::path& reports_base) {
  std::ifstream in(manifest_path);
  if (!in) {
    throw ManifestNotFound("manifest not found: " + manifest_path.string());
  }
  const std::filesystem::path base =
      reports_base.empty() ? manifest_path.parent_path() : reports_base;

  LoadResult result;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;

    auto comma = line.rfind(',');
    if (comma == std::string::npos || comma <= first) {
      throw ManifestSyntax(manifest_path.string() + ":" +
                           std::to_string(lineno) + ": expected path,label");
    }
    std::string path_field = line.substr(first, comma - first);
    std::string label_field = line.substr(comma + 1);
    while (!path_field.empty() && (path_field.back() == ' ' || path_field.back() == '\t'))
      path_field.pop_back();
    label_field.erase(0, label_field.find_first_not_of(" \t"));
    while (!label_field.empty() && (label_field.back() == ' ' || label_field.back() == '\t'))
      label_field.pop_back();

    int label;
    if (label_field == "0") {
      label = 0;
    } else if (label_field == "1") {
      label = 1;
    } else {
      throw ManifestSyntax(manifest_path.string() + ":" +
                           std::to_string(lineno) + ": label must be 0 or 1");
    }

    std::filesystem::path rp(path_field);
    if (rp.is_relative()) rp = base / rp;
    try {
      std::string bytes = read_file(rp);
      Report report = parse_report(bytes, rp.stem().string());
      result.samples.push_back(LabeledSample{std::move(report), label});
    } catch (const Error& e) {
      std::cerr << "warning: skipping " << rp.string() << ": " << e.what()
                << "\n";
      ++result.skipped;
    }
  }
  return result;
}

}  // namespace maldet
