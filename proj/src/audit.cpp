// Copyright 2026 The clipvl Authors
// SPDX-License-Identifier: Apache-2.0

#include "clipvl/audit.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_map>

#include "clipvl/text.hpp"

namespace clipvl {

std::vector<Fingerprint> fingerprint_bundle(const DatasetBundle& bundle) {
  std::vector<Fingerprint> out;
  for (const auto& [split, examples] : bundle.splits) {
    for (const auto& example : examples) {
      const auto payloads = text_payloads(example);
      for (std::size_t i = 0; i < payloads.size(); ++i) {
        std::string canonical = canonicalize(payloads[i]);
        const std::uint64_t hash = fnv1a(canonical);
        out.push_back({hash, std::move(canonical), video_of(example),
                       {bundle.task, split, example_id(example), static_cast<int>(i)}});
      }
    }
  }
  return out;
}

std::string_view to_string(MatchKind kind) {
  return kind == MatchKind::ExactText ? "exact_text" : "same_video_text_overlap";
}

double token_jaccard(const std::string& a, const std::string& b) {
  const auto wa = split_words(a);
  const auto wb = split_words(b);
  const std::set<std::string> sa(wa.begin(), wa.end());
  const std::set<std::string> sb(wb.begin(), wb.end());
  if (sa.empty() && sb.empty()) return 1.0;
  std::size_t common = 0;
  for (const auto& w : sa) common += sb.count(w);
  return static_cast<double>(common) / static_cast<double>(sa.size() + sb.size() - common);
}

namespace {

std::vector<Fingerprint> collect(std::span<const DatasetBundle> bundles, const std::set<SplitId>& splits) {
  std::vector<Fingerprint> out;
  for (const auto& bundle : bundles) {
    for (auto& fp : fingerprint_bundle(bundle)) {
      if (splits.count(fp.source.split)) out.push_back(std::move(fp));
    }
  }
  return out;
}

bool same_source(const ExampleRef& a, const ExampleRef& b) { return a.task == b.task && a.split == b.split; }

nlohmann::json ref_json(const ExampleRef& ref, const std::string& video) {
  return {{"task", std::string(slug(ref.task))},
          {"split", std::string(to_string(ref.split))},
          {"example_id", ref.example_id},
          {"payload_index", ref.payload_index},
          {"video_id", video}};
}

std::string source_label(const ExampleRef& ref) {
  return std::string(slug(ref.task)) + "/" + std::string(to_string(ref.split));
}

}  // namespace

LeakReport audit_overlap(std::span<const DatasetBundle> eval_bundles, std::span<const DatasetBundle> train_bundles,
                         const AuditOptions& options) {
  const auto eval = collect(eval_bundles, options.eval_splits);
  const auto train = collect(train_bundles, options.train_splits);

  std::unordered_map<std::uint64_t, std::vector<std::size_t>> by_hash;
  std::unordered_map<std::string, std::vector<std::size_t>> by_video;
  for (std::size_t i = 0; i < train.size(); ++i) {
    by_hash[train[i].hash].push_back(i);
    by_video[train[i].video_id].push_back(i);
  }

  LeakReport report;
  for (const auto& e : eval) {
    std::set<std::size_t> exact;
    if (const auto it = by_hash.find(e.hash); it != by_hash.end()) {
      for (std::size_t j : it->second) {
        const auto& t = train[j];
        if (same_source(e.source, t.source) || t.canonical != e.canonical) continue;
        exact.insert(j);
        report.entries.push_back({e.source, t.source, MatchKind::ExactText, e.video_id, t.video_id});
      }
    }
    if (const auto it = by_video.find(e.video_id); it != by_video.end()) {
      for (std::size_t j : it->second) {
        const auto& t = train[j];
        if (exact.count(j) || same_source(e.source, t.source)) continue;
        if (token_jaccard(e.canonical, t.canonical) >= options.jaccard_threshold) {
          report.entries.push_back({e.source, t.source, MatchKind::SameVideoTextOverlap, e.video_id, t.video_id});
        }
      }
    }
  }
  std::sort(report.entries.begin(), report.entries.end());
  return report;
}

LeakReport mirrored(const LeakReport& report) {
  LeakReport out;
  for (const auto& e : report.entries) {
    out.entries.push_back({e.train_side, e.eval_side, e.kind, e.train_video, e.eval_video});
  }
  std::sort(out.entries.begin(), out.entries.end());
  return out;
}

std::map<std::string, int> LeakReport::summary() const {
  std::map<std::string, int> counts;
  for (const auto& e : entries) {
    ++counts[source_label(e.eval_side) + " -> " + source_label(e.train_side) + " " + std::string(to_string(e.kind))];
  }
  return counts;
}

std::string LeakReport::summary_text() const {
  std::ostringstream out;
  out << entries.size() << " leak entries\n";
  for (const auto& [key, count] : summary()) out << "  " << key << ": " << count << "\n";
  return out.str();
}

std::string LeakReport::to_jsonl() const {
  std::string out;
  for (const auto& e : entries) {
    const nlohmann::json line = {{"eval", ref_json(e.eval_side, e.eval_video)},
                                 {"train", ref_json(e.train_side, e.train_video)},
                                 {"match_kind", std::string(to_string(e.kind))}};
    out += line.dump() + "\n";
  }
  return out;
}

}  // namespace clipvl
