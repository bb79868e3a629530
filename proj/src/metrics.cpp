// Copyright 2026 The clipvl Authors
// SPDX-License-Identifier: Apache-2.0

#include "clipvl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "clipvl/error.hpp"
#include "clipvl/text.hpp"

namespace clipvl {

int recall_at_k(std::span<const std::string> ranked, const std::string& gold, int k) {
  if (k < 1) throw Error(Errc::InvalidArgument, "k must be >= 1");
  std::set<std::string_view> seen;
  int position = -1;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (!seen.insert(ranked[i]).second) throw Error(Errc::InvalidArgument, "duplicate id in ranking: " + ranked[i]);
    if (ranked[i] == gold) position = static_cast<int>(i);
  }
  if (position < 0) throw Error(Errc::GoldMissing, "gold '" + gold + "' not in ranking");
  return position < k ? 1 : 0;
}

double ave_r(std::span<const RankedQuery> results, std::span<const int> ks) {
  if (results.empty()) throw Error(Errc::InvalidArgument, "ave_r needs at least one query");
  if (ks.empty()) throw Error(Errc::InvalidArgument, "ave_r needs at least one k");
  double total = 0.0;
  for (const auto& query : results) {
    int hits = 0;
    for (int k : ks) hits += recall_at_k(query.ranked, query.gold, k);
    total += static_cast<double>(hits) / static_cast<double>(ks.size());
  }
  return 100.0 * total / static_cast<double>(results.size());
}

double accuracy(std::span<const int> predictions, std::span<const int> golds) {
  if (predictions.size() != golds.size()) {
    throw Error(Errc::LengthMismatch, std::to_string(predictions.size()) + " predictions vs " +
                                          std::to_string(golds.size()) + " golds");
  }
  if (predictions.empty()) throw Error(Errc::InvalidArgument, "accuracy over an empty set");
  std::size_t matches = 0;
  for (std::size_t i = 0; i < golds.size(); ++i) matches += predictions[i] == golds[i];
  return 100.0 * static_cast<double>(matches) / static_cast<double>(golds.size());
}

NgramStats NgramStats::of(const std::string& text, int max_n) {
  const std::vector<std::string> words = split_words(text);
  NgramStats stats;
  stats.counts.resize(static_cast<std::size_t>(max_n));
  for (int n = 1; n <= max_n; ++n) {
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= words.size(); ++i) {
      ++stats.counts[n - 1][std::vector<std::string>(words.begin() + i, words.begin() + i + n)];
    }
  }
  return stats;
}

namespace {

using Ngram = std::vector<std::string>;

struct TfIdf {
  std::vector<std::map<Ngram, double>> vec;
  std::vector<double> norm;
  double length = 0.0;
};

TfIdf to_tfidf(const NgramStats& stats, const std::map<Ngram, int>& doc_freq, double log_corpus) {
  TfIdf out;
  const std::size_t max_n = stats.counts.size();
  out.vec.resize(max_n);
  out.norm.assign(max_n, 0.0);
  for (std::size_t n = 0; n < max_n; ++n) {
    for (const auto& [gram, tf] : stats.counts[n]) {
      const auto it = doc_freq.find(gram);
      const double df = it == doc_freq.end() ? 0.0 : static_cast<double>(it->second);
      const double weight = static_cast<double>(tf) * (log_corpus - std::log(std::max(1.0, df)));
      out.vec[n][gram] = weight;
      out.norm[n] += weight * weight;
      // Sentence length as counted by the reference implementation: the
      // number of bigrams.
      if (n == 1) out.length += tf;
    }
    out.norm[n] = std::sqrt(out.norm[n]);
  }
  return out;
}

std::vector<double> similarity(const TfIdf& hyp, const TfIdf& ref, double sigma) {
  const double delta = hyp.length - ref.length;
  const double penalty = std::exp(-(delta * delta) / (2.0 * sigma * sigma));
  std::vector<double> value(hyp.vec.size(), 0.0);
  for (std::size_t n = 0; n < hyp.vec.size(); ++n) {
    for (const auto& [gram, weight] : hyp.vec[n]) {
      const auto it = ref.vec[n].find(gram);
      if (it == ref.vec[n].end()) continue;
      value[n] += std::min(weight, it->second) * it->second;
    }
    if (hyp.norm[n] != 0.0 && ref.norm[n] != 0.0) value[n] /= hyp.norm[n] * ref.norm[n];
    value[n] *= penalty;
  }
  return value;
}

}  // namespace

CiderResult cider_d(const std::map<std::string, std::string>& candidates,
                    const std::map<std::string, std::vector<std::string>>& references, CiderOptions options) {
  if (candidates.empty()) throw Error(Errc::InvalidArgument, "CIDEr over an empty corpus");
  std::map<std::string, std::vector<NgramStats>> ref_stats;
  for (const auto& [id, text] : candidates) {
    const auto it = references.find(id);
    if (it == references.end() || it->second.empty()) {
      throw Error(Errc::EmptyReferenceSet, "no references for '" + id + "'");
    }
    auto& stats = ref_stats[id];
    for (const auto& ref : it->second) stats.push_back(NgramStats::of(ref, options.max_n));
  }

  std::map<Ngram, int> doc_freq;
  for (const auto& [id, stats] : ref_stats) {
    std::set<Ngram> present;
    for (const auto& s : stats) {
      for (const auto& per_n : s.counts) {
        for (const auto& [gram, count] : per_n) present.insert(gram);
      }
    }
    for (const auto& gram : present) ++doc_freq[gram];
  }
  const double log_corpus = std::log(static_cast<double>(ref_stats.size()));

  CiderResult result;
  for (const auto& [id, text] : candidates) {
    const TfIdf hyp = to_tfidf(NgramStats::of(text, options.max_n), doc_freq, log_corpus);
    std::vector<double> summed(static_cast<std::size_t>(options.max_n), 0.0);
    const auto& refs = ref_stats.at(id);
    for (const auto& r : refs) {
      const std::vector<double> sim = similarity(hyp, to_tfidf(r, doc_freq, log_corpus), options.sigma);
      for (std::size_t n = 0; n < sim.size(); ++n) summed[n] += sim[n];
    }
    double mean = 0.0;
    for (double v : summed) mean += v;
    mean /= static_cast<double>(summed.size());
    const double score = 10.0 * mean / static_cast<double>(refs.size());
    result.per_id[id] = score;
    result.score += score;
  }
  result.score /= static_cast<double>(candidates.size());
  return result;
}

double round2(double value) {
  // The small bias absorbs representation error at exact halves (x.xx5).
  return std::floor(value * 100.0 + 0.5 + 1e-9) / 100.0;
}

void ScoreReport::validate() const {
  for (const auto& [task, score] : scores) {
    const std::string where = std::string(display_name(task)) + ": ";
    if (!std::isfinite(score.value)) throw Error(Errc::InvalidArgument, where + "non-finite value");
    if (score.metric != metric_for(task)) throw Error(Errc::InvalidArgument, where + "wrong metric kind");
    if (score.value < 0.0) throw Error(Errc::InvalidArgument, where + "negative value");
    if (score.metric != MetricKind::CIDEr && score.value > 100.0) {
      throw Error(Errc::InvalidArgument, where + "percentage above 100");
    }
  }
  if (meta_ave && !std::isfinite(*meta_ave)) throw Error(Errc::InvalidArgument, "non-finite meta_ave");
}

nlohmann::json ScoreReport::to_json() const {
  nlohmann::json doc = nlohmann::json::object();
  for (const auto& [task, score] : scores) {
    doc[std::string(slug(task))] = {{"metric", std::string(to_string(score.metric))}, {"value", score.value}};
  }
  if (meta_ave) doc["meta_ave"] = *meta_ave;
  return doc;
}

ScoreReport ScoreReport::from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw Error(Errc::SchemaError, "report must be a JSON object");
  ScoreReport report;
  for (const auto& [key, value] : doc.items()) {
    if (key == "meta_ave") {
      if (!value.is_number()) throw Error(Errc::SchemaError, "meta_ave must be a number");
      report.meta_ave = value.get<double>();
      continue;
    }
    const auto task = parse_task(key);
    if (!task) throw Error(Errc::SchemaError, "unknown task '" + key + "'");
    double number = 0.0;
    MetricKind metric = metric_for(*task);
    if (value.is_number()) {
      number = value.get<double>();
    } else if (value.is_object() && value.contains("value") && value["value"].is_number()) {
      number = value["value"].get<double>();
      if (value.contains("metric")) {
        const auto parsed = parse_metric(value["metric"].get<std::string>());
        if (!parsed) throw Error(Errc::SchemaError, "unknown metric for '" + key + "'");
        metric = *parsed;
      }
    } else {
      throw Error(Errc::SchemaError, "bad entry for '" + key + "'");
    }
    report.scores[*task] = {metric, number};
  }
  report.validate();
  return report;
}

double meta_ave_exact(const ScoreReport& report) {
  std::string missing;
  double total = 0.0;
  for (TaskId task : kAllTasks) {
    const auto it = report.scores.find(task);
    if (it == report.scores.end()) {
      missing += (missing.empty() ? "" : ", ") + std::string(display_name(task));
    } else {
      total += it->second.value;
    }
  }
  if (!missing.empty()) throw Error(Errc::MissingTask, "missing " + missing);
  return total / static_cast<double>(kAllTasks.size());
}

double meta_ave(const ScoreReport& report) { return round2(meta_ave_exact(report)); }

namespace {

std::vector<std::filesystem::path> report_files(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw Error(Errc::Io, "not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

ScoreReport read_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  try {
    return ScoreReport::from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::SchemaError, path.string() + ": " + e.what());
  }
}

std::string format2(double value) {
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, "%.2f", round2(value));
  return buffer;
}

std::optional<double> row_meta(const ScoreReport& report) {
  if (report.meta_ave) return round2(*report.meta_ave);
  if (report.complete()) return meta_ave(report);
  return std::nullopt;
}

// One rounded cell per column, tasks first then Meta-Ave.
std::vector<std::optional<double>> row_cells(const ScoreReport& report) {
  std::vector<std::optional<double>> cells;
  for (TaskId task : kAllTasks) {
    const auto it = report.scores.find(task);
    cells.push_back(it == report.scores.end() ? std::nullopt : std::optional<double>(round2(it->second.value)));
  }
  cells.push_back(row_meta(report));
  return cells;
}

std::vector<std::optional<double>> column_best(std::span<const NamedReport> reports) {
  std::vector<std::optional<double>> best(kAllTasks.size() + 1);
  for (const auto& named : reports) {
    const auto cells = row_cells(named.report);
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (cells[c] && (!best[c] || *cells[c] > *best[c])) best[c] = cells[c];
    }
  }
  return best;
}

std::vector<std::string> column_names() {
  std::vector<std::string> names;
  for (TaskId task : kAllTasks) names.emplace_back(display_name(task));
  names.emplace_back("Meta-Ave");
  return names;
}

}  // namespace

ScoreReport merge_reports(const std::filesystem::path& dir) {
  ScoreReport merged;
  for (const auto& path : report_files(dir)) {
    for (const auto& [task, score] : read_report(path).scores) merged.scores[task] = score;
  }
  return merged;
}

std::vector<NamedReport> load_reports(const std::filesystem::path& dir) {
  std::vector<NamedReport> rows;
  for (const auto& path : report_files(dir)) rows.push_back({path.stem().string(), read_report(path)});
  return rows;
}

std::string render_table(std::span<const NamedReport> reports) {
  const auto best = column_best(reports);
  std::ostringstream out;
  out << "| Method";
  for (const auto& name : column_names()) out << " | " << name;
  out << " |\n| ";
  for (TaskId task : kAllTasks) out << " | " << to_string(metric_for(task));
  out << " | |\n";
  for (const auto& named : reports) {
    out << "| " << named.name;
    const auto cells = row_cells(named.report);
    for (std::size_t c = 0; c < cells.size(); ++c) {
      out << " | ";
      if (!cells[c]) {
        out << "-";
      } else if (*cells[c] == *best[c]) {
        out << "**" << format2(*cells[c]) << "**";
      } else {
        out << format2(*cells[c]);
      }
    }
    out << " |\n";
  }
  return out.str();
}

nlohmann::json table_json(std::span<const NamedReport> reports) {
  const auto names = column_names();
  const auto best = column_best(reports);
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& named : reports) {
    const auto cells = row_cells(named.report);
    nlohmann::json values = nlohmann::json::object();
    nlohmann::json marked = nlohmann::json::array();
    for (std::size_t c = 0; c < cells.size(); ++c) {
      values[names[c]] = cells[c] ? nlohmann::json(*cells[c]) : nlohmann::json(nullptr);
      if (cells[c] && *cells[c] == *best[c]) marked.push_back(names[c]);
    }
    rows.push_back({{"method", named.name}, {"values", values}, {"best", marked}});
  }
  return {{"columns", names}, {"rows", rows}};
}

}  // namespace clipvl
