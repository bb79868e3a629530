// Copyright 2026 The clipvl Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "clipvl/metrics.hpp"
#include "clipvl/rng.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace clipvl;
using clipvl::testing::error_of;
using clipvl::testing::TempDir;

namespace {

const std::vector<double> kOurs{13.12, 4.64, 62.68, 49.86, 75.45, 73.92, 67.47, 68.37, 53.34, 128.87, 62.30};
const std::vector<double> kAtSt{13.56, 3.95, 54.28, 49.09, 74.83, 74.60, 67.18, 69.37, 48.13, 121.89, 56.54};

ScoreReport report_of(const std::vector<double>& values) {
  ScoreReport r;
  for (std::size_t i = 0; i < values.size(); ++i) r.scores[kAllTasks[i]] = {metric_for(kAllTasks[i]), values[i]};
  return r;
}

std::vector<std::string> ids(int n) {
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) out.push_back("item" + std::to_string(i));
  return out;
}

void shuffle(std::vector<std::string>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

}  // namespace

TEST_CASE("recall at k") {
  const auto ranked = ids(10);
  CHECK(recall_at_k(ranked, "item0", 1) == 1);
  CHECK(recall_at_k(ranked, "item5", 5) == 0);
  CHECK(recall_at_k(ranked, "item5", 6) == 1);
  CHECK(error_of([&] { recall_at_k(ranked, "absent", 1); }) == Errc::GoldMissing);
  CHECK(error_of([&] { recall_at_k(ranked, "item0", 0); }) == Errc::InvalidArgument);
  const std::vector<std::string> dup{"a", "b", "a"};
  CHECK(error_of([&] { recall_at_k(dup, "b", 1); }) == Errc::InvalidArgument);

  SUBCASE("random permutations hit k/N") {
    Rng rng(2);
    const int n = 20, trials = 1000;
    for (int k : {1, 5, 10}) {
      int hits = 0;
      for (int t = 0; t < trials; ++t) {
        auto r = ids(n);
        shuffle(r, rng);
        hits += recall_at_k(r, "item" + std::to_string(rng.below(n)), k);
      }
      const double p = static_cast<double>(k) / n;
      const double sigma = std::sqrt(p * (1 - p) / trials);
      CHECK(std::abs(static_cast<double>(hits) / trials - p) < 3 * sigma);
    }
  }
  SUBCASE("monotone in k") {
    Rng rng(2);
    for (int t = 0; t < 50; ++t) {
      auto r = ids(15);
      shuffle(r, rng);
      int previous = 0;
      for (int k = 1; k <= 15; ++k) {
        const int hit = recall_at_k(r, "item3", k);
        CHECK(hit >= previous);
        previous = hit;
      }
    }
  }
}

TEST_CASE("ave_r") {
  std::vector<RankedQuery> first, late;
  for (int q = 0; q < 5; ++q) {
    auto r = ids(20);
    first.push_back({r, r[0]});
    late.push_back({r, r[10 + q]});
  }
  CHECK(ave_r(first) == 100.0);
  CHECK(ave_r(late) == 0.0);

  Rng rng(3);
  std::vector<RankedQuery> random;
  double total = 0.0;
  for (int q = 0; q < 200; ++q) {
    auto r = ids(30);
    shuffle(r, rng);
    const std::string gold = "item" + std::to_string(rng.below(30));
    const auto pos = std::find(r.begin(), r.end(), gold) - r.begin();
    total += ((pos < 1) + (pos < 5) + (pos < 10)) / 3.0;
    random.push_back({r, gold});
  }
  CHECK(ave_r(random) == 100.0 * total / 200.0);
  const std::vector<RankedQuery> missing{{ids(3), "ghost"}};
  CHECK(error_of([&] { ave_r(missing); }) == Errc::GoldMissing);
}

TEST_CASE("accuracy") {
  const std::vector<int> gold{0, 1, 2, 3};
  CHECK(accuracy(gold, gold) == 100.0);
  CHECK(accuracy(std::vector<int>{1, 2, 3, 0}, gold) == 0.0);
  CHECK(error_of([&] { accuracy(std::vector<int>{1}, gold); }) == Errc::LengthMismatch);

  Rng rng(4);
  std::vector<int> p(500), g(500);
  int matches = 0;
  for (int i = 0; i < 500; ++i) {
    p[i] = static_cast<int>(rng.below(4));
    g[i] = static_cast<int>(rng.below(4));
    if (p[i] == g[i]) ++matches;
  }
  CHECK(accuracy(p, g) == 100.0 * matches / 500.0);
}

TEST_CASE("CIDEr-D") {
  const oracle::CaptionCorpus corpus;
  const auto& cands = corpus.candidates;
  const auto& refs = corpus.references;
  std::map<std::string, std::string> c;
  std::map<std::string, std::vector<std::string>> r;
  for (int i = 0; i < 3; ++i) {
    c["id" + std::to_string(i)] = cands[i];
    r["id" + std::to_string(i)] = refs[i];
  }

  SUBCASE("matches the step-by-step computation") {
    const auto result = cider_d(c, r);
    double mean = 0.0;
    for (int i = 0; i < 3; ++i) {
      const double want = oracle::cider(cands, refs, i);
      CHECK(std::abs(result.per_id.at("id" + std::to_string(i)) - want) < 1e-6);
      mean += want / 3.0;
    }
    CHECK(std::abs(result.score - mean) < 1e-6);
    CHECK(result.score > 0.0);
  }
  SUBCASE("an empty candidate scores zero") {
    auto empty = c;
    empty["id1"] = "";
    CHECK(cider_d(empty, r).per_id.at("id1") == 0.0);
  }
  SUBCASE("reference order does not matter") {
    auto shuffled = r;
    for (auto& [_, list] : shuffled) std::reverse(list.begin(), list.end());
    const auto a = cider_d(c, r), b = cider_d(c, shuffled);
    for (const auto& [id, v] : a.per_id) CHECK(std::abs(b.per_id.at(id) - v) < 1e-12);
  }
  SUBCASE("errors") {
    auto missing = r;
    missing["id2"].clear();
    CHECK(error_of([&] { cider_d(c, missing); }) == Errc::EmptyReferenceSet);
    CHECK(error_of([&] { cider_d({}, r); }) == Errc::InvalidArgument);
  }
  SUBCASE("never negative") {
    Rng rng(5);
    const std::vector<std::string> vocab{"a", "the", "dog", "man", "runs", "onion", "guitar", "park", "plays"};
    for (int t = 0; t < 20; ++t) {
      auto random = c;
      for (auto& [_, text] : random) {
        text.clear();
        for (std::size_t w = 0; w < rng.below(8); ++w) text += vocab[rng.below(vocab.size())] + " ";
      }
      CHECK(cider_d(random, r).score >= 0.0);
    }
  }
}

TEST_CASE("meta-ave") {
  CHECK(meta_ave(report_of(kOurs)) == doctest::Approx(60.00).epsilon(1e-12));
  CHECK(meta_ave(report_of(kAtSt)) == doctest::Approx(57.58).epsilon(1e-12));
  CHECK(meta_ave(report_of(std::vector<double>(11, 0.0))) == 0.0);
  CHECK(std::abs(meta_ave_exact(report_of(kOurs)) - std::accumulate(kOurs.begin(), kOurs.end(), 0.0) / 11) < 1e-12);

  ScoreReport partial = report_of(kOurs);
  partial.scores.erase(TaskId::VLEP);
  partial.scores.erase(TaskId::TVC);
  const std::string message = clipvl::testing::error_message([&] { meta_ave(partial); });
  CHECK(error_of([&] { meta_ave(partial); }) == Errc::MissingTask);
  CHECK(message.find("VLEP") != std::string::npos);
  CHECK(message.find("TVC") != std::string::npos);

  CHECK(round2(1.005) == 1.01);
  CHECK(round2(2.675) == 2.68);
  CHECK(round2(59.994) == 59.99);
}

TEST_CASE("report files") {
  ScoreReport r = report_of(kOurs);
  r.meta_ave = meta_ave(r);
  CHECK_NOTHROW(r.validate());
  const ScoreReport back = ScoreReport::from_json(r.to_json());
  CHECK(back.scores == r.scores);
  CHECK(back.meta_ave == r.meta_ave);

  ScoreReport bad = r;
  bad.scores[TaskId::TVQA].value = 101.0;
  CHECK(error_of([&] { bad.validate(); }) == Errc::InvalidArgument);

  TempDir dir;
  ScoreReport a, b;
  a.scores[TaskId::TVR] = {MetricKind::AveR, 10.0};
  a.scores[TaskId::TVC] = {MetricKind::CIDEr, 40.0};
  b.scores[TaskId::TVC] = {MetricKind::CIDEr, 50.0};
  clipvl::testing::write_file(dir / "a.json", a.to_json().dump());
  clipvl::testing::write_file(dir / "b.json", b.to_json().dump());
  const ScoreReport merged = merge_reports(dir.path());
  CHECK(merged.scores.size() == 2);
  CHECK(merged.scores.at(TaskId::TVC).value == 50.0);
  CHECK(load_reports(dir.path()).size() == 2);
}

TEST_CASE("leaderboard rendering") {
  SUBCASE("one report is best everywhere") {
    const std::vector<NamedReport> one{{"Ours", report_of(kOurs)}};
    const std::string table = render_table(one);
    const auto json = table_json(one);
    CHECK(json["rows"][0]["best"].size() == 12);
    CHECK(table.find("**128.87**") != std::string::npos);
    CHECK(table.find("**60.00**") != std::string::npos);
    CHECK(table.find("| Method | TVR |") == 0);
  }
  SUBCASE("two published rows bold as in the original comparison") {
    const std::vector<NamedReport> two{{"AT->ST", report_of(kAtSt)}, {"Ours", report_of(kOurs)}};
    const auto json = table_json(two);
    std::vector<std::string> at_st_best, ours_best;
    for (const auto& c : json["rows"][0]["best"]) at_st_best.push_back(c);
    for (const auto& c : json["rows"][1]["best"]) ours_best.push_back(c);
    CHECK(at_st_best == std::vector<std::string>{"TVR", "How2QA", "VLEP"});
    CHECK(ours_best == std::vector<std::string>{"How2R", "YC2R", "VATEX-EN-R", "TVQA", "VIOLIN", "TVC", "YC2C",
                                                "VATEX-EN-C", "Meta-Ave"});
    const std::string table = render_table(two);
    CHECK(table == render_table(two));
    CHECK(table.find("| AT->ST | **13.56** | 3.95 |") != std::string::npos);
  }
  SUBCASE("partial reports show dashes") {
    ScoreReport partial;
    partial.scores[TaskId::TVR] = {MetricKind::AveR, 12.0};
    const std::vector<NamedReport> rows{{"Partial", partial}};
    const std::string table = render_table(rows);
    CHECK(table.find("| Partial | **12.00** | - |") != std::string::npos);
    CHECK(table_json(rows)["rows"][0]["values"]["Meta-Ave"].is_null());
  }
}
