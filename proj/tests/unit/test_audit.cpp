// Copyright 2026 The clipvl Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>

#include "clipvl/audit.hpp"
#include "clipvl/fixture.hpp"
#include "clipvl/rng.hpp"

using namespace clipvl;

namespace {

std::size_t payload_count(const DatasetBundle& b) {
  std::size_t n = 0;
  for (const auto& [_, examples] : b.splits) {
    for (const auto& e : examples) {
      // A QA item's question and candidates form a single payload.
      if (const auto* c = std::get_if<CaptionItem>(&e)) n += c->references.size();
      else n += 1;
    }
  }
  return n;
}

std::string random_sentence(Rng& rng, int serial) {
  static const std::vector<std::string> words{"man",  "woman", "dog",  "runs",  "jumps", "park", "kitchen",
                                              "red",  "blue",  "ball", "opens", "door",  "slowly", "then"};
  std::string s;
  for (int i = 0; i < 6; ++i) s += words[rng.below(words.size())] + " ";
  // A serial word keeps every clean sentence distinct.
  return s + "s" + std::to_string(serial);
}

int count_kind(const LeakReport& r, MatchKind kind) {
  return static_cast<int>(std::count_if(r.entries.begin(), r.entries.end(),
                                        [&](const LeakEntry& e) { return e.kind == kind; }));
}

DatasetBundle retrieval_bundle(TaskId task, SplitId split, std::vector<std::pair<std::string, std::string>> rows) {
  DatasetBundle b;
  b.task = task;
  for (auto& [video, text] : rows) {
    const std::string id = "q" + std::to_string(b.splits[split].size());
    b.splits[split].push_back(RetrievalQuery{id, text, video, std::nullopt});
  }
  return b;
}

}  // namespace

TEST_CASE("fingerprints") {
  DatasetBundle b = retrieval_bundle(TaskId::TVR, SplitId::Train,
                                     {{"v1", "Hello, World!"}, {"v2", "  hello   WORLD "}, {"v3", "hello there"}});
  const auto fps = fingerprint_bundle(b);
  REQUIRE(fps.size() == 3);
  CHECK(fps[0].hash == fps[1].hash);
  CHECK(fps[0].canonical == fps[1].canonical);
  CHECK(fps[0].hash != fps[2].hash);
  CHECK(fps[1].video_id == "v2");
  CHECK(fps[1].source.example_id == "q1");

  CHECK(fingerprint_bundle(DatasetBundle{}).empty());

  for (std::uint64_t seed : {1, 2, 3}) {
    FixtureOptions options;
    options.seed = seed;
    options.num_videos = 6 + static_cast<int>(seed);
    const Fixture fx = make_fixture(options);
    for (TaskId task : kAllTasks) {
      const DatasetBundle bundle = fx.bundle(task, NamespaceName::ClipVitSlowfast);
      CHECK(fingerprint_bundle(bundle).size() == payload_count(bundle));
    }
  }
}

TEST_CASE("token jaccard") {
  CHECK(token_jaccard("a b c d", "a b c d") == 1.0);
  CHECK(token_jaccard("a b c d", "a b c e") == doctest::Approx(3.0 / 5.0));
  CHECK(token_jaccard("a a b", "a b") == 1.0);
  CHECK(token_jaccard("x y", "z w") == 0.0);
}

TEST_CASE("a planted validation query is found in caption training data") {
  const Fixture fx = make_fixture();
  const DatasetBundle eval = fx.bundle(TaskId::VatexEnR, NamespaceName::ClipVitSlowfast);
  DatasetBundle train = fx.bundle(TaskId::VatexEnC, NamespaceName::ClipVitSlowfast);
  const std::vector<DatasetBundle> evals{eval};

  const LeakReport clean = audit_overlap(evals, std::vector<DatasetBundle>{train});
  CHECK(count_kind(clean, MatchKind::ExactText) == 0);

  const auto& planted = std::get<RetrievalQuery>(eval.split(SplitId::Val)[1]);
  auto& target = std::get<CaptionItem>(train.splits[SplitId::Train][2]);
  target.references.push_back(planted.query_text);
  const int ref_index = static_cast<int>(target.references.size()) - 1;

  const LeakReport report = audit_overlap(evals, std::vector<DatasetBundle>{train});
  REQUIRE(count_kind(report, MatchKind::ExactText) == 1);
  const auto it = std::find_if(report.entries.begin(), report.entries.end(),
                               [](const LeakEntry& e) { return e.kind == MatchKind::ExactText; });
  CHECK(it->eval_side == ExampleRef{TaskId::VatexEnR, SplitId::Val, planted.query_id, 0});
  CHECK(it->train_side == ExampleRef{TaskId::VatexEnC, SplitId::Train, target.video_id, ref_index});
  CHECK(it->eval_video == planted.positive_video_id);
  CHECK(it->train_video == target.video_id);
  CHECK(report.summary().at("vatex_en_r/val -> vatex_en_c/train exact_text") == 1);
  CHECK(report.to_jsonl().find("\"exact_text\"") != std::string::npos);
}

TEST_CASE("100 planted leaks among 10000 clean examples") {
  Rng rng(17);
  std::vector<std::pair<std::string, std::string>> eval_rows, train_rows;
  for (int i = 0; i < 10000; ++i) eval_rows.emplace_back("e" + std::to_string(i % 500), random_sentence(rng, i));
  for (int i = 0; i < 10000; ++i) {
    train_rows.emplace_back("t" + std::to_string(i % 500), random_sentence(rng, 10000 + i));
  }
  std::set<std::string> planted;
  std::set<std::size_t> overwritten;
  while (planted.size() < 100) {
    const std::size_t from = rng.below(eval_rows.size());
    const std::size_t to = rng.below(train_rows.size());
    if (planted.count("q" + std::to_string(from)) || !overwritten.insert(to).second) continue;
    planted.insert("q" + std::to_string(from));
    // Case and punctuation changes must not hide a verbatim copy.
    std::string text = eval_rows[from].second;
    text[0] = static_cast<char>(std::toupper(text[0]));
    train_rows[to].second = text + ".";
  }
  const std::vector<DatasetBundle> evals{retrieval_bundle(TaskId::VatexEnR, SplitId::Val, eval_rows)};
  const std::vector<DatasetBundle> trains{retrieval_bundle(TaskId::VatexEnC, SplitId::Train, train_rows)};
  const LeakReport report = audit_overlap(evals, trains);

  std::set<std::string> found;
  for (const auto& e : report.entries) {
    CHECK(e.kind == MatchKind::ExactText);
    found.insert(e.eval_side.example_id);
  }
  CHECK(found.size() == report.entries.size());
  CHECK(found == planted);
}

TEST_CASE("report properties") {
  const std::vector<DatasetBundle> evals{
      retrieval_bundle(TaskId::TVR, SplitId::Val,
                       {{"v1", "a man cuts the onion slowly"}, {"v2", "the dog jumps"}, {"v3", "red ball"}})};
  const std::vector<DatasetBundle> trains{
      retrieval_bundle(TaskId::TVC, SplitId::Train,
                       {{"v1", "a man cuts the onion slowly today"},  // same video, Jaccard 6/7
                        {"v9", "the dog jumps"},                      // verbatim, other video
                        {"v3", "red ball blue door"}})};              // same video, Jaccard 1/2

  SUBCASE("both tiers") {
    const LeakReport r = audit_overlap(evals, trains);
    REQUIRE(r.entries.size() == 2);
    CHECK(count_kind(r, MatchKind::ExactText) == 1);
    CHECK(count_kind(r, MatchKind::SameVideoTextOverlap) == 1);
    AuditOptions strict;
    strict.jaccard_threshold = 0.9;
    CHECK(count_kind(audit_overlap(evals, trains, strict), MatchKind::SameVideoTextOverlap) == 0);
  }
  SUBCASE("disjoint bundles") {
    const std::vector<DatasetBundle> other{retrieval_bundle(TaskId::TVC, SplitId::Train, {{"x", "nothing shared"}})};
    CHECK(audit_overlap(evals, other).entries.empty());
  }
  SUBCASE("the same (task, split) never matches itself") {
    const std::vector<DatasetBundle> self{retrieval_bundle(TaskId::TVR, SplitId::Train, {{"v", "dup"}, {"v", "dup"}})};
    AuditOptions all;
    all.eval_splits = {SplitId::Train};
    CHECK(audit_overlap(self, self, all).entries.empty());
  }
  SUBCASE("swapping sides mirrors the report") {
    AuditOptions swapped;
    swapped.eval_splits = {SplitId::Train};
    swapped.train_splits = {SplitId::Val, SplitId::Test};
    const LeakReport forward = audit_overlap(evals, trains);
    const LeakReport backward = audit_overlap(trains, evals, swapped);
    CHECK(mirrored(forward).entries == backward.entries);
    CHECK(mirrored(backward).entries == forward.entries);
  }
  SUBCASE("clean additions never remove entries") {
    const LeakReport before = audit_overlap(evals, trains);
    std::vector<DatasetBundle> more_evals = evals, more_trains = trains;
    Rng rng(3);
    for (int i = 0; i < 30; ++i) {
      more_evals[0].splits[SplitId::Val].push_back(
          RetrievalQuery{"extra" + std::to_string(i), random_sentence(rng, i), "w" + std::to_string(i), std::nullopt});
      more_trains[0].splits[SplitId::Train].push_back(RetrievalQuery{
          "extra" + std::to_string(i), random_sentence(rng, 100 + i), "u" + std::to_string(i), std::nullopt});
    }
    const LeakReport after = audit_overlap(more_evals, more_trains);
    CHECK(std::includes(after.entries.begin(), after.entries.end(), before.entries.begin(), before.entries.end()));
    CHECK(after.entries == audit_overlap(more_evals, more_trains).entries);
  }
}
