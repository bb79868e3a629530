// Copyright 2026 The clipvl Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <sstream>

#include "cli.hpp"
#include "clipvl/fixture.hpp"
#include "clipvl/metrics.hpp"
#include "clipvl/runner.hpp"
#include "test_support.hpp"

using namespace clipvl;
using clipvl::testing::read_file;
using clipvl::testing::TempDir;
using clipvl::testing::write_file;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string out, err;
};

Outcome run(std::vector<std::string> args) {
  args.insert(args.begin(), "clipvl");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

/// Concatenated bytes of every regular file under `dir`, in path order.
std::string tree_bytes(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::string all;
  for (const auto& f : files) all += fs::relative(f, dir).string() + "\n" + read_file(f);
  return all;
}

void write_report(const fs::path& path, const std::map<TaskId, double>& values) {
  ScoreReport r;
  for (const auto& [task, v] : values) r.scores[task] = {metric_for(task), v};
  write_file(path, r.to_json().dump());
}

const std::vector<double> kOurs{13.12, 4.64, 62.68, 49.86, 75.45, 73.92, 67.47, 68.37, 53.34, 128.87, 62.30};
const std::vector<double> kAtSt{13.56, 3.95, 54.28, 49.09, 74.83, 74.60, 67.18, 69.37, 48.13, 121.89, 56.54};

std::map<TaskId, double> row(const std::vector<double>& values) {
  std::map<TaskId, double> out;
  for (std::size_t i = 0; i < values.size(); ++i) out[kAllTasks[i]] = values[i];
  return out;
}

}  // namespace

TEST_CASE("usage errors exit 2 with usage text") {
  const Outcome unknown = run({"frobnicate"});
  CHECK(unknown.code == cli::kExitUsage);
  CHECK(unknown.err.find("Usage") != std::string::npos);
  CHECK(unknown.out.empty());
  CHECK(run({}).code == cli::kExitUsage);
  CHECK(run({"score", "--task", "nonsense", "--data", ".", "--predictions", "x"}).code == cli::kExitUsage);
  CHECK(run({"meta-ave"}).code == cli::kExitUsage);
  CHECK(run({"--help"}).code == cli::kExitOk);
}

TEST_CASE("meta-ave over per-task report files") {
  TempDir dir;
  for (std::size_t i = 0; i < kAllTasks.size(); ++i) {
    write_report(dir / (std::string(slug(kAllTasks[i])) + ".json"), {{kAllTasks[i], kOurs[i]}});
  }
  const Outcome o = run({"meta-ave", dir.path().string()});
  CHECK(o.code == cli::kExitOk);
  CHECK(o.out == "60.00\n");

  fs::remove(dir / "vlep.json");
  const Outcome missing = run({"meta-ave", dir.path().string()});
  CHECK(missing.code == cli::kExitInvalid);
  CHECK(missing.err.find("VLEP") != std::string::npos);
  CHECK(missing.out.empty());
}

TEST_CASE("table rendering") {
  TempDir dir, out;
  write_report(dir / "AT-ST.json", row(kAtSt));
  write_report(dir / "Ours.json", row(kOurs));
  const Outcome first = run({"table", dir.path().string(), "--text", (out / "t.txt").string(), "--json",
                             (out / "t.json").string()});
  REQUIRE(first.code == cli::kExitOk);
  CHECK(first.out == read_file(out / "t.txt"));
  CHECK(first.out.find("| AT-ST | **13.56** | 3.95 |") != std::string::npos);
  CHECK(first.out.find("| Ours | 13.12 | **4.64** |") != std::string::npos);
  const auto json = nlohmann::json::parse(read_file(out / "t.json"));
  CHECK(json["rows"][1]["best"].back() == "Meta-Ave");
  CHECK(run({"table", dir.path().string()}).out == first.out);

  TempDir partial;
  write_report(partial / "Partial.json", {{TaskId::TVR, 12.0}, {TaskId::TVC, 40.0}});
  const Outcome p = run({"table", partial.path().string()});
  CHECK(p.code == cli::kExitOk);
  CHECK(p.out.find("| Partial | **12.00** | - |") != std::string::npos);
  CHECK(p.out.find("| - |\n") != std::string::npos);
}

TEST_CASE("ingest, score and audit on the fixture") {
  TempDir data;
  write_fixture(make_fixture(), data.path());
  const std::string before = tree_bytes(data.path());

  SUBCASE("ingest summarizes a valid bundle") {
    const Outcome o = run({"ingest", "--task", "tvqa", "--data", data.path().string()});
    REQUIRE(o.code == cli::kExitOk);
    const auto summary = nlohmann::json::parse(o.out);
    CHECK(summary["task"] == "tvqa");
    CHECK(summary["videos"] == 8);
    CHECK(summary["splits"]["train"].get<int>() > 0);
  }
  SUBCASE("ingest rejects a broken bundle") {
    std::ofstream(task_file(data.path(), TaskId::TVR, SplitId::Val), std::ios::app)
        << R"({"query_id": "x", "query_text": "t", "positive_video_id": "ghost"})" << "\n";
    const Outcome o = run({"ingest", "--task", "tvr", "--data", data.path().string()});
    CHECK(o.code == cli::kExitInvalid);
    CHECK(o.err.find("ghost") != std::string::npos);
    return;  // this subcase edits the data on purpose
  }
  SUBCASE("perfect QA predictions score 100") {
    const DatasetBundle b = load_task_data(TaskId::TVQA, data.path());
    std::vector<nlohmann::json> perfect, wrong;
    for (const auto& e : b.split(SplitId::Val)) {
      const auto& q = std::get<QAItem>(e);
      perfect.push_back({{"example_id", q.example_id}, {"predicted_index", q.gold_index}});
      wrong.push_back({{"example_id", q.example_id}, {"predicted_index", (q.gold_index + 1) % 4}});
    }
    TempDir preds;
    write_jsonl(preds / "perfect.jsonl", perfect);
    write_jsonl(preds / "wrong.jsonl", wrong);
    const std::vector<std::string> base{"score", "--task", "tvqa", "--data", data.path().string(), "--predictions"};
    auto with = [&](const std::string& file, std::vector<std::string> extra = {}) {
      auto args = base;
      args.push_back((preds / file).string());
      args.insert(args.end(), extra.begin(), extra.end());
      return run(args);
    };
    const Outcome ok = with("perfect.jsonl", {"--out", (preds / "report.json").string()});
    CHECK(ok.code == cli::kExitOk);
    CHECK(ok.out == "100.00\n");
    CHECK(ScoreReport::from_json(nlohmann::json::parse(read_file(preds / "report.json"))).scores.at(TaskId::TVQA).value ==
          100.0);
    CHECK(with("wrong.jsonl").out == "0.00\n");

    perfect.pop_back();
    write_jsonl(preds / "short.jsonl", perfect);
    CHECK(with("short.jsonl").code == cli::kExitInvalid);
  }
  SUBCASE("audit reports a planted leak") {
    const DatasetBundle r = load_task_data(TaskId::VatexEnR, data.path());
    const auto& q = std::get<RetrievalQuery>(r.split(SplitId::Val).front());
    TempDir leaky;
    write_fixture(make_fixture(), leaky.path());
    std::ofstream(task_file(leaky.path(), TaskId::VatexEnC, SplitId::Train), std::ios::app)
        << nlohmann::json({{"video_id", q.positive_video_id}, {"references", {q.query_text}}}).dump() << "\n";
    const Outcome o = run({"audit", "--eval", leaky.path().string()});
    CHECK(o.code == cli::kExitOk);
    CHECK(o.out.find(q.query_id) != std::string::npos);
    CHECK(o.err.find("vatex_en_r/val -> vatex_en_c/train exact_text: 1") != std::string::npos);
  }
  CHECK(tree_bytes(data.path()) == before);
}

TEST_CASE("finetune, evaluate and score end to end") {
  TempDir root;
  const fs::path data = root / "data";
  REQUIRE(run({"make-fixture", "--out", data.string(), "--videos", "6"}).code == cli::kExitOk);
  const std::string before = tree_bytes(data);

  const std::vector<std::string> train{"finetune", "--task", "tvc", "--strategy", "st", "--data", data.string(),
                                       "--profile", "toy", "--max-steps", "3", "--epochs", "3", "--seed", "5"};
  auto with_out = [&](const std::string& name) {
    auto args = train;
    args.insert(args.end(), {"--out", (root / name).string()});
    return run(args);
  };
  const Outcome a = with_out("ckpt_a");
  REQUIRE_MESSAGE(a.code == cli::kExitOk, a.err);
  CHECK(nlohmann::json::parse(a.out)["steps"] == 3);
  REQUIRE(with_out("ckpt_b").code == cli::kExitOk);
  CHECK(tree_bytes(root / "ckpt_a") == tree_bytes(root / "ckpt_b"));

  const Outcome ev = run({"evaluate", "--checkpoint", (root / "ckpt_a").string(), "--data", data.string(), "--task",
                          "tvc", "--split", "val", "--out", (root / "preds.jsonl").string()});
  REQUIRE_MESSAGE(ev.code == cli::kExitOk, ev.err);
  const auto preds = read_jsonl(root / "preds.jsonl");
  CHECK(preds.size() == load_task_data(TaskId::TVC, data).split(SplitId::Val).size());
  CHECK(preds.front().contains("caption_text"));

  const Outcome sc = run({"score", "--task", "tvc", "--data", data.string(), "--predictions",
                          (root / "preds.jsonl").string()});
  CHECK(sc.code == cli::kExitOk);
  CHECK(std::stod(sc.out) >= 0.0);
  CHECK(tree_bytes(data) == before);
}
