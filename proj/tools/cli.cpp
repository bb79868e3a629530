// Copyright 2026 The clipvl Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <map>

#include "clipvl/audit.hpp"
#include "clipvl/error.hpp"
#include "clipvl/fixture.hpp"
#include "clipvl/metrics.hpp"
#include "clipvl/runner.hpp"

namespace fs = std::filesystem;

namespace clipvl::cli {

namespace {

// Usage problems found after CLI11 parsing (bad enum values and the like).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

TaskId task_arg(const std::string& text) {
  const auto t = parse_task(text);
  if (!t) throw UsageError("unknown task '" + text + "'");
  return *t;
}

SplitId split_arg(const std::string& text) {
  const auto s = parse_split(text);
  if (!s) throw UsageError("unknown split '" + text + "'");
  return *s;
}

std::set<SplitId> splits_arg(const std::vector<std::string>& texts) {
  std::set<SplitId> out;
  for (const auto& t : texts) out.insert(split_arg(t));
  return out;
}

std::optional<NamespaceName> namespace_arg(const std::string& text) {
  if (text.empty()) return std::nullopt;
  const auto ns = parse_namespace(text);
  if (!ns) throw UsageError("unknown feature namespace '" + text + "'");
  return ns;
}

std::string fixed2(double value) {
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, "%.2f", round2(value));
  return buffer;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  out << text;
}

// Every task with at least one split file in `dir`.
std::vector<DatasetBundle> load_all_bundles(const fs::path& dir) {
  std::vector<DatasetBundle> bundles;
  for (TaskId task : kAllTasks) {
    bool present = false;
    for (SplitId s : kAllSplits) present = present || fs::exists(task_file(dir, task, s));
    if (present) bundles.push_back(load_task_data(task, dir));
  }
  return bundles;
}

struct IngestArgs {
  std::string task, data, ns;
};

int run_ingest(const IngestArgs& a, std::ostream& out) {
  const DatasetBundle bundle = load_task_data(task_arg(a.task), a.data, namespace_arg(a.ns));
  nlohmann::json summary = {{"task", std::string(slug(bundle.task))}, {"videos", bundle.videos.size()}};
  if (!bundle.videos.empty()) {
    const auto& ns = bundle.videos.begin()->second.ns;
    summary["feature_namespace"] = std::string(to_string(ns.name));
    summary["feature_dim"] = ns.dim;
  }
  std::size_t segments = 0;
  for (const auto& [_, s] : bundle.subtitles) segments += s.size();
  summary["subtitle_segments"] = segments;
  nlohmann::json splits = nlohmann::json::object();
  for (const auto& [split, examples] : bundle.splits) splits[std::string(to_string(split))] = examples.size();
  summary["splits"] = splits;
  out << summary.dump(2) << "\n";
  return kExitOk;
}

struct FinetuneArgs {
  std::string config, task, strategy = "mixed", data, init, out, report, profile;
  std::uint64_t seed = 0;
  int epochs = 1, batch_size = 4, max_steps = -1;
  double lr = -1.0;
  bool no_dropout = false;
  bool freeze_text = false;
};

int run_finetune(const FinetuneArgs& a, std::ostream& out, std::ostream& err) {
  RunConfig config;
  if (!a.config.empty()) {
    std::ifstream in(a.config);
    if (!in) throw Error(Errc::Io, "cannot open " + a.config);
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::SchemaError, a.config + ": " + e.what());
    }
    config = RunConfig::from_json(doc);
  } else {
    if (a.task.empty() || a.data.empty() || a.out.empty()) {
      throw UsageError("finetune needs --config or --task, --data and --out");
    }
    config.task = task_arg(a.task);
    config.data_dir = a.data;
    config.checkpoint_out = a.out;
    config.profile = default_profile();
  }
  // Explicit flags override the config file.
  if (!a.task.empty()) config.task = task_arg(a.task);
  if (!a.data.empty()) config.data_dir = a.data;
  if (!a.out.empty()) config.checkpoint_out = a.out;
  if (!a.strategy.empty() && (a.config.empty() || a.strategy != "mixed")) {
    const auto s = parse_strategy(a.strategy);
    if (!s) throw UsageError("unknown strategy '" + a.strategy + "'");
    config.strategy = *s;
  }
  if (!a.init.empty()) config.init_checkpoint = a.init;
  if (!a.report.empty()) config.report_out = a.report;
  if (!a.profile.empty()) {
    const auto p = parse_profile(a.profile);
    if (!p) throw UsageError("profile must be toy or full");
    config.profile = *p;
  }
  if (a.seed != 0) config.seed = a.seed;
  if (a.config.empty() || a.epochs != 1) config.epochs = a.epochs;
  if (a.config.empty() || a.batch_size != 4) config.batch_size = a.batch_size;
  if (a.max_steps >= 0) config.max_steps = a.max_steps;
  if (a.lr >= 0.0) config.optimizer.lr = a.lr;
  if (a.no_dropout) config.dropout = false;
  if (a.freeze_text) config.freeze_text_encoder = true;

  const FinetuneResult result = finetune(config, err);
  out << nlohmann::json({{"checkpoint", config.checkpoint_out.string()},
                         {"steps", result.losses.size()},
                         {"final_loss", result.losses.empty() ? nlohmann::json(nullptr)
                                                              : nlohmann::json(result.losses.back())}})
             .dump()
      << "\n";
  return kExitOk;
}

struct EvaluateArgs {
  std::string checkpoint, data, task, split = "val", out, ns;
  int beam = 1;
};

int run_evaluate(const EvaluateArgs& a, std::ostream& out) {
  EvalConfig config{a.checkpoint, a.data, task_arg(a.task), split_arg(a.split), namespace_arg(a.ns), a.beam};
  if (config.beam < 1) throw UsageError("--beam must be >= 1");
  const auto records = evaluate(config);
  if (a.out.empty()) {
    for (const auto& r : records) out << r.dump() << "\n";
  } else {
    write_jsonl(a.out, records);
  }
  return kExitOk;
}

struct ScoreArgs {
  std::string task, data, split = "val", predictions, out, ns;
};

int run_score(const ScoreArgs& a, std::ostream& out) {
  const TaskId task = task_arg(a.task);
  const DatasetBundle bundle = load_task_data(task, a.data, namespace_arg(a.ns));
  const TaskScore score = score_predictions(task, bundle.split(split_arg(a.split)), read_jsonl(a.predictions));
  if (!a.out.empty()) {
    ScoreReport report;
    report.scores[task] = score;
    write_text(a.out, report.to_json().dump(2) + "\n");
  }
  out << fixed2(score.value) << "\n";
  return kExitOk;
}

int run_meta_ave(const std::string& dir, std::ostream& out) {
  out << fixed2(meta_ave(merge_reports(dir))) << "\n";
  return kExitOk;
}

struct AuditArgs {
  std::vector<std::string> eval_dirs, train_dirs;
  std::vector<std::string> eval_splits{"val", "test"}, train_splits{"train"};
  std::string out;
  double threshold = 0.8;
};

int run_audit(const AuditArgs& a, std::ostream& out, std::ostream& err) {
  std::vector<DatasetBundle> eval, train;
  for (const auto& d : a.eval_dirs) {
    for (auto& b : load_all_bundles(d)) eval.push_back(std::move(b));
  }
  for (const auto& d : a.train_dirs.empty() ? a.eval_dirs : a.train_dirs) {
    for (auto& b : load_all_bundles(d)) train.push_back(std::move(b));
  }
  AuditOptions options;
  options.jaccard_threshold = a.threshold;
  options.eval_splits = splits_arg(a.eval_splits);
  options.train_splits = splits_arg(a.train_splits);
  const LeakReport report = audit_overlap(eval, train, options);
  if (a.out.empty()) {
    out << report.to_jsonl();
    err << report.summary_text();
  } else {
    write_text(a.out, report.to_jsonl());
    out << report.summary_text();
  }
  return kExitOk;
}

struct TableArgs {
  std::string dir, text_out, json_out;
};

int run_table(const TableArgs& a, std::ostream& out) {
  const auto reports = load_reports(a.dir);
  if (reports.empty()) throw Error(Errc::EmptySplit, "no reports in " + a.dir);
  const std::string text = render_table(reports);
  out << text;
  if (!a.text_out.empty()) write_text(a.text_out, text);
  if (!a.json_out.empty()) write_text(a.json_out, table_json(reports).dump(2) + "\n");
  return kExitOk;
}

struct FixtureArgs {
  std::string out;
  int videos = 8;
  std::uint64_t seed = 7;
  bool alias = false;
};

int run_make_fixture(const FixtureArgs& a, std::ostream& out) {
  FixtureOptions options;
  options.num_videos = a.videos;
  options.seed = a.seed;
  options.alias_eval_words = a.alias;
  write_fixture(make_fixture(options), a.out);
  out << a.out << "\n";
  return kExitOk;
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-task video-language finetuning, evaluation and leaderboard tools", "clipvl"};
  app.require_subcommand(1);

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Validate and summarize one task's bundle");
  c_ingest->add_option("--task", ingest.task, "Task id, e.g. tvr or VATEX-EN-R")->required();
  c_ingest->add_option("--data", ingest.data, "Bundle directory")->required();
  c_ingest->add_option("--namespace", ingest.ns, "Feature namespace");

  FinetuneArgs fin;
  auto* c_fin = app.add_subcommand("finetune", "Finetune one task with a strategy");
  c_fin->add_option("--config", fin.config, "JSON run config");
  c_fin->add_option("--task", fin.task, "Target task");
  c_fin->add_option("--strategy", fin.strategy, "st, at_st or mixed")->capture_default_str();
  c_fin->add_option("--data", fin.data, "Bundle directory");
  c_fin->add_option("--init", fin.init, "Checkpoint for hero / CLIP text initialization");
  c_fin->add_option("--out", fin.out, "Checkpoint output directory");
  c_fin->add_option("--report", fin.report, "Loss report path");
  c_fin->add_option("--profile", fin.profile, "toy or full (default from CLIPVL_PROFILE)");
  c_fin->add_option("--seed", fin.seed, "Seed");
  c_fin->add_option("--epochs", fin.epochs, "Epochs per phase")->capture_default_str();
  c_fin->add_option("--batch-size", fin.batch_size, "Batch size")->capture_default_str();
  c_fin->add_option("--max-steps", fin.max_steps, "Stop after this many steps");
  c_fin->add_option("--lr", fin.lr, "Learning rate (default 1e-4)");
  c_fin->add_flag("--no-dropout", fin.no_dropout, "Disable dropout");
  c_fin->add_flag("--freeze-text-encoder", fin.freeze_text, "Do not update the text front end");

  EvaluateArgs ev;
  auto* c_ev = app.add_subcommand("evaluate", "Write predictions for one split from a checkpoint");
  c_ev->add_option("--checkpoint", ev.checkpoint, "Checkpoint directory")->required();
  c_ev->add_option("--data", ev.data, "Bundle directory")->required();
  c_ev->add_option("--task", ev.task, "Task")->required();
  c_ev->add_option("--split", ev.split, "Split")->capture_default_str();
  c_ev->add_option("--out", ev.out, "Predictions file (JSON lines); stdout when absent");
  c_ev->add_option("--namespace", ev.ns, "Feature namespace");
  c_ev->add_option("--beam", ev.beam, "Beam width for captioning")->capture_default_str();

  ScoreArgs sc;
  auto* c_sc = app.add_subcommand("score", "Score predictions against a split's gold records");
  c_sc->add_option("--task", sc.task, "Task")->required();
  c_sc->add_option("--data", sc.data, "Bundle directory")->required();
  c_sc->add_option("--predictions", sc.predictions, "Predictions file (JSON lines)")->required();
  c_sc->add_option("--split", sc.split, "Split")->capture_default_str();
  c_sc->add_option("--out", sc.out, "Report file");
  c_sc->add_option("--namespace", sc.ns, "Feature namespace");

  std::string meta_dir;
  auto* c_meta = app.add_subcommand("meta-ave", "Meta-Ave over a directory of report files");
  c_meta->add_option("dir", meta_dir, "Report directory")->required();

  AuditArgs au;
  auto* c_au = app.add_subcommand("audit", "Detect evaluation text leaked into training pools");
  c_au->add_option("--eval", au.eval_dirs, "Bundle directories on the evaluation side")->required();
  c_au->add_option("--train", au.train_dirs, "Bundle directories on the training side (default: --eval)");
  c_au->add_option("--eval-splits", au.eval_splits, "Evaluation-side splits")->capture_default_str();
  c_au->add_option("--train-splits", au.train_splits, "Training-side splits")->capture_default_str();
  c_au->add_option("--threshold", au.threshold, "Token Jaccard threshold")->capture_default_str();
  c_au->add_option("--out", au.out, "Leak report file (JSON lines); stdout when absent");

  TableArgs ta;
  auto* c_ta = app.add_subcommand("table", "Render a leaderboard from report files");
  c_ta->add_option("dir", ta.dir, "Report directory")->required();
  c_ta->add_option("--text", ta.text_out, "Also write the text table here");
  c_ta->add_option("--json", ta.json_out, "Write the JSON table here");

  FixtureArgs fx;
  auto* c_fx = app.add_subcommand("make-fixture", "Write the synthetic demo world");
  c_fx->add_option("--out", fx.out, "Output directory")->required();
  c_fx->add_option("--videos", fx.videos, "Number of videos (2..16)")->capture_default_str();
  c_fx->add_option("--seed", fx.seed, "Seed")->capture_default_str();
  c_fx->add_flag("--alias-eval", fx.alias, "Use alias words in val/test texts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*c_ingest) return run_ingest(ingest, out);
    if (*c_fin) return run_finetune(fin, out, err);
    if (*c_ev) return run_evaluate(ev, out);
    if (*c_sc) return run_score(sc, out);
    if (*c_meta) return run_meta_ave(meta_dir, out);
    if (*c_au) return run_audit(au, out, err);
    if (*c_ta) return run_table(ta, out);
    if (*c_fx) return run_make_fixture(fx, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace clipvl::cli
