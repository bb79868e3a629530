// Copyright 2026 The clipvl Authors
// SPDX-License-Identifier: Apache-2.0

#include "clipvl/runner.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <set>

#include "clipvl/checkpoint.hpp"
#include "clipvl/error.hpp"
#include "clipvl/heads.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace clipvl {

std::optional<Profile> parse_profile(std::string_view text) {
  if (text == "toy") return Profile::Toy;
  if (text == "full") return Profile::Full;
  return std::nullopt;
}

Profile default_profile() {
  const char* env = std::getenv("CLIPVL_PROFILE");
  if (env == nullptr) return Profile::Toy;
  return parse_profile(env).value_or(Profile::Toy);
}

json RunConfig::to_json() const {
  json j = {{"task", std::string(slug(task))},
            {"strategy", std::string(clipvl::to_string(strategy))},
            {"data_dir", data_dir.string()},
            {"checkpoint_out", checkpoint_out.string()},
            {"seed", seed},
            {"epochs", epochs},
            {"batch_size", batch_size},
            {"profile", profile == Profile::Toy ? "toy" : "full"},
            {"lr", optimizer.lr},
            {"dropout", dropout},
            {"freeze_text_encoder", freeze_text_encoder}};
  if (init_checkpoint) j["init_checkpoint"] = init_checkpoint->string();
  if (report_out) j["report_out"] = report_out->string();
  if (max_steps) j["max_steps"] = *max_steps;
  return j;
}

RunConfig RunConfig::from_json(const json& j) {
  if (!j.is_object()) throw Error(Errc::SchemaError, "run config must be a JSON object");
  RunConfig c;
  try {
    const auto task = parse_task(j.at("task").get<std::string>());
    if (!task) throw Error(Errc::SchemaError, "run config: unknown task");
    c.task = *task;
    c.data_dir = j.at("data_dir").get<std::string>();
    c.checkpoint_out = j.at("checkpoint_out").get<std::string>();
    if (j.contains("strategy")) {
      const auto s = parse_strategy(j["strategy"].get<std::string>());
      if (!s) throw Error(Errc::SchemaError, "run config: unknown strategy");
      c.strategy = *s;
    }
    if (j.contains("init_checkpoint")) c.init_checkpoint = j["init_checkpoint"].get<std::string>();
    if (j.contains("report_out")) c.report_out = j["report_out"].get<std::string>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("epochs")) c.epochs = j["epochs"].get<int>();
    if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<int>();
    if (j.contains("profile")) {
      const auto p = parse_profile(j["profile"].get<std::string>());
      if (!p) throw Error(Errc::SchemaError, "run config: profile must be toy or full");
      c.profile = *p;
    }
    if (j.contains("lr")) c.optimizer.lr = j["lr"].get<double>();
    if (j.contains("max_steps")) c.max_steps = j["max_steps"].get<int>();
    if (j.contains("dropout")) c.dropout = j["dropout"].get<bool>();
    if (j.contains("freeze_text_encoder")) c.freeze_text_encoder = j["freeze_text_encoder"].get<bool>();
  } catch (const json::exception& e) {
    throw Error(Errc::SchemaError, std::string("run config: ") + e.what());
  }
  return c;
}

namespace {

bool has_task_data(const fs::path& dir, TaskId task) {
  return std::any_of(kAllSplits.begin(), kAllSplits.end(),
                     [&](SplitId s) { return fs::exists(task_file(dir, task, s)); });
}

void write_json(const fs::path& path, const json& doc) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  out << doc.dump(2) << "\n";
}

std::vector<std::string> video_ids(const DatasetBundle& bundle) {
  std::vector<std::string> ids;
  for (const auto& [id, _] : bundle.videos) ids.push_back(id);
  return ids;
}

Vocabulary run_vocabulary(const RunConfig& config, const std::map<TaskId, DatasetBundle>& bundles, std::ostream& log) {
  if (config.init_checkpoint && fs::exists(*config.init_checkpoint / "vocab.json")) {
    return Vocabulary::load(*config.init_checkpoint / "vocab.json");
  }
  if (fs::exists(config.data_dir / "vocab.json")) return Vocabulary::load(config.data_dir / "vocab.json");
  log << "no vocab.json found; building the vocabulary from the loaded bundles\n";
  std::vector<std::string> texts;
  for (const auto& [task, bundle] : bundles) {
    for (const auto& [split, examples] : bundle.splits) {
      for (const auto& e : examples) {
        for (auto& p : text_payloads(e)) texts.push_back(std::move(p));
      }
    }
    for (const auto& [video, segments] : bundle.subtitles) {
      for (const auto& s : segments) texts.push_back(s.text);
    }
  }
  return Vocabulary::build(texts);
}

}  // namespace

FinetuneResult finetune(const RunConfig& config, std::ostream& log) {
  StrategyConfig target = select_strategy(config.task, config.strategy);
  if (config.init_checkpoint) {
    target.init.path = config.init_checkpoint;
  } else if (target.init.kind != InitKind::Scratch) {
    log << "no init checkpoint given; " << to_string(target.init.kind) << " falls back to scratch\n";
    target.init.kind = InitKind::Scratch;
  }
  target.validate();

  // The tasks of this run: the target plus, for joint regimes, every AT
  // member whose data is present.
  std::vector<StrategyConfig> strategies{target};
  if (target.regime != Regime::ST) {
    for (TaskId member : at_members(config.task, config.strategy)) {
      if (member == config.task) continue;
      if (!has_task_data(config.data_dir, member)) {
        log << "AT member " << display_name(member) << " has no data in " << config.data_dir.string() << "; skipped\n";
        continue;
      }
      StrategyConfig s = select_strategy(member, config.strategy);
      s.regime = Regime::AT;
      s.init = target.init;
      strategies.push_back(s);
    }
  }

  std::map<TaskId, DatasetBundle> bundles;
  std::vector<FeatureNamespace> namespaces;
  for (const auto& s : strategies) {
    DatasetBundle b = load_task_data(s.task, config.data_dir, s.feature_namespace);
    if (b.videos.empty()) throw Error(Errc::SchemaError, "bundle for " + std::string(slug(s.task)) + " has no videos");
    const FeatureNamespace ns = b.videos.begin()->second.ns;
    if (std::find(namespaces.begin(), namespaces.end(), ns) == namespaces.end()) namespaces.push_back(ns);
    bundles.emplace(s.task, std::move(b));
  }

  Vocabulary vocab = run_vocabulary(config, bundles, log);

  ModelConfig model = config.profile == Profile::Toy ? ModelConfig::toy(vocab.size(), namespaces)
                                                     : ModelConfig::full(vocab.size(), namespaces);
  std::optional<CheckpointManifest> hero;
  if (target.init.kind == InitKind::HeroCheckpoint) {
    hero = read_checkpoint_manifest(*target.init.path);
    // The backbone and text widths come from the checkpoint; projections for
    // namespaces it lacks start fresh.
    ModelConfig base = hero->config;
    base.vocab_size = vocab.size();
    base.text.kind = target.text_encoder;
    base.heads = model.heads;
    for (const auto& ns : namespaces) {
      if (!base.find_namespace(ns.name)) base.backbone.namespaces.push_back(ns);
    }
    model = base;
  }
  model.text.kind = target.text_encoder;
  model.validate();

  FinetuneResult result{target, {}, {}, init_model<float>(model, config.seed), vocab};
  if (hero) {
    std::vector<std::string> prefixes{std::string(kTextEncoderPrefix), "backbone.cm.", "backbone.tt."};
    for (const auto& ns : hero->config.backbone.namespaces) {
      if (model.find_namespace(ns.name)) prefixes.push_back("backbone.vproj." + std::string(to_string(ns.name)) + ".");
    }
    const auto loaded = load_checkpoint_prefixes(*target.init.path, result.state.params, prefixes);
    log << "initialized " << loaded.size() << " arrays from " << target.init.path->string() << "\n";
  } else if (target.init.kind == InitKind::ClipTextCheckpoint) {
    const auto pretrained = load_pretrained_text_encoder(*target.init.path, model);
    for (const auto& [name, value] : pretrained.params.entries()) result.state.params.at(name) = value;
    log << "initialized " << pretrained.report.size() << " text-encoder arrays from " << target.init.path->string()
        << "\n";
  }

  std::map<TaskId, std::vector<const TaskExample*>> pools;
  std::map<TaskId, int> pool_sizes;
  for (const auto& s : strategies) {
    pools[s.task] = training_pool(bundles.at(s.task), s.finetune_splits);
    pool_sizes[s.task] = static_cast<int>(pools[s.task].size());
    result.tasks.push_back(s.task);
  }
  const TrainSchedule schedule =
      build_schedule(strategies, pool_sizes, {config.epochs, config.batch_size, config.seed});

  const Featurizer featurizer(vocab, result.state.config);
  AdamState<float> optimizer;
  AdamOptions adam = config.optimizer;
  if (config.freeze_text_encoder) adam.frozen_prefixes.emplace_back(kTextEncoderPrefix);
  Rng dropout_rng(config.seed ^ 0x5bd1e995ULL);
  std::map<TaskId, std::vector<std::string>> all_videos;
  for (const auto& [task, bundle] : bundles) all_videos[task] = video_ids(bundle);

  for (const Draw& draw : schedule.draws) {
    if (config.max_steps && static_cast<int>(result.losses.size()) >= *config.max_steps) break;
    Batch batch{draw.task, &bundles.at(draw.task), {}, {}};
    for (int i : draw.examples) batch.examples.push_back(pools.at(draw.task)[static_cast<std::size_t>(i)]);
    if (task_kind(draw.task) == TaskKind::Retrieval) batch.extra_videos = all_videos.at(draw.task);
    const StepResult step = train_step(result.state, optimizer, batch, featurizer, adam,
                                       config.dropout ? &dropout_rng : nullptr);
    result.losses.push_back(step.loss);
  }
  log << "trained " << result.losses.size() << " steps\n";

  save_checkpoint(result.state, config.checkpoint_out);
  vocab.save(config.checkpoint_out / "vocab.json");
  write_json(config.checkpoint_out / "strategy.json", target.to_json());
  json tasks = json::array();
  for (TaskId t : result.tasks) tasks.push_back(std::string(slug(t)));
  write_json(config.report_out.value_or(config.checkpoint_out / "train_report.json"),
             {{"strategy", target.to_json()},
              {"tasks", tasks},
              {"steps", result.losses.size()},
              {"losses", result.losses},
              {"final_loss", result.losses.empty() ? json(nullptr) : json(result.losses.back())}});
  return result;
}

std::vector<json> predict(const ModelState<float>& state, const Vocabulary& vocab, const DatasetBundle& bundle,
                          SplitId split, int beam) {
  const Featurizer featurizer(vocab, state.config);
  const auto& examples = bundle.split(split);
  std::vector<json> out;
  std::map<std::string, ContextualizedVideo<float>> cache;
  auto video = [&](const std::string& id) -> const ContextualizedVideo<float>& {
    auto it = cache.find(id);
    if (it == cache.end()) it = cache.emplace(id, encode_video(featurizer.video(bundle, id), state)).first;
    return it->second;
  };

  switch (task_kind(bundle.task)) {
    case TaskKind::Retrieval: {
      const std::vector<std::string> ids = video_ids(bundle);
      std::vector<ContextualizedVideo<float>> videos;
      for (const auto& id : ids) videos.push_back(video(id));
      std::vector<QueryRep<float>> queries;
      for (const auto& e : examples) {
        queries.push_back(encode_query(featurizer.text(std::get<RetrievalQuery>(e).query_text),
                                       state.config.text.kind, state));
      }
      if (queries.empty()) break;
      const Matrix<float> scores = retrieval_score(queries, videos, state);
      for (std::size_t q = 0; q < examples.size(); ++q) {
        std::vector<std::size_t> order(ids.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
          return scores(static_cast<Index>(q), static_cast<Index>(a)) > scores(static_cast<Index>(q), static_cast<Index>(b));
        });
        json ranked = json::array();
        for (std::size_t i : order) ranked.push_back(ids[i]);
        out.push_back({{"query_id", std::get<RetrievalQuery>(examples[q]).query_id}, {"ranked_video_ids", ranked}});
      }
      break;
    }
    case TaskKind::QA:
      for (const auto& e : examples) {
        const auto& item = std::get<QAItem>(e);
        std::vector<TokenSequence> pairs;
        for (const auto& c : item.candidates) pairs.push_back(featurizer.pair(item.question, c));
        const RowVector<float> logits = qa_forward(video(item.video_id), bundle.task, pairs, state);
        Index best = 0;
        logits.maxCoeff(&best);
        out.push_back({{"example_id", item.example_id}, {"predicted_index", static_cast<int>(best)}});
      }
      break;
    case TaskKind::Captioning:
      for (const auto& e : examples) {
        const auto& item = std::get<CaptionItem>(e);
        const CaptionHypothesis h =
            caption_decode(state, video(item.video_id), beam, state.config.heads.max_caption_len);
        out.push_back({{"video_id", item.video_id}, {"caption_text", vocab.detokenize(h.tokens)}});
      }
      break;
  }
  return out;
}

std::vector<json> evaluate(const EvalConfig& config) {
  const CheckpointManifest manifest = read_checkpoint_manifest(config.checkpoint);
  const ModelState<float> state = load_checkpoint(config.checkpoint, manifest.config);
  const Vocabulary vocab = Vocabulary::load(config.checkpoint / "vocab.json");
  if (vocab.size() != state.config.vocab_size) {
    throw Error(Errc::ShapeMismatch, "vocab.json does not match the checkpoint's vocabulary size");
  }
  const auto& spaces = state.config.backbone.namespaces;
  NamespaceName ns = spaces.front().name;
  if (config.feature_namespace) {
    ns = *config.feature_namespace;
  } else if (spaces.size() > 1) {
    const NamespaceName preferred = select_strategy(config.task, StrategyKind::MIXED).feature_namespace;
    if (state.config.find_namespace(preferred)) ns = preferred;
  }
  const DatasetBundle bundle = load_task_data(config.task, config.data_dir, ns);
  return predict(state, vocab, bundle, config.split, config.beam);
}

void write_jsonl(const fs::path& path, const std::vector<json>& records) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  for (const auto& r : records) out << r.dump() << "\n";
}

std::vector<json> read_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  std::vector<json> out;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw Error(Errc::SchemaError, path.string() + ":" + std::to_string(number) + ": " + e.what());
    }
  }
  return out;
}

namespace {

std::map<std::string, json> index_predictions(const std::vector<json>& predictions, const char* key) {
  std::map<std::string, json> by_id;
  for (const auto& p : predictions) {
    if (!p.is_object() || !p.contains(key) || !p[key].is_string()) {
      throw Error(Errc::SchemaError, std::string("prediction without '") + key + "'");
    }
    if (!by_id.emplace(p[key].get<std::string>(), p).second) {
      throw Error(Errc::SchemaError, "duplicate prediction for " + p[key].get<std::string>());
    }
  }
  return by_id;
}

const json& prediction_for(const std::map<std::string, json>& by_id, const std::string& id) {
  const auto it = by_id.find(id);
  if (it == by_id.end()) throw Error(Errc::SchemaError, "no prediction for " + id);
  return it->second;
}

}  // namespace

TaskScore score_predictions(TaskId task, const std::vector<TaskExample>& gold, const std::vector<json>& predictions) {
  if (gold.empty()) throw Error(Errc::EmptySplit, "no gold records to score");
  try {
    switch (task_kind(task)) {
      case TaskKind::Retrieval: {
        const auto by_id = index_predictions(predictions, "query_id");
        std::vector<RankedQuery> results;
        for (const auto& e : gold) {
          const auto& q = std::get<RetrievalQuery>(e);
          results.push_back({prediction_for(by_id, q.query_id).at("ranked_video_ids").get<std::vector<std::string>>(),
                             q.positive_video_id});
        }
        return {MetricKind::AveR, ave_r(results)};
      }
      case TaskKind::QA: {
        const auto by_id = index_predictions(predictions, "example_id");
        std::vector<int> predicted, golds;
        for (const auto& e : gold) {
          const auto& item = std::get<QAItem>(e);
          predicted.push_back(prediction_for(by_id, item.example_id).at("predicted_index").get<int>());
          golds.push_back(item.gold_index);
        }
        return {MetricKind::Accuracy, accuracy(predicted, golds)};
      }
      case TaskKind::Captioning: {
        const auto by_id = index_predictions(predictions, "video_id");
        std::map<std::string, std::string> candidates;
        std::map<std::string, std::vector<std::string>> references;
        for (const auto& e : gold) {
          const auto& item = std::get<CaptionItem>(e);
          candidates[item.video_id] = prediction_for(by_id, item.video_id).at("caption_text").get<std::string>();
          references[item.video_id] = item.references;
        }
        return {MetricKind::CIDEr, cider_d(candidates, references).score};
      }
    }
  } catch (const json::exception& e) {
    throw Error(Errc::SchemaError, std::string("prediction record: ") + e.what());
  }
  throw Error(Errc::InvalidArgument, "unknown task kind");
}

}  // namespace clipvl
