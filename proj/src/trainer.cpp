// Copyright 2026 The clipvl Authors
// SPDX-License-Identifier: Apache-2.0

#include "clipvl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "clipvl/backbone.hpp"
#include "clipvl/error.hpp"
#include "clipvl/heads.hpp"

namespace clipvl {

namespace {

template <typename Enum, std::size_t N>
std::optional<Enum> lookup(std::string_view text, const std::pair<Enum, std::string_view> (&table)[N]) {
  for (const auto& [value, name] : table) {
    if (name == text) return value;
  }
  return std::nullopt;
}

template <typename Enum, std::size_t N>
std::string_view name_of(Enum value, const std::pair<Enum, std::string_view> (&table)[N]) {
  for (const auto& [v, name] : table) {
    if (v == value) return name;
  }
  return "?";
}

constexpr std::pair<StrategyKind, std::string_view> kStrategyNames[] = {
    {StrategyKind::ST, "st"}, {StrategyKind::AT_ST, "at_st"}, {StrategyKind::MIXED, "mixed"}};
constexpr std::pair<Regime, std::string_view> kRegimeNames[] = {
    {Regime::ST, "st"}, {Regime::AT, "at"}, {Regime::ATThenST, "at_then_st"}};
constexpr std::pair<InitKind, std::string_view> kInitNames[] = {{InitKind::Scratch, "scratch"},
                                                               {InitKind::HeroCheckpoint, "hero_checkpoint"},
                                                               {InitKind::ClipTextCheckpoint, "clip_text_checkpoint"}};

std::string lowered(std::string_view text) {
  std::string out(text);
  for (char& c : out) {
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (c == '-') c = '_';
  }
  return out;
}

std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
  // splitmix64 finalizer over the running state.
  std::uint64_t z = h + 0x9e3779b97f4a7c15ULL + v;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

std::string_view to_string(StrategyKind kind) { return name_of(kind, kStrategyNames); }
std::optional<StrategyKind> parse_strategy(std::string_view text) {
  const std::string t = lowered(text);
  if (t == "at→st" || t == "at_then_st" || t == "atst") return StrategyKind::AT_ST;
  return lookup(t, kStrategyNames);
}
std::string_view to_string(Regime regime) { return name_of(regime, kRegimeNames); }
std::optional<Regime> parse_regime(std::string_view text) { return lookup(lowered(text), kRegimeNames); }
std::string_view to_string(InitKind kind) { return name_of(kind, kInitNames); }
std::optional<InitKind> parse_init(std::string_view text) { return lookup(lowered(text), kInitNames); }

bool finetunes_on_val(TaskId task) {
  return task == TaskId::YC2R || task == TaskId::YC2C || task == TaskId::TVC;
}

void StrategyConfig::validate() const {
  if (finetune_splits.empty()) throw Error(Errc::InvalidArgument, "no finetuning splits");
  for (SplitId s : finetune_splits) {
    if (s == SplitId::Test) throw Error(Errc::InvalidArgument, "test split cannot be used for finetuning");
    if (s == SplitId::Val && !finetunes_on_val(task)) {
      throw Error(Errc::InvalidArgument, std::string(display_name(task)) + " may not finetune on val");
    }
  }
  if (text_encoder == TextEncoderKind::ClipStyle && init.kind == InitKind::HeroCheckpoint) {
    throw Error(Errc::InvalidArgument, "a clip_style text encoder cannot start from a hero checkpoint");
  }
}

nlohmann::json StrategyConfig::to_json() const {
  nlohmann::json splits = nlohmann::json::array();
  for (SplitId s : finetune_splits) splits.push_back(std::string(clipvl::to_string(s)));
  nlohmann::json init_json = {{"kind", std::string(clipvl::to_string(init.kind))}};
  if (init.path) init_json["path"] = init.path->string();
  return {{"task", std::string(slug(task))},
          {"regime", std::string(clipvl::to_string(regime))},
          {"feature_namespace", std::string(clipvl::to_string(feature_namespace))},
          {"finetune_splits", splits},
          {"init", init_json},
          {"text_encoder", std::string(clipvl::to_string(text_encoder))}};
}

StrategyConfig StrategyConfig::from_json(const nlohmann::json& j) {
  auto need = [&](const char* key) -> const nlohmann::json& {
    if (!j.contains(key)) throw Error(Errc::SchemaError, std::string("strategy missing '") + key + "'");
    return j.at(key);
  };
  auto bad = [](const std::string& what) { return Error(Errc::SchemaError, "strategy: bad " + what); };
  StrategyConfig c;
  const auto task = parse_task(need("task").get<std::string>());
  if (!task) throw bad("task");
  c.task = *task;
  const auto regime = parse_regime(need("regime").get<std::string>());
  if (!regime) throw bad("regime");
  c.regime = *regime;
  const auto ns = parse_namespace(need("feature_namespace").get<std::string>());
  if (!ns) throw bad("feature_namespace");
  c.feature_namespace = *ns;
  c.finetune_splits.clear();
  for (const auto& s : need("finetune_splits")) {
    const auto split = parse_split(s.get<std::string>());
    if (!split) throw bad("split");
    c.finetune_splits.push_back(*split);
  }
  const auto& init = need("init");
  const auto kind = parse_init(init.is_string() ? init.get<std::string>() : init.at("kind").get<std::string>());
  if (!kind) throw bad("init");
  c.init.kind = *kind;
  if (init.is_object() && init.contains("path")) c.init.path = init.at("path").get<std::string>();
  const auto enc = parse_text_encoder(need("text_encoder").get<std::string>());
  if (!enc) throw bad("text_encoder");
  c.text_encoder = *enc;
  c.validate();
  return c;
}

StrategyConfig select_strategy(TaskId task, StrategyKind kind) {
  StrategyConfig c;
  c.task = task;
  switch (kind) {
    case StrategyKind::ST:
      c.regime = Regime::ST;
      return c;
    case StrategyKind::AT_ST:
      c.regime = Regime::ATThenST;
      return c;
    case StrategyKind::MIXED:
      break;
  }
  c.regime = task_kind(task) == TaskKind::QA ? Regime::AT : Regime::ST;
  if (task == TaskId::YC2R || task == TaskId::YC2C || task == TaskId::How2R) {
    c.feature_namespace = NamespaceName::ResnetSlowfast;
  }
  if (finetunes_on_val(task)) c.finetune_splits = {SplitId::Train, SplitId::Val};
  if (task == TaskId::VatexEnR || task == TaskId::VatexEnC) {
    c.init = {InitKind::ClipTextCheckpoint, std::nullopt};
    c.text_encoder = TextEncoderKind::ClipStyle;
  }
  return c;
}

std::vector<TaskId> at_members(TaskId task, StrategyKind kind) {
  if (kind == StrategyKind::AT_ST) return {kAllTasks.begin(), kAllTasks.end()};
  if (kind == StrategyKind::MIXED && task_kind(task) == TaskKind::QA) return {kQaTasks.begin(), kQaTasks.end()};
  return {};
}

namespace {

constexpr std::uint64_t kJointPhase = 1;
constexpr std::uint64_t kSinglePhase = 2;

// Batches of one pass over a pool, shuffled by a stream keyed on everything
// but the phase index, so a phase's draws do not depend on what precedes it.
std::vector<std::vector<int>> shuffled_pass(int pool, int batch_size, std::uint64_t seed, std::uint64_t phase_kind,
                                            TaskId task, int epoch, int pass) {
  std::vector<int> order(static_cast<std::size_t>(pool));
  std::iota(order.begin(), order.end(), 0);
  std::uint64_t key = mix(seed, phase_kind);
  key = mix(key, static_cast<std::uint64_t>(task));
  key = mix(key, static_cast<std::uint64_t>(epoch));
  key = mix(key, static_cast<std::uint64_t>(pass));
  Rng rng(key);
  rng.shuffle(order);
  std::vector<std::vector<int>> batches;
  for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(order.size(), i + static_cast<std::size_t>(batch_size));
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

int pool_of(const std::map<TaskId, int>& pool_sizes, TaskId task) {
  const auto it = pool_sizes.find(task);
  const int n = it == pool_sizes.end() ? 0 : it->second;
  if (n <= 0) throw Error(Errc::EmptySplit, std::string(display_name(task)) + " has an empty finetuning pool");
  return n;
}

void single_task_phase(TrainSchedule& schedule, TaskId task, int pool, const ScheduleOptions& options) {
  const int phase = static_cast<int>(schedule.phase_epochs.size());
  schedule.phase_epochs.push_back(options.epochs);
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    for (auto& b : shuffled_pass(pool, options.batch_size, options.seed, kSinglePhase, task, epoch, 0)) {
      schedule.draws.push_back({task, phase, epoch, std::move(b)});
    }
  }
}

}  // namespace

TrainSchedule build_schedule(std::span<const StrategyConfig> configs, const std::map<TaskId, int>& pool_sizes,
                             const ScheduleOptions& options) {
  if (options.epochs < 0) throw Error(Errc::InvalidArgument, "negative epoch count");
  if (options.batch_size < 1) throw Error(Errc::InvalidArgument, "batch size must be >= 1");
  TrainSchedule schedule;

  std::set<TaskId> joint;
  for (const auto& c : configs) {
    if (c.regime != Regime::ST) joint.insert(c.task);
  }
  if (!joint.empty()) {
    std::map<TaskId, int> pools;
    int cycles = 0;
    for (TaskId task : joint) {
      pools[task] = pool_of(pool_sizes, task);
      cycles = std::max(cycles, (pools[task] + options.batch_size - 1) / options.batch_size);
    }
    schedule.phase_epochs.push_back(options.epochs);
    for (int epoch = 0; epoch < options.epochs; ++epoch) {
      std::map<TaskId, std::vector<std::vector<int>>> streams;
      for (TaskId task : joint) {
        auto& stream = streams[task];
        for (int pass = 0; static_cast<int>(stream.size()) < cycles; ++pass) {
          for (auto& b : shuffled_pass(pools[task], options.batch_size, options.seed, kJointPhase, task, epoch, pass)) {
            stream.push_back(std::move(b));
          }
        }
      }
      for (int cycle = 0; cycle < cycles; ++cycle) {
        for (TaskId task : joint) schedule.draws.push_back({task, 0, epoch, streams[task][cycle]});
      }
    }
  }
  for (const auto& c : configs) {
    if (c.regime == Regime::ATThenST) single_task_phase(schedule, c.task, pool_of(pool_sizes, c.task), options);
  }
  for (const auto& c : configs) {
    if (c.regime == Regime::ST) single_task_phase(schedule, c.task, pool_of(pool_sizes, c.task), options);
  }
  return schedule;
}

std::vector<const TaskExample*> training_pool(const DatasetBundle& bundle, std::span<const SplitId> splits) {
  std::vector<const TaskExample*> pool;
  for (SplitId split : kAllSplits) {
    if (std::find(splits.begin(), splits.end(), split) == splits.end()) continue;
    const auto it = bundle.splits.find(split);
    if (it == bundle.splits.end()) continue;
    for (const auto& e : it->second) pool.push_back(&e);
  }
  return pool;
}

TokenSequence Featurizer::text(std::string_view text) const { return tokenize(text, *vocab_, config_->text.max_len); }

TokenSequence Featurizer::pair(std::string_view first, std::string_view second) const {
  return tokenize_pair(first, second, *vocab_, config_->text.max_len);
}

TokenSequence Featurizer::caption(std::string_view text) const {
  return tokenize(text, *vocab_, config_->heads.max_caption_len);
}

VideoInput Featurizer::video(const DatasetBundle& bundle, const std::string& video_id) const {
  const auto it = bundle.videos.find(video_id);
  if (it == bundle.videos.end()) throw Error(Errc::DanglingVideoRef, "no features for video " + video_id);
  VideoInput input;
  input.features = &it->second;
  input.segments = bundle.subtitles_for(video_id);
  for (const auto& s : input.segments) input.segment_tokens.push_back(text(s.text));
  return input;
}

template <typename Scalar>
Var<Scalar> batch_loss(const ForwardContext<Scalar>& fw, const Batch& batch, const Featurizer& featurizer) {
  if (batch.bundle == nullptr || batch.examples.empty()) throw Error(Errc::InvalidArgument, "empty batch");
  const TaskKind kind = task_kind(batch.task);
  for (const TaskExample* e : batch.examples) {
    if (kind_of(*e) != kind) throw Error(Errc::SchemaError, "batch example does not match the task kind");
  }
  const DatasetBundle& bundle = *batch.bundle;

  if (kind == TaskKind::Retrieval) {
    std::vector<std::string> videos;
    std::vector<int> gold;
    std::vector<Var<Scalar>> queries;
    for (const TaskExample* e : batch.examples) {
      const auto& q = std::get<RetrievalQuery>(*e);
      auto it = std::find(videos.begin(), videos.end(), q.positive_video_id);
      if (it == videos.end()) it = videos.insert(videos.end(), q.positive_video_id);
      gold.push_back(static_cast<int>(it - videos.begin()));
      queries.push_back(encode_query(fw, featurizer.text(q.query_text)).pooled);
    }
    for (const auto& v : batch.extra_videos) {
      if (std::find(videos.begin(), videos.end(), v) == videos.end()) videos.push_back(v);
    }
    std::vector<Var<Scalar>> pooled;
    for (const auto& v : videos) pooled.push_back(encode_video(fw, featurizer.video(bundle, v)).pooled);
    return retrieval_loss(retrieval_scores(fw, queries, pooled), gold);
  }

  std::vector<Var<Scalar>> terms;
  for (const TaskExample* e : batch.examples) {
    const ContextualizedFrames<Scalar> video = encode_video(fw, featurizer.video(bundle, video_of(*e)));
    if (kind == TaskKind::QA) {
      const auto& item = std::get<QAItem>(*e);
      std::vector<TokenSequence> pairs;
      for (const auto& c : item.candidates) pairs.push_back(featurizer.pair(item.question, c));
      terms.push_back(qa_loss(qa_logits(fw, batch.task, video, pairs), item.gold_index));
    } else {
      for (const auto& ref : std::get<CaptionItem>(*e).references) {
        terms.push_back(caption_loss(fw, video, featurizer.caption(ref)));
      }
    }
  }
  return sum(terms) * (Scalar(1) / static_cast<Scalar>(terms.size()));
}

template <typename Scalar>
double adam_update(ParamStore<Scalar>& params, std::map<std::string, Matrix<Scalar>> grads, AdamState<Scalar>& state,
                   const AdamOptions& options) {
  std::erase_if(grads, [&](const auto& entry) {
    return std::any_of(options.frozen_prefixes.begin(), options.frozen_prefixes.end(),
                       [&](const std::string& prefix) { return has_prefix(entry.first, prefix); });
  });
  double squared = 0.0;
  for (const auto& [_, g] : grads) squared += g.template cast<double>().squaredNorm();
  const double norm = std::sqrt(squared);
  const double clip = options.clip_norm > 0.0 && norm > options.clip_norm ? options.clip_norm / norm : 1.0;

  ++state.step;
  const double correction1 = 1.0 - std::pow(options.beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(options.beta2, static_cast<double>(state.step));
  const auto b1 = static_cast<Scalar>(options.beta1);
  const auto b2 = static_cast<Scalar>(options.beta2);
  for (auto& [name, g] : grads) {
    if (clip != 1.0) g *= static_cast<Scalar>(clip);
    Matrix<Scalar>& p = params.at(name);
    auto& m = state.m.try_emplace(name, Matrix<Scalar>::Zero(p.rows(), p.cols())).first->second;
    auto& v = state.v.try_emplace(name, Matrix<Scalar>::Zero(p.rows(), p.cols())).first->second;
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.cwiseProduct(g);
    const auto m_hat = (m.array() / static_cast<Scalar>(correction1));
    const auto v_hat = (v.array() / static_cast<Scalar>(correction2));
    const auto update =
        m_hat / (v_hat.sqrt() + static_cast<Scalar>(options.eps)) + static_cast<Scalar>(options.weight_decay) * p.array();
    p.array() -= static_cast<Scalar>(options.lr) * update;
  }
  return norm;
}

template <typename Scalar>
StepResult train_step(ModelState<Scalar>& state, AdamState<Scalar>& optimizer, const Batch& batch,
                      const Featurizer& featurizer, const AdamOptions& options, Rng* dropout_rng) {
  Graph<Scalar> graph;
  const ForwardContext<Scalar> fw{graph, state, dropout_rng != nullptr, dropout_rng};
  const Var<Scalar> loss = batch_loss(fw, batch, featurizer);
  const double value = static_cast<double>(loss.value()(0, 0));
  if (!std::isfinite(value)) {
    throw Error(Errc::NonFiniteLoss, std::string(display_name(batch.task)) + " loss is " + std::to_string(value) +
                                         " at step " + std::to_string(optimizer.step + 1));
  }
  graph.backward(loss);
  auto grads = graph.param_grads();
  for (const auto& [name, g] : grads) {
    if (!g.allFinite()) throw Error(Errc::NonFiniteLoss, "non-finite gradient for " + name);
  }
  const double norm = adam_update(state.params, std::move(grads), optimizer, options);
  return {value, norm};
}

bool GradCheckReport::passed() const {
  return std::all_of(groups.begin(), groups.end(), [](const GradCheckGroup& g) { return g.passed; });
}

double GradCheckReport::max_rel_error() const {
  double worst = 0.0;
  for (const auto& g : groups) worst = std::max(worst, g.rel_error);
  return worst;
}

GradCheckReport gradient_check(const ModelState<double>& state, const ProbeLoss& loss,
                               const GradCheckOptions& options) {
  std::map<std::string, Matrix<double>> analytic;
  {
    Graph<double> graph;
    const ForwardContext<double> fw{graph, state};
    const Var<double> value = loss(fw);
    graph.backward(value);
    analytic = graph.param_grads();
  }
  if (options.tamper) options.tamper(analytic);

  ModelState<double> probe = state;
  auto evaluate = [&]() {
    Graph<double> graph;
    const ForwardContext<double> fw{graph, probe};
    return loss(fw).value()(0, 0);
  };

  Rng rng(options.seed);
  GradCheckReport report;
  for (const auto& [name, grad] : analytic) {
    const Index n = grad.size();
    std::vector<Index> coords;
    if (n <= options.coords_per_group) {
      coords.resize(static_cast<std::size_t>(n));
      std::iota(coords.begin(), coords.end(), Index{0});
    } else {
      std::vector<Index> order(static_cast<std::size_t>(n));
      std::iota(order.begin(), order.end(), Index{0});
      const auto half = static_cast<std::size_t>(options.coords_per_group / 2);
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(half), order.end(),
                        [&](Index a, Index b) { return std::abs(grad(a)) > std::abs(grad(b)); });
      coords.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(half));
      std::vector<Index> rest(order.begin() + static_cast<std::ptrdiff_t>(half), order.end());
      rng.shuffle(rest);
      const std::size_t extra = static_cast<std::size_t>(options.coords_per_group) - half;
      coords.insert(coords.end(), rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(extra));
    }

    Matrix<double>& param = probe.params.at(name);
    Vector<double> a(static_cast<Index>(coords.size())), numeric(static_cast<Index>(coords.size()));
    for (std::size_t i = 0; i < coords.size(); ++i) {
      const Index c = coords[i];
      const double original = param(c);
      param(c) = original + options.step;
      const double plus = evaluate();
      param(c) = original - options.step;
      const double minus = evaluate();
      param(c) = original;
      numeric(static_cast<Index>(i)) = (plus - minus) / (2.0 * options.step);
      a(static_cast<Index>(i)) = grad(c);
    }
    GradCheckGroup group;
    group.name = name;
    group.checked = static_cast<int>(coords.size());
    const double scale = std::max({a.norm(), numeric.norm(), 1e-7});
    group.rel_error = (a - numeric).norm() / scale;
    group.abs_error = coords.empty() ? 0.0 : (a - numeric).cwiseAbs().maxCoeff();
    group.passed = group.rel_error < options.tolerance;
    report.groups.push_back(std::move(group));
  }
  return report;
}

#define CLIPVL_INSTANTIATE(S)                                                                                   \
  template Var<S> batch_loss<S>(const ForwardContext<S>&, const Batch&, const Featurizer&);                     \
  template double adam_update<S>(ParamStore<S>&, std::map<std::string, Matrix<S>>, AdamState<S>&,              \
                                 const AdamOptions&);                                                           \
  template StepResult train_step<S>(ModelState<S>&, AdamState<S>&, const Batch&, const Featurizer&,            \
                                    const AdamOptions&, Rng*);
CLIPVL_INSTANTIATE(float)
CLIPVL_INSTANTIATE(double)
#undef CLIPVL_INSTANTIATE

}  // namespace clipvl
