// Copyright 2026 The clipvl Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <array>
#include <cmath>
#include <set>

#include "clipvl/checkpoint.hpp"
#include "clipvl/fixture.hpp"
#include "clipvl/heads.hpp"
#include "clipvl/trainer.hpp"
#include "test_support.hpp"

using namespace clipvl;
using clipvl::testing::error_of;
using clipvl::testing::read_file;
using clipvl::testing::TempDir;

namespace {

struct World {
  Fixture fixture = make_fixture();
  Vocabulary vocab = fixture.vocabulary();
  ModelConfig config = [this] {
    ModelConfig c = ModelConfig::toy(vocab.size(), {{NamespaceName::ClipVitSlowfast, 32},
                                                    {NamespaceName::ResnetSlowfast, 24}});
    c.backbone.dropout = 0.0;
    return c;
  }();
  Featurizer featurizer{vocab, config};
};

Batch batch_of(TaskId task, const DatasetBundle& bundle, std::initializer_list<int> indices) {
  Batch b{task, &bundle, {}, {}};
  for (int i : indices) b.examples.push_back(&bundle.split(SplitId::Train)[static_cast<std::size_t>(i)]);
  return b;
}

bool same_params(const ParamStore<float>& a, const ParamStore<float>& b) {
  if (a.size() != b.size()) return false;
  for (const auto& [name, m] : a.entries()) {
    if (!b.contains(name) || b.at(name) != m) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("the mixed strategy table") {
  using enum TaskId;
  const auto clip = NamespaceName::ClipVitSlowfast;
  const auto resnet = NamespaceName::ResnetSlowfast;
  const std::vector<SplitId> train{SplitId::Train};
  const std::vector<SplitId> train_val{SplitId::Train, SplitId::Val};
  const InitSpec hero{InitKind::HeroCheckpoint, std::nullopt};
  const InitSpec clip_text{InitKind::ClipTextCheckpoint, std::nullopt};
  const auto embed = TextEncoderKind::EmbeddingLayer;
  const auto clip_style = TextEncoderKind::ClipStyle;

  const std::vector<StrategyConfig> expected{
      {TVR, Regime::ST, clip, train, hero, embed},
      {How2R, Regime::ST, resnet, train, hero, embed},
      {TVQA, Regime::AT, clip, train, hero, embed},
      {How2QA, Regime::AT, clip, train, hero, embed},
      {Violin, Regime::AT, clip, train, hero, embed},
      {VLEP, Regime::AT, clip, train, hero, embed},
      {YC2R, Regime::ST, resnet, train_val, hero, embed},
      {YC2C, Regime::ST, resnet, train_val, hero, embed},
      {TVC, Regime::ST, clip, train_val, hero, embed},
      {VatexEnR, Regime::ST, clip, train, clip_text, clip_style},
      {VatexEnC, Regime::ST, clip, train, clip_text, clip_style},
  };
  REQUIRE(expected.size() == kAllTasks.size());
  for (const auto& want : expected) {
    const StrategyConfig got = select_strategy(want.task, StrategyKind::MIXED);
    CHECK_MESSAGE(got == want, display_name(want.task));
    CHECK(select_strategy(want.task, StrategyKind::MIXED) == got);
    CHECK(StrategyConfig::from_json(got.to_json()) == got);
    CHECK_NOTHROW(got.validate());
  }

  StrategyConfig bad = select_strategy(TVR, StrategyKind::MIXED);
  bad.finetune_splits = train_val;
  CHECK(error_of([&] { bad.validate(); }) == Errc::InvalidArgument);
  bad = select_strategy(VatexEnC, StrategyKind::MIXED);
  bad.init = hero;
  CHECK(error_of([&] { bad.validate(); }) == Errc::InvalidArgument);
}

TEST_CASE("draw schedules") {
  const ScheduleOptions two_epochs{2, 4, 9};

  SUBCASE("single task") {
    const StrategyConfig c = select_strategy(TaskId::TVR, StrategyKind::ST);
    const auto s = build_schedule(std::span(&c, 1), {{TaskId::TVR, 8}}, two_epochs);
    REQUIRE(s.draws.size() == 4);
    std::multiset<int> seen;
    for (const auto& d : s.draws) {
      CHECK(d.task == TaskId::TVR);
      CHECK(d.examples.size() == 4);
      if (d.epoch == 0) seen.insert(d.examples.begin(), d.examples.end());
    }
    CHECK(seen == std::multiset<int>{0, 1, 2, 3, 4, 5, 6, 7});
  }
  SUBCASE("one AT cycle over the QA tasks") {
    std::vector<StrategyConfig> configs;
    std::map<TaskId, int> pools;
    for (TaskId t : {TaskId::VLEP, TaskId::TVQA, TaskId::Violin, TaskId::How2QA}) {
      configs.push_back(select_strategy(t, StrategyKind::MIXED));
      pools[t] = 3;
    }
    const auto s = build_schedule(configs, pools, {1, 4, 0});
    REQUIRE(s.draws.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) CHECK(s.draws[i].task == kQaTasks[i]);
  }
  SUBCASE("AT then ST is the joint phase followed by the single-task phase") {
    std::vector<StrategyConfig> joint_configs, at_st;
    std::map<TaskId, int> pools;
    int size = 3;
    for (TaskId t : kAllTasks) {
      pools[t] = size;
      size += 2;
      StrategyConfig c = select_strategy(t, StrategyKind::AT_ST);
      at_st.push_back(c);
      c.regime = Regime::AT;
      joint_configs.push_back(c);
    }
    // Only the target gets the single-task phase.
    for (auto& c : at_st) {
      if (c.task != TaskId::TVC) c.regime = Regime::AT;
    }
    const StrategyConfig st = select_strategy(TaskId::TVC, StrategyKind::ST);
    const auto joint = build_schedule(joint_configs, pools, two_epochs);
    const auto single = build_schedule(std::span(&st, 1), pools, two_epochs);
    const auto both = build_schedule(at_st, pools, two_epochs);

    std::vector<Draw> want = joint.draws;
    for (Draw d : single.draws) {
      d.phase += 1;
      want.push_back(d);
    }
    CHECK(both.draws == want);
    CHECK(both.phase_epochs == std::vector<int>{2, 2});

    // Fairness: every member is drawn equally often within an epoch.
    std::map<TaskId, int> counts;
    for (const auto& d : joint.draws) {
      if (d.epoch == 0) ++counts[d.task];
    }
    CHECK(counts.size() == kAllTasks.size());
    for (const auto& [task, n] : counts) CHECK(std::abs(n - counts.begin()->second) <= 1);
  }
  SUBCASE("an empty pool") {
    const StrategyConfig c = select_strategy(TaskId::TVQA, StrategyKind::ST);
    CHECK(error_of([&] { build_schedule(std::span(&c, 1), {{TaskId::TVQA, 0}}, two_epochs); }) == Errc::EmptySplit);
  }
  SUBCASE("schedules are a function of the seed") {
    const StrategyConfig c = select_strategy(TaskId::TVR, StrategyKind::ST);
    const auto a = build_schedule(std::span(&c, 1), {{TaskId::TVR, 20}}, two_epochs);
    const auto b = build_schedule(std::span(&c, 1), {{TaskId::TVR, 20}}, two_epochs);
    const auto other = build_schedule(std::span(&c, 1), {{TaskId::TVR, 20}}, {2, 4, 10});
    CHECK(a.draws == b.draws);
    CHECK(a.draws != other.draws);
  }
}

TEST_CASE("one AdamW step on a quadratic matches the closed form") {
  // f(x, y) = 3x^2 + xy + 2y^2, at (0.7, -1.3).
  const double x = 0.7, y = -1.3;
  const double gx = 6 * x + y, gy = x + 4 * y;
  ParamStore<double> params;
  params.add("p", Matrix<double>{{x, y}});
  AdamState<double> state;
  AdamOptions options;
  options.lr = 0.05;
  options.clip_norm = 0.0;
  adam_update(params, {{"p", Matrix<double>{{gx, gy}}}}, state, options);

  // After one step the bias-corrected moments are g and g^2.
  auto step = [&](double p, double g) {
    return p - options.lr * (g / (std::abs(g) + options.eps) + options.weight_decay * p);
  };
  CHECK(std::abs(params.at("p")(0, 0) - step(x, gx)) < 1e-10);
  CHECK(std::abs(params.at("p")(0, 1) - step(y, gy)) < 1e-10);

  // A second step with clipping, checked against the running moments.
  const double px = params.at("p")(0, 0), py = params.at("p")(0, 1);
  const double hx = 6 * px + py, hy = px + 4 * py;
  options.clip_norm = 0.5;
  const double norm = adam_update(params, {{"p", Matrix<double>{{hx, hy}}}}, state, options);
  CHECK(norm == doctest::Approx(std::hypot(hx, hy)).epsilon(1e-14));
  const double c = 0.5 / norm;
  auto second = [&](double p, double g1, double g2) {
    const double m = 0.9 * 0.1 * g1 + 0.1 * c * g2;
    const double v = 0.98 * 0.02 * g1 * g1 + 0.02 * c * c * g2 * g2;
    const double m_hat = m / (1 - 0.9 * 0.9), v_hat = v / (1 - 0.98 * 0.98);
    return p - options.lr * (m_hat / (std::sqrt(v_hat) + options.eps) + options.weight_decay * p);
  };
  CHECK(std::abs(params.at("p")(0, 0) - second(px, gx, hx)) < 1e-10);
  CHECK(std::abs(params.at("p")(0, 1) - second(py, gy, hy)) < 1e-10);

  options.frozen_prefixes = {"p"};
  const Matrix<double> before = params.at("p");
  adam_update(params, {{"p", Matrix<double>{{1.0, 1.0}}}}, state, options);
  CHECK(params.at("p") == before);
}

TEST_CASE("train_step") {
  const World w;
  const DatasetBundle tvr = w.fixture.bundle(TaskId::TVR, NamespaceName::ClipVitSlowfast);
  const DatasetBundle tvc = w.fixture.bundle(TaskId::TVC, NamespaceName::ClipVitSlowfast);

  SUBCASE("lr 0 leaves every parameter bit-identical") {
    auto state = init_model<float>(w.config, 1);
    const auto before = state.params;
    AdamState<float> opt;
    AdamOptions options;
    options.lr = 0.0;
    for (int i = 0; i < 3; ++i) train_step(state, opt, batch_of(TaskId::TVC, tvc, {0, 1}), w.featurizer, options, nullptr);
    CHECK(same_params(state.params, before));
  }
  SUBCASE("a single retrieval pair is memorized") {
    auto state = init_model<float>(w.config, 2);
    AdamState<float> opt;
    AdamOptions options;
    options.lr = 1e-3;
    Batch batch = batch_of(TaskId::TVR, tvr, {0});
    const auto& positive = std::get<RetrievalQuery>(*batch.examples[0]).positive_video_id;
    for (const auto& [id, _] : tvr.videos) {
      if (id != positive) {
        batch.extra_videos.push_back(id);
        break;
      }
    }
    double loss = 0.0;
    for (int step = 0; step < 200; ++step) loss = train_step(state, opt, batch, w.featurizer, options, nullptr).loss;
    CHECK(loss < 0.01);
  }
  SUBCASE("retrieval steps leave the caption decoder alone") {
    const auto state = init_model<double>(w.config, 3);
    Graph<double> graph;
    const ForwardContext<double> fw{graph, state};
    graph.backward(batch_loss(fw, batch_of(TaskId::TVR, tvr, {0, 3, 5}), w.featurizer));
    int caption = 0, touched = 0;
    for (const auto& [name, g] : graph.param_grads()) {
      if (name.starts_with("heads.caption.") || name.starts_with("heads.qa.")) {
        ++caption;
        CHECK(g.isZero(0.0));
      } else if (!g.isZero(0.0)) {
        ++touched;
      }
    }
    CHECK(caption == 0);
    CHECK(touched > 0);

    auto trained = init_model<float>(w.config, 3);
    const auto before = trained.params;
    AdamState<float> opt;
    train_step(trained, opt, batch_of(TaskId::TVR, tvr, {0, 3, 5}), w.featurizer, {}, nullptr);
    for (const auto& [name, m] : trained.params.entries()) {
      if (name.starts_with("heads.caption.")) CHECK(m == before.at(name));
    }
  }
  SUBCASE("frozen prefixes are not updated") {
    auto state = init_model<float>(w.config, 4);
    const auto before = state.params;
    AdamState<float> opt;
    AdamOptions options;
    options.frozen_prefixes = {std::string(kTextEncoderPrefix)};
    train_step(state, opt, batch_of(TaskId::TVR, tvr, {1, 2}), w.featurizer, options, nullptr);
    int moved = 0;
    for (const auto& [name, m] : state.params.entries()) {
      if (name.starts_with(kTextEncoderPrefix)) CHECK(m == before.at(name));
      else moved += m != before.at(name);
    }
    CHECK(moved > 0);
  }
  SUBCASE("identical seeds give identical trajectories") {
    std::array<std::vector<double>, 2> losses;
    std::array<ModelState<float>, 2> states{init_model<float>(w.config, 5), init_model<float>(w.config, 5)};
    for (int run = 0; run < 2; ++run) {
      AdamState<float> opt;
      Rng dropout(77);
      for (int step = 0; step < 4; ++step) {
        const Batch b = step % 2 ? batch_of(TaskId::TVC, tvc, {step, step + 1}) : batch_of(TaskId::TVR, tvr, {step});
        losses[run].push_back(train_step(states[run], opt, b, w.featurizer, {}, &dropout).loss);
      }
    }
    CHECK(losses[0] == losses[1]);
    CHECK(same_params(states[0].params, states[1].params));
  }
}

TEST_CASE("gradient check harness") {
  SUBCASE("a linear probe on one weight is exact") {
    ModelState<double> state;
    state.params.add("probe.w", Matrix<double>{{0.3, -1.2}, {2.0, 0.5}});
    const Matrix<double> c{{1.5, -0.5}, {0.25, 2.0}};
    const ProbeLoss probe = [&](const ForwardContext<double>& fw) {
      const Var<double> w = fw.p("probe.w");
      return matmul(matmul(fw.graph.constant(Matrix<double>::Ones(1, 2)), hadamard(w, fw.graph.constant(c))),
                    fw.graph.constant(Matrix<double>::Ones(2, 1)));
    };
    const auto report = gradient_check(state, probe);
    REQUIRE(report.groups.size() == 1);
    CHECK(report.groups[0].abs_error < 1e-8);
    CHECK(report.passed());
  }
  SUBCASE("a doubled gradient is flagged") {
    const World w;
    auto config = clipvl::testing::tiny_config(w.vocab.size());
    const auto state = clipvl::testing::random_state(config, 6);
    Rng rng(6);
    const auto video = clipvl::testing::random_video("v", {NamespaceName::ClipVitSlowfast, clipvl::testing::kClipDim},
                                                     4, rng);
    const auto gold = clipvl::testing::random_tokens(w.vocab.size(), 3, 6, rng);
    const std::string tampered = "heads.caption.ln_final.g";
    const ProbeLoss probe = [&](const ForwardContext<double>& fw) {
      const auto ctx = encode_video(fw, VideoInput{&video, {}, {}});
      const Var<double> real = fw.p(tampered);
      // Same value, twice the gradient.
      const Var<double> doubled = fw.graph.record(real.value(), {real}, [id = real.id()](Graph<double>& g, int self) {
        g.accumulate(id, 2.0 * g.grad(self));
      });
      const Var<double> loss = caption_loss(fw, ctx, gold);
      return loss + matmul(doubled, fw.graph.constant(Matrix<double>::Ones(doubled.cols(), 1)));
    };
    const auto report = gradient_check(state, probe);
    for (const auto& g : report.groups) CHECK_MESSAGE(g.passed == (g.name != tampered), g.name);
    CHECK(!report.passed());
  }
}

TEST_CASE("checkpoints") {
  const World w;
  const auto state = init_model<float>(w.config, 11);

  SUBCASE("save, load and save again are byte-identical") {
    TempDir a, b;
    save_checkpoint(state, a.path());
    const auto loaded = load_checkpoint(a.path(), w.config);
    CHECK(same_params(loaded.params, state.params));
    CHECK(loaded.seed == state.seed);
    save_checkpoint(loaded, b.path());
    CHECK(read_file(a / "manifest.json") == read_file(b / "manifest.json"));
    const auto manifest = read_checkpoint_manifest(a.path());
    CHECK(manifest.arrays.size() == state.params.size());
    for (const auto& shape : manifest.arrays) {
      const std::string rel = "params/" + shape.name + ".f32";
      CHECK(read_file(a / rel) == read_file(b / rel));
      CHECK(read_file(a / rel).size() == static_cast<std::size_t>(shape.rows * shape.cols * 4));
    }
  }
  SUBCASE("a different width is a fingerprint mismatch") {
    TempDir dir;
    save_checkpoint(state, dir.path());
    ModelConfig wider = w.config;
    wider.backbone.d_model = 48;
    CHECK(error_of([&] { load_checkpoint(dir.path(), wider); }) == Errc::FingerprintMismatch);
  }
  SUBCASE("a truncated array is rejected") {
    TempDir dir;
    save_checkpoint(state, dir.path());
    clipvl::testing::write_file(dir / "params/heads.caption.pos.f32", "abcd");
    CHECK(error_of([&] { load_checkpoint(dir.path(), w.config); }).has_value());
  }
  SUBCASE("partial initialization loads exactly the text encoder") {
    TempDir dir;
    save_checkpoint(state, dir.path());
    auto target = init_model<float>(w.config, 12);
    const auto original = target.params;
    const std::vector<std::string> prefixes{std::string(kTextEncoderPrefix)};
    const auto loaded = load_checkpoint_prefixes(dir.path(), target.params, prefixes);
    std::set<std::string> loaded_names;
    for (const auto& a : loaded) loaded_names.insert(a.name);
    for (const auto& [name, m] : target.params.entries()) {
      const bool text = name.starts_with(kTextEncoderPrefix);
      CHECK(loaded_names.count(name) == static_cast<std::size_t>(text));
      CHECK(m == (text ? state.params.at(name) : original.at(name)));
    }
    CHECK(!loaded_names.empty());
  }
}
