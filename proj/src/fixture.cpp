// Copyright 2026 The clipvl Authors
// SPDX-License-Identifier: Apache-2.0

#include "clipvl/fixture.hpp"

#include <array>
#include <cstdio>

#include "clipvl/error.hpp"
#include "clipvl/rng.hpp"

namespace clipvl {

namespace {

constexpr std::array<std::string_view, 16> kObjects = {"bread", "guitar", "ball", "car",  "dog",  "cake",
                                                       "door",  "bike",   "kite", "book", "lamp", "boat",
                                                       "drum",  "fish",   "hat",  "rope"};
constexpr std::array<std::string_view, 16> kActions = {"slice", "play", "kick", "wash", "walk", "bake",
                                                       "paint", "ride", "fly",  "read", "fix",  "row",
                                                       "hit",   "feed", "wear", "pull"};
constexpr std::array<std::string_view, 16> kObjectAliases = {"loaf",  "lute",  "sphere", "auto",  "puppy", "torte",
                                                             "gate",  "cycle", "glider", "novel", "lantern",
                                                             "canoe", "tabla", "trout",  "cap",   "cord"};
constexpr std::array<std::string_view, 16> kActionAliases = {"cut",   "strum", "punt",   "rinse",  "stroll", "roast",
                                                             "coat",  "pedal", "launch", "browse", "mend",
                                                             "paddle", "strike", "nourish", "don", "tug"};

std::string video_name(int i) {
  char buffer[16];
  std::snprintf(buffer, sizeof buffer, "vid%02d", i);
  return buffer;
}

std::string fill(std::string_view pattern, std::string_view object, std::string_view action) {
  std::string out;
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    if (pattern[i] == '{' && pattern.substr(i, 3) == "{o}") {
      out += object;
      i += 2;
    } else if (pattern[i] == '{' && pattern.substr(i, 3) == "{a}") {
      out += action;
      i += 2;
    } else {
      out += pattern[i];
    }
  }
  return out;
}

struct Templates {
  std::vector<std::string_view> query;     // retrieval
  std::string_view question;               // QA, asks for the action
  std::string_view answer;                 // QA candidate pattern, {a}
  std::vector<std::string_view> caption;   // references
};

// Train texts use two phrasings per record type; val and test have their own.
Templates templates_for(SplitId split) {
  switch (split) {
    case SplitId::Train:
      return {{"someone will {a} the {o}", "a person tries to {a} the {o}"},
              "what does the person do with the {o}",
              "they {a} it",
              {"they {a} the {o}"}};
    case SplitId::Val:
      return {{"watch them {a} a {o}"}, "what happens to that {o}", "people {a} it", {"here you see a {o} and they {a}", "clip where someone will {a} one {o}"}};
    case SplitId::Test:
      return {{"here we {a} one {o}"}, "which activity involves this {o}", "the {a} step", {"in this video a {o} gets a {a}", "we observe how to {a} that {o}"}};
  }
  return {};
}

}  // namespace

std::pair<std::string, std::string> fixture_concept(int index) {
  return {std::string(kObjects.at(static_cast<std::size_t>(index))),
          std::string(kActions.at(static_cast<std::size_t>(index)))};
}

DatasetBundle Fixture::bundle(TaskId task, NamespaceName ns) const {
  DatasetBundle b;
  b.task = task;
  b.videos = features.at(ns);
  b.subtitles = subtitles;
  if (const auto it = records.find(task); it != records.end()) b.splits = it->second;
  return b;
}

std::vector<std::string> Fixture::texts() const {
  std::vector<std::string> out;
  for (const auto& [task, splits] : records) {
    for (const auto& [split, examples] : splits) {
      for (const auto& e : examples) {
        for (auto& p : text_payloads(e)) out.push_back(std::move(p));
      }
    }
  }
  for (const auto& [video, segments] : subtitles) {
    for (const auto& s : segments) out.push_back(s.text);
  }
  return out;
}

Fixture make_fixture(const FixtureOptions& options) {
  if (options.num_videos < 2 || options.num_videos > static_cast<int>(kObjects.size())) {
    throw Error(Errc::InvalidArgument, "fixture supports 2..16 videos");
  }
  if (options.min_frames < 1 || options.max_frames < options.min_frames) {
    throw Error(Errc::InvalidArgument, "bad fixture frame range");
  }
  if (options.qa_candidates < 2 || options.qa_candidates > options.num_videos) {
    throw Error(Errc::InvalidArgument, "qa_candidates must be in 2..num_videos");
  }
  Rng rng(options.seed);
  Fixture fx;
  const int n = options.num_videos;

  // Latent concept per video, mapped into each namespace.
  constexpr int kLatent = 16;
  std::vector<Eigen::VectorXd> latent;
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd z(kLatent);
    for (int k = 0; k < kLatent; ++k) z(k) = rng.normal();
    latent.push_back(z);
  }
  std::vector<int> frame_counts;
  for (int i = 0; i < n; ++i) {
    frame_counts.push_back(options.min_frames +
                           static_cast<int>(rng.below(static_cast<std::uint64_t>(options.max_frames - options.min_frames + 1))));
  }
  for (const auto& [ns, dim] : {std::pair{NamespaceName::ClipVitSlowfast, options.clip_dim},
                                std::pair{NamespaceName::ResnetSlowfast, options.resnet_dim}}) {
    Eigen::MatrixXd map(dim, kLatent);
    for (Index c = 0; c < map.cols(); ++c) {
      for (Index r = 0; r < map.rows(); ++r) map(r, c) = rng.normal() / std::sqrt(static_cast<double>(kLatent));
    }
    auto& videos = fx.features[ns];
    for (int i = 0; i < n; ++i) {
      const Eigen::VectorXd center = map * latent[static_cast<std::size_t>(i)];
      VideoFeatures v{video_name(i), {ns, dim}, FeatureMatrix(frame_counts[static_cast<std::size_t>(i)], dim)};
      for (Index t = 0; t < v.frames.rows(); ++t) {
        for (Index d = 0; d < dim; ++d) v.frames(t, d) = static_cast<float>(center(d) + options.noise * rng.normal());
      }
      videos.emplace(v.video_id, std::move(v));
    }
  }

  for (int i = 0; i < n; ++i) {
    const auto [object, action] = fixture_concept(i);
    const int frames = frame_counts[static_cast<std::size_t>(i)];
    auto& segs = fx.subtitles[video_name(i)];
    segs.push_back({video_name(i), 0, frames / 2, "look at this " + object});
    segs.push_back({video_name(i), frames / 2 + 1 < frames ? frames / 2 + 1 : frames - 1, frames - 1, "time to " + action});
  }

  for (TaskId task : kAllTasks) {
    auto& splits = fx.records[task];
    const std::string tag(slug(task));
    for (SplitId split : kAllSplits) {
      const Templates t = templates_for(split);
      const bool alias = options.alias_eval_words && split != SplitId::Train;
      auto& out = splits[split];
      const std::string split_tag(to_string(split));
      for (int i = 0; i < n; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        const std::string_view object = alias ? kObjectAliases[idx] : kObjects[idx];
        const std::string_view action = alias ? kActionAliases[idx] : kActions[idx];
        const std::string video = video_name(i);
        switch (task_kind(task)) {
          case TaskKind::Retrieval:
            for (std::size_t q = 0; q < t.query.size(); ++q) {
              RetrievalQuery r{tag + "-" + split_tag + "-" + video + "-" + std::to_string(q), fill(t.query[q], object, action),
                               video, std::nullopt};
              if (task == TaskId::TVR) r.moment = FrameSpan{0, std::min(2, frame_counts[idx] - 1)};
              out.emplace_back(std::move(r));
            }
            break;
          case TaskKind::QA: {
            QAItem item{tag + "-" + split_tag + "-" + video, video, fill(t.question, object, action), {}, 0};
            std::vector<int> others;
            for (int j = 0; j < n; ++j) {
              if (j != i) others.push_back(j);
            }
            rng.shuffle(others);
            others.resize(static_cast<std::size_t>(options.qa_candidates - 1));
            item.gold_index = static_cast<int>(rng.below(static_cast<std::uint64_t>(options.qa_candidates)));
            others.insert(others.begin() + item.gold_index, i);
            for (int j : others) {
              const auto jdx = static_cast<std::size_t>(j);
              item.candidates.push_back(fill(t.answer, object, alias ? kActionAliases[jdx] : kActions[jdx]));
            }
            out.emplace_back(std::move(item));
            break;
          }
          case TaskKind::Captioning: {
            CaptionItem item{video, {}};
            for (auto pattern : t.caption) item.references.push_back(fill(pattern, object, action));
            out.emplace_back(std::move(item));
            break;
          }
        }
      }
    }
  }
  return fx;
}

void write_fixture(const Fixture& fixture, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& [ns, videos] : fixture.features) {
    const FeatureNamespace space = videos.begin()->second.ns;
    write_features(dir / ("features." + std::string(to_string(ns)) + ".json"), space, videos);
  }
  for (TaskId task : kAllTasks) write_task_data(fixture.bundle(task, NamespaceName::ClipVitSlowfast), dir);
  fixture.vocabulary().save(dir / "vocab.json");
}

}  // namespace clipvl
