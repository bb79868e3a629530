// Copyright 2026 The clipvl Authors
// SPDX-License-Identifier: Apache-2.0

// A small synthetic world for tests, demos and the leakage experiment.
//
// Video i shows one object and one action. Its frame features are a fixed
// per-video direction plus noise, in each namespace through an independent
// random map. Every text mentions the object and/or action words of the
// video it belongs to, with a different template per split, so splits never
// overlap. With `alias_eval_words` the val/test texts use alias words that
// no train text contains.

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "clipvl/corpus.hpp"
#include "clipvl/textenc.hpp"

namespace clipvl {

struct FixtureOptions {
  int num_videos = 8;  // at most 16
  int min_frames = 6;
  int max_frames = 10;
  int clip_dim = 32;
  int resnet_dim = 24;
  int qa_candidates = 4;
  double noise = 0.3;
  bool alias_eval_words = false;
  std::uint64_t seed = 7;
};

struct Fixture {
  std::map<NamespaceName, std::map<std::string, VideoFeatures>> features;
  std::map<std::string, std::vector<SubtitleSegment>> subtitles;
  /// Split records for all eleven tasks.
  std::map<TaskId, std::map<SplitId, std::vector<TaskExample>>> records;

  /// One task's bundle over the features of `ns`.
  DatasetBundle bundle(TaskId task, NamespaceName ns) const;
  /// Every text in the world (records and subtitles), for vocabulary building.
  std::vector<std::string> texts() const;
  Vocabulary vocabulary() const { return Vocabulary::build(texts()); }
};

Fixture make_fixture(const FixtureOptions& options = {});

/// Writes both feature manifests, subtitles.jsonl, vocab.json and every
/// task's split files into `dir`.
void write_fixture(const Fixture& fixture, const std::filesystem::path& dir);

/// Object and action words of video `index` (train vocabulary).
std::pair<std::string, std::string> fixture_concept(int index);

}  // namespace clipvl
