// Copyright 2026 The clipvl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unistd.h>
#include <vector>

#include "clipvl/config.hpp"
#include "clipvl/corpus.hpp"
#include "clipvl/error.hpp"
#include "clipvl/model.hpp"
#include "clipvl/rng.hpp"
#include "clipvl/textenc.hpp"

namespace clipvl::testing {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = std::filesystem::temp_directory_path() /
            ("clipvl-test-" + std::to_string(::getpid()) + "-" + std::to_string(stamp) + "-" +
             std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(std::string_view name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// The code of the Error thrown by `fn`, or nothing if it returns.
template <typename Fn>
std::optional<Errc> error_of(const Fn& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

template <typename Fn>
std::string error_message(const Fn& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

inline constexpr int kClipDim = 6;
inline constexpr int kResnetDim = 5;

/// Toy profile over both namespaces with dropout off.
inline ModelConfig toy_config(int vocab_size, TextEncoderKind kind = TextEncoderKind::EmbeddingLayer) {
  ModelConfig c = ModelConfig::toy(vocab_size, {{NamespaceName::ClipVitSlowfast, kClipDim},
                                                {NamespaceName::ResnetSlowfast, kResnetDim}});
  c.text.kind = kind;
  c.backbone.dropout = 0.0;
  return c;
}

/// A narrower toy profile for finite-difference checks.
inline ModelConfig tiny_config(int vocab_size, TextEncoderKind kind = TextEncoderKind::EmbeddingLayer) {
  ModelConfig c = toy_config(vocab_size, kind);
  c.backbone.d_model = 8;
  c.backbone.ff_dim = 12;
  c.text.d_encoder = 4;
  c.text.ff_dim = 8;
  c.text.max_len = 8;
  c.backbone.max_frames = 6;
  c.heads.max_caption_len = 6;
  return c;
}

/// Initialized state with every array perturbed away from its initializer,
/// so that zero biases and unit gains do not hide indexing mistakes.
inline ModelState<double> random_state(const ModelConfig& config, std::uint64_t seed) {
  ModelState<double> state = init_model<double>(config, seed);
  Rng rng(seed * 7919 + 17);
  for (auto& [name, value] : state.params.entries()) {
    const bool gain = name.size() > 2 && name.compare(name.size() - 2, 2, ".g") == 0;
    for (Index i = 0; i < value.size(); ++i) {
      value.data()[i] = gain ? 1.0 + 0.2 * rng.normal() : value.data()[i] + 0.1 * rng.normal();
    }
  }
  return state;
}

inline VideoFeatures random_video(const std::string& id, FeatureNamespace ns, int frames, Rng& rng) {
  VideoFeatures v{id, ns, FeatureMatrix(frames, ns.dim)};
  for (Index i = 0; i < v.frames.size(); ++i) v.frames.data()[i] = static_cast<float>(rng.normal());
  return v;
}

/// BOS, `payload` random word ids, EOS, then PAD up to `length`.
inline TokenSequence random_tokens(int vocab_size, int payload, int length, Rng& rng) {
  TokenSequence t;
  t.ids.push_back(Vocabulary::kBos);
  for (int i = 0; i < payload; ++i) {
    t.ids.push_back(Vocabulary::kReserved + static_cast<int>(rng.below(vocab_size - Vocabulary::kReserved)));
  }
  t.ids.push_back(Vocabulary::kEos);
  t.mask.assign(t.ids.size(), 1);
  t.ids.resize(length, Vocabulary::kPad);
  t.mask.resize(length, 0);
  return t;
}

inline std::vector<std::string> sorted_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  std::sort(lines.begin(), lines.end());
  return lines;
}

}  // namespace clipvl::testing
