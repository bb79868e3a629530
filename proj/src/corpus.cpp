// Copyright 2026 The clipvl Authors
// SPDX-License-Identifier: Apache-2.0

#include "clipvl/corpus.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "clipvl/error.hpp"
#include "clipvl/text.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace clipvl {

static_assert(std::endian::native == std::endian::little,
              "raw feature I/O assumes a little-endian host");

std::string_view to_string(NamespaceName name) {
  switch (name) {
    case NamespaceName::ClipVitSlowfast: return "clip_vit_slowfast";
    case NamespaceName::ResnetSlowfast: return "resnet_slowfast";
  }
  return "?";
}

std::optional<NamespaceName> parse_namespace(std::string_view text) {
  if (text == "clip_vit_slowfast" || text == "clip-vit+slowfast") return NamespaceName::ClipVitSlowfast;
  if (text == "resnet_slowfast" || text == "resnet+slowfast") return NamespaceName::ResnetSlowfast;
  return std::nullopt;
}

TaskKind kind_of(const TaskExample& example) {
  switch (example.index()) {
    case 0: return TaskKind::Retrieval;
    case 1: return TaskKind::QA;
    default: return TaskKind::Captioning;
  }
}

const std::string& example_id(const TaskExample& example) {
  return std::visit(
      [](const auto& e) -> const std::string& {
        using T = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<T, RetrievalQuery>) return e.query_id;
        else if constexpr (std::is_same_v<T, QAItem>) return e.example_id;
        else return e.video_id;
      },
      example);
}

const std::string& video_of(const TaskExample& example) {
  return std::visit(
      [](const auto& e) -> const std::string& {
        using T = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<T, RetrievalQuery>) return e.positive_video_id;
        else return e.video_id;
      },
      example);
}

std::vector<std::string> text_payloads(const TaskExample& example) {
  return std::visit(
      [](const auto& e) -> std::vector<std::string> {
        using T = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<T, RetrievalQuery>) {
          return {e.query_text};
        } else if constexpr (std::is_same_v<T, QAItem>) {
          std::string joined = e.question;
          for (const auto& c : e.candidates) joined += " " + c;
          return {joined};
        } else {
          return e.references;
        }
      },
      example);
}

std::string example_identity(TaskId task, const TaskExample& example) {
  std::string id(slug(task));
  for (const auto& p : text_payloads(example)) id += "\x1f" + canonicalize(p);
  id += "\x1e" + video_of(example);
  return id;
}

namespace {

[[noreturn]] void schema_error(const std::string& what) { throw Error(Errc::SchemaError, what); }

template <typename T>
T field(const json& record, const char* name) {
  auto it = record.find(name);
  if (it == record.end()) schema_error(std::string("missing field '") + name + "'");
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    schema_error(std::string("field '") + name + "': " + e.what());
  }
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    schema_error(path.string() + ": " + e.what());
  }
}

std::vector<json> read_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  std::vector<json> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      schema_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_jsonl(const fs::path& path, const std::vector<json>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  for (const auto& r : records) out << r.dump() << '\n';
}

}  // namespace

json to_json(const TaskExample& example) {
  return std::visit(
      [](const auto& e) -> json {
        using T = std::decay_t<decltype(e)>;
        json j;
        if constexpr (std::is_same_v<T, RetrievalQuery>) {
          j["query_id"] = e.query_id;
          j["query_text"] = e.query_text;
          j["positive_video_id"] = e.positive_video_id;
          if (e.moment) j["moment"] = {e.moment->start_frame, e.moment->end_frame};
        } else if constexpr (std::is_same_v<T, QAItem>) {
          j["example_id"] = e.example_id;
          j["video_id"] = e.video_id;
          j["question"] = e.question;
          j["candidates"] = e.candidates;
          j["gold_index"] = e.gold_index;
        } else {
          j["video_id"] = e.video_id;
          j["references"] = e.references;
        }
        return j;
      },
      example);
}

TaskExample example_from_json(const json& record, TaskKind kind) {
  if (!record.is_object()) schema_error("record is not an object");
  switch (kind) {
    case TaskKind::Retrieval: {
      RetrievalQuery q;
      q.query_id = field<std::string>(record, "query_id");
      q.query_text = field<std::string>(record, "query_text");
      q.positive_video_id = field<std::string>(record, "positive_video_id");
      if (record.contains("moment") && !record["moment"].is_null()) {
        auto span = field<std::vector<int>>(record, "moment");
        if (span.size() != 2) schema_error("moment must be [start_frame, end_frame]");
        q.moment = FrameSpan{span[0], span[1]};
      }
      return q;
    }
    case TaskKind::QA: {
      QAItem q;
      q.example_id = field<std::string>(record, "example_id");
      q.video_id = field<std::string>(record, "video_id");
      q.question = field<std::string>(record, "question");
      q.candidates = field<std::vector<std::string>>(record, "candidates");
      q.gold_index = field<int>(record, "gold_index");
      if (q.candidates.size() < 2) schema_error(q.example_id + ": fewer than 2 candidates");
      if (q.gold_index < 0 || q.gold_index >= static_cast<int>(q.candidates.size())) {
        schema_error(q.example_id + ": gold_index " + std::to_string(q.gold_index) +
                     " outside " + std::to_string(q.candidates.size()) + " candidates");
      }
      return q;
    }
    case TaskKind::Captioning: {
      CaptionItem c;
      c.video_id = field<std::string>(record, "video_id");
      c.references = field<std::vector<std::string>>(record, "references");
      if (c.references.empty()) schema_error(c.video_id + ": no references");
      return c;
    }
  }
  schema_error("unknown task kind");
}

json to_json(const SubtitleSegment& s) {
  return json{{"video_id", s.video_id}, {"start_frame", s.start_frame}, {"end_frame", s.end_frame},
              {"text", s.text}};
}

SubtitleSegment subtitle_from_json(const json& record) {
  SubtitleSegment s;
  s.video_id = field<std::string>(record, "video_id");
  s.start_frame = field<int>(record, "start_frame");
  s.end_frame = field<int>(record, "end_frame");
  s.text = field<std::string>(record, "text");
  return s;
}

const std::vector<TaskExample>& DatasetBundle::split(SplitId id) const {
  static const std::vector<TaskExample> kEmpty;
  auto it = splits.find(id);
  return it == splits.end() ? kEmpty : it->second;
}

const std::vector<SubtitleSegment>& DatasetBundle::subtitles_for(const std::string& video_id) const {
  static const std::vector<SubtitleSegment> kEmpty;
  auto it = subtitles.find(video_id);
  return it == subtitles.end() ? kEmpty : it->second;
}

std::map<std::string, VideoFeatures> load_features(const fs::path& manifest_path) {
  const json manifest = read_json_file(manifest_path);
  const auto ns_name = parse_namespace(field<std::string>(manifest, "namespace"));
  if (!ns_name) schema_error("unknown feature namespace in " + manifest_path.string());
  const int dim = field<int>(manifest, "dim");
  if (dim < 1) schema_error("dim must be >= 1");
  const FeatureNamespace ns{*ns_name, dim};
  const fs::path base = manifest_path.parent_path();

  std::map<std::string, VideoFeatures> out;
  for (const auto& entry : field<json>(manifest, "videos")) {
    VideoFeatures v;
    v.video_id = field<std::string>(entry, "video_id");
    v.ns = ns;
    const int frames = field<int>(entry, "num_frames");
    if (frames < 1) schema_error(v.video_id + ": num_frames must be >= 1");
    const fs::path raw = base / field<std::string>(entry, "path");
    if (out.count(v.video_id)) throw Error(Errc::DuplicateVideoId, v.video_id);

    std::ifstream in(raw, std::ios::binary);
    if (!in) throw Error(Errc::Io, "cannot open " + raw.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::size_t expected = static_cast<std::size_t>(frames) * dim * sizeof(float);
    if (bytes.size() != expected) {
      throw Error(Errc::SizeMismatch, v.video_id + ": expected " + std::to_string(expected) +
                                          " bytes, found " + std::to_string(bytes.size()));
    }
    v.frames.resize(frames, dim);
    std::memcpy(v.frames.data(), bytes.data(), expected);
    if (!v.frames.allFinite()) throw Error(Errc::NonFinite, v.video_id + ": non-finite feature value");
    out.emplace(v.video_id, std::move(v));
  }
  return out;
}

void write_features(const fs::path& manifest_path, FeatureNamespace ns,
                    const std::map<std::string, VideoFeatures>& videos) {
  const fs::path base = manifest_path.parent_path();
  const fs::path rel_dir = fs::path("features") / std::string(to_string(ns.name));
  fs::create_directories(base / rel_dir);
  json entries = json::array();
  for (const auto& [id, v] : videos) {
    if (v.ns != ns || v.frames.cols() != ns.dim) {
      throw Error(Errc::NamespaceMismatch, id + " does not belong to " + std::string(to_string(ns.name)));
    }
    const fs::path rel = rel_dir / (id + ".f32");
    std::ofstream out(base / rel, std::ios::binary);
    if (!out) throw Error(Errc::Io, "cannot write " + (base / rel).string());
    out.write(reinterpret_cast<const char*>(v.frames.data()),
              static_cast<std::streamsize>(v.frames.size() * sizeof(float)));
    entries.push_back({{"video_id", id}, {"num_frames", v.num_frames()}, {"path", rel.generic_string()}});
  }
  json manifest{{"namespace", to_string(ns.name)}, {"dim", ns.dim}, {"videos", entries}};
  std::ofstream out(manifest_path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + manifest_path.string());
  out << manifest.dump(2) << '\n';
}

std::vector<SubtitleSegment> load_subtitles(const fs::path& path) {
  std::vector<SubtitleSegment> out;
  for (const auto& r : read_jsonl(path)) out.push_back(subtitle_from_json(r));
  return out;
}

void write_subtitles(const fs::path& path, const std::vector<SubtitleSegment>& segments) {
  std::vector<json> records;
  for (const auto& s : segments) records.push_back(to_json(s));
  write_jsonl(path, records);
}

fs::path task_file(const fs::path& dir, TaskId task, SplitId split) {
  return dir / (std::string(slug(task)) + "." + std::string(to_string(split)) + ".jsonl");
}

fs::path manifest_file(const fs::path& dir, std::optional<NamespaceName> ns) {
  if (ns) return dir / ("features." + std::string(to_string(*ns)) + ".json");
  if (fs::exists(dir / "features.json")) return dir / "features.json";
  for (NamespaceName n : {NamespaceName::ClipVitSlowfast, NamespaceName::ResnetSlowfast}) {
    fs::path p = dir / ("features." + std::string(to_string(n)) + ".json");
    if (fs::exists(p)) return p;
  }
  return dir / "features.json";
}

DatasetBundle load_task_data(TaskId task, const fs::path& dir, std::optional<NamespaceName> ns) {
  DatasetBundle bundle;
  bundle.task = task;
  bundle.videos = load_features(manifest_file(dir, ns));
  if (fs::exists(dir / "subtitles.jsonl")) {
    for (auto& s : load_subtitles(dir / "subtitles.jsonl")) {
      bundle.subtitles[s.video_id].push_back(std::move(s));
    }
  }
  bool any = false;
  for (SplitId split : kAllSplits) {
    const fs::path file = task_file(dir, task, split);
    if (!fs::exists(file)) continue;
    any = true;
    auto& examples = bundle.splits[split];
    for (const auto& r : read_jsonl(file)) examples.push_back(example_from_json(r, task_kind(task)));
  }
  if (!any) schema_error("no split files for " + std::string(slug(task)) + " in " + dir.string());

  const auto violations = validate_bundle(bundle);
  if (!violations.empty()) {
    const Violation& v = violations.front();
    Errc code = Errc::SchemaError;
    for (Errc c : {Errc::DanglingVideoRef, Errc::SpanOutOfRange, Errc::SplitOverlap, Errc::NonFinite,
                   Errc::SizeMismatch, Errc::NamespaceMismatch, Errc::EmptySplit}) {
      if (v.rule == to_string(c)) code = c;
    }
    throw Error(code, v.record + ": " + v.detail + " (" + std::to_string(violations.size()) +
                          " violation(s) total)");
  }
  return bundle;
}

void write_task_data(const DatasetBundle& bundle, const fs::path& dir) {
  fs::create_directories(dir);
  for (const auto& [split, examples] : bundle.splits) {
    std::vector<json> records;
    for (const auto& e : examples) records.push_back(to_json(e));
    write_jsonl(task_file(dir, bundle.task, split), records);
  }
  std::vector<SubtitleSegment> all;
  for (const auto& [id, segs] : bundle.subtitles) all.insert(all.end(), segs.begin(), segs.end());
  if (!all.empty()) write_subtitles(dir / "subtitles.jsonl", all);
}

std::vector<Violation> validate_bundle(const DatasetBundle& bundle) {
  std::vector<Violation> out;
  auto add = [&out](std::string record, Errc rule, std::string detail) {
    out.push_back(Violation{std::move(record), std::string(to_string(rule)), std::move(detail)});
  };

  std::optional<FeatureNamespace> ns;
  for (const auto& [id, v] : bundle.videos) {
    const std::string rec = "video/" + id;
    if (v.frames.rows() < 1) add(rec, Errc::SchemaError, "no frames");
    if (v.frames.cols() != v.ns.dim) add(rec, Errc::SizeMismatch, "feature width differs from namespace dim");
    if (!v.frames.allFinite()) add(rec, Errc::NonFinite, "non-finite feature value");
    if (!ns) ns = v.ns;
    else if (*ns != v.ns) add(rec, Errc::NamespaceMismatch, "mixed feature namespaces in one bundle");
  }

  auto frames_of = [&bundle](const std::string& video) -> std::optional<int> {
    auto it = bundle.videos.find(video);
    if (it == bundle.videos.end()) return std::nullopt;
    return it->second.num_frames();
  };

  for (const auto& [video, segs] : bundle.subtitles) {
    for (std::size_t i = 0; i < segs.size(); ++i) {
      const auto& s = segs[i];
      const std::string rec = "subtitle/" + video + "#" + std::to_string(i);
      const auto frames = frames_of(s.video_id);
      if (!frames) {
        add(rec, Errc::DanglingVideoRef, "video '" + s.video_id + "' not in bundle");
      } else if (s.start_frame < 0 || s.start_frame > s.end_frame || s.end_frame >= *frames) {
        add(rec, Errc::SpanOutOfRange, "frames [" + std::to_string(s.start_frame) + "," +
                                           std::to_string(s.end_frame) + "] vs F=" + std::to_string(*frames));
      }
    }
  }

  const TaskKind expected_kind = task_kind(bundle.task);
  std::set<std::string> seen;
  for (SplitId split : kAllSplits) {
    auto it = bundle.splits.find(split);
    if (it == bundle.splits.end()) continue;
    const std::string split_name(to_string(split));
    if (it->second.empty()) add(split_name, Errc::EmptySplit, "declared split has no examples");
    std::set<std::string> here;
    for (const auto& e : it->second) {
      const std::string rec = split_name + "/" + example_id(e);
      if (kind_of(e) != expected_kind) {
        add(rec, Errc::SchemaError, "record kind does not match task kind");
        continue;
      }
      const auto frames = frames_of(video_of(e));
      if (!frames) add(rec, Errc::DanglingVideoRef, "video '" + video_of(e) + "' not in bundle");
      if (const auto* q = std::get_if<QAItem>(&e)) {
        if (q->candidates.size() < 2) add(rec, Errc::SchemaError, "fewer than 2 candidates");
        if (q->gold_index < 0 || q->gold_index >= static_cast<int>(q->candidates.size())) {
          add(rec, Errc::SchemaError, "gold_index out of range");
        }
      } else if (const auto* r = std::get_if<RetrievalQuery>(&e)) {
        if (r->moment && frames) {
          const auto& m = *r->moment;
          if (m.start_frame < 0 || m.start_frame > m.end_frame || m.end_frame >= *frames) {
            add(rec, Errc::SpanOutOfRange, "moment [" + std::to_string(m.start_frame) + "," +
                                               std::to_string(m.end_frame) + "] vs F=" + std::to_string(*frames));
          }
        }
      } else if (const auto* c = std::get_if<CaptionItem>(&e)) {
        if (c->references.empty()) add(rec, Errc::SchemaError, "no references");
      }
      const std::string identity = example_identity(bundle.task, e);
      if (seen.count(identity)) add(rec, Errc::SplitOverlap, "example also present in an earlier split");
      here.insert(identity);
    }
    seen.insert(here.begin(), here.end());
  }

  std::sort(out.begin(), out.end(), [](const Violation& a, const Violation& b) {
    return std::tie(a.record, a.rule, a.detail) < std::tie(b.record, b.rule, b.detail);
  });
  return out;
}

}  // namespace clipvl
