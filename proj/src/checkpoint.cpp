// Copyright 2026 The clipvl Authors
// SPDX-License-Identifier: Apache-2.0

#include "clipvl/checkpoint.hpp"

#include <nlohmann/json.hpp>

#include <cstring>
#include <fstream>
#include <iterator>

#include "clipvl/error.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace clipvl {

namespace {

using RowMajorF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::string file_for(const std::string& name) { return "params/" + name + ".f32"; }

void check_shape(const ArrayShape& found, Index rows, Index cols) {
  if (found.rows != rows || found.cols != cols) {
    throw Error(Errc::ShapeMismatch, found.name + ": checkpoint has " + std::to_string(found.rows) + "x" +
                                         std::to_string(found.cols) + ", expected " + std::to_string(rows) +
                                         "x" + std::to_string(cols));
  }
}

const ArrayShape& find_array(const CheckpointManifest& m, const std::string& name) {
  for (const auto& a : m.arrays) {
    if (a.name == name) return a;
  }
  throw Error(Errc::MissingParameter, name + " not in checkpoint");
}

}  // namespace

void save_checkpoint(const ModelState<float>& state, const fs::path& dir) {
  fs::create_directories(dir / "params");
  json params = json::array();
  for (const auto& [name, m] : state.params.entries()) {
    const RowMajorF rm = m;
    std::ofstream out(dir / file_for(name), std::ios::binary);
    if (!out) throw Error(Errc::Io, "cannot write " + (dir / file_for(name)).string());
    out.write(reinterpret_cast<const char*>(rm.data()), static_cast<std::streamsize>(rm.size() * sizeof(float)));
    params.push_back({{"name", name}, {"shape", {m.rows(), m.cols()}}, {"file", file_for(name)}});
  }
  const json manifest{{"format", kCheckpointFormat},
                      {"config", state.config.to_json()},
                      {"fingerprint", state.config.fingerprint()},
                      {"seed", state.seed},
                      {"params", params}};
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << '\n';
}

CheckpointManifest read_checkpoint_manifest(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw Error(Errc::Io, "cannot open " + (dir / "manifest.json").string());
  try {
    const json j = json::parse(in);
    if (j.at("format").get<std::string>() != kCheckpointFormat) {
      throw Error(Errc::SchemaError, "unknown checkpoint format");
    }
    CheckpointManifest m;
    m.config = ModelConfig::from_json(j.at("config"));
    m.fingerprint = j.at("fingerprint").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& p : j.at("params")) {
      const auto shape = p.at("shape").get<std::vector<Index>>();
      if (shape.size() != 2) throw Error(Errc::SchemaError, "shape must be [rows, cols]");
      m.arrays.push_back({p.at("name").get<std::string>(), shape[0], shape[1]});
    }
    return m;
  } catch (const json::exception& e) {
    throw Error(Errc::SchemaError, std::string("checkpoint manifest: ") + e.what());
  }
}

Matrix<float> read_checkpoint_array(const fs::path& dir, const ArrayShape& shape) {
  const fs::path path = dir / file_for(shape.name);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::MissingParameter, shape.name + ": no file " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::size_t expected = static_cast<std::size_t>(shape.rows * shape.cols) * sizeof(float);
  if (bytes.size() != expected) {
    throw Error(Errc::ShapeMismatch, shape.name + ": file holds " + std::to_string(bytes.size()) +
                                         " bytes, manifest shape needs " + std::to_string(expected));
  }
  RowMajorF rm(shape.rows, shape.cols);
  std::memcpy(rm.data(), bytes.data(), expected);
  Matrix<float> out = rm;
  if (!out.allFinite()) throw Error(Errc::NonFinite, shape.name);
  return out;
}

ModelState<float> load_checkpoint(const fs::path& dir, const ModelConfig& expected) {
  const CheckpointManifest m = read_checkpoint_manifest(dir);
  if (m.fingerprint != expected.fingerprint() || m.config.fingerprint() != m.fingerprint) {
    throw Error(Errc::FingerprintMismatch, "checkpoint " + m.fingerprint + " vs expected " + expected.fingerprint());
  }
  // Shapes come from a freshly built model so the check does not trust the
  // manifest's own config.
  ModelState<float> state = init_model<float>(expected, m.seed);
  for (auto& [name, value] : state.params.entries()) {
    const ArrayShape& found = find_array(m, name);
    check_shape(found, value.rows(), value.cols());
    value = read_checkpoint_array(dir, found);
  }
  return state;
}

std::vector<ArrayShape> load_checkpoint_prefixes(const fs::path& dir, ParamStore<float>& into,
                                                 std::span<const std::string> prefixes) {
  const CheckpointManifest m = read_checkpoint_manifest(dir);
  std::vector<ArrayShape> loaded;
  for (auto& [name, value] : into.entries()) {
    bool selected = false;
    for (const auto& p : prefixes) selected = selected || has_prefix(name, p);
    if (!selected) continue;
    const ArrayShape& found = find_array(m, name);
    check_shape(found, value.rows(), value.cols());
    value = read_checkpoint_array(dir, found);
    loaded.push_back(found);
  }
  return loaded;
}

}  // namespace clipvl
