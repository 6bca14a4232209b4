// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "forge/tensorstore.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include "forge/error.hpp"
#include "forge/rng.hpp"
#include "json.hpp"

static_assert(std::endian::native == std::endian::little,
              "tensor payloads are written in host order");

namespace forge {

using json = nlohmann::json;

std::string_view dtype_name(DType dtype) {
  return dtype == DType::f32 ? "F32" : "U8";
}

std::size_t dtype_size(DType dtype) { return dtype == DType::f32 ? 4 : 1; }

namespace {

std::uint64_t shape_numel(const std::vector<std::uint64_t>& shape) {
  std::uint64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const std::vector<std::uint64_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

}  // namespace

TensorRecord::TensorRecord(std::vector<std::uint64_t> shape,
                           std::vector<float> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  if (shape_numel(shape_) != f32().size())
    invalid("tensor shape " + shape_string(shape_) + " does not match " +
            std::to_string(f32().size()) + " values");
}

TensorRecord::TensorRecord(std::vector<std::uint64_t> shape,
                           std::vector<std::uint8_t> bytes)
    : shape_(std::move(shape)), data_(std::move(bytes)) {
  if (shape_numel(shape_) != u8().size())
    invalid("tensor shape " + shape_string(shape_) + " does not match " +
            std::to_string(u8().size()) + " bytes");
}

std::uint64_t TensorRecord::numel() const { return shape_numel(shape_); }

std::size_t TensorRecord::rows() const {
  if (shape_.size() != 2) invalid("expected a 2-D tensor, got " + shape_string(shape_));
  return static_cast<std::size_t>(shape_[0]);
}

std::size_t TensorRecord::cols() const {
  if (shape_.size() != 2) invalid("expected a 2-D tensor, got " + shape_string(shape_));
  return static_cast<std::size_t>(shape_[1]);
}

std::span<const float> TensorRecord::f32() const {
  if (auto* v = std::get_if<std::vector<float>>(&data_)) return *v;
  invalid("tensor is not F32");
}

std::span<float> TensorRecord::f32() {
  if (auto* v = std::get_if<std::vector<float>>(&data_)) return *v;
  invalid("tensor is not F32");
}

std::span<const std::uint8_t> TensorRecord::u8() const {
  if (auto* v = std::get_if<std::vector<std::uint8_t>>(&data_)) return *v;
  invalid("tensor is not U8");
}

void Container::add(const std::string& name, TensorRecord record) {
  if (!tensors.emplace(name, std::move(record)).second)
    invalid("duplicate tensor name \"" + name + "\"");
}

const TensorRecord& Container::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) invalid("missing tensor \"" + name + "\"");
  return it->second;
}

TensorRecord& Container::at(const std::string& name) {
  auto it = tensors.find(name);
  if (it == tensors.end()) invalid("missing tensor \"" + name + "\"");
  return it->second;
}

// ---------------------------------------------------------------------------
// Serialization

std::vector<std::uint8_t> serialize_container(const Container& container) {
  json header = json::object();
  std::uint64_t offset = 0;
  for (const auto& [name, record] : container.tensors) {
    if (name == "__metadata__") invalid("reserved tensor name \"__metadata__\"");
    const std::uint64_t size = record.byte_size();
    header[name] = {{"dtype", dtype_name(record.dtype())},
                    {"shape", record.shape()},
                    {"data_offsets", {offset, offset + size}}};
    offset += size;
  }
  if (!container.metadata.empty()) header["__metadata__"] = container.metadata;

  std::string text = header.dump();
  text.append((8 - text.size() % 8) % 8, ' ');

  std::vector<std::uint8_t> out;
  out.reserve(8 + text.size() + offset);
  const std::uint64_t n = text.size();
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(n >> (8 * i)));
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& [name, record] : container.tensors) {
    const auto* p = record.dtype() == DType::f32
                        ? reinterpret_cast<const std::uint8_t*>(record.f32().data())
                        : record.u8().data();
    out.insert(out.end(), p, p + record.byte_size());
  }
  return out;
}

Container parse_container(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) fail("malformed header length: file shorter than 8 bytes");
  std::uint64_t n = 0;
  for (int i = 0; i < 8; ++i) n |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  if (n > bytes.size() - 8) fail("malformed header length: " + std::to_string(n));

  json header;
  try {
    header = json::parse(bytes.begin() + 8, bytes.begin() + 8 + n);
  } catch (const json::parse_error& e) {
    fail(std::string("header not valid JSON: ") + e.what());
  }
  if (!header.is_object()) fail("header not valid JSON: expected an object");

  const auto data = bytes.subspan(8 + n);
  struct Entry {
    std::string name;
    DType dtype;
    std::vector<std::uint64_t> shape;
    std::uint64_t begin, end;
  };
  std::vector<Entry> entries;
  Container out;

  for (const auto& [key, value] : header.items()) {
    if (key == "__metadata__") {
      if (!value.is_object()) fail("__metadata__ must be an object");
      for (const auto& [mk, mv] : value.items()) {
        if (!mv.is_string()) fail("__metadata__ value for \"" + mk + "\" is not a string");
        out.metadata[mk] = mv.get<std::string>();
      }
      continue;
    }
    try {
      const auto dtype = value.at("dtype").get<std::string>();
      Entry e{key, DType::f32, {}, 0, 0};
      if (dtype == "F32") {
        e.dtype = DType::f32;
      } else if (dtype == "U8") {
        e.dtype = DType::u8;
      } else {
        fail("unsupported dtype \"" + dtype + "\" for tensor \"" + key + "\"");
      }
      e.shape = value.at("shape").get<std::vector<std::uint64_t>>();
      const auto offsets = value.at("data_offsets").get<std::vector<std::uint64_t>>();
      if (offsets.size() != 2) fail("data_offsets of \"" + key + "\" must have two entries");
      e.begin = offsets[0];
      e.end = offsets[1];
      entries.push_back(std::move(e));
    } catch (const json::exception& ex) {
      fail("malformed entry for tensor \"" + key + "\": " + ex.what());
    }
  }

  for (const auto& e : entries) {
    if (e.end < e.begin) fail("byte range of \"" + e.name + "\" is out of order");
    if (e.end > data.size()) fail("byte range of \"" + e.name + "\" exceeds file size");
    if (e.end - e.begin != shape_numel(e.shape) * dtype_size(e.dtype))
      fail("byte range of \"" + e.name + "\" does not match shape " + shape_string(e.shape));
  }
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    return a.begin != b.begin ? a.begin < b.begin : a.end < b.end;
  });
  std::uint64_t cursor = 0;
  for (const auto& e : entries) {
    if (e.begin < cursor) fail("byte range of \"" + e.name + "\" overlaps another tensor");
    if (e.begin > cursor) fail("byte range of \"" + e.name + "\" is out of order (gap before it)");
    cursor = e.end;
  }
  if (cursor != data.size()) fail("data region has trailing bytes not covered by any tensor");

  for (auto& e : entries) {
    const auto* p = data.data() + e.begin;
    if (e.dtype == DType::f32) {
      std::vector<float> values(shape_numel(e.shape));
      if (!values.empty()) std::memcpy(values.data(), p, e.end - e.begin);
      out.add(e.name, TensorRecord(std::move(e.shape), std::move(values)));
    } else {
      std::vector<std::uint8_t> raw(p, p + (e.end - e.begin));
      out.add(e.name, TensorRecord(std::move(e.shape), std::move(raw)));
    }
  }
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) fail("read error on " + path.string());
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path,
                      std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) fail("write error on " + path.string());
}

Container read_container(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return parse_container(bytes);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

void write_container(const Container& container,
                     const std::filesystem::path& path) {
  write_file_bytes(path, serialize_container(container));
}

// ---------------------------------------------------------------------------
// Manifest

namespace {

constexpr const char* kManifestFields[] = {
    "vocab_size", "d_model", "n_layers",  "n_heads",
    "d_ff",       "max_seq_len", "norm_eps", "tie_embeddings"};

}  // namespace

void ModelManifest::validate() const {
  auto positive = [](const char* field, std::int64_t v) {
    if (v <= 0) invalid(std::string("manifest: ") + field + " must be positive");
  };
  positive("vocab_size", vocab_size);
  positive("d_model", d_model);
  positive("n_layers", n_layers);
  positive("n_heads", n_heads);
  positive("d_ff", d_ff);
  positive("max_seq_len", max_seq_len);
  if (!(norm_eps > 0) || !std::isfinite(norm_eps))
    invalid("manifest: norm_eps must be a positive finite number");
  if (d_model % n_heads != 0)
    invalid("manifest: d_model (" + std::to_string(d_model) +
            ") is not divisible by n_heads (" + std::to_string(n_heads) + ")");
  if (head_dim() % 2 != 0)
    invalid("manifest: head dimension " + std::to_string(head_dim()) +
            " must be even for rotary embeddings");
}

std::string ModelManifest::to_json() const {
  json j = {{"vocab_size", vocab_size}, {"d_model", d_model},
            {"n_layers", n_layers},     {"n_heads", n_heads},
            {"d_ff", d_ff},             {"max_seq_len", max_seq_len},
            {"norm_eps", norm_eps},     {"tie_embeddings", tie_embeddings}};
  return j.dump();
}

ModelManifest ModelManifest::from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    invalid(std::string("manifest: not valid JSON: ") + e.what());
  }
  if (!j.is_object()) invalid("manifest: expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(std::begin(kManifestFields), std::end(kManifestFields), key) ==
        std::end(kManifestFields))
      invalid("manifest: unknown field \"" + key + "\"");
  }
  ModelManifest m;
  try {
    auto integer = [&](const char* field) {
      const auto& v = j.at(field);
      if (!v.is_number_integer()) invalid(std::string("manifest: ") + field + " must be an integer");
      return v.get<std::int64_t>();
    };
    m.vocab_size = integer("vocab_size");
    m.d_model = integer("d_model");
    m.n_layers = integer("n_layers");
    m.n_heads = integer("n_heads");
    m.d_ff = integer("d_ff");
    m.max_seq_len = integer("max_seq_len");
    if (!j.at("norm_eps").is_number()) invalid("manifest: norm_eps must be a number");
    m.norm_eps = j.at("norm_eps").get<double>();
    if (!j.at("tie_embeddings").is_boolean()) invalid("manifest: tie_embeddings must be a boolean");
    m.tie_embeddings = j.at("tie_embeddings").get<bool>();
  } catch (const json::out_of_range& e) {
    invalid(std::string("manifest: missing field: ") + e.what());
  }
  m.validate();
  return m;
}

ModelManifest load_manifest(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return ModelManifest::from_json(
      std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

void save_manifest(const ModelManifest& manifest,
                   const std::filesystem::path& path) {
  const std::string text = json::parse(manifest.to_json()).dump(2) + "\n";
  write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()),
                                   text.size()));
}

std::optional<ModelManifest> embedded_manifest(const Container& checkpoint) {
  auto it = checkpoint.metadata.find(std::string(kManifestKey));
  if (it == checkpoint.metadata.end()) return std::nullopt;
  return ModelManifest::from_json(it->second);
}

namespace {

constexpr const char* kAttnProj[] = {"q_proj", "k_proj", "v_proj", "o_proj"};
constexpr const char* kMlpProj[] = {"gate_proj", "up_proj", "down_proj"};

}  // namespace

std::map<std::string, std::vector<std::uint64_t>> expected_tensor_shapes(
    const ModelManifest& m) {
  const auto V = static_cast<std::uint64_t>(m.vocab_size);
  const auto D = static_cast<std::uint64_t>(m.d_model);
  const auto F = static_cast<std::uint64_t>(m.d_ff);
  std::map<std::string, std::vector<std::uint64_t>> shapes;
  shapes["tok_emb.weight"] = {V, D};
  for (std::int64_t i = 0; i < m.n_layers; ++i) {
    const std::string p = "blocks." + std::to_string(i) + ".";
    for (const char* proj : kAttnProj) shapes[p + "attn." + proj + ".weight"] = {D, D};
    shapes[p + "mlp.gate_proj.weight"] = {F, D};
    shapes[p + "mlp.up_proj.weight"] = {F, D};
    shapes[p + "mlp.down_proj.weight"] = {D, F};
    shapes[p + "attn_norm.weight"] = {D};
    shapes[p + "mlp_norm.weight"] = {D};
  }
  shapes["final_norm.weight"] = {D};
  if (!m.tie_embeddings) shapes["lm_head.weight"] = {V, D};
  return shapes;
}

std::vector<std::string> prunable_tensor_names(const ModelManifest& m) {
  std::vector<std::string> names;
  for (std::int64_t i = 0; i < m.n_layers; ++i) {
    const std::string p = "blocks." + std::to_string(i) + ".";
    for (const char* proj : kAttnProj) names.push_back(p + "attn." + proj + ".weight");
    for (const char* proj : kMlpProj) names.push_back(p + "mlp." + proj + ".weight");
  }
  return names;
}

std::optional<int> block_index(std::string_view name) {
  constexpr std::string_view prefix = "blocks.";
  if (!name.starts_with(prefix)) return std::nullopt;
  name.remove_prefix(prefix.size());
  const auto dot = name.find('.');
  if (dot == 0 || dot == std::string_view::npos || dot > 9) return std::nullopt;
  int value = 0;
  for (char c : name.substr(0, dot)) {
    if (c < '0' || c > '9') return std::nullopt;
    value = value * 10 + (c - '0');
  }
  return value;
}

bool is_prunable_name(std::string_view name) {
  const auto block = block_index(name);
  if (!block) return false;
  const auto rest = name.substr(name.find('.', 7) + 1);
  for (const char* proj : kAttnProj)
    if (rest == std::string("attn.") + proj + ".weight") return true;
  for (const char* proj : kMlpProj)
    if (rest == std::string("mlp.") + proj + ".weight") return true;
  return false;
}

void validate_checkpoint(const Container& checkpoint,
                         const ModelManifest& manifest) {
  for (const auto& [name, shape] : expected_tensor_shapes(manifest)) {
    auto it = checkpoint.tensors.find(name);
    if (it == checkpoint.tensors.end())
      invalid("checkpoint is missing tensor \"" + name + "\"");
    if (it->second.dtype() != DType::f32)
      invalid("checkpoint tensor \"" + name + "\" is not F32");
    if (it->second.shape() != shape)
      invalid("checkpoint tensor \"" + name + "\" has shape " +
              shape_string(it->second.shape()) + ", manifest implies " +
              shape_string(shape));
  }
}

Container generate_tiny_model(const ModelManifest& manifest, std::uint64_t seed) {
  manifest.validate();
  SplitMix64 rng(seed);
  const float proj_scale = 1.0f / std::sqrt(static_cast<float>(manifest.d_model));

  Container out;
  for (const auto& [name, shape] : expected_tensor_shapes(manifest)) {
    std::vector<float> values(shape_numel(shape));
    if (name.ends_with("norm.weight")) {
      std::fill(values.begin(), values.end(), 1.0f);
    } else {
      const float scale = name == "tok_emb.weight" ? 1.0f : proj_scale;
      for (auto& v : values) v = (2.0f * rng.next_unit() - 1.0f) * scale;
    }
    out.add(name, TensorRecord(shape, std::move(values)));
  }
  out.metadata[std::string(kManifestKey)] = manifest.to_json();
  out.metadata["seed"] = std::to_string(seed);
  return out;
}

}  // namespace forge
