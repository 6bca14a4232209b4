// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0
//
// Safetensors containers, the model manifest, and the tiny-model generator.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace forge {

enum class DType { f32, u8 };

std::string_view dtype_name(DType dtype);  // "F32" / "U8"
std::size_t dtype_size(DType dtype);

/// One named tensor. Data is row-major and contiguous. Model weights are
/// always F32; U8 exists only for bit-packed mask payloads.
class TensorRecord {
 public:
  TensorRecord() = default;
  TensorRecord(std::vector<std::uint64_t> shape, std::vector<float> values);
  TensorRecord(std::vector<std::uint64_t> shape, std::vector<std::uint8_t> bytes);

  DType dtype() const {
    return std::holds_alternative<std::vector<float>>(data_) ? DType::f32
                                                             : DType::u8;
  }
  const std::vector<std::uint64_t>& shape() const { return shape_; }
  std::uint64_t numel() const;
  std::uint64_t byte_size() const { return numel() * dtype_size(dtype()); }

  // Throw if the tensor is not 2-D.
  std::size_t rows() const;
  std::size_t cols() const;

  // Typed access; throws when the dtype does not match.
  std::span<const float> f32() const;
  std::span<float> f32();
  std::span<const std::uint8_t> u8() const;

  friend bool operator==(const TensorRecord&, const TensorRecord&) = default;

 private:
  std::vector<std::uint64_t> shape_;
  std::variant<std::vector<float>, std::vector<std::uint8_t>> data_;
};

using Metadata = std::map<std::string, std::string>;

/// In-memory safetensors file. Tensors are keyed by name, which is also the
/// serialization order.
struct Container {
  std::map<std::string, TensorRecord> tensors;
  Metadata metadata;

  /// Inserts a tensor; throws on a duplicate name.
  void add(const std::string& name, TensorRecord record);
  const TensorRecord& at(const std::string& name) const;
  TensorRecord& at(const std::string& name);
  bool contains(const std::string& name) const {
    return tensors.count(name) != 0;
  }

  friend bool operator==(const Container&, const Container&) = default;
};

// Serialized layout: u64 LE header length N, N bytes of JSON (space padded to
// a multiple of 8), then the data region. Tensors are laid out back to back in
// name order.
std::vector<std::uint8_t> serialize_container(const Container& container);
Container parse_container(std::span<const std::uint8_t> bytes);

Container read_container(const std::filesystem::path& path);
void write_container(const Container& container,
                     const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path,
                      std::span<const std::uint8_t> bytes);

// ---------------------------------------------------------------------------
// Model manifest and tensor layout

struct ModelManifest {
  std::int64_t vocab_size = 256;
  std::int64_t d_model = 64;
  std::int64_t n_layers = 4;
  std::int64_t n_heads = 4;
  std::int64_t d_ff = 128;
  std::int64_t max_seq_len = 128;
  double norm_eps = 1e-5;
  bool tie_embeddings = false;

  std::int64_t head_dim() const { return d_model / n_heads; }

  /// Throws a validation error naming the first violated constraint.
  void validate() const;

  std::string to_json() const;
  static ModelManifest from_json(std::string_view text);

  friend bool operator==(const ModelManifest&, const ModelManifest&) = default;
};

ModelManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const ModelManifest& manifest,
                   const std::filesystem::path& path);

/// Metadata key under which checkpoints embed their manifest JSON.
inline constexpr std::string_view kManifestKey = "manifest";

/// Manifest embedded in a checkpoint by generate_tiny_model.
std::optional<ModelManifest> embedded_manifest(const Container& checkpoint);

/// Every tensor name the manifest implies, with its shape.
std::map<std::string, std::vector<std::uint64_t>> expected_tensor_shapes(
    const ModelManifest& manifest);

/// The seven projection matrices of each block, in block order.
std::vector<std::string> prunable_tensor_names(const ModelManifest& manifest);

/// True for "blocks.{i}.attn.{q,k,v,o}_proj.weight" and
/// "blocks.{i}.mlp.{gate,up,down}_proj.weight".
bool is_prunable_name(std::string_view name);

/// Block index of a "blocks.{i}.…" name.
std::optional<int> block_index(std::string_view name);

/// Checks that every implied tensor exists with the implied shape and dtype.
void validate_checkpoint(const Container& checkpoint,
                         const ModelManifest& manifest);

/// Deterministic random checkpoint. Tensors are filled in name order from one
/// SplitMix64 stream: norm weights are 1, embeddings are uniform in [-1, 1),
/// and projection matrices (including lm_head) are uniform in [-1, 1) scaled
/// by 1/sqrt(d_model).
Container generate_tiny_model(const ModelManifest& manifest, std::uint64_t seed);

}  // namespace forge
