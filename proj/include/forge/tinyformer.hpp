// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0
//
// LLaMA-style decoder-only forward pass (RMSNorm pre-norm, rotary position
// embeddings with base 10000, SwiGLU MLP, no biases) with activation capture
// at the inputs of the seven projection matrices of every block.

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "forge/mask.hpp"
#include "forge/tensorstore.hpp"

namespace forge {

using TokenId = std::int32_t;
using Sequence = std::vector<TokenId>;

/// Dense row-major f32 matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0f) {}

  float& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  float at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<float> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const float> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
};

/// Streaming per-input-channel sums of squares for every prunable matrix.
/// Accumulators are double; finalize to an L2 norm with sqrt.
struct CapturedActivations {
  std::map<std::string, std::vector<double>> sum_sq;
  std::uint64_t token_count = 0;

  /// Adds another accumulator into this one (same tensor universe required
  /// unless this one is empty).
  void merge(const CapturedActivations& other);
};

struct ForwardConfig {
  /// When non-null, inputs to every prunable matrix are accumulated here.
  CapturedActivations* capture = nullptr;
  /// When non-null, masked weights are replaced by +0.0 before the pass.
  const MaskSet* masks = nullptr;
  /// Upper bound on the sequence length; 0 means the manifest's max_seq_len.
  std::int64_t max_seq_len = 0;
  /// Skip the lm_head projection (capture-only passes).
  bool compute_logits = true;
};

/// A checkpoint bound to its manifest and an optional mask set. The checkpoint
/// must outlive the model; masked tensors are materialized once at
/// construction.
class TinyFormer {
 public:
  TinyFormer(const Container& checkpoint, const ModelManifest& manifest,
             const MaskSet* masks = nullptr);

  const ModelManifest& manifest() const { return manifest_; }

  /// Logits (len × vocab_size); an empty matrix when compute_logits is
  /// false. max_seq_len > 0 tightens the manifest's length limit.
  Matrix forward(std::span<const TokenId> tokens,
                 CapturedActivations* capture = nullptr,
                 std::int64_t max_seq_len = 0,
                 bool compute_logits = true) const;

 private:
  struct Block {
    std::span<const float> attn_norm, mlp_norm;
    std::span<const float> q, k, v, o, gate, up, down;
    std::string names[7];
  };

  std::span<const float> weight(const std::string& name);

  const Container& checkpoint_;
  ModelManifest manifest_;
  std::map<std::string, std::vector<float>> masked_;
  std::span<const float> tok_emb_, final_norm_, lm_head_;
  std::vector<Block> blocks_;
  std::vector<float> rope_cos_, rope_sin_;  // max_seq_len × head_dim/2
};

/// One-shot convenience over TinyFormer.
Matrix forward(const Container& checkpoint, const ModelManifest& manifest,
               std::span<const TokenId> tokens, const ForwardConfig& config);

/// RMSNorm of one vector: x / sqrt(mean(x²) + eps) * weight.
void rms_norm(std::span<const float> x, std::span<const float> weight,
              float eps, std::span<float> out);

/// Rotates consecutive pairs (2i, 2i+1) of one head vector in place by
/// position·10000^(-2i/head_dim).
void apply_rope(std::span<float> head, std::size_t position);

/// Sum over positions of −log softmax(logits[t])[targets[t]], in nats. Uses
/// max subtraction; the reduction runs in double.
double logits_nll_sum(const Matrix& logits, std::span<const TokenId> targets);

/// Mean next-token NLL per position (nats/token).
double logits_to_nll(const Matrix& logits, std::span<const TokenId> targets);

}  // namespace forge
