// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0
//
// Importance scoring (Wanda and magnitude) and mask construction for
// unstructured (per-row, per-layer) and N:M sparsity.

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "forge/calibration.hpp"
#include "forge/mask.hpp"
#include "forge/tensorstore.hpp"

namespace forge {

struct ScoreMatrix {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> values;

  float at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

/// Wanda: |W_ij| · a_j. Magnitude: |W_ij|. `norms` must hold in_features
/// entries for wanda and is ignored for magnitude.
ScoreMatrix score_values(std::span<const float> weights, std::size_t rows,
                         std::size_t cols, PruneMethod method,
                         std::span<const float> norms);

/// Scores one named 2-D weight; wanda looks up the tensor's norm vector.
ScoreMatrix score(const std::string& name, const TensorRecord& weights,
                  PruneMethod method, const ActivationStats* stats);

/// Number of weights pruned from a comparison group: floor(s · size).
std::size_t prune_count(double sparsity, std::size_t group_size);

/// Prunes the lowest-scoring weights of every comparison group. Within equal
/// scores the smaller flat index is pruned first.
PruneMask make_mask(const ScoreMatrix& scores, const MaskSpec& spec);

/// W' = W where kept, +0.0 elsewhere.
TensorRecord apply_mask(const TensorRecord& weights, const PruneMask& mask);

/// Checks a mask against its declared structure. Returns a description of
/// the first violation ("row 3 keeps 5 of 8, expected 4"), if any.
std::optional<std::string> verify_mask(const PruneMask& mask, const MaskSpec& spec);

struct PruneRecipe {
  MaskSpec spec;
  /// Required for wanda (with provenance), forbidden for magnitude.
  const ActivationStats* stats = nullptr;

  void validate() const;
};

struct PruneResult {
  Container checkpoint;
  MaskSet masks;
};

/// Scores and masks every prunable tensor; other tensors and the checkpoint
/// metadata are copied verbatim. Tensors are processed in parallel.
PruneResult prune_model(const Container& checkpoint, const ModelManifest& manifest,
                        const PruneRecipe& recipe);

}  // namespace forge
