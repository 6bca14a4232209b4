// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0
//
// Comparing sub-model masks: Jaccard distances and grayscale PGM renderings.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "forge/mask.hpp"
#include "forge/tensorstore.hpp"

namespace forge {

/// 1 − |Ka ∩ Kb| / |Ka ∪ Kb| over kept positions; 0 when both are empty.
double jaccard_distance(const PruneMask& a, const PruneMask& b);

enum class LayerAggregation { unweighted, size_weighted };

struct JaccardReport {
  std::map<std::string, double> tensors;
  std::map<int, double> layers;
  double global = 0.0;
  Metadata a_meta;
  Metadata b_meta;

  /// {"tensors": {...}, "layers": {"0": d, ...}, "global": d,
  ///  "a_meta": {...}, "b_meta": {...}}
  std::string to_json() const;
};

/// Descriptive metadata of a mask set (method, group, sparsity or nm,
/// stats provenance).
Metadata mask_set_meta(const MaskSet& set);

/// Per-tensor distances, per-block means and the global mean. Both sets must
/// cover the same tensor names.
JaccardReport compare_models(const MaskSet& a, const MaskSet& b,
                             LayerAggregation aggregation = LayerAggregation::unweighted);

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major
};

inline constexpr std::uint8_t kBothPruned = 0;
inline constexpr std::uint8_t kBothKept = 128;
inline constexpr std::uint8_t kDiffer = 255;

/// round(255 · |w| / max|w|); one pixel per weight, matrix rows as image rows.
GrayImage weights_image(const TensorRecord& weights);
/// 255 where kept, 0 where pruned.
GrayImage mask_image(const PruneMask& mask);
/// kDiffer where bits differ, kBothKept / kBothPruned where they agree.
GrayImage diff_image(const PruneMask& a, const PruneMask& b);

/// Binary PGM: "P5\n<width> <height>\n255\n" followed by the pixels.
std::vector<std::uint8_t> encode_pgm(const GrayImage& image);
void write_pgm(const GrayImage& image, const std::filesystem::path& path);

void render_weights(const TensorRecord& weights, const std::filesystem::path& path);
void render_diff(const PruneMask& a, const PruneMask& b, const std::filesystem::path& path);

}  // namespace forge
