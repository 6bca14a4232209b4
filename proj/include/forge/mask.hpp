// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0
//
// Bit-packed pruning masks and mask-set files.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "forge/tensorstore.hpp"

namespace forge {

enum class PruneMethod { wanda, magnitude };
enum class PruneGroup { per_row, per_layer, nm };

struct NMPattern {
  int n = 2;
  int m = 4;
  friend bool operator==(const NMPattern&, const NMPattern&) = default;
};

std::string_view to_string(PruneMethod method);
std::string_view to_string(PruneGroup group);
PruneMethod parse_method(std::string_view text);
/// Accepts "per_row"/"row", "per_layer"/"layer" and "nm".
PruneGroup parse_group(std::string_view text);
/// "2:4" -> {2, 4}; requires 0 < n < m.
NMPattern parse_nm(std::string_view text);
std::string format_nm(NMPattern nm);
/// Shortest decimal that round-trips, e.g. "0.5".
std::string format_double(double value);

/// How a mask was produced. nm is set iff group == nm.
struct MaskSpec {
  PruneMethod method = PruneMethod::magnitude;
  PruneGroup group = PruneGroup::per_row;
  double sparsity = 0.0;
  std::optional<NMPattern> nm;
  friend bool operator==(const MaskSpec&, const MaskSpec&) = default;
};

/// Boolean matrix aligned to one weight tensor; bit = 1 means the weight is
/// kept. Storage is row-major, LSB-first within each byte, and the unused
/// high bits of the last byte are always zero.
class PruneMask {
 public:
  PruneMask() = default;
  PruneMask(std::size_t rows, std::size_t cols, bool kept);

  /// Adopts packed bits; throws if the length or the padding bits are wrong.
  static PruneMask from_bits(std::size_t rows, std::size_t cols,
                             std::vector<std::uint8_t> bits);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return rows_ * cols_; }

  bool kept(std::size_t flat) const { return (bits_[flat >> 3] >> (flat & 7)) & 1u; }
  bool kept(std::size_t r, std::size_t c) const { return kept(r * cols_ + c); }
  void set(std::size_t flat, bool keep) {
    const auto bit = static_cast<std::uint8_t>(1u << (flat & 7));
    if (keep) bits_[flat >> 3] |= bit; else bits_[flat >> 3] &= static_cast<std::uint8_t>(~bit);
  }

  std::span<const std::uint8_t> bits() const { return bits_; }
  std::size_t popcount() const;
  std::size_t kept_in_range(std::size_t begin, std::size_t end) const;

  MaskSpec spec;

  /// Bit equality; the spec is descriptive and not compared.
  bool same_bits(const PruneMask& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_ && bits_ == other.bits_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Masks for every pruned tensor of one sub-model, plus provenance.
struct MaskSet {
  std::map<std::string, PruneMask> masks;
  MaskSpec spec;
  std::string stats_seed = "none";
  std::string stats_corpus_fp = "none";

  /// Every mask must name a tensor of the checkpoint with the same shape.
  void check_against(const Container& checkpoint) const;
};

// On disk: one U8 tensor "<name>.mask" of ceil(rows*cols/8) bytes per mask.
// __metadata__ holds method, group, sparsity or nm, stats_seed,
// stats_corpus_fp, and "<name>.mask.shape" = "rows,cols" for each mask.
Container mask_set_to_container(const MaskSet& set);
MaskSet mask_set_from_container(const Container& container);
MaskSet read_mask_set(const std::filesystem::path& path);
void write_mask_set(const MaskSet& set, const std::filesystem::path& path);

}  // namespace forge
