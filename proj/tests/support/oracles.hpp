// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0
//
// Test-only reference implementations. None of these call into the code
// paths they are used to check.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "forge/mask.hpp"
#include "forge/tensorstore.hpp"
#include "forge/tinyformer.hpp"

namespace oracle {

/// Single-token forward pass written out by hand in double precision. At
/// position 0 rotary embeddings are the identity and attention returns V.
struct SingleTokenPass {
  std::map<std::string, std::vector<double>> inputs;  // per prunable tensor
  std::vector<double> logits;
};
SingleTokenPass single_token_forward(const forge::Container& ckpt,
                                     const forge::ModelManifest& m, int token);

/// Mask by globally sorting (score, flat index) pairs of each group and
/// clearing the lowest k.
std::vector<bool> sort_mask(const std::vector<float>& scores, std::size_t rows,
                            std::size_t cols, forge::PruneGroup group, double sparsity,
                            int n = 0, int m = 0);

/// Jaccard distance from explicit kept-index sets.
double set_jaccard(const forge::PruneMask& a, const forge::PruneMask& b);

/// Mean NLL computed in long double.
long double nll_long_double(const forge::Matrix& logits, std::span<const int> targets);

/// Byte-level safetensors reader that checks the layout field by field.
struct RefTensor {
  std::string dtype;
  std::vector<std::uint64_t> shape;
  std::uint64_t begin = 0, end = 0;
  std::vector<std::uint8_t> bytes;
};
struct RefFile {
  std::uint64_t header_len = 0;
  std::map<std::string, RefTensor> tensors;
  std::map<std::string, std::string> metadata;
};
/// Throws std::runtime_error describing the first layout problem.
RefFile read_safetensors(const std::filesystem::path& path);

/// Netpbm P5 reader (whitespace and comments in the header allowed).
struct Pgm {
  std::size_t width = 0, height = 0;
  int maxval = 0;
  std::vector<std::uint8_t> pixels;
};
Pgm read_pgm(const std::filesystem::path& path);

/// Fresh empty directory under the system temp dir.
std::filesystem::path temp_dir(const std::string& tag);

std::vector<float> random_floats(std::uint64_t seed, std::size_t n, float lo, float hi);

}  // namespace oracle
