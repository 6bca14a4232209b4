// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "forge/pruner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "forge/error.hpp"
#include "forge/parallel.hpp"

namespace forge {

ScoreMatrix score_values(std::span<const float> weights, std::size_t rows,
                         std::size_t cols, PruneMethod method,
                         std::span<const float> norms) {
  if (weights.size() != rows * cols) invalid("score: weight buffer does not match shape");
  if (method == PruneMethod::wanda && norms.size() != cols)
    invalid("score: activation norm vector has " + std::to_string(norms.size()) +
            " entries, expected " + std::to_string(cols));

  ScoreMatrix s;
  s.rows = rows;
  s.cols = cols;
  s.values.resize(weights.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const float mag = std::fabs(weights[r * cols + c]);
      s.values[r * cols + c] = method == PruneMethod::wanda ? mag * norms[c] : mag;
    }
  }
  return s;
}

ScoreMatrix score(const std::string& name, const TensorRecord& weights,
                  PruneMethod method, const ActivationStats* stats) {
  std::span<const float> norms;
  if (method == PruneMethod::wanda) {
    if (!stats) invalid("wanda requires activation stats");
    const auto* a = stats->find(name);
    if (!a) invalid("activation stats have no norm vector for \"" + name + "\"");
    norms = *a;
  }
  ScoreMatrix s = score_values(weights.f32(), weights.rows(), weights.cols(), method, norms);
  s.name = name;
  return s;
}

std::size_t prune_count(double sparsity, std::size_t group_size) {
  return static_cast<std::size_t>(std::floor(sparsity * static_cast<double>(group_size)));
}

namespace {

void check_spec(const MaskSpec& spec, std::size_t cols) {
  if (spec.group == PruneGroup::nm) {
    if (!spec.nm) invalid("nm grouping needs an (n, m) pattern");
    const auto [n, m] = *spec.nm;
    if (n <= 0 || n >= m) invalid("invalid N:M pattern " + format_nm(*spec.nm));
    if (cols % static_cast<std::size_t>(m) != 0)
      invalid("m = " + std::to_string(m) + " does not divide in_features = " +
              std::to_string(cols));
  } else if (!(spec.sparsity >= 0.0 && spec.sparsity <= 1.0)) {
    invalid("invalid sparsity " + format_double(spec.sparsity) + " (need 0 <= s <= 1)");
  }
}

// Clears the `prune` lowest (score, flat index) entries of idx.
void prune_lowest(const std::vector<float>& scores, std::vector<std::size_t>& idx,
                  std::size_t prune, PruneMask& mask) {
  if (prune == 0) return;
  auto lower = [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b] || (scores[a] == scores[b] && a < b);
  };
  if (prune < idx.size())
    std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(prune),
                     idx.end(), lower);
  for (std::size_t i = 0; i < prune; ++i) mask.set(idx[i], false);
}

}  // namespace

PruneMask make_mask(const ScoreMatrix& scores, const MaskSpec& spec) {
  check_spec(spec, scores.cols);
  if (scores.values.size() != scores.rows * scores.cols)
    invalid("score matrix buffer does not match its shape");
  for (float v : scores.values)
    if (!(v >= 0.0f) || !std::isfinite(v))
      invalid("scores must be finite and non-negative");

  PruneMask mask(scores.rows, scores.cols, true);
  mask.spec = spec;
  const std::size_t rows = scores.rows, cols = scores.cols;
  std::vector<std::size_t> idx;

  switch (spec.group) {
    case PruneGroup::per_row: {
      const std::size_t k = prune_count(spec.sparsity, cols);
      for (std::size_t r = 0; r < rows; ++r) {
        idx.resize(cols);
        std::iota(idx.begin(), idx.end(), r * cols);
        prune_lowest(scores.values, idx, k, mask);
      }
      break;
    }
    case PruneGroup::per_layer: {
      idx.resize(rows * cols);
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      prune_lowest(scores.values, idx, prune_count(spec.sparsity, rows * cols), mask);
      break;
    }
    case PruneGroup::nm: {
      const auto n = static_cast<std::size_t>(spec.nm->n);
      const auto m = static_cast<std::size_t>(spec.nm->m);
      for (std::size_t base = 0; base < rows * cols; base += m) {
        idx.resize(m);
        std::iota(idx.begin(), idx.end(), base);
        prune_lowest(scores.values, idx, m - n, mask);
      }
      break;
    }
  }
  return mask;
}

TensorRecord apply_mask(const TensorRecord& weights, const PruneMask& mask) {
  if (weights.rows() != mask.rows() || weights.cols() != mask.cols())
    invalid("apply_mask: mask is " + std::to_string(mask.rows()) + "x" +
            std::to_string(mask.cols()) + ", weights are " + std::to_string(weights.rows()) +
            "x" + std::to_string(weights.cols()));
  const auto src = weights.f32();
  std::vector<float> out(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) out[i] = mask.kept(i) ? src[i] : 0.0f;
  return TensorRecord(weights.shape(), std::move(out));
}

std::optional<std::string> verify_mask(const PruneMask& mask, const MaskSpec& spec) {
  check_spec(spec, mask.cols());
  const std::size_t rows = mask.rows(), cols = mask.cols();
  auto describe = [](const std::string& group, std::size_t kept, std::size_t size,
                     std::size_t expected) {
    return group + " keeps " + std::to_string(kept) + " of " + std::to_string(size) +
           ", expected " + std::to_string(expected);
  };
  switch (spec.group) {
    case PruneGroup::per_row: {
      const std::size_t expected = cols - prune_count(spec.sparsity, cols);
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t kept = mask.kept_in_range(r * cols, (r + 1) * cols);
        if (kept != expected) return describe("row " + std::to_string(r), kept, cols, expected);
      }
      break;
    }
    case PruneGroup::per_layer: {
      const std::size_t total = rows * cols;
      const std::size_t expected = total - prune_count(spec.sparsity, total);
      const std::size_t kept = mask.popcount();
      if (kept != expected) return describe("tensor", kept, total, expected);
      break;
    }
    case PruneGroup::nm: {
      const auto n = static_cast<std::size_t>(spec.nm->n);
      const auto m = static_cast<std::size_t>(spec.nm->m);
      for (std::size_t base = 0; base < rows * cols; base += m) {
        const std::size_t kept = mask.kept_in_range(base, base + m);
        if (kept != n)
          return describe("row " + std::to_string(base / cols) + " block " +
                              std::to_string((base % cols) / m),
                          kept, m, n);
      }
      break;
    }
  }
  return std::nullopt;
}

void PruneRecipe::validate() const {
  if (spec.method == PruneMethod::wanda) {
    if (!stats) invalid("wanda requires activation stats");
    if (!stats->has_provenance())
      invalid("wanda requires activation stats with seed and corpus fingerprint");
  } else if (stats) {
    invalid("magnitude pruning does not take activation stats");
  }
  if (spec.group == PruneGroup::nm) {
    if (!spec.nm) invalid("nm grouping needs an (n, m) pattern");
  } else if (!(spec.sparsity >= 0.0 && spec.sparsity <= 1.0)) {
    invalid("invalid sparsity " + format_double(spec.sparsity) + " (need 0 <= s <= 1)");
  }
}

PruneResult prune_model(const Container& checkpoint, const ModelManifest& manifest,
                        const PruneRecipe& recipe) {
  recipe.validate();
  validate_checkpoint(checkpoint, manifest);
  const auto names = prunable_tensor_names(manifest);

  MaskSpec spec = recipe.spec;
  if (spec.group == PruneGroup::nm)
    spec.sparsity = 1.0 - static_cast<double>(spec.nm->n) / static_cast<double>(spec.nm->m);
  else
    spec.nm.reset();

  std::vector<PruneMask> masks(names.size());
  std::vector<TensorRecord> pruned(names.size());
  parallel_for(names.size(), [&](std::size_t i) {
    const TensorRecord& w = checkpoint.at(names[i]);
    masks[i] = make_mask(score(names[i], w, spec.method, recipe.stats), spec);
    pruned[i] = apply_mask(w, masks[i]);
  });

  PruneResult result;
  result.checkpoint = checkpoint;
  result.masks.spec = spec;
  if (recipe.stats) {
    result.masks.stats_seed = std::to_string(*recipe.stats->seed);
    result.masks.stats_corpus_fp = std::to_string(*recipe.stats->corpus_fp);
  }
  for (std::size_t i = 0; i < names.size(); ++i) {
    result.checkpoint.at(names[i]) = std::move(pruned[i]);
    result.masks.masks.emplace(names[i], std::move(masks[i]));
  }
  return result;
}

}  // namespace forge
