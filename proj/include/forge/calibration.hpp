// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0
//
// Calibration corpora, seeded sample selection, and activation statistics.

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
#include "forge/tinyformer.hpp"

namespace forge {

enum class Tokenizer { pretokenized, byte_level };

Tokenizer parse_tokenizer(std::string_view text);

struct CalibrationCorpus {
  std::vector<Sequence> records;
  /// FNV-1a 64 over the raw file bytes.
  std::uint64_t source_fingerprint = 0;
  std::size_t dropped_empty = 0;
  std::size_t truncated = 0;
};

/// Parses JSONL. Each non-blank line is an object with "tokens": [ints]
/// (pretokenized) or "text": string (byte_level, one token per UTF-8 byte).
/// Sequences longer than max_seq_len keep their first max_seq_len tokens;
/// empty sequences are dropped and counted.
CalibrationCorpus parse_corpus(std::string_view bytes, Tokenizer tokenizer,
                               std::int64_t vocab_size, std::int64_t max_seq_len);
CalibrationCorpus load_corpus(const std::filesystem::path& path, Tokenizer tokenizer,
                              std::int64_t vocab_size, std::int64_t max_seq_len);

struct SampleSelection {
  std::vector<std::size_t> indices;  // selection order
  std::vector<Sequence> samples;
  std::size_t requested = 0;
  bool shortfall = false;
};

/// Partial Fisher-Yates over [0, n) driven by SplitMix64(seed): for
/// i = 0..k-1, swap slot i with slot i + next_below(n - i); the first k slots
/// are the selection, k = min(count, n).
SampleSelection select_samples(const CalibrationCorpus& corpus, std::size_t count,
                               std::uint64_t seed);

/// Per prunable tensor, the L2 norm of each input channel over all
/// calibration tokens.
struct ActivationStats {
  std::map<std::string, std::vector<float>> norms;
  std::uint64_t sample_count = 0;
  std::uint64_t token_count = 0;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> corpus_fp;

  bool has_provenance() const { return seed.has_value() && corpus_fp.has_value(); }
  const std::vector<float>* find(const std::string& tensor) const;
};

struct StatsProvenance {
  std::uint64_t seed = 0;
  std::uint64_t corpus_fp = 0;
};

/// Runs the samples through the model one at a time, in order, accumulating
/// input sums of squares.
CapturedActivations capture_activations(const Container& checkpoint,
                                        const ModelManifest& manifest,
                                        std::span<const Sequence> samples);

/// a_j = sqrt(sum of squares), rounded to f32.
ActivationStats finalize_stats(const CapturedActivations& captured,
                               std::uint64_t sample_count,
                               std::optional<StatsProvenance> provenance);

/// capture_activations followed by finalize_stats. Throws
/// "empty calibration set" when samples is empty.
ActivationStats accumulate_stats(const Container& checkpoint,
                                 const ModelManifest& manifest,
                                 std::span<const Sequence> samples,
                                 std::optional<StatsProvenance> provenance = std::nullopt);

// On disk: one F32 vector "<tensor>.actnorm" per prunable tensor; metadata
// seed, sample_count, token_count and corpus_fp as decimal strings.
Container stats_to_container(const ActivationStats& stats);
ActivationStats stats_from_container(const Container& container);
ActivationStats read_stats(const std::filesystem::path& path);
void write_stats(const ActivationStats& stats, const std::filesystem::path& path);

/// Synthetic byte-level corpus: `records` JSONL lines of `length` characters.
/// Codepoints are drawn from [lo, hi] with surrogates skipped; a range inside
/// 0x01-0x7F yields ASCII bytes only, a range starting at 0x80 yields only
/// bytes 0x80-0xFF.
std::string synth_text_corpus(std::size_t records, std::size_t length,
                              std::uint32_t lo, std::uint32_t hi, std::uint64_t seed);

}  // namespace forge
