// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end experiment: one tiny model, two synthetic calibration domains,
// several calibration seeds per domain, one sub-model per (domain, seed), and
// pairwise Jaccard comparison of the resulting masks.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "forge/mask.hpp"
#include "forge/tensorstore.hpp"

namespace forge {

struct DomainSpec {
  std::string name;
  std::uint32_t codepoint_lo;
  std::uint32_t codepoint_hi;
};

struct PipelineOptions {
  std::filesystem::path out_dir;
  ModelManifest manifest;
  std::uint64_t model_seed = 7;
  /// ASCII bytes 0x01-0x7F vs non-ASCII text (bytes 0x80-0xFF only).
  std::vector<DomainSpec> domains = {{"ascii", 0x01, 0x7F}, {"nonascii", 0x80, 0xFFFF}};
  std::vector<std::uint64_t> calib_seeds = {1, 2};
  std::size_t corpus_records = 512;
  std::size_t eval_records = 32;
  std::size_t record_chars = 96;
  std::size_t samples = 128;
  std::int64_t seq_len = 128;
  MaskSpec spec{PruneMethod::wanda, PruneGroup::per_row, 0.5, std::nullopt};
  bool evaluate = true;
};

struct SubModel {
  std::string domain;
  std::uint64_t calib_seed = 0;
  std::string id;  // "<domain>_s<seed>"
};

struct PairDistance {
  std::string a;
  std::string b;
  bool same_domain = false;
  double global = 0.0;
};

struct PerplexityRow {
  std::string model;   // "dense" or a sub-model id
  std::string corpus;  // domain name of the held-out corpus
  double perplexity = 0.0;
};

struct PipelineResult {
  std::vector<SubModel> submodels;
  std::vector<PairDistance> pairs;
  std::vector<PerplexityRow> perplexities;
  double within_domain_mean = 0.0;
  double cross_domain_mean = 0.0;
  std::vector<std::filesystem::path> files;  // every artifact written

  std::string table() const;
};

/// Runs the experiment and writes every artifact under options.out_dir.
/// Deterministic: identical options yield byte-identical files.
PipelineResult run_pipeline(const PipelineOptions& options);

}  // namespace forge
