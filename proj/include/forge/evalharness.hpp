// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0
//
// Next-token perplexity of dense and masked models on held-out corpora.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "forge/calibration.hpp"
#include "forge/mask.hpp"
#include "forge/tensorstore.hpp"

namespace forge {

struct EvalResult {
  std::string model_id;
  std::string mask_id = "dense";
  std::string corpus_id;
  std::uint64_t token_count = 0;
  double mean_nll = 0.0;  // nats/token
  double perplexity = 1.0;
  std::vector<std::string> warnings;

  std::string to_json() const;
};

struct EvalOptions {
  std::string model_id = "model";
  std::string mask_id = "dense";
  std::string corpus_id = "corpus";
  /// Escalates the calibration/evaluation overlap warning to an error.
  bool strict = false;
};

/// Mean NLL over every next-token prediction of every sequence (length-1
/// sequences contribute nothing). Sequences run in parallel; per-sequence
/// sums are reduced in corpus order. Overlap is detected by comparing the
/// corpus fingerprint with the masks' calibration fingerprint.
EvalResult evaluate(const Container& checkpoint, const ModelManifest& manifest,
                    const MaskSet* masks, const CalibrationCorpus& corpus,
                    const EvalOptions& options = {});

}  // namespace forge
