// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "forge/evalharness.hpp"

#include <cmath>

#include "forge/error.hpp"
#include "forge/parallel.hpp"
#include "json.hpp"

namespace forge {

std::string EvalResult::to_json() const {
  nlohmann::json j = {{"model", model_id},
                      {"masks", mask_id},
                      {"corpus", corpus_id},
                      {"token_count", token_count},
                      {"mean_nll", mean_nll},
                      {"perplexity", perplexity}};
  if (!warnings.empty()) j["warnings"] = warnings;
  return j.dump(2) + "\n";
}

EvalResult evaluate(const Container& checkpoint, const ModelManifest& manifest,
                    const MaskSet* masks, const CalibrationCorpus& corpus,
                    const EvalOptions& options) {
  if (corpus.records.empty()) invalid("evaluate: empty corpus");

  EvalResult result;
  result.model_id = options.model_id;
  result.mask_id = masks ? options.mask_id : "dense";
  result.corpus_id = options.corpus_id;

  if (masks && masks->stats_corpus_fp == std::to_string(corpus.source_fingerprint)) {
    const std::string msg =
        "evaluation corpus is the calibration corpus of the masks (fingerprint " +
        masks->stats_corpus_fp + "); use a separate split";
    if (options.strict) invalid(msg);
    result.warnings.push_back(msg);
  }

  const TinyFormer model(checkpoint, manifest, masks);
  struct Partial {
    double nll_sum = 0.0;
    std::uint64_t count = 0;
  };
  std::vector<Partial> partial(corpus.records.size());
  parallel_for(corpus.records.size(), [&](std::size_t i) {
    const Sequence& seq = corpus.records[i];
    if (seq.size() < 2) return;
    const std::span<const TokenId> all(seq);
    const Matrix logits = model.forward(all.first(seq.size() - 1));
    partial[i] = {logits_nll_sum(logits, all.subspan(1)), seq.size() - 1};
  });

  double total = 0.0;
  for (const auto& p : partial) {
    total += p.nll_sum;
    result.token_count += p.count;
  }
  if (result.token_count == 0)
    invalid("evaluate: corpus has no next-token predictions (all sequences have length 1)");
  result.mean_nll = total / static_cast<double>(result.token_count);
  result.perplexity = std::exp(result.mean_nll);
  return result;
}

}  // namespace forge
