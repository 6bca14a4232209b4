// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "forge/pipeline.hpp"

#include <cstdio>
#include <span>

#include "forge/calibration.hpp"
#include "forge/error.hpp"
#include "forge/evalharness.hpp"
#include "forge/maskkit.hpp"
#include "forge/pruner.hpp"
#include "json.hpp"

namespace forge {

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()),
                                   text.size()));
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

}  // namespace

std::string PipelineResult::table() const {
  std::string out = "pairwise global Jaccard distance\n";
  for (const auto& p : pairs)
    out += "  " + p.a + " vs " + p.b + (p.same_domain ? "  [within]  " : "  [cross]   ") +
           fixed(p.global, 6) + "\n";
  out += "mean within-domain: " + fixed(within_domain_mean, 6) + "\n";
  out += "mean cross-domain:  " + fixed(cross_domain_mean, 6) + "\n";
  if (!perplexities.empty()) {
    out += "held-out perplexity\n";
    for (const auto& r : perplexities)
      out += "  " + r.model + " on " + r.corpus + ": " + fixed(r.perplexity, 4) + "\n";
  }
  return out;
}

PipelineResult run_pipeline(const PipelineOptions& opt) {
  opt.manifest.validate();
  if (opt.domains.size() < 2) invalid("pipeline needs at least two domains");
  if (opt.calib_seeds.size() < 2) invalid("pipeline needs at least two calibration seeds");
  std::filesystem::create_directories(opt.out_dir);
  PipelineResult result;
  auto out = [&](const std::string& name) {
    result.files.push_back(opt.out_dir / name);
    return opt.out_dir / name;
  };

  save_manifest(opt.manifest, out("manifest.json"));
  const Container model = generate_tiny_model(opt.manifest, opt.model_seed);
  write_container(model, out("model.safetensors"));

  const std::int64_t seq_len = std::min(opt.seq_len, opt.manifest.max_seq_len);
  std::vector<MaskSet> mask_sets;
  std::vector<CalibrationCorpus> eval_corpora;
  for (std::size_t d = 0; d < opt.domains.size(); ++d) {
    const DomainSpec& dom = opt.domains[d];
    // Calibration and evaluation splits come from distinct generator seeds.
    const std::string calib_text = synth_text_corpus(
        opt.corpus_records, opt.record_chars, dom.codepoint_lo, dom.codepoint_hi,
        1000 + 2 * d);
    const std::string eval_text = synth_text_corpus(
        opt.eval_records, opt.record_chars, dom.codepoint_lo, dom.codepoint_hi,
        1001 + 2 * d);
    const auto calib_path = out("calib_" + dom.name + ".jsonl");
    const auto eval_path = out("eval_" + dom.name + ".jsonl");
    write_text(calib_path, calib_text);
    write_text(eval_path, eval_text);

    const auto corpus =
        load_corpus(calib_path, Tokenizer::byte_level, opt.manifest.vocab_size, seq_len);
    eval_corpora.push_back(
        load_corpus(eval_path, Tokenizer::byte_level, opt.manifest.vocab_size, seq_len));

    for (auto seed : opt.calib_seeds) {
      SubModel sub{dom.name, seed, dom.name + "_s" + std::to_string(seed)};
      const auto selection = select_samples(corpus, opt.samples, seed);
      const ActivationStats stats =
          accumulate_stats(model, opt.manifest, selection.samples,
                           StatsProvenance{seed, corpus.source_fingerprint});
      write_stats(stats, out("stats_" + sub.id + ".safetensors"));

      PruneRecipe recipe{opt.spec, &stats};
      if (opt.spec.method == PruneMethod::magnitude) recipe.stats = nullptr;
      PruneResult pruned = prune_model(model, opt.manifest, recipe);
      write_container(pruned.checkpoint, out("pruned_" + sub.id + ".safetensors"));
      write_mask_set(pruned.masks, out("masks_" + sub.id + ".safetensors"));
      mask_sets.push_back(std::move(pruned.masks));
      result.submodels.push_back(std::move(sub));
    }
  }

  double within_sum = 0.0, cross_sum = 0.0;
  std::size_t within_n = 0, cross_n = 0;
  for (std::size_t i = 0; i < mask_sets.size(); ++i) {
    for (std::size_t j = i + 1; j < mask_sets.size(); ++j) {
      const JaccardReport report = compare_models(mask_sets[i], mask_sets[j]);
      const auto& a = result.submodels[i];
      const auto& b = result.submodels[j];
      write_text(out("compare_" + a.id + "_vs_" + b.id + ".json"), report.to_json());
      PairDistance pd{a.id, b.id, a.domain == b.domain, report.global};
      if (pd.same_domain) {
        within_sum += pd.global;
        ++within_n;
      } else {
        cross_sum += pd.global;
        ++cross_n;
      }
      result.pairs.push_back(pd);
    }
  }
  result.within_domain_mean = within_n ? within_sum / static_cast<double>(within_n) : 0.0;
  result.cross_domain_mean = cross_n ? cross_sum / static_cast<double>(cross_n) : 0.0;

  // Images of one query projection: the first sub-model of the first two
  // domains, and the positions where they disagree.
  const std::string q_name = "blocks.0.attn.q_proj.weight";
  const std::size_t per_domain = opt.calib_seeds.size();
  const MaskSet& first = mask_sets[0];
  const MaskSet& second = mask_sets[per_domain];
  render_weights(apply_mask(model.at(q_name), first.masks.at(q_name)),
                 out("q_proj0_" + result.submodels[0].id + ".pgm"));
  render_weights(apply_mask(model.at(q_name), second.masks.at(q_name)),
                 out("q_proj0_" + result.submodels[per_domain].id + ".pgm"));
  render_diff(first.masks.at(q_name), second.masks.at(q_name), out("q_proj0_diff.pgm"));

  if (opt.evaluate) {
    for (std::size_t d = 0; d < opt.domains.size(); ++d) {
      const auto dense = evaluate(model, opt.manifest, nullptr, eval_corpora[d]);
      result.perplexities.push_back({"dense", opt.domains[d].name, dense.perplexity});
      for (std::size_t i = 0; i < mask_sets.size(); ++i) {
        const auto r = evaluate(model, opt.manifest, &mask_sets[i], eval_corpora[d]);
        result.perplexities.push_back(
            {result.submodels[i].id, opt.domains[d].name, r.perplexity});
      }
    }
  }

  nlohmann::json summary;
  summary["within_domain_mean"] = result.within_domain_mean;
  summary["cross_domain_mean"] = result.cross_domain_mean;
  for (const auto& p : result.pairs)
    summary["pairs"].push_back(
        {{"a", p.a}, {"b", p.b}, {"same_domain", p.same_domain}, {"global", p.global}});
  for (const auto& r : result.perplexities)
    summary["perplexity"].push_back(
        {{"model", r.model}, {"corpus", r.corpus}, {"perplexity", r.perplexity}});
  write_text(out("summary.json"), summary.dump(2) + "\n");
  return result;
}

}  // namespace forge
