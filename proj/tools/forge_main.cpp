// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0
//
// forge: build domain-specific sparse sub-models from tiny decoder-only
// checkpoints and compare their pruning masks.
//
// Exit codes: 0 success, 1 runtime or I/O error, 2 usage or validation error.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "forge/calibration.hpp"
#include "forge/error.hpp"
#include "forge/evalharness.hpp"
#include "forge/maskkit.hpp"
#include "forge/pipeline.hpp"
#include "forge/pruner.hpp"
#include "forge/tensorstore.hpp"

namespace fs = std::filesystem;
using namespace forge;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

void warn(const std::string& msg) { std::cerr << "warning: " << msg << "\n"; }

void write_text(const fs::path& path, const std::string& text) {
  write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()),
                                   text.size()));
}

// --manifest wins; otherwise the manifest embedded by init-model.
ModelManifest resolve_manifest(const std::string& manifest_path, const Container& model) {
  if (!manifest_path.empty()) return load_manifest(manifest_path);
  if (auto m = embedded_manifest(model)) return *m;
  invalid("model has no embedded manifest; pass --manifest");
}

bool same_file(const fs::path& a, const fs::path& b) {
  std::error_code ec;
  if (fs::exists(a, ec) && fs::exists(b, ec)) return fs::equivalent(a, b, ec);
  return fs::weakly_canonical(a, ec) == fs::weakly_canonical(b, ec);
}

struct InitArgs {
  std::string manifest, out;
  std::uint64_t seed = 0;
};

int run_init(const InitArgs& a) {
  const ModelManifest manifest = a.manifest.empty() ? ModelManifest{} : load_manifest(a.manifest);
  manifest.validate();
  write_container(generate_tiny_model(manifest, a.seed), a.out);
  return 0;
}

struct CaptureArgs {
  std::string model, manifest, calib, tokenizer = "byte_level", out;
  std::size_t samples = 128;
  std::int64_t seq_len = 128;
  std::uint64_t seed = 0;
};

int run_capture(const CaptureArgs& a) {
  const Container model = read_container(a.model);
  const ModelManifest manifest = resolve_manifest(a.manifest, model);
  if (a.seq_len <= 0) invalid("--seq-len must be positive");
  const auto corpus = load_corpus(a.calib, parse_tokenizer(a.tokenizer), manifest.vocab_size,
                                  std::min(a.seq_len, manifest.max_seq_len));
  if (corpus.dropped_empty)
    warn("dropped " + std::to_string(corpus.dropped_empty) + " empty records");
  const auto selection = select_samples(corpus, a.samples, a.seed);
  if (selection.shortfall)
    warn("shortfall: " + std::to_string(selection.samples.size()) + "/" +
         std::to_string(a.samples));
  const ActivationStats stats = accumulate_stats(
      model, manifest, selection.samples, StatsProvenance{a.seed, corpus.source_fingerprint});
  write_stats(stats, a.out);
  return 0;
}

struct PruneArgs {
  std::string model, manifest, stats, method = "wanda", nm, group = "row", out_model, out_masks;
  std::optional<double> sparsity;
};

int run_prune(const PruneArgs& a) {
  MaskSpec spec;
  spec.method = parse_method(a.method);
  if (!a.nm.empty()) {
    if (a.sparsity) invalid("--sparsity and --nm are mutually exclusive");
    spec.group = PruneGroup::nm;
    spec.nm = parse_nm(a.nm);
  } else {
    spec.group = parse_group(a.group);
    if (spec.group == PruneGroup::nm) invalid("--group nm needs --nm n:m");
    spec.sparsity = a.sparsity.value_or(0.5);
  }
  if (spec.method == PruneMethod::wanda && a.stats.empty())
    invalid("wanda requires activation stats (--stats)");
  if (spec.method == PruneMethod::magnitude && !a.stats.empty())
    invalid("magnitude pruning does not take --stats");

  const Container model = read_container(a.model);
  const ModelManifest manifest = resolve_manifest(a.manifest, model);
  std::optional<ActivationStats> stats;
  if (!a.stats.empty()) stats = read_stats(a.stats);
  const PruneResult result =
      prune_model(model, manifest, PruneRecipe{spec, stats ? &*stats : nullptr});
  if (!a.out_model.empty()) write_container(result.checkpoint, a.out_model);
  write_mask_set(result.masks, a.out_masks);
  return 0;
}

struct CompareArgs {
  std::string a, b, out, aggregation = "unweighted";
};

int run_compare(const CompareArgs& a) {
  LayerAggregation agg;
  if (a.aggregation == "unweighted") agg = LayerAggregation::unweighted;
  else if (a.aggregation == "size") agg = LayerAggregation::size_weighted;
  else invalid("--aggregation must be unweighted or size");
  const JaccardReport report = compare_models(read_mask_set(a.a), read_mask_set(a.b), agg);
  const std::string json = report.to_json();
  if (a.out.empty()) std::cout << json;
  else write_text(a.out, json);
  return 0;
}

struct RenderArgs {
  std::string weights, mask, tensor = "blocks.0.attn.q_proj.weight", out;
  std::vector<std::string> diff;
};

int run_render(const RenderArgs& a) {
  const int modes = !a.weights.empty() + !a.mask.empty() + !a.diff.empty();
  if (modes != 1) invalid("render needs exactly one of --weights, --mask, --diff");
  if (!a.weights.empty()) {
    const Container c = read_container(a.weights);
    write_pgm(weights_image(c.at(a.tensor)), a.out);
  } else if (!a.mask.empty()) {
    const MaskSet set = read_mask_set(a.mask);
    auto it = set.masks.find(a.tensor);
    if (it == set.masks.end()) invalid("mask file has no tensor \"" + a.tensor + "\"");
    write_pgm(mask_image(it->second), a.out);
  } else {
    const MaskSet x = read_mask_set(a.diff.at(0));
    const MaskSet y = read_mask_set(a.diff.at(1));
    auto ix = x.masks.find(a.tensor);
    auto iy = y.masks.find(a.tensor);
    if (ix == x.masks.end() || iy == y.masks.end())
      invalid("both mask files need tensor \"" + a.tensor + "\"");
    render_diff(ix->second, iy->second, a.out);
  }
  return 0;
}

struct EvalArgs {
  std::string model, manifest, masks, corpus, tokenizer = "byte_level", out;
  std::vector<std::string> calib;
  std::int64_t seq_len = 128;
  bool strict = false;
};

int run_eval(const EvalArgs& a) {
  for (const auto& c : a.calib) {
    if (same_file(c, a.corpus)) {
      const std::string msg = "evaluation corpus " + a.corpus +
                              " is also a calibration corpus; use a separate split";
      if (a.strict) invalid(msg);
      warn(msg);
    }
  }
  const Container model = read_container(a.model);
  const ModelManifest manifest = resolve_manifest(a.manifest, model);
  const auto corpus = load_corpus(a.corpus, parse_tokenizer(a.tokenizer), manifest.vocab_size,
                                  std::min(a.seq_len, manifest.max_seq_len));
  std::optional<MaskSet> masks;
  if (!a.masks.empty()) masks = read_mask_set(a.masks);
  EvalOptions opts{a.model, a.masks.empty() ? "dense" : a.masks, a.corpus, a.strict};
  const EvalResult r = evaluate(model, manifest, masks ? &*masks : nullptr, corpus, opts);
  for (const auto& w : r.warnings) warn(w);
  if (a.out.empty()) std::cout << r.to_json();
  else write_text(a.out, r.to_json());
  return 0;
}

struct VerifyArgs {
  std::string masks, nm, group;
  std::optional<double> sparsity;
};

int run_verify(const VerifyArgs& a) {
  const MaskSet set = read_mask_set(a.masks);
  MaskSpec spec = set.spec;
  if (!a.nm.empty()) {
    spec.group = PruneGroup::nm;
    spec.nm = parse_nm(a.nm);
  } else if (a.sparsity || !a.group.empty()) {
    spec.group = a.group.empty() ? (spec.group == PruneGroup::nm ? PruneGroup::per_row : spec.group)
                                 : parse_group(a.group);
    if (a.sparsity) spec.sparsity = *a.sparsity;
    if (spec.group == PruneGroup::nm && !spec.nm) invalid("--group nm needs --nm n:m");
  }
  std::size_t bad = 0;
  for (const auto& [name, mask] : set.masks) {
    if (auto violation = verify_mask(mask, spec)) {
      std::cerr << "violation: " << name << ": " << *violation << "\n";
      ++bad;
    }
  }
  if (bad) {
    std::cerr << bad << " of " << set.masks.size() << " masks violate "
              << to_string(spec.group) << " structure\n";
    return kExitRuntime;
  }
  std::cout << "ok: " << set.masks.size() << " masks satisfy " << to_string(spec.group)
            << (spec.group == PruneGroup::nm ? " " + format_nm(*spec.nm)
                                             : " sparsity " + format_double(spec.sparsity))
            << "\n";
  return 0;
}

struct PipelineArgs {
  std::string out_dir = "forge_pipeline", manifest, group = "row";
  std::uint64_t model_seed = 7;
  std::vector<std::uint64_t> seeds = {1, 2};
  std::size_t records = 512, samples = 128;
  std::int64_t seq_len = 128;
  double sparsity = 0.5;
  bool no_eval = false;
};

int run_pipeline_cmd(const PipelineArgs& a) {
  PipelineOptions opt;
  opt.out_dir = a.out_dir;
  if (!a.manifest.empty()) opt.manifest = load_manifest(a.manifest);
  opt.model_seed = a.model_seed;
  opt.calib_seeds = a.seeds;
  opt.corpus_records = a.records;
  opt.samples = a.samples;
  opt.seq_len = a.seq_len;
  opt.spec.group = parse_group(a.group);
  if (opt.spec.group == PruneGroup::nm) invalid("pipeline supports row or layer grouping");
  opt.spec.sparsity = a.sparsity;
  opt.evaluate = !a.no_eval;
  const PipelineResult r = run_pipeline(opt);
  std::cout << r.table();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"forge: domain-specific sub-model extraction and mask analysis"};
  app.require_subcommand(1);

  InitArgs init;
  auto* c_init = app.add_subcommand("init-model", "Generate a deterministic tiny checkpoint");
  c_init->add_option("--manifest", init.manifest, "Manifest JSON (default: built-in)");
  c_init->add_option("--seed", init.seed, "Generator seed")->required();
  c_init->add_option("--out", init.out, "Output checkpoint")->required();

  CaptureArgs cap;
  auto* c_cap = app.add_subcommand("capture", "Collect activation norms from calibration data");
  c_cap->add_option("--model", cap.model)->required();
  c_cap->add_option("--manifest", cap.manifest, "Manifest (default: embedded in the model)");
  c_cap->add_option("--calib", cap.calib, "Calibration JSONL")->required();
  c_cap->add_option("--tokenizer", cap.tokenizer)->check(CLI::IsMember({"byte_level", "pretokenized"}));
  c_cap->add_option("--samples", cap.samples, "Calibration sample count")->capture_default_str();
  c_cap->add_option("--seq-len", cap.seq_len, "Per-record truncation length")->capture_default_str();
  c_cap->add_option("--seed", cap.seed, "Selection seed")->required();
  c_cap->add_option("--out", cap.out, "Output stats container")->required();

  PruneArgs pr;
  auto* c_prune = app.add_subcommand("prune", "Score, mask and zero the prunable projections");
  c_prune->add_option("--model", pr.model)->required();
  c_prune->add_option("--manifest", pr.manifest);
  c_prune->add_option("--stats", pr.stats, "Activation stats (wanda)");
  c_prune->add_option("--method", pr.method)->check(CLI::IsMember({"wanda", "magnitude"}));
  c_prune->add_option("--sparsity", pr.sparsity, "Unstructured sparsity in [0, 1] (default 0.5)");
  c_prune->add_option("--nm", pr.nm, "N:M pattern, e.g. 2:4");
  c_prune->add_option("--group", pr.group, "row or layer")->capture_default_str();
  c_prune->add_option("--out-model", pr.out_model, "Pruned checkpoint");
  c_prune->add_option("--out-masks", pr.out_masks, "Mask set")->required();

  CompareArgs cmp;
  auto* c_cmp = app.add_subcommand("compare", "Jaccard distances between two mask sets");
  c_cmp->add_option("--masks-a", cmp.a)->required();
  c_cmp->add_option("--masks-b", cmp.b)->required();
  c_cmp->add_option("--out", cmp.out, "Report JSON (default: stdout)");
  c_cmp->add_option("--aggregation", cmp.aggregation, "unweighted or size")->capture_default_str();

  RenderArgs rnd;
  auto* c_rnd = app.add_subcommand("render", "Write a PGM image of weights, a mask, or a mask diff");
  c_rnd->add_option("--weights", rnd.weights, "Checkpoint");
  c_rnd->add_option("--mask", rnd.mask, "Mask set");
  c_rnd->add_option("--diff", rnd.diff, "Two mask sets")->expected(2);
  c_rnd->add_option("--tensor", rnd.tensor)->capture_default_str();
  c_rnd->add_option("--out", rnd.out)->required();

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("eval", "Next-token perplexity on a held-out corpus");
  c_ev->add_option("--model", ev.model)->required();
  c_ev->add_option("--manifest", ev.manifest);
  c_ev->add_option("--masks", ev.masks);
  c_ev->add_option("--corpus", ev.corpus)->required();
  c_ev->add_option("--calib", ev.calib, "Calibration corpora that must not be evaluated on");
  c_ev->add_option("--tokenizer", ev.tokenizer)->check(CLI::IsMember({"byte_level", "pretokenized"}));
  c_ev->add_option("--seq-len", ev.seq_len)->capture_default_str();
  c_ev->add_flag("--strict", ev.strict, "Treat calibration/evaluation overlap as an error");
  c_ev->add_option("--out", ev.out, "Result JSON (default: stdout)");

  VerifyArgs ver;
  auto* c_ver = app.add_subcommand("verify", "Check masks against their sparsity structure");
  c_ver->add_option("--masks", ver.masks)->required();
  c_ver->add_option("--sparsity", ver.sparsity);
  c_ver->add_option("--nm", ver.nm);
  c_ver->add_option("--group", ver.group);

  PipelineArgs pl;
  auto* c_pl = app.add_subcommand("pipeline", "Two-domain, multi-seed mask comparison experiment");
  c_pl->add_option("--out-dir", pl.out_dir)->capture_default_str();
  c_pl->add_option("--manifest", pl.manifest);
  c_pl->add_option("--model-seed", pl.model_seed)->capture_default_str();
  c_pl->add_option("--seeds", pl.seeds, "Calibration seeds per domain")->delimiter(',');
  c_pl->add_option("--records", pl.records, "Calibration records per domain")->capture_default_str();
  c_pl->add_option("--samples", pl.samples)->capture_default_str();
  c_pl->add_option("--seq-len", pl.seq_len)->capture_default_str();
  c_pl->add_option("--sparsity", pl.sparsity)->capture_default_str();
  c_pl->add_option("--group", pl.group)->capture_default_str();
  c_pl->add_flag("--no-eval", pl.no_eval, "Skip the perplexity table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*c_init) return run_init(init);
    if (*c_cap) return run_capture(cap);
    if (*c_prune) return run_prune(pr);
    if (*c_cmp) return run_compare(cmp);
    if (*c_rnd) return run_render(rnd);
    if (*c_ev) return run_eval(ev);
    if (*c_ver) return run_verify(ver);
    if (*c_pl) return run_pipeline_cmd(pl);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == ErrorKind::validation ? kExitUsage : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
