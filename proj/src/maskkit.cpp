// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "forge/maskkit.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "forge/error.hpp"
#include "json.hpp"

namespace forge {

namespace {

void require_same_shape(const PruneMask& a, const PruneMask& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    invalid("mask shapes differ: " + std::to_string(a.rows()) + "x" +
            std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
            std::to_string(b.cols()));
}

}  // namespace

double jaccard_distance(const PruneMask& a, const PruneMask& b) {
  require_same_shape(a, b);
  const auto x = a.bits();
  const auto y = b.bits();
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    inter += static_cast<std::size_t>(std::popcount(static_cast<std::uint8_t>(x[i] & y[i])));
    uni += static_cast<std::size_t>(std::popcount(static_cast<std::uint8_t>(x[i] | y[i])));
  }
  if (uni == 0) return 0.0;
  return 1.0 - static_cast<double>(inter) / static_cast<double>(uni);
}

Metadata mask_set_meta(const MaskSet& set) {
  Metadata meta;
  meta["method"] = std::string(to_string(set.spec.method));
  meta["group"] = std::string(to_string(set.spec.group));
  if (set.spec.group == PruneGroup::nm)
    meta["nm"] = format_nm(set.spec.nm.value_or(NMPattern{}));
  else
    meta["sparsity"] = format_double(set.spec.sparsity);
  meta["stats_seed"] = set.stats_seed;
  meta["stats_corpus_fp"] = set.stats_corpus_fp;
  return meta;
}

JaccardReport compare_models(const MaskSet& a, const MaskSet& b,
                             LayerAggregation aggregation) {
  std::vector<std::string> only;
  for (const auto& [name, _] : a.masks)
    if (!b.masks.count(name)) only.push_back(name + " (only in a)");
  for (const auto& [name, _] : b.masks)
    if (!a.masks.count(name)) only.push_back(name + " (only in b)");
  if (!only.empty()) {
    std::string msg = "mask sets cover different tensors:";
    for (const auto& s : only) msg += " " + s;
    invalid(msg);
  }

  JaccardReport report;
  report.a_meta = mask_set_meta(a);
  report.b_meta = mask_set_meta(b);

  struct Acc {
    double sum = 0.0;
    double weight = 0.0;
  };
  std::map<int, Acc> layers;
  Acc global;
  for (const auto& [name, mask_a] : a.masks) {
    const PruneMask& mask_b = b.masks.at(name);
    const double d = jaccard_distance(mask_a, mask_b);
    report.tensors[name] = d;
    const double w = aggregation == LayerAggregation::size_weighted
                         ? static_cast<double>(mask_a.size())
                         : 1.0;
    global.sum += w * d;
    global.weight += w;
    if (auto block = block_index(name)) {
      layers[*block].sum += w * d;
      layers[*block].weight += w;
    }
  }
  for (const auto& [layer, acc] : layers)
    report.layers[layer] = acc.weight > 0 ? acc.sum / acc.weight : 0.0;
  report.global = global.weight > 0 ? global.sum / global.weight : 0.0;
  return report;
}

std::string JaccardReport::to_json() const {
  nlohmann::json j;
  j["tensors"] = nlohmann::json::object();
  for (const auto& [name, d] : tensors) j["tensors"][name] = d;
  j["layers"] = nlohmann::json::object();
  for (const auto& [layer, d] : layers) j["layers"][std::to_string(layer)] = d;
  j["global"] = global;
  j["a_meta"] = a_meta;
  j["b_meta"] = b_meta;
  return j.dump(2) + "\n";
}

GrayImage weights_image(const TensorRecord& weights) {
  GrayImage img;
  img.height = weights.rows();
  img.width = weights.cols();
  const auto w = weights.f32();
  double max_abs = 0.0;
  for (float v : w) max_abs = std::max(max_abs, static_cast<double>(std::fabs(v)));
  img.pixels.assign(w.size(), 0);
  if (max_abs > 0.0 && std::isfinite(max_abs)) {
    for (std::size_t i = 0; i < w.size(); ++i)
      img.pixels[i] = static_cast<std::uint8_t>(
          std::lround(255.0 * std::fabs(static_cast<double>(w[i])) / max_abs));
  }
  return img;
}

GrayImage mask_image(const PruneMask& mask) {
  GrayImage img{mask.cols(), mask.rows(), std::vector<std::uint8_t>(mask.size())};
  for (std::size_t i = 0; i < mask.size(); ++i) img.pixels[i] = mask.kept(i) ? 255 : 0;
  return img;
}

GrayImage diff_image(const PruneMask& a, const PruneMask& b) {
  require_same_shape(a, b);
  GrayImage img{a.cols(), a.rows(), std::vector<std::uint8_t>(a.size())};
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool ka = a.kept(i), kb = b.kept(i);
    img.pixels[i] = ka != kb ? kDiffer : (ka ? kBothKept : kBothPruned);
  }
  return img;
}

std::vector<std::uint8_t> encode_pgm(const GrayImage& image) {
  if (image.pixels.size() != image.width * image.height)
    invalid("image buffer does not match its dimensions");
  const std::string header = "P5\n" + std::to_string(image.width) + " " +
                             std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

void write_pgm(const GrayImage& image, const std::filesystem::path& path) {
  write_file_bytes(path, encode_pgm(image));
}

void render_weights(const TensorRecord& weights, const std::filesystem::path& path) {
  write_pgm(weights_image(weights), path);
}

void render_diff(const PruneMask& a, const PruneMask& b, const std::filesystem::path& path) {
  write_pgm(diff_image(a, b), path);
}

}  // namespace forge
