// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "forge/mask.hpp"

#include <bit>
#include <charconv>
#include <cmath>

#include "forge/error.hpp"

namespace forge {

std::string_view to_string(PruneMethod method) {
  return method == PruneMethod::wanda ? "wanda" : "magnitude";
}

std::string_view to_string(PruneGroup group) {
  switch (group) {
    case PruneGroup::per_row: return "per_row";
    case PruneGroup::per_layer: return "per_layer";
    case PruneGroup::nm: return "nm";
  }
  return "?";
}

PruneMethod parse_method(std::string_view text) {
  if (text == "wanda") return PruneMethod::wanda;
  if (text == "magnitude") return PruneMethod::magnitude;
  invalid("unknown pruning method \"" + std::string(text) + "\"");
}

PruneGroup parse_group(std::string_view text) {
  if (text == "per_row" || text == "row") return PruneGroup::per_row;
  if (text == "per_layer" || text == "layer") return PruneGroup::per_layer;
  if (text == "nm") return PruneGroup::nm;
  invalid("unknown comparison group \"" + std::string(text) + "\"");
}

NMPattern parse_nm(std::string_view text) {
  const auto colon = text.find(':');
  NMPattern nm{0, 0};
  if (colon != std::string_view::npos) {
    const auto a = text.substr(0, colon);
    const auto b = text.substr(colon + 1);
    auto ra = std::from_chars(a.data(), a.data() + a.size(), nm.n);
    auto rb = std::from_chars(b.data(), b.data() + b.size(), nm.m);
    if (ra.ec == std::errc() && ra.ptr == a.data() + a.size() &&
        rb.ec == std::errc() && rb.ptr == b.data() + b.size() && nm.n > 0 &&
        nm.n < nm.m)
      return nm;
  }
  invalid("invalid N:M pattern \"" + std::string(text) + "\" (need 0 < n < m)");
}

std::string format_nm(NMPattern nm) {
  return std::to_string(nm.n) + ":" + std::to_string(nm.m);
}

std::string format_double(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

namespace {

double parse_double(const std::string& text, const char* what) {
  double v = 0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size())
    invalid(std::string("invalid ") + what + " \"" + text + "\"");
  return v;
}

std::size_t packed_size(std::size_t n) { return (n + 7) / 8; }

}  // namespace

PruneMask::PruneMask(std::size_t rows, std::size_t cols, bool kept)
    : rows_(rows), cols_(cols), bits_(packed_size(rows * cols), kept ? 0xFF : 0x00) {
  if (kept && size() % 8 != 0)
    bits_.back() = static_cast<std::uint8_t>((1u << (size() % 8)) - 1);
}

PruneMask PruneMask::from_bits(std::size_t rows, std::size_t cols,
                               std::vector<std::uint8_t> bits) {
  if (bits.size() != packed_size(rows * cols))
    invalid("mask payload has " + std::to_string(bits.size()) + " bytes, expected " +
            std::to_string(packed_size(rows * cols)) + " for " + std::to_string(rows) +
            "x" + std::to_string(cols));
  const std::size_t tail = (rows * cols) % 8;
  if (tail != 0 && (bits.back() >> tail) != 0)
    invalid("mask payload has nonzero padding bits");
  PruneMask mask;
  mask.rows_ = rows;
  mask.cols_ = cols;
  mask.bits_ = std::move(bits);
  return mask;
}

std::size_t PruneMask::popcount() const {
  std::size_t n = 0;
  for (auto b : bits_) n += static_cast<std::size_t>(std::popcount(b));
  return n;
}

std::size_t PruneMask::kept_in_range(std::size_t begin, std::size_t end) const {
  std::size_t n = 0;
  for (std::size_t i = begin; i < end; ++i) n += kept(i);
  return n;
}

void MaskSet::check_against(const Container& checkpoint) const {
  for (const auto& [name, mask] : masks) {
    auto it = checkpoint.tensors.find(name);
    if (it == checkpoint.tensors.end())
      invalid("mask \"" + name + "\" has no matching checkpoint tensor");
    const auto& shape = it->second.shape();
    if (shape.size() != 2 || shape[0] != mask.rows() || shape[1] != mask.cols())
      invalid("mask \"" + name + "\" is " + std::to_string(mask.rows()) + "x" +
              std::to_string(mask.cols()) + " but the tensor shape differs");
  }
}

Container mask_set_to_container(const MaskSet& set) {
  Container c;
  c.metadata["method"] = std::string(to_string(set.spec.method));
  c.metadata["group"] = std::string(to_string(set.spec.group));
  if (set.spec.group == PruneGroup::nm) {
    c.metadata["nm"] = format_nm(set.spec.nm.value_or(NMPattern{}));
  } else {
    c.metadata["sparsity"] = format_double(set.spec.sparsity);
  }
  c.metadata["stats_seed"] = set.stats_seed;
  c.metadata["stats_corpus_fp"] = set.stats_corpus_fp;
  for (const auto& [name, mask] : set.masks) {
    auto bits = mask.bits();
    c.add(name + ".mask",
          TensorRecord({bits.size()}, std::vector<std::uint8_t>(bits.begin(), bits.end())));
    c.metadata[name + ".mask.shape"] =
        std::to_string(mask.rows()) + "," + std::to_string(mask.cols());
  }
  return c;
}

MaskSet mask_set_from_container(const Container& c) {
  auto meta = [&](const std::string& key) -> const std::string& {
    auto it = c.metadata.find(key);
    if (it == c.metadata.end()) invalid("mask file lacks metadata \"" + key + "\"");
    return it->second;
  };
  MaskSet set;
  set.spec.method = parse_method(meta("method"));
  set.spec.group = parse_group(meta("group"));
  if (set.spec.group == PruneGroup::nm) {
    set.spec.nm = parse_nm(meta("nm"));
    set.spec.sparsity =
        1.0 - static_cast<double>(set.spec.nm->n) / static_cast<double>(set.spec.nm->m);
  } else {
    set.spec.sparsity = parse_double(meta("sparsity"), "sparsity");
  }
  set.stats_seed = meta("stats_seed");
  set.stats_corpus_fp = meta("stats_corpus_fp");

  constexpr std::string_view suffix = ".mask";
  for (const auto& [key, record] : c.tensors) {
    if (!std::string_view(key).ends_with(suffix))
      invalid("unexpected tensor \"" + key + "\" in mask file");
    const std::string name = key.substr(0, key.size() - suffix.size());
    const std::string& shape = meta(key + ".shape");
    const auto comma = shape.find(',');
    if (comma == std::string::npos)
      invalid("bad shape \"" + shape + "\" for mask \"" + name + "\"");
    std::size_t rows = 0, cols = 0;
    auto r1 = std::from_chars(shape.data(), shape.data() + comma, rows);
    auto r2 = std::from_chars(shape.data() + comma + 1, shape.data() + shape.size(), cols);
    if (r1.ec != std::errc() || r1.ptr != shape.data() + comma || r2.ec != std::errc() ||
        r2.ptr != shape.data() + shape.size())
      invalid("bad shape \"" + shape + "\" for mask \"" + name + "\"");
    auto bits = record.u8();
    PruneMask mask = PruneMask::from_bits(rows, cols, {bits.begin(), bits.end()});
    mask.spec = set.spec;
    set.masks.emplace(name, std::move(mask));
  }
  return set;
}

MaskSet read_mask_set(const std::filesystem::path& path) {
  const Container c = read_container(path);
  try {
    return mask_set_from_container(c);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

void write_mask_set(const MaskSet& set, const std::filesystem::path& path) {
  write_container(mask_set_to_container(set), path);
}

}  // namespace forge
