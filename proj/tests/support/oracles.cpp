// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>
#include <set>
#include <stdexcept>
#include <tuple>

#include <unistd.h>

#include "json.hpp"

namespace oracle {

namespace {

std::vector<double> to_double(std::span<const float> v) { return {v.begin(), v.end()}; }

std::vector<double> matvec(const forge::TensorRecord& w, const std::vector<double>& x) {
  const auto rows = w.shape()[0], cols = w.shape()[1];
  const auto data = w.f32();
  std::vector<double> y(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) y[r] += static_cast<double>(data[r * cols + c]) * x[c];
  return y;
}

std::vector<double> rmsnorm(const std::vector<double>& x, std::span<const float> w, double eps) {
  double ms = 0.0;
  for (double v : x) ms += v * v;
  ms /= static_cast<double>(x.size());
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] / std::sqrt(ms + eps) * w[i];
  return y;
}

}  // namespace

SingleTokenPass single_token_forward(const forge::Container& ckpt,
                                     const forge::ModelManifest& m, int token) {
  SingleTokenPass pass;
  const auto D = static_cast<std::size_t>(m.d_model);
  auto emb = ckpt.at("tok_emb.weight").f32();
  std::vector<double> x = to_double(emb.subspan(static_cast<std::size_t>(token) * D, D));
  for (int i = 0; i < m.n_layers; ++i) {
    const std::string p = "blocks." + std::to_string(i) + ".";
    auto h = rmsnorm(x, ckpt.at(p + "attn_norm.weight").f32(), m.norm_eps);
    for (const char* t : {"q_proj", "k_proj", "v_proj"}) pass.inputs[p + "attn." + t + ".weight"] = h;
    const auto v = matvec(ckpt.at(p + "attn.v_proj.weight"), h);
    pass.inputs[p + "attn.o_proj.weight"] = v;
    const auto o = matvec(ckpt.at(p + "attn.o_proj.weight"), v);
    for (std::size_t j = 0; j < D; ++j) x[j] += o[j];
    auto h2 = rmsnorm(x, ckpt.at(p + "mlp_norm.weight").f32(), m.norm_eps);
    pass.inputs[p + "mlp.gate_proj.weight"] = h2;
    pass.inputs[p + "mlp.up_proj.weight"] = h2;
    const auto g = matvec(ckpt.at(p + "mlp.gate_proj.weight"), h2);
    const auto u = matvec(ckpt.at(p + "mlp.up_proj.weight"), h2);
    std::vector<double> act(g.size());
    for (std::size_t j = 0; j < g.size(); ++j) act[j] = g[j] / (1.0 + std::exp(-g[j])) * u[j];
    pass.inputs[p + "mlp.down_proj.weight"] = act;
    const auto d = matvec(ckpt.at(p + "mlp.down_proj.weight"), act);
    for (std::size_t j = 0; j < D; ++j) x[j] += d[j];
  }
  const auto hf = rmsnorm(x, ckpt.at("final_norm.weight").f32(), m.norm_eps);
  pass.logits = matvec(ckpt.at(m.tie_embeddings ? "tok_emb.weight" : "lm_head.weight"), hf);
  return pass;
}

std::vector<bool> sort_mask(const std::vector<float>& scores, std::size_t rows,
                            std::size_t cols, forge::PruneGroup group, double sparsity,
                            int n, int m) {
  std::vector<bool> kept(rows * cols, true);
  auto prune_group = [&](std::vector<std::size_t> members, std::size_t k) {
    std::vector<std::pair<float, std::size_t>> keyed;
    for (auto i : members) keyed.emplace_back(scores[i], i);
    std::sort(keyed.begin(), keyed.end());  // lexicographic: score, then index
    for (std::size_t i = 0; i < k; ++i) kept[keyed[i].second] = false;
  };
  if (group == forge::PruneGroup::per_row) {
    const auto k = static_cast<std::size_t>(std::floor(sparsity * static_cast<double>(cols)));
    for (std::size_t r = 0; r < rows; ++r) {
      std::vector<std::size_t> members;
      for (std::size_t c = 0; c < cols; ++c) members.push_back(r * cols + c);
      prune_group(members, k);
    }
  } else if (group == forge::PruneGroup::per_layer) {
    std::vector<std::size_t> members(rows * cols);
    for (std::size_t i = 0; i < members.size(); ++i) members[i] = i;
    prune_group(members, static_cast<std::size_t>(
                             std::floor(sparsity * static_cast<double>(rows * cols))));
  } else {
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c0 = 0; c0 < cols; c0 += static_cast<std::size_t>(m)) {
        std::vector<std::size_t> members;
        for (int j = 0; j < m; ++j) members.push_back(r * cols + c0 + static_cast<std::size_t>(j));
        prune_group(members, static_cast<std::size_t>(m - n));
      }
  }
  return kept;
}

double set_jaccard(const forge::PruneMask& a, const forge::PruneMask& b) {
  std::set<std::size_t> ka, kb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.kept(i)) ka.insert(i);
    if (b.kept(i)) kb.insert(i);
  }
  std::vector<std::size_t> inter, uni;
  std::set_intersection(ka.begin(), ka.end(), kb.begin(), kb.end(), std::back_inserter(inter));
  std::set_union(ka.begin(), ka.end(), kb.begin(), kb.end(), std::back_inserter(uni));
  if (uni.empty()) return 0.0;
  return 1.0 - static_cast<double>(inter.size()) / static_cast<double>(uni.size());
}

long double nll_long_double(const forge::Matrix& logits, std::span<const int> targets) {
  long double total = 0.0L;
  for (std::size_t t = 0; t < logits.rows; ++t) {
    long double z = 0.0L;
    for (std::size_t v = 0; v < logits.cols; ++v) z += std::exp(static_cast<long double>(logits.at(t, v)));
    total += std::log(z) - static_cast<long double>(logits.at(t, static_cast<std::size_t>(targets[t])));
  }
  return total / static_cast<long double>(logits.rows);
}

RefFile read_safetensors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 8) throw std::runtime_error("file shorter than 8 bytes");
  RefFile f;
  for (int i = 7; i >= 0; --i) f.header_len = (f.header_len << 8) | bytes[static_cast<std::size_t>(i)];
  if (8 + f.header_len > bytes.size()) throw std::runtime_error("header length exceeds file");
  const std::string header(bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(f.header_len));
  const auto j = nlohmann::json::parse(header);
  if (!j.is_object()) throw std::runtime_error("header is not an object");
  const std::size_t data_start = 8 + f.header_len;
  const std::size_t data_len = bytes.size() - data_start;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> ranges;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() == "__metadata__") {
      for (auto m = it->begin(); m != it->end(); ++m) {
        if (!m->is_string()) throw std::runtime_error("metadata value not a string");
        f.metadata[m.key()] = m->get<std::string>();
      }
      continue;
    }
    const auto& e = it.value();
    if (!e.is_object() || e.size() != 3 || !e.contains("dtype") || !e.contains("shape") ||
        !e.contains("data_offsets"))
      throw std::runtime_error("entry " + it.key() + " lacks exactly dtype/shape/data_offsets");
    RefTensor t;
    t.dtype = e["dtype"].get<std::string>();
    std::size_t elem = 0;
    if (t.dtype == "F32") elem = 4;
    else if (t.dtype == "U8") elem = 1;
    else throw std::runtime_error("unexpected dtype " + t.dtype);
    std::uint64_t numel = 1;
    for (const auto& d : e["shape"]) {
      if (!d.is_number_unsigned()) throw std::runtime_error("shape entry not unsigned");
      t.shape.push_back(d.get<std::uint64_t>());
      numel *= t.shape.back();
    }
    if (!e["data_offsets"].is_array() || e["data_offsets"].size() != 2)
      throw std::runtime_error("data_offsets must be a pair");
    t.begin = e["data_offsets"][0].get<std::uint64_t>();
    t.end = e["data_offsets"][1].get<std::uint64_t>();
    if (t.end < t.begin || t.end > data_len) throw std::runtime_error("bad range for " + it.key());
    if (t.end - t.begin != numel * elem) throw std::runtime_error("range/shape mismatch for " + it.key());
    t.bytes.assign(bytes.begin() + static_cast<std::ptrdiff_t>(data_start + t.begin),
                   bytes.begin() + static_cast<std::ptrdiff_t>(data_start + t.end));
    ranges.emplace_back(t.begin, t.end);
    f.tensors.emplace(it.key(), std::move(t));
  }
  std::sort(ranges.begin(), ranges.end());
  std::uint64_t cursor = 0;
  for (auto [b, e] : ranges) {
    if (b != cursor) throw std::runtime_error("ranges overlap or leave a gap");
    cursor = e;
  }
  if (cursor != data_len) throw std::runtime_error("ranges do not cover the data region");
  return f;
}

Pgm read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  auto skip_ws = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&] {
    skip_ws();
    if (pos >= bytes.size() || !std::isdigit(bytes[pos])) throw std::runtime_error("expected number");
    std::size_t v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) v = v * 10 + (bytes[pos++] - '0');
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw std::runtime_error("not P5");
  pos = 2;
  Pgm img;
  img.width = number();
  img.height = number();
  img.maxval = static_cast<int>(number());
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw std::runtime_error("missing separator");
  ++pos;
  if (img.maxval <= 0 || img.maxval > 255) throw std::runtime_error("unsupported maxval");
  if (bytes.size() - pos != img.width * img.height) throw std::runtime_error("pixel count mismatch");
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
  return img;
}

std::filesystem::path temp_dir(const std::string& tag) {
  static int counter = 0;
  auto dir = std::filesystem::temp_directory_path() /
             ("forge_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::vector<float> random_floats(std::uint64_t seed, std::size_t n, float lo, float hi) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<float> dist(lo, hi);
  std::vector<float> v(n);
  for (auto& x : v) x = dist(gen);
  return v;
}

}  // namespace oracle
