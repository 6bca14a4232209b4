// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "forge/tinyformer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "forge/error.hpp"
#include "forge/pruner.hpp"

namespace forge {

namespace {

constexpr double kRopeBase = 10000.0;

// Fixed eight-lane reduction order so results are reproducible while the
// compiler is still free to vectorize the lanes.
float dot(const float* a, const float* b, std::size_t n) {
  float acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (int l = 0; l < 8; ++l) acc[l] += a[i + l] * b[i + l];
  float tail = 0.0f;
  for (; i < n; ++i) tail += a[i] * b[i];
  return (((acc[0] + acc[1]) + (acc[2] + acc[3])) +
          ((acc[4] + acc[5]) + (acc[6] + acc[7]))) +
         tail;
}

// out[r, :] = W · in[r, :] for a weight of shape (out_features × in_features).
void linear(const Matrix& in, std::span<const float> weight,
            std::size_t out_features, Matrix& out) {
  const std::size_t in_features = in.cols;
  out = Matrix(in.rows, out_features);
  for (std::size_t r = 0; r < in.rows; ++r) {
    const float* x = in.data.data() + r * in_features;
    float* y = out.data.data() + r * out_features;
    for (std::size_t o = 0; o < out_features; ++o)
      y[o] = dot(weight.data() + o * in_features, x, in_features);
  }
}

void accumulate(CapturedActivations* capture, const std::string& name,
                const Matrix& input) {
  if (!capture) return;
  auto& acc = capture->sum_sq[name];
  if (acc.empty()) acc.assign(input.cols, 0.0);
  if (acc.size() != input.cols) fail("activation accumulator width mismatch for " + name);
  for (std::size_t r = 0; r < input.rows; ++r) {
    const auto row = input.row(r);
    for (std::size_t j = 0; j < input.cols; ++j) {
      const double x = row[j];
      acc[j] += x * x;
    }
  }
}

float rope_angle_cos(std::size_t pos, std::size_t i, std::size_t head_dim, float* sin_out) {
  const double freq = std::pow(kRopeBase, -2.0 * static_cast<double>(i) /
                                              static_cast<double>(head_dim));
  const double theta = static_cast<double>(pos) * freq;
  *sin_out = static_cast<float>(std::sin(theta));
  return static_cast<float>(std::cos(theta));
}

}  // namespace

void CapturedActivations::merge(const CapturedActivations& other) {
  for (const auto& [name, acc] : other.sum_sq) {
    auto& mine = sum_sq[name];
    if (mine.empty()) mine.assign(acc.size(), 0.0);
    if (mine.size() != acc.size()) invalid("cannot merge accumulators for " + name);
    for (std::size_t j = 0; j < acc.size(); ++j) mine[j] += acc[j];
  }
  token_count += other.token_count;
}

void rms_norm(std::span<const float> x, std::span<const float> weight,
              float eps, std::span<float> out) {
  float ms = 0.0f;
  for (float v : x) ms += v * v;
  ms /= static_cast<float>(x.size());
  const float inv = 1.0f / std::sqrt(ms + eps);
  for (std::size_t j = 0; j < x.size(); ++j) out[j] = x[j] * inv * weight[j];
}

void apply_rope(std::span<float> head, std::size_t position) {
  for (std::size_t i = 0; i < head.size() / 2; ++i) {
    float s;
    const float c = rope_angle_cos(position, i, head.size(), &s);
    const float x0 = head[2 * i];
    const float x1 = head[2 * i + 1];
    head[2 * i] = x0 * c - x1 * s;
    head[2 * i + 1] = x0 * s + x1 * c;
  }
}

std::span<const float> TinyFormer::weight(const std::string& name) {
  auto it = masked_.find(name);
  if (it != masked_.end()) return it->second;
  return checkpoint_.at(name).f32();
}

TinyFormer::TinyFormer(const Container& checkpoint, const ModelManifest& manifest,
                       const MaskSet* masks)
    : checkpoint_(checkpoint), manifest_(manifest) {
  manifest_.validate();
  validate_checkpoint(checkpoint_, manifest_);
  if (masks) {
    masks->check_against(checkpoint_);
    for (const auto& [name, mask] : masks->masks) {
      const TensorRecord masked = apply_mask(checkpoint_.at(name), mask);
      auto values = masked.f32();
      masked_.emplace(name, std::vector<float>(values.begin(), values.end()));
    }
  }

  tok_emb_ = weight("tok_emb.weight");
  final_norm_ = weight("final_norm.weight");
  lm_head_ = manifest_.tie_embeddings ? tok_emb_ : weight("lm_head.weight");

  const auto names = prunable_tensor_names(manifest_);
  for (std::int64_t i = 0; i < manifest_.n_layers; ++i) {
    const std::string p = "blocks." + std::to_string(i) + ".";
    Block b;
    for (int k = 0; k < 7; ++k) b.names[k] = names[static_cast<std::size_t>(i) * 7 + k];
    b.attn_norm = weight(p + "attn_norm.weight");
    b.mlp_norm = weight(p + "mlp_norm.weight");
    b.q = weight(b.names[0]);
    b.k = weight(b.names[1]);
    b.v = weight(b.names[2]);
    b.o = weight(b.names[3]);
    b.gate = weight(b.names[4]);
    b.up = weight(b.names[5]);
    b.down = weight(b.names[6]);
    blocks_.push_back(std::move(b));
  }

  const auto hd = static_cast<std::size_t>(manifest_.head_dim());
  const auto max_len = static_cast<std::size_t>(manifest_.max_seq_len);
  rope_cos_.resize(max_len * hd / 2);
  rope_sin_.resize(max_len * hd / 2);
  for (std::size_t pos = 0; pos < max_len; ++pos)
    for (std::size_t i = 0; i < hd / 2; ++i)
      rope_cos_[pos * hd / 2 + i] = rope_angle_cos(pos, i, hd, &rope_sin_[pos * hd / 2 + i]);
}

Matrix TinyFormer::forward(std::span<const TokenId> tokens,
                           CapturedActivations* capture,
                           std::int64_t max_seq_len, bool compute_logits) const {
  const auto& m = manifest_;
  const std::int64_t limit =
      max_seq_len > 0 ? std::min(max_seq_len, m.max_seq_len) : m.max_seq_len;
  if (tokens.empty()) invalid("forward: empty token sequence");
  if (static_cast<std::int64_t>(tokens.size()) > limit)
    invalid("forward: sequence length " + std::to_string(tokens.size()) +
            " exceeds max_seq_len " + std::to_string(limit));
  for (std::size_t t = 0; t < tokens.size(); ++t)
    if (tokens[t] < 0 || tokens[t] >= m.vocab_size)
      invalid("forward: token id " + std::to_string(tokens[t]) + " at position " +
              std::to_string(t) + " is out of range for vocab " +
              std::to_string(m.vocab_size));

  const std::size_t len = tokens.size();
  const auto D = static_cast<std::size_t>(m.d_model);
  const auto F = static_cast<std::size_t>(m.d_ff);
  const auto H = static_cast<std::size_t>(m.n_heads);
  const auto hd = static_cast<std::size_t>(m.head_dim());
  const auto eps = static_cast<float>(m.norm_eps);
  const float attn_scale = 1.0f / std::sqrt(static_cast<float>(hd));

  Matrix x(len, D);
  for (std::size_t t = 0; t < len; ++t) {
    const auto src = tok_emb_.subspan(static_cast<std::size_t>(tokens[t]) * D, D);
    std::copy(src.begin(), src.end(), x.row(t).begin());
  }

  Matrix h(len, D), q, k, v, attn(len, D), proj, gate, up;
  std::vector<float> scores(len);
  for (const Block& b : blocks_) {
    for (std::size_t t = 0; t < len; ++t) rms_norm(x.row(t), b.attn_norm, eps, h.row(t));
    for (int i = 0; i < 3; ++i) accumulate(capture, b.names[i], h);
    linear(h, b.q, D, q);
    linear(h, b.k, D, k);
    linear(h, b.v, D, v);
    for (std::size_t t = 0; t < len; ++t) {
      for (std::size_t head = 0; head < H; ++head) {
        for (auto* mat : {&q, &k}) {
          float* vec = mat->data.data() + t * D + head * hd;
          for (std::size_t i = 0; i < hd / 2; ++i) {
            const float c = rope_cos_[t * hd / 2 + i];
            const float s = rope_sin_[t * hd / 2 + i];
            const float x0 = vec[2 * i];
            const float x1 = vec[2 * i + 1];
            vec[2 * i] = x0 * c - x1 * s;
            vec[2 * i + 1] = x0 * s + x1 * c;
          }
        }
      }
    }

    for (std::size_t head = 0; head < H; ++head) {
      const std::size_t off = head * hd;
      for (std::size_t t = 0; t < len; ++t) {
        const float* qt = q.data.data() + t * D + off;
        float mx = -std::numeric_limits<float>::infinity();
        for (std::size_t u = 0; u <= t; ++u) {
          scores[u] = dot(qt, k.data.data() + u * D + off, hd) * attn_scale;
          mx = std::max(mx, scores[u]);
        }
        float denom = 0.0f;
        for (std::size_t u = 0; u <= t; ++u) {
          scores[u] = std::exp(scores[u] - mx);
          denom += scores[u];
        }
        float* out = attn.data.data() + t * D + off;
        std::fill(out, out + hd, 0.0f);
        for (std::size_t u = 0; u <= t; ++u) {
          const float p = scores[u] / denom;
          const float* vu = v.data.data() + u * D + off;
          for (std::size_t j = 0; j < hd; ++j) out[j] += p * vu[j];
        }
      }
    }
    accumulate(capture, b.names[3], attn);
    linear(attn, b.o, D, proj);
    for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] += proj.data[i];

    for (std::size_t t = 0; t < len; ++t) rms_norm(x.row(t), b.mlp_norm, eps, h.row(t));
    accumulate(capture, b.names[4], h);
    accumulate(capture, b.names[5], h);
    linear(h, b.gate, F, gate);
    linear(h, b.up, F, up);
    for (std::size_t i = 0; i < gate.data.size(); ++i) {
      const float g = gate.data[i];
      gate.data[i] = g / (1.0f + std::exp(-g)) * up.data[i];
    }
    accumulate(capture, b.names[6], gate);
    linear(gate, b.down, D, proj);
    for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] += proj.data[i];
  }
  if (capture) capture->token_count += len;

  if (!compute_logits) return {};
  for (std::size_t t = 0; t < len; ++t) rms_norm(x.row(t), final_norm_, eps, h.row(t));
  Matrix logits;
  linear(h, lm_head_, static_cast<std::size_t>(m.vocab_size), logits);
  return logits;
}

Matrix forward(const Container& checkpoint, const ModelManifest& manifest,
               std::span<const TokenId> tokens, const ForwardConfig& config) {
  TinyFormer model(checkpoint, manifest, config.masks);
  return model.forward(tokens, config.capture, config.max_seq_len,
                       config.compute_logits);
}

double logits_nll_sum(const Matrix& logits, std::span<const TokenId> targets) {
  if (targets.size() != logits.rows)
    invalid("nll: " + std::to_string(targets.size()) + " targets for " +
            std::to_string(logits.rows) + " logit rows");
  double total = 0.0;
  for (std::size_t t = 0; t < logits.rows; ++t) {
    const auto row = logits.row(t);
    const auto target = targets[t];
    if (target < 0 || static_cast<std::size_t>(target) >= logits.cols)
      invalid("nll: target " + std::to_string(target) + " out of range");
    const double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (float l : row) sum += std::exp(static_cast<double>(l) - mx);
    total += (mx + std::log(sum)) - static_cast<double>(row[static_cast<std::size_t>(target)]);
  }
  return total;
}

double logits_to_nll(const Matrix& logits, std::span<const TokenId> targets) {
  const double sum = logits_nll_sum(logits, targets);
  if (targets.empty()) invalid("nll: no positions");
  return sum / static_cast<double>(targets.size());
}

}  // namespace forge
