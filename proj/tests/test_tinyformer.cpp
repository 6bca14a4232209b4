// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstring>

#include "doctest.h"
#include "forge/error.hpp"
#include "forge/pruner.hpp"
#include "forge/tinyformer.hpp"
#include "oracles.hpp"

using namespace forge;

namespace {

ModelManifest toy_manifest(std::int64_t layers = 1, bool tied = false) {
  ModelManifest m;
  m.vocab_size = 16;
  m.d_model = 8;
  m.n_heads = 2;
  m.n_layers = layers;
  m.d_ff = 12;
  m.max_seq_len = 16;
  m.tie_embeddings = tied;
  return m;
}

bool bitwise_equal(const Matrix& a, const Matrix& b) {
  return a.rows == b.rows && a.cols == b.cols &&
         std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(float)) == 0;
}

MaskSet random_masks(const Container& ckpt, const ModelManifest& m, std::uint64_t seed) {
  MaskSet set;
  std::uint64_t s = seed;
  for (const auto& name : prunable_tensor_names(m)) {
    const auto& w = ckpt.at(name);
    const auto r = oracle::random_floats(s++, w.numel(), 0.0f, 1.0f);
    PruneMask mask(w.rows(), w.cols(), true);
    for (std::size_t i = 0; i < r.size(); ++i) mask.set(i, r[i] >= 0.5f);
    set.masks.emplace(name, std::move(mask));
  }
  return set;
}

}  // namespace

TEST_CASE("logits shape contract") {
  const auto m = toy_manifest();
  const Container ckpt = generate_tiny_model(m, 1);
  const Sequence tokens{3, 1, 4, 1, 5};
  const Matrix logits = forward(ckpt, m, tokens, {});
  CHECK(logits.rows == 5);
  CHECK(logits.cols == 16);
  for (float v : logits.data) CHECK(std::isfinite(v));
}

TEST_CASE("forward rejects bad inputs") {
  const auto m = toy_manifest();
  const Container ckpt = generate_tiny_model(m, 1);
  CHECK_THROWS_WITH_AS(forward(ckpt, m, Sequence{16}, {}), doctest::Contains("out of range"), Error);
  CHECK_THROWS_WITH(forward(ckpt, m, Sequence(17, 1), {}), doctest::Contains("exceeds max_seq_len"));
  ForwardConfig short_cfg;
  short_cfg.max_seq_len = 4;
  CHECK_THROWS(forward(ckpt, m, Sequence(5, 1), short_cfg));
  CHECK_THROWS(forward(ckpt, m, Sequence{}, {}));

  MaskSet bad;
  bad.masks.emplace("blocks.0.attn.q_proj.weight", PruneMask(4, 8, true));
  ForwardConfig cfg;
  cfg.masks = &bad;
  CHECK_THROWS_WITH(forward(ckpt, m, Sequence{1}, cfg), doctest::Contains("q_proj"));
}

TEST_CASE("single-token pass matches the hand-rolled reference") {
  for (bool tied : {false, true}) {
    const auto m = toy_manifest(2, tied);
    const Container ckpt = generate_tiny_model(m, 21);
    for (int token : {0, 7, 15}) {
      CapturedActivations cap;
      ForwardConfig cfg;
      cfg.capture = &cap;
      const Matrix logits = forward(ckpt, m, Sequence{token}, cfg);
      const auto ref = oracle::single_token_forward(ckpt, m, token);
      CHECK(cap.token_count == 1);
      REQUIRE(cap.sum_sq.size() == 14);
      for (const auto& [name, input] : ref.inputs) {
        const auto& acc = cap.sum_sq.at(name);
        REQUIRE(acc.size() == input.size());
        for (std::size_t j = 0; j < input.size(); ++j)
          CHECK(acc[j] == doctest::Approx(input[j] * input[j]).epsilon(1e-5));
      }
      for (std::size_t v = 0; v < ref.logits.size(); ++v)
        CHECK(logits.at(0, v) == doctest::Approx(ref.logits[v]).epsilon(1e-4));
    }
  }
}

TEST_CASE("causality: changing token t leaves earlier logits untouched") {
  const auto m = toy_manifest(2);
  const Container ckpt = generate_tiny_model(m, 5);
  Sequence a{1, 2, 3, 4, 5, 6, 7, 8};
  const Matrix la = forward(ckpt, m, a, {});
  for (std::size_t t = 0; t < a.size(); ++t) {
    Sequence b = a;
    b[t] = (b[t] + 5) % 16;
    const Matrix lb = forward(ckpt, m, b, {});
    for (std::size_t u = 0; u < t; ++u)
      CHECK(std::memcmp(la.row(u).data(), lb.row(u).data(), la.cols * sizeof(float)) == 0);
  }
}

TEST_CASE("rms norm with unit weight has unit mean square") {
  const auto x = oracle::random_floats(3, 64, -5.0f, 5.0f);
  std::vector<float> w(64, 1.0f), y(64);
  rms_norm(x, w, 1e-6f, y);
  double ms = 0;
  for (float v : y) ms += static_cast<double>(v) * v;
  CHECK(ms / 64.0 == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("rotary embedding preserves norms and is identity at position 0") {
  auto q = oracle::random_floats(9, 16, -1.0f, 1.0f);
  auto norm = [](const std::vector<float>& v) {
    double s = 0;
    for (float x : v) s += static_cast<double>(x) * x;
    return std::sqrt(s);
  };
  const double before = norm(q);
  auto q0 = q;
  apply_rope(q0, 0);
  CHECK(q0 == q);
  for (std::size_t pos : {1u, 7u, 100u, 4095u}) {
    auto r = q;
    apply_rope(r, pos);
    CHECK(norm(r) == doctest::Approx(before).epsilon(1e-5));
  }
}

TEST_CASE("identity mask set leaves logits bitwise equal") {
  const auto m = toy_manifest(2);
  const Container ckpt = generate_tiny_model(m, 4);
  MaskSet ones;
  for (const auto& name : prunable_tensor_names(m)) {
    const auto& w = ckpt.at(name);
    ones.masks.emplace(name, PruneMask(w.rows(), w.cols(), true));
  }
  ForwardConfig cfg;
  cfg.masks = &ones;
  const Sequence tokens{9, 8, 7, 6};
  CHECK(bitwise_equal(forward(ckpt, m, tokens, {}), forward(ckpt, m, tokens, cfg)));
}

TEST_CASE("masked forward equals forward over physically zeroed weights") {
  const auto m = toy_manifest(2);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Container ckpt = generate_tiny_model(m, seed);
    const MaskSet masks = random_masks(ckpt, m, seed * 100);
    Container zeroed = ckpt;
    for (const auto& [name, mask] : masks.masks) zeroed.at(name) = apply_mask(ckpt.at(name), mask);
    ForwardConfig cfg;
    cfg.masks = &masks;
    const Sequence tokens{1, 3, 5, 7, 9, 11};
    CHECK(bitwise_equal(forward(ckpt, m, tokens, cfg), forward(zeroed, m, tokens, {})));
  }
}

TEST_CASE("token count is additive across calls") {
  const auto m = toy_manifest();
  const Container ckpt = generate_tiny_model(m, 2);
  TinyFormer model(ckpt, m);
  CapturedActivations cap;
  model.forward(Sequence{1, 2, 3}, &cap);
  CHECK(cap.token_count == 3);
  model.forward(Sequence{4, 5}, &cap, 0, false);
  CHECK(cap.token_count == 5);
  for (const auto& [name, acc] : cap.sum_sq)
    for (double v : acc) CHECK((v >= 0.0 && std::isfinite(v)));
}

TEST_CASE("nll: near one-hot and uniform rows") {
  Matrix peaked(1, 4);
  peaked.at(0, 0) = 1000.0f;
  CHECK(logits_to_nll(peaked, Sequence{0}) < 1e-6);

  Matrix uniform(3, 16);
  CHECK(logits_to_nll(uniform, Sequence{0, 5, 15}) == doctest::Approx(std::log(16.0)).epsilon(1e-12));
  CHECK(std::log(16.0) == doctest::Approx(2.7726).epsilon(1e-4));

  CHECK_THROWS_WITH(logits_to_nll(uniform, Sequence{0, 1}), doctest::Contains("targets"));
}

TEST_CASE("nll agrees with an extended-precision softmax") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Matrix logits(6, 32);
    logits.data = oracle::random_floats(seed, 6 * 32, -8.0f, 8.0f);
    std::vector<int> targets;
    Sequence t32;
    const auto r = oracle::random_floats(seed + 1000, 6, 0.0f, 31.99f);
    for (float x : r) {
      targets.push_back(static_cast<int>(x));
      t32.push_back(static_cast<TokenId>(x));
    }
    const long double ref = oracle::nll_long_double(logits, targets);
    CHECK(std::fabs(logits_to_nll(logits, t32) - static_cast<double>(ref)) < 1e-5);
  }
}
