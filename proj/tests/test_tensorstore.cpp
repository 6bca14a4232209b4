// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstring>
#include <string>

#include "doctest.h"
#include "forge/error.hpp"
#include "forge/rng.hpp"
#include "forge/tensorstore.hpp"
#include "json.hpp"
#include "oracles.hpp"

using namespace forge;

namespace {

std::string header_of(const std::vector<std::uint8_t>& bytes) {
  std::uint64_t n = 0;
  std::memcpy(&n, bytes.data(), 8);
  return std::string(bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(n));
}

ModelManifest small_manifest() {
  ModelManifest m;
  m.vocab_size = 16;
  m.d_model = 8;
  m.n_layers = 1;
  m.n_heads = 2;
  m.d_ff = 12;
  m.max_seq_len = 16;
  return m;
}

}  // namespace

TEST_CASE("splitmix64 matches the reference sequence for seed 0") {
  // First outputs of the published reference implementation.
  SplitMix64 rng(0);
  CHECK(rng.next() == 0xe220a8397b1dcdafull);
  CHECK(rng.next() == 0x6e789e6aa1b965f4ull);
  CHECK(rng.next() == 0x06c45d188009454full);
}

TEST_CASE("fnv1a64 known vectors") {
  CHECK(fnv1a64(std::string_view("")) == 0xcbf29ce484222325ull);
  CHECK(fnv1a64(std::string_view("a")) == 0xaf63dc4c8601ec8cull);
}

TEST_CASE("single tensor round trip") {
  Container c;
  c.add("w", TensorRecord({2, 2}, std::vector<float>{1, 2, 3, 4}));
  const auto bytes = serialize_container(c);
  const Container back = parse_container(bytes);
  REQUIRE(back.tensors.size() == 1);
  CHECK(back.at("w").shape() == std::vector<std::uint64_t>{2, 2});
  const auto v = back.at("w").f32();
  CHECK(std::vector<float>(v.begin(), v.end()) == std::vector<float>{1, 2, 3, 4});
  CHECK(back.metadata.empty());
}

TEST_CASE("write(read(f)) preserves payloads and header JSON") {
  auto dir = oracle::temp_dir("ts_rt");
  Container c = generate_tiny_model(small_manifest(), 3);
  c.add("mask.bits", TensorRecord({3}, std::vector<std::uint8_t>{1, 2, 255}));
  write_container(c, dir / "a.safetensors");
  const Container back = read_container(dir / "a.safetensors");
  CHECK(back == c);
  write_container(back, dir / "b.safetensors");
  const auto a = read_file_bytes(dir / "a.safetensors");
  const auto b = read_file_bytes(dir / "b.safetensors");
  CHECK(a == b);
  CHECK(nlohmann::json::parse(header_of(a)) == nlohmann::json::parse(header_of(b)));
}

TEST_CASE("emitted offsets are ascending, contiguous and cover the data region") {
  Container c = generate_tiny_model(small_manifest(), 11);
  const auto bytes = serialize_container(c);
  const auto header = nlohmann::json::parse(header_of(bytes));
  std::uint64_t cursor = 0;
  for (const auto& [name, rec] : c.tensors) {  // name order
    const auto offs = header.at(name).at("data_offsets");
    CHECK(offs[0].get<std::uint64_t>() == cursor);
    cursor = offs[1].get<std::uint64_t>();
    CHECK(cursor - offs[0].get<std::uint64_t>() == rec.byte_size());
  }
  CHECK(8 + header_of(bytes).size() + cursor == bytes.size());
  CHECK(header_of(bytes).size() % 8 == 0);
}

TEST_CASE("serialization is deterministic and name ordered") {
  Container c;
  c.add("b", TensorRecord({1}, std::vector<float>{2}));
  c.add("a", TensorRecord({1}, std::vector<float>{1}));
  const auto x = serialize_container(c);
  const auto y = serialize_container(c);
  CHECK(x == y);
  const std::string h = header_of(x);
  CHECK(h.find("\"a\"") < h.find("\"b\""));
  // "a" is first in the data region.
  float first = 0;
  std::memcpy(&first, x.data() + 8 + h.size(), 4);
  CHECK(first == 1.0f);
}

TEST_CASE("empty container") {
  const auto bytes = serialize_container(Container{});
  CHECK(nlohmann::json::parse(header_of(bytes)) == nlohmann::json::object());
  CHECK(bytes.size() == 8 + header_of(bytes).size());
  CHECK(parse_container(bytes).tensors.empty());
}

TEST_CASE("duplicate names are rejected") {
  Container c;
  c.add("w", TensorRecord({1}, std::vector<float>{1}));
  CHECK_THROWS_WITH_AS(c.add("w", TensorRecord({1}, std::vector<float>{2})),
                       doctest::Contains("duplicate"), Error);
}

TEST_CASE("shape must match the buffer") {
  CHECK_THROWS_AS(TensorRecord({2, 3}, std::vector<float>(5)), Error);
}

TEST_CASE("parse errors") {
  Container c;
  c.add("w", TensorRecord({2}, std::vector<float>{1, 2}));
  auto good = serialize_container(c);

  SUBCASE("header length larger than the file") {
    auto bad = good;
    bad[0] = 0xFF;
    bad[1] = 0xFF;
    CHECK_THROWS_WITH(parse_container(bad), doctest::Contains("malformed header length"));
  }
  SUBCASE("truncated prefix") {
    std::vector<std::uint8_t> bad(good.begin(), good.begin() + 4);
    CHECK_THROWS_WITH(parse_container(bad), doctest::Contains("malformed header length"));
  }
  SUBCASE("header not JSON") {
    auto bad = good;
    bad[8] = '!';
    CHECK_THROWS_WITH(parse_container(bad), doctest::Contains("not valid JSON"));
  }
  auto with_header = [](const std::string& header, std::size_t data_bytes) {
    std::vector<std::uint8_t> out(8);
    const std::uint64_t n = header.size();
    std::memcpy(out.data(), &n, 8);
    out.insert(out.end(), header.begin(), header.end());
    out.resize(out.size() + data_bytes, 0);
    return out;
  };
  SUBCASE("range exceeding the file") {
    auto bad = with_header(R"({"w":{"dtype":"F32","shape":[2],"data_offsets":[0,8]}})", 4);
    CHECK_THROWS_WITH(parse_container(bad), doctest::Contains("exceeds file size"));
  }
  SUBCASE("overlapping ranges") {
    auto bad = with_header(R"({"a":{"dtype":"F32","shape":[2],"data_offsets":[0,8]},)"
                           R"("b":{"dtype":"F32","shape":[2],"data_offsets":[4,12]}})", 12);
    CHECK_THROWS_WITH(parse_container(bad), doctest::Contains("overlaps"));
  }
  SUBCASE("gap between ranges") {
    auto bad = with_header(R"({"a":{"dtype":"F32","shape":[1],"data_offsets":[4,8]}})", 8);
    CHECK_THROWS_WITH(parse_container(bad), doctest::Contains("out of order"));
  }
  SUBCASE("reversed range") {
    auto bad = with_header(R"({"a":{"dtype":"F32","shape":[1],"data_offsets":[4,0]}})", 4);
    CHECK_THROWS_WITH(parse_container(bad), doctest::Contains("out of order"));
  }
  SUBCASE("unsupported dtype") {
    auto bad = with_header(R"({"a":{"dtype":"F16","shape":[2],"data_offsets":[0,4]}})", 4);
    CHECK_THROWS_WITH(parse_container(bad), doctest::Contains("unsupported dtype"));
  }
}

TEST_CASE("manifest validation and JSON") {
  ModelManifest m = small_manifest();
  CHECK(ModelManifest::from_json(m.to_json()) == m);

  m.n_heads = 3;
  CHECK_THROWS_WITH_AS(m.validate(), doctest::Contains("not divisible"), Error);

  CHECK_THROWS_WITH(ModelManifest::from_json(R"({"vocab_size":16})"),
                    doctest::Contains("missing field"));
  auto j = nlohmann::json::parse(small_manifest().to_json());
  j["extra"] = 1;
  CHECK_THROWS_WITH(ModelManifest::from_json(j.dump()), doctest::Contains("unknown field"));
}

TEST_CASE("tiny model generation") {
  const ModelManifest m = small_manifest();
  const Container a = generate_tiny_model(m, 7);
  const Container b = generate_tiny_model(m, 7);
  const Container c = generate_tiny_model(m, 8);
  CHECK(serialize_container(a) == serialize_container(b));
  bool differs = false;
  for (const auto& [name, rec] : a.tensors) differs |= !(rec == c.at(name));
  CHECK(differs);

  validate_checkpoint(a, m);
  CHECK(embedded_manifest(a) == m);
  CHECK(a.contains("lm_head.weight"));
  CHECK(prunable_tensor_names(m).size() == 7);

  // Projection magnitudes respect the 1/sqrt(d_model) scale.
  const float bound = 1.0f / std::sqrt(8.0f);
  for (float v : a.at("blocks.0.attn.q_proj.weight").f32()) CHECK(std::fabs(v) <= bound);
  for (float v : a.at("blocks.0.attn_norm.weight").f32()) CHECK(v == 1.0f);

  ModelManifest bad = m;
  bad.n_heads = 3;
  CHECK_THROWS_AS(generate_tiny_model(bad, 7), Error);

  ModelManifest tied = m;
  tied.tie_embeddings = true;
  CHECK_FALSE(generate_tiny_model(tied, 7).contains("lm_head.weight"));
}

TEST_CASE("tensor name helpers") {
  CHECK(is_prunable_name("blocks.3.attn.q_proj.weight"));
  CHECK(is_prunable_name("blocks.12.mlp.down_proj.weight"));
  CHECK_FALSE(is_prunable_name("blocks.3.attn_norm.weight"));
  CHECK_FALSE(is_prunable_name("lm_head.weight"));
  CHECK(block_index("blocks.12.mlp.up_proj.weight") == 12);
  CHECK_FALSE(block_index("tok_emb.weight").has_value());
}

TEST_CASE("checkpoint validation names the offending tensor") {
  const ModelManifest m = small_manifest();
  Container c = generate_tiny_model(m, 1);
  c.tensors.erase("final_norm.weight");
  CHECK_THROWS_WITH(validate_checkpoint(c, m), doctest::Contains("final_norm.weight"));
}
