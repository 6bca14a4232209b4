// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "forge/calibration.hpp"

#include <charconv>
#include <cmath>
#include <numeric>

#include "forge/error.hpp"
#include "forge/rng.hpp"
#include "json.hpp"

namespace forge {

using json = nlohmann::json;

Tokenizer parse_tokenizer(std::string_view text) {
  if (text == "pretokenized") return Tokenizer::pretokenized;
  if (text == "byte_level") return Tokenizer::byte_level;
  invalid("unknown tokenizer \"" + std::string(text) + "\"");
}

CalibrationCorpus parse_corpus(std::string_view bytes, Tokenizer tokenizer,
                               std::int64_t vocab_size, std::int64_t max_seq_len) {
  if (vocab_size <= 0 || max_seq_len <= 0)
    invalid("corpus: vocab_size and max_seq_len must be positive");
  if (tokenizer == Tokenizer::byte_level && vocab_size < 256)
    invalid("corpus: byte_level tokenizer needs vocab_size >= 256, got " +
            std::to_string(vocab_size));

  CalibrationCorpus corpus;
  corpus.source_fingerprint = fnv1a64(bytes);

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    auto end = bytes.find('\n', pos);
    if (end == std::string_view::npos) end = bytes.size();
    const auto line = bytes.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;

    const std::string where = "corpus line " + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      invalid(where + ": malformed JSON: " + e.what());
    }
    if (!j.is_object()) invalid(where + ": expected a JSON object");

    Sequence seq;
    if (tokenizer == Tokenizer::byte_level) {
      auto it = j.find("text");
      if (it == j.end() || !it->is_string()) invalid(where + ": missing string field \"text\"");
      const auto& text = it->get_ref<const std::string&>();
      seq.reserve(text.size());
      for (unsigned char c : text) seq.push_back(static_cast<TokenId>(c));
    } else {
      auto it = j.find("tokens");
      if (it == j.end() || !it->is_array()) invalid(where + ": missing array field \"tokens\"");
      seq.reserve(it->size());
      for (const auto& tok : *it) {
        if (!tok.is_number_integer()) invalid(where + ": token is not an integer");
        const auto id = tok.get<std::int64_t>();
        if (id < 0 || id >= vocab_size)
          invalid(where + ": token id " + std::to_string(id) +
                  " out of range for vocab " + std::to_string(vocab_size));
        seq.push_back(static_cast<TokenId>(id));
      }
    }
    if (seq.empty()) {
      ++corpus.dropped_empty;
      continue;
    }
    if (static_cast<std::int64_t>(seq.size()) > max_seq_len) {
      seq.resize(static_cast<std::size_t>(max_seq_len));
      ++corpus.truncated;
    }
    corpus.records.push_back(std::move(seq));
  }
  return corpus;
}

CalibrationCorpus load_corpus(const std::filesystem::path& path, Tokenizer tokenizer,
                              std::int64_t vocab_size, std::int64_t max_seq_len) {
  const auto bytes = read_file_bytes(path);
  try {
    return parse_corpus(
        std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()),
        tokenizer, vocab_size, max_seq_len);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

SampleSelection select_samples(const CalibrationCorpus& corpus, std::size_t count,
                               std::uint64_t seed) {
  if (count == 0) invalid("select_samples: count must be at least 1");
  const std::size_t n = corpus.records.size();
  if (n == 0) invalid("select_samples: empty corpus");

  std::vector<std::size_t> slots(n);
  std::iota(slots.begin(), slots.end(), std::size_t{0});
  const std::size_t k = std::min(count, n);
  SplitMix64 rng(seed);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.next_below(n - i));
    std::swap(slots[i], slots[j]);
  }

  SampleSelection out;
  out.requested = count;
  out.shortfall = n < count;
  out.indices.assign(slots.begin(), slots.begin() + static_cast<std::ptrdiff_t>(k));
  out.samples.reserve(k);
  for (auto idx : out.indices) out.samples.push_back(corpus.records[idx]);
  return out;
}

const std::vector<float>* ActivationStats::find(const std::string& tensor) const {
  auto it = norms.find(tensor);
  return it == norms.end() ? nullptr : &it->second;
}

CapturedActivations capture_activations(const Container& checkpoint,
                                        const ModelManifest& manifest,
                                        std::span<const Sequence> samples) {
  TinyFormer model(checkpoint, manifest);
  CapturedActivations captured;
  for (const auto& seq : samples) model.forward(seq, &captured, 0, false);
  return captured;
}

ActivationStats finalize_stats(const CapturedActivations& captured,
                               std::uint64_t sample_count,
                               std::optional<StatsProvenance> provenance) {
  ActivationStats stats;
  for (const auto& [name, acc] : captured.sum_sq) {
    std::vector<float> a(acc.size());
    for (std::size_t j = 0; j < acc.size(); ++j) {
      if (!(acc[j] >= 0.0) || !std::isfinite(acc[j]))
        fail("non-finite activation sum of squares in " + name);
      a[j] = static_cast<float>(std::sqrt(acc[j]));
    }
    stats.norms.emplace(name, std::move(a));
  }
  stats.sample_count = sample_count;
  stats.token_count = captured.token_count;
  if (provenance) {
    stats.seed = provenance->seed;
    stats.corpus_fp = provenance->corpus_fp;
  }
  return stats;
}

ActivationStats accumulate_stats(const Container& checkpoint,
                                 const ModelManifest& manifest,
                                 std::span<const Sequence> samples,
                                 std::optional<StatsProvenance> provenance) {
  if (samples.empty()) invalid("empty calibration set");
  return finalize_stats(capture_activations(checkpoint, manifest, samples),
                        samples.size(), provenance);
}

namespace {

constexpr std::string_view kNormSuffix = ".actnorm";

std::uint64_t parse_u64(const std::string& text, const std::string& key) {
  std::uint64_t v = 0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size())
    invalid("stats metadata \"" + key + "\" is not a decimal integer: " + text);
  return v;
}

}  // namespace

Container stats_to_container(const ActivationStats& stats) {
  Container c;
  for (const auto& [name, a] : stats.norms)
    c.add(name + std::string(kNormSuffix), TensorRecord({a.size()}, a));
  c.metadata["sample_count"] = std::to_string(stats.sample_count);
  c.metadata["token_count"] = std::to_string(stats.token_count);
  if (stats.seed) c.metadata["seed"] = std::to_string(*stats.seed);
  if (stats.corpus_fp) c.metadata["corpus_fp"] = std::to_string(*stats.corpus_fp);
  return c;
}

ActivationStats stats_from_container(const Container& c) {
  ActivationStats stats;
  for (const auto& [key, record] : c.tensors) {
    if (!std::string_view(key).ends_with(kNormSuffix) || record.shape().size() != 1)
      invalid("unexpected tensor \"" + key + "\" in activation stats");
    auto values = record.f32();
    stats.norms.emplace(key.substr(0, key.size() - kNormSuffix.size()),
                        std::vector<float>(values.begin(), values.end()));
  }
  auto get = [&](const char* key) -> std::optional<std::uint64_t> {
    auto it = c.metadata.find(key);
    if (it == c.metadata.end()) return std::nullopt;
    return parse_u64(it->second, key);
  };
  stats.sample_count = get("sample_count").value_or(0);
  stats.token_count = get("token_count").value_or(0);
  stats.seed = get("seed");
  stats.corpus_fp = get("corpus_fp");
  return stats;
}

ActivationStats read_stats(const std::filesystem::path& path) {
  const Container c = read_container(path);
  try {
    return stats_from_container(c);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

void write_stats(const ActivationStats& stats, const std::filesystem::path& path) {
  write_container(stats_to_container(stats), path);
}

std::string synth_text_corpus(std::size_t records, std::size_t length,
                              std::uint32_t lo, std::uint32_t hi, std::uint64_t seed) {
  if (lo == 0 || hi < lo || hi > 0x10FFFF) invalid("synth corpus: bad codepoint range");
  SplitMix64 rng(seed);
  std::string out;
  for (std::size_t r = 0; r < records; ++r) {
    std::string text;
    for (std::size_t i = 0; i < length;) {
      const auto cp = static_cast<std::uint32_t>(lo + rng.next_below(hi - lo + 1));
      if (cp >= 0xD800 && cp <= 0xDFFF) continue;
      if (cp < 0x80) {
        text += static_cast<char>(cp);
      } else if (cp < 0x800) {
        text += static_cast<char>(0xC0 | (cp >> 6));
        text += static_cast<char>(0x80 | (cp & 0x3F));
      } else if (cp < 0x10000) {
        text += static_cast<char>(0xE0 | (cp >> 12));
        text += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        text += static_cast<char>(0x80 | (cp & 0x3F));
      } else {
        text += static_cast<char>(0xF0 | (cp >> 18));
        text += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
        text += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        text += static_cast<char>(0x80 | (cp & 0x3F));
      }
      ++i;
    }
    out += json{{"text", text}}.dump();
    out += '\n';
  }
  return out;
}

}  // namespace forge
