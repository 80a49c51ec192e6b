// SPDX-License-Identifier: Apache-2.0
#include "gsifn/harness/synth.hpp"

#include <cmath>
#include <cstdio>
#include <vector>

#include <json.hpp>

#include "gsifn/core/rng.hpp"
#include "gsifn/encoding.hpp"

namespace gsifn {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Split split_of(const std::string& id) {
  const auto b = fnv1a(id) % 100;
  return b < 70 ? Split::train : b < 85 ? Split::val : Split::test;
}

void SynthSpec::validate() const {
  if (samples == 0) throw ConfigError("synth: samples must be >= 1");
  for (std::size_t u = 0; u < 3; ++u) {
    if (min_len[u] == 0 || min_len[u] > max_len[u]) throw ConfigError("synth: bad length range");
    if (dims[u] == 0) throw ConfigError("synth: dims must be positive");
    if (!(snr[u] >= 0)) throw ConfigError("synth: SNR must be >= 0");
  }
  if (vocab > 0 && (vocab < kSepToken + 3 || min_len[0] < 2)) throw ConfigError("synth: vocab too small");
  if (!(label_min < label_max)) throw ConfigError("synth: bad label range");
}

SynthSpec SynthSpec::parse(const std::string& text) {
  SynthSpec s;
  try {
    const auto j = nlohmann::json::parse(text);
    for (const auto& [k, v] : j.items()) {
      if (k == "samples") s.samples = v.get<std::size_t>();
      else if (k == "min_len") s.min_len = v.get<std::array<std::size_t, 3>>();
      else if (k == "max_len") s.max_len = v.get<std::array<std::size_t, 3>>();
      else if (k == "dims") s.dims = v.get<std::array<std::size_t, 3>>();
      else if (k == "snr") {
        for (std::size_t u = 0; u < 3; ++u)
          s.snr[u] = v.at(u).is_null() ? std::numeric_limits<double>::infinity() : v.at(u).get<double>();
      } else if (k == "label_min") s.label_min = v.get<double>();
      else if (k == "label_max") s.label_max = v.get<double>();
      else if (k == "vocab") s.vocab = v.get<std::size_t>();
      else throw ConfigError("synth: unknown key '" + k + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synth: ") + e.what());
  }
  s.validate();
  return s;
}

std::string SynthSpec::to_json() const {
  nlohmann::ordered_json j;
  j["samples"] = samples;
  j["min_len"] = min_len;
  j["max_len"] = max_len;
  j["dims"] = dims;
  auto& snr_j = j["snr"] = nlohmann::ordered_json::array();
  for (double s : snr) snr_j.push_back(std::isinf(s) ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(s));
  j["label_min"] = label_min;
  j["label_max"] = label_max;
  j["vocab"] = vocab;
  return j.dump(2);
}

namespace {

// Smooth per-modality temporal envelope in [0.5, 1.5].
double envelope(std::size_t u, std::size_t t, std::size_t len) {
  const double phase = static_cast<double>(t) / static_cast<double>(std::max<std::size_t>(len - 1, 1));
  return 1.0 + 0.5 * std::sin(2.0 * M_PI * (phase + 0.25 * static_cast<double>(u)));
}

}  // namespace

std::filesystem::path synth_dataset(const SynthSpec& spec, std::uint64_t seed, const std::filesystem::path& out_dir) {
  spec.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "features", ec);
  if (ec) throw Error("io", "cannot create " + out_dir.string() + ": " + ec.message());

  const Rng root(seed);
  // Fixed unit-norm direction per modality, scaled so each frame's signal has
  // unit mean power at |y| = label_max.
  std::array<std::vector<double>, 3> dir;
  for (std::size_t u = 0; u < 3; ++u) {
    Rng r = root.split(100 + u);
    double norm = 0;
    dir[u].resize(spec.dims[u]);
    for (auto& x : dir[u]) {
      x = r.normal();
      norm += x * x;
    }
    const double scale = std::sqrt(static_cast<double>(spec.dims[u]) / norm);
    for (auto& x : dir[u]) x *= scale;
  }
  const double y_scale = std::max(std::abs(spec.label_min), std::abs(spec.label_max));

  std::vector<ManifestEntry> entries;
  entries.reserve(spec.samples);
  for (std::size_t i = 0; i < spec.samples; ++i) {
    Rng r = root.split(1000 + i);
    char id_buf[32];
    std::snprintf(id_buf, sizeof id_buf, "s%05zu", i);
    ManifestEntry e;
    e.id = id_buf;
    const double y = r.uniform(spec.label_min, spec.label_max);
    e.label = static_cast<float>(y);
    std::array<std::size_t, 3> len{};
    for (std::size_t u = 0; u < 3; ++u) len[u] = spec.min_len[u] + r.below(spec.max_len[u] - spec.min_len[u] + 1);
    e.lengths = {len[0], len[1], len[2]};

    for (std::size_t u = 0; u < 3; ++u) {
      if (u == 0 && spec.vocab > 0) {
        // Sentiment tokens: id encodes the label bucket; fillers elsewhere.
        const std::size_t first = kSepToken + 1;
        const std::size_t sentiment = (spec.vocab - first + 1) / 2;
        const double frac = (y - spec.label_min) / (spec.label_max - spec.label_min);
        const auto bucket = std::min(sentiment - 1, static_cast<std::size_t>(frac * static_cast<double>(sentiment)));
        const double keep = std::isinf(spec.snr[0]) ? 1.0 : spec.snr[0] / (1.0 + spec.snr[0]);
        e.text_tokens.assign(len[0], 0);
        e.text_tokens.front() = kClsToken;
        e.text_tokens.back() = kSepToken;
        for (std::size_t t = 1; t + 1 < len[0]; ++t) {
          const bool signal = r.uniform() < keep;
          const std::size_t fillers = spec.vocab - first - sentiment;
          e.text_tokens[t] = signal || fillers == 0 ? first + bucket : first + sentiment + r.below(fillers);
        }
        continue;
      }
      const double sigma = std::isinf(spec.snr[u]) ? 0.0 : (spec.snr[u] > 0 ? 1.0 / std::sqrt(spec.snr[u]) : 1.0);
      const bool pure_noise = spec.snr[u] == 0.0;
      std::vector<float> v(len[u] * spec.dims[u]);
      for (std::size_t t = 0; t < len[u]; ++t) {
        const double env = (u == 0 && t == 0) ? 1.0 : envelope(u, t, len[u]);
        const double amp = pure_noise ? 0.0 : (y / y_scale) * env;
        for (std::size_t k = 0; k < spec.dims[u]; ++k) {
          v[t * spec.dims[u] + k] = static_cast<float>(amp * dir[u][k] + (sigma > 0 ? r.normal(0.0, sigma) : 0.0));
        }
      }
      const std::string rel = std::string("features/") + e.id + "." + modality_tag(static_cast<Modality>(u)) + ".mft";
      write_mft(out_dir / rel, Tensor<float>({len[u], spec.dims[u]}, std::move(v)));
      if (u == 0) e.text_path = rel;
      if (u == 1) e.vision_path = rel;
      if (u == 2) e.audio_path = rel;
    }
    entries.push_back(std::move(e));
  }
  const auto manifest = out_dir / "manifest.jsonl";
  write_manifest(manifest, entries);
  return manifest;
}

}  // namespace gsifn
