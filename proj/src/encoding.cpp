// SPDX-License-Identifier: Apache-2.0
#include "gsifn/encoding.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <set>

#include <json.hpp>

namespace gsifn {

static_assert(std::endian::native == std::endian::little, "MFT I/O assumes a little-endian host");

template <class T>
Conv1dProjection Conv1dProjection::create(ParamSet<T>& ps, const std::string& name, ParamGroup g, std::size_t d_in,
                                          std::size_t d_model, std::size_t kernel, Rng& rng) {
  if (kernel % 2 == 0) throw Error("encoding.kernel", "conv1d kernel must be odd, got " + std::to_string(kernel));
  Conv1dProjection c;
  c.kernel = kernel;
  c.w = ps.add_glorot(name + ".w", g, {kernel, d_in, d_model}, rng);
  c.b = ps.add_constant(name + ".b", g, {1, d_model}, T(0));
  return c;
}

template <class T>
Tensor<T> sinusoidal_encoding(std::size_t len, std::size_t d) {
  std::vector<T> v(len * d);
  for (std::size_t pos = 0; pos < len; ++pos) {
    for (std::size_t j = 0; j < d; ++j) {
      const double angle = static_cast<double>(pos) / std::pow(10000.0, static_cast<double>(j - j % 2) / d);
      v[pos * d + j] = static_cast<T>(j % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return Tensor<T>({len, d}, std::move(v));
}

template <class T>
ToyTextEncoder ToyTextEncoder::create(ParamSet<T>& ps, const std::string& name, ParamGroup g, std::size_t vocab,
                                      std::size_t dim, Rng& rng) {
  if (vocab <= kSepToken) throw ConfigError("toy text vocab must exceed the special tokens");
  ToyTextEncoder e;
  e.vocab = vocab;
  e.dim = dim;
  std::vector<T> v(vocab * dim);
  for (auto& x : v) x = static_cast<T>(rng.normal(0.0, 0.1));
  e.table = ps.add(name + ".embed", g, Tensor<T>({vocab, dim}, std::move(v)));
  return e;
}

template <class T>
Tensor<T> ToyTextEncoder::operator()(const Context<T>& ctx, const std::vector<std::size_t>& ids) const {
  if (ids.size() < 2 || ids.front() != kClsToken || ids.back() != kSepToken) {
    throw Error("encoding.tokens", "token sequence must be [CLS] ... [SEP]");
  }
  auto x = ops::add(ops::embedding(ctx[table], ids), sinusoidal_encoding<T>(ids.size(), dim));
  if (ids.size() == 2) return x;
  const auto body = ops::embedding(ctx[table], std::vector<std::size_t>(ids.begin() + 1, ids.end() - 1));
  const auto summary = ops::concat<T>({ops::col_mean(body), Tensor<T>::zeros({ids.size() - 1, dim})}, 0);
  return ops::add(x, summary);
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'M', 'F', 'T', '1'};
constexpr std::size_t kMaxRank = 8;

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

}  // namespace

std::vector<unsigned char> encode_mft(const Tensor<float>& t) {
  std::vector<unsigned char> out(kMagic, kMagic + 4);
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) {
    if (d > std::numeric_limits<std::uint32_t>::max()) throw Error("mft.dim_overflow", "dimension exceeds u32");
    put_u32(out, static_cast<std::uint32_t>(d));
  }
  const std::size_t off = out.size();
  out.resize(off + t.size() * sizeof(float));
  std::memcpy(out.data() + off, t.data(), t.size() * sizeof(float));
  return out;
}

Tensor<float> decode_mft(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw Error("mft.bad_magic", "bad magic");
  if (bytes.size() < 8) throw Error("mft.truncated_header", "truncated header");
  const std::uint32_t ndim = get_u32(bytes.data() + 4);
  if (ndim == 0 || ndim > kMaxRank) throw Error("mft.bad_rank", "unsupported rank " + std::to_string(ndim));
  const std::size_t header = 8 + 4 * static_cast<std::size_t>(ndim);
  if (bytes.size() < header) throw Error("mft.truncated_header", "truncated header");
  Shape shape;
  std::uint64_t count = 1;
  for (std::uint32_t i = 0; i < ndim; ++i) {
    const std::uint32_t d = get_u32(bytes.data() + 8 + 4 * i);
    if (d == 0) throw Error("mft.bad_dims", "zero dimension");
    count *= d;
    if (count > (std::uint64_t{1} << 40)) throw Error("mft.dim_overflow", "dim overflow");
    shape.push_back(d);
  }
  if (bytes.size() - header != count * sizeof(float)) {
    throw Error("mft.truncated_payload", "truncated payload: header promises " + std::to_string(count) +
                                             " floats, file has " + std::to_string(bytes.size() - header) +
                                             " payload bytes");
  }
  std::vector<float> v(count);
  std::memcpy(v.data(), bytes.data() + header, count * sizeof(float));
  return Tensor<float>(std::move(shape), std::move(v));
}

void write_mft(const std::filesystem::path& path, const Tensor<float>& t) {
  const auto bytes = encode_mft(t);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("io", "cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error("io", "write failed for " + path.string());
}

Tensor<float> read_mft(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("io", "cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  try {
    return decode_mft(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error("io", "cannot open manifest " + path.string());
  std::vector<ManifestEntry> out;
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto where = path.string() + ":" + std::to_string(lineno);
    try {
      const auto j = nlohmann::json::parse(line);
      ManifestEntry e;
      e.id = j.at("id").get<std::string>();
      e.label = j.at("label").get<float>();
      const auto& text = j.at("text");
      if (text.is_string()) {
        e.text_path = text.get<std::string>();
      } else {
        e.text_tokens = text.get<std::vector<std::size_t>>();
      }
      e.vision_path = j.at("vision").get<std::string>();
      e.audio_path = j.at("audio").get<std::string>();
      const auto& l = j.at("lengths");
      e.lengths = {l.at("t").get<std::size_t>(), l.at("v").get<std::size_t>(), l.at("a").get<std::size_t>()};
      if (!seen.insert(e.id).second) throw Error("manifest", "duplicate sample id " + e.id);
      out.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw Error("manifest", where + ": " + ex.what());
    }
  }
  return out;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream f(path);
  if (!f) throw Error("io", "cannot write manifest " + path.string());
  for (const auto& e : entries) {
    nlohmann::ordered_json j;
    j["id"] = e.id;
    j["label"] = e.label;
    if (e.text_path) {
      j["text"] = *e.text_path;
    } else {
      j["text"] = e.text_tokens;
    }
    j["vision"] = e.vision_path;
    j["audio"] = e.audio_path;
    j["lengths"] = {{"t", e.lengths.text}, {"v", e.lengths.vision}, {"a", e.lengths.audio}};
    f << j.dump() << '\n';
  }
}

namespace {

Tensor<float> load_modal(const std::filesystem::path& base, const std::string& rel, std::size_t len,
                         const std::string& id, char tag) {
  auto path = std::filesystem::path(rel);
  if (path.is_relative()) path = base / path;
  auto t = read_mft(path);
  if (t.rank() != 2) throw Error("manifest", id + ": modality " + tag + " is not a T x d matrix");
  if (len == 0 || len > t.rows()) {
    throw Error("manifest", id + ": modality " + tag + " length " + std::to_string(len) + " outside stored " +
                                std::to_string(t.rows()) + " rows");
  }
  return len == t.rows() ? t : ops::slice(t, 0, 0, len);
}

}  // namespace

Sample load_sample(const ManifestEntry& e, const std::filesystem::path& base) {
  e.lengths.validate();
  Sample s;
  s.id = e.id;
  s.label = e.label;
  s.lengths = e.lengths;
  if (e.text_path) {
    s.text = load_modal(base, *e.text_path, e.lengths.text, e.id, 't');
  } else {
    if (e.text_tokens.size() != e.lengths.text) {
      throw Error("manifest", e.id + ": token count does not match lengths.t");
    }
    s.tokens = e.text_tokens;
  }
  s.vision = load_modal(base, e.vision_path, e.lengths.vision, e.id, 'v');
  s.audio = load_modal(base, e.audio_path, e.lengths.audio, e.id, 'a');
  return s;
}

std::vector<Sample> load_dataset(const std::filesystem::path& manifest) {
  const auto entries = read_manifest(manifest);
  std::vector<Sample> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(load_sample(e, manifest.parent_path()));
  return out;
}

Tensor<float> pad_rows(const Tensor<float>& x, std::size_t len) {
  if (x.rows() > len) throw ShapeError("pad_rows: " + std::to_string(x.rows()) + " rows exceed " + std::to_string(len));
  if (x.rows() == len) return x;
  std::vector<float> v(len * x.cols(), 0.0f);
  std::copy(x.values().begin(), x.values().end(), v.begin());
  return Tensor<float>({len, x.cols()}, std::move(v));
}

#define GSIFN_INSTANTIATE_ENCODING(T)                                                                          \
  template Conv1dProjection Conv1dProjection::create<T>(ParamSet<T>&, const std::string&, ParamGroup,          \
                                                        std::size_t, std::size_t, std::size_t, Rng&);          \
  template Tensor<T> sinusoidal_encoding<T>(std::size_t, std::size_t);                                         \
  template ToyTextEncoder ToyTextEncoder::create<T>(ParamSet<T>&, const std::string&, ParamGroup, std::size_t, \
                                                    std::size_t, Rng&);                                        \
  template Tensor<T> ToyTextEncoder::operator()<T>(const Context<T>&, const std::vector<std::size_t>&) const;

GSIFN_INSTANTIATE_ENCODING(float)
GSIFN_INSTANTIATE_ENCODING(double)

}  // namespace gsifn
