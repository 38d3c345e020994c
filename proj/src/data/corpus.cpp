// SPDX-License-Identifier: Apache-2.0
#include "cakt/data/corpus.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "cakt/error.hpp"
#include "cakt/numerics/ops.hpp"
#include "cakt/numerics/random.hpp"
#include "json.hpp"

namespace cakt::data {

using nlohmann::json;

Vocab::Vocab(std::size_t size) : size_(size) {
  if (size == 0) throw ConfigError("vocabulary must be nonempty");
}

std::string Vocab::glyph(int id) const {
  if (id == ctc::kBlank) return "<blank>";
  if (id == bos()) return "<bos>";
  if (id == eos()) return "<eos>";
  if (id < 0 || id > eos()) throw DataError("token id " + std::to_string(id) + " outside vocabulary");
  if (id <= 26) return std::string(1, static_cast<char>('a' + id - 1));
  return "t" + std::to_string(id);
}

int Vocab::id_of(const std::string& g) const {
  for (int id = 0; id <= eos(); ++id)
    if (glyph(id) == g) return id;
  throw DataError("unknown glyph '" + g + "'");
}

std::string Vocab::render(const ctc::LabelSeq& tokens) const {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += glyph(tokens[i]);
  }
  return out;
}

std::string Vocab::to_json() const {
  json j = json::object();
  for (int id = 0; id <= eos(); ++id) j[std::to_string(id)] = glyph(id);
  return j.dump(1);
}

Vocab Vocab::from_json(const std::string& text) {
  json j = json::parse(text);
  if (!j.is_object() || j.size() < 4) throw DataError("vocab file must map at least 4 ids");
  Vocab v(j.size() - 3);
  for (auto& [k, g] : j.items()) {
    if (v.glyph(std::stoi(k)) != g.get<std::string>()) {
      throw DataError("vocab file entry " + k + " -> " + g.get<std::string>() +
                      " does not match the canonical table");
    }
  }
  return v;
}

Tensor Utterance::feature_tensor() const {
  std::vector<double> d(features.begin(), features.end());
  return Tensor(Shape{frames, dim}, std::move(d));
}

void SynthConfig::validate() const {
  if (vocab_size < 2) throw ConfigError("synthetic vocab_size must be >= 2");
  if (f_in == 0) throw ConfigError("f_in must be positive");
  if (frames_min == 0 || frames_min > frames_max) {
    throw ConfigError("frames_per_token range must be nonempty with min >= 1");
  }
  if (seq_len_min == 0 || seq_len_min > seq_len_max) {
    throw ConfigError("seq_len range must be nonempty with min >= 1");
  }
  if (noise_sigma < 0.0) throw ConfigError("noise_sigma must be >= 0");
  if (silence_prob < 0.0 || silence_prob > 1.0) throw ConfigError("silence_prob must be in [0, 1]");
}

std::size_t FrameGeometry::encoder_frames(std::size_t raw) const {
  return ops::conv_output_length(raw, conv_width, conv_stride);
}

namespace {

struct Plan {
  std::vector<std::size_t> silence_before;  // size N + 1, last entry is trailing silence
  std::vector<std::size_t> repeats;
  std::size_t raw_frames() const {
    std::size_t n = 0;
    for (auto s : silence_before) n += s;
    for (auto r : repeats) n += r;
    return n;
  }
};

Plan draw_plan(const SynthConfig& cfg, std::size_t n, Rng& rng) {
  Plan p;
  const auto lo = static_cast<std::int64_t>(cfg.frames_min);
  const auto hi = static_cast<std::int64_t>(cfg.frames_max);
  for (std::size_t i = 0; i <= n; ++i) {
    const bool silence = rng.bernoulli(cfg.silence_prob);
    p.silence_before.push_back(silence ? static_cast<std::size_t>(rng.uniform_int(lo, hi)) : 0);
    if (i < n) p.repeats.push_back(static_cast<std::size_t>(rng.uniform_int(lo, hi)));
  }
  return p;
}

Utterance render(const std::string& id, const ctc::LabelSeq& tokens, const Plan& plan,
                 const Tensor& prototypes, const SynthConfig& cfg, Rng& rng) {
  Utterance u;
  u.id = id;
  u.tokens = tokens;
  u.dim = cfg.f_in;
  u.frames = plan.raw_frames();
  u.features.reserve(u.frames * u.dim);
  auto emit = [&](const double* proto) {
    for (std::size_t c = 0; c < cfg.f_in; ++c) {
      const double noise = cfg.noise_sigma > 0.0 ? rng.normal(0.0, cfg.noise_sigma) : 0.0;
      u.features.push_back(static_cast<float>((proto ? proto[c] : 0.0) + noise));
    }
  };
  for (std::size_t i = 0; i <= tokens.size(); ++i) {
    for (std::size_t s = 0; s < plan.silence_before[i]; ++s) emit(nullptr);
    if (i == tokens.size()) break;
    const double* proto = prototypes.row(static_cast<std::size_t>(tokens[i])).data();
    for (std::size_t r = 0; r < plan.repeats[i]; ++r) emit(proto);
  }
  return u;
}

void check_config_feasible(const SynthConfig& cfg, const FrameGeometry& g) {
  for (std::size_t n = cfg.seq_len_min; n <= cfg.seq_len_max; ++n) {
    const std::size_t longest = n * cfg.frames_max;
    const std::size_t t = g.encoder_frames(longest);
    if (t < n) {
      throw ConfigError(
          "infeasible synthetic config: CTC feasibility (encoder frames >= labels) fails for " +
          std::to_string(n) + "-token sequences even at frames_per_token max " +
          std::to_string(cfg.frames_max) + " (" + std::to_string(longest) + " raw frames -> " +
          std::to_string(t) + " encoder frames after width " + std::to_string(g.conv_width) +
          " stride " + std::to_string(g.conv_stride) + ")");
    }
  }
}

std::vector<Utterance> generate_split(const std::string& split, std::size_t count,
                                      const SynthConfig& cfg, const FrameGeometry& g,
                                      const Tensor& prototypes) {
  Rng rng(derive_seed(cfg.seed, "split:" + split));
  std::vector<Utterance> out;
  out.reserve(count);
  const auto vmax = static_cast<std::int64_t>(cfg.vocab_size);
  for (std::size_t i = 0; i < count; ++i) {
    char id[64];
    std::snprintf(id, sizeof id, "%s-%05zu", split.c_str(), i);
    for (int attempt = 0;; ++attempt) {
      if (attempt == 10000) {
        throw ConfigError("could not draw a CTC-feasible utterance for " + std::string(id));
      }
      const auto n = static_cast<std::size_t>(rng.uniform_int(
          static_cast<std::int64_t>(cfg.seq_len_min), static_cast<std::int64_t>(cfg.seq_len_max)));
      ctc::LabelSeq tokens(n);
      for (auto& y : tokens) y = static_cast<int>(rng.uniform_int(1, vmax));
      Plan plan = draw_plan(cfg, n, rng);
      const std::size_t raw = plan.raw_frames();
      if (raw < g.conv_width || !ctc::feasible(tokens, g.encoder_frames(raw))) continue;
      out.push_back(render(id, tokens, plan, prototypes, cfg, rng));
      break;
    }
  }
  return out;
}

}  // namespace

Corpus generate_corpus(const SynthConfig& cfg, const FrameGeometry& geometry) {
  cfg.validate();
  check_config_feasible(cfg, geometry);
  Corpus c{.train = {}, .dev = {}, .test = {},
           .prototypes = Tensor::matrix(cfg.vocab_size + 1, cfg.f_in), .vocab = Vocab(cfg.vocab_size)};
  Rng proto_rng(derive_seed(cfg.seed, "prototypes"));
  for (std::size_t v = 1; v <= cfg.vocab_size; ++v) {
    double norm = 0.0;
    for (auto& x : c.prototypes.row(v)) {
      x = proto_rng.normal();
      norm += x * x;
    }
    norm = std::sqrt(norm);
    for (auto& x : c.prototypes.row(v)) x /= norm;
  }
  c.train = generate_split("train", cfg.n_train, cfg, geometry, c.prototypes);
  c.dev = generate_split("dev", cfg.n_dev, cfg, geometry, c.prototypes);
  c.test = generate_split("test", cfg.n_test, cfg, geometry, c.prototypes);
  return c;
}

std::string encode_features(const std::vector<float>& values) {
  std::string bytes(values.size() * 4, '\0');
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(values[i]);
    for (int b = 0; b < 4; ++b) bytes[i * 4 + b] = static_cast<char>((bits >> (8 * b)) & 0xff);
  }
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(bytes.data()),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<float> decode_features(const std::string& b64) {
  if (b64.size() % 4 != 0) throw DataError("features_b64 length is not a multiple of 4");
  std::string bytes(b64.size() / 4 * 3, '\0');
  const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(bytes.data()),
                                reinterpret_cast<const unsigned char*>(b64.data()),
                                static_cast<int>(b64.size()));
  if (n < 0) throw DataError("features_b64 is not valid base64");
  std::size_t len = static_cast<std::size_t>(n);
  // EVP_DecodeBlock keeps the zero bytes that stand in for '=' padding
  if (!b64.empty() && b64.back() == '=') --len;
  if (b64.size() >= 2 && b64[b64.size() - 2] == '=') --len;
  if (len % 4 != 0) throw DataError("features_b64 does not hold whole float32 values");
  std::vector<float> out(len / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b)
      bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i * 4 + b])) << (8 * b);
    out[i] = std::bit_cast<float>(bits);
  }
  return out;
}

void write_manifest(const std::filesystem::path& path, const std::vector<Utterance>& utts) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write manifest " + path.string());
  for (const auto& u : utts) {
    json j;
    j["id"] = u.id;
    j["tokens"] = u.tokens;
    j["features_b64"] = encode_features(u.features);
    j["T"] = u.frames;
    j["f"] = u.dim;
    os << j.dump() << '\n';
  }
  if (!os) throw DataError("failed writing manifest " + path.string());
}

std::vector<Utterance> read_manifest(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot read manifest " + path.string());
  std::vector<Utterance> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      json j = json::parse(line);
      Utterance u;
      u.id = j.at("id").get<std::string>();
      u.tokens = j.at("tokens").get<ctc::LabelSeq>();
      u.frames = j.at("T").get<std::size_t>();
      u.dim = j.at("f").get<std::size_t>();
      u.features = decode_features(j.at("features_b64").get<std::string>());
      if (u.frames == 0 || u.features.size() != u.frames * u.dim) {
        throw DataError("feature payload does not match T x f");
      }
      out.push_back(std::move(u));
    } catch (const json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace cakt::data
