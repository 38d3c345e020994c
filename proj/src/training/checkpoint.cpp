// SPDX-License-Identifier: Apache-2.0
#include "cakt/training/checkpoint.hpp"

#include <openssl/evp.h>

#include <array>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "cakt/error.hpp"

namespace cakt::training {

namespace {

constexpr char kMagic[8] = {'C', 'A', 'K', 'T', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}

  void u64(std::uint64_t v) {
    std::array<char, 8> b;
    for (int i = 0; i < 8; ++i) b[static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xff);
    os_.write(b.data(), 8);
  }
  void u32(std::uint32_t v) {
    std::array<char, 4> b;
    for (int i = 0; i < 4; ++i) b[static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xff);
    os_.write(b.data(), 4);
  }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    u64(bits);
  }
  void str(const std::string& s) {
    u64(s.size());
    os_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void blob(const std::string& name, const Tensor& t) {
    str(name);
    u32(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) u64(d);
    for (std::size_t i = 0; i < t.size(); ++i) f64(t[i]);
  }

 private:
  std::ostream& os_;
};

class Reader {
 public:
  Reader(std::istream& is, std::string origin) : is_(is), origin_(std::move(origin)) {}

  void bytes(char* dst, std::size_t n) {
    is_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n) fail("truncated file");
  }
  std::uint64_t u64() {
    std::array<unsigned char, 8> b;
    bytes(reinterpret_cast<char*>(b.data()), 8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[static_cast<std::size_t>(i)];
    return v;
  }
  std::uint32_t u32() {
    std::array<unsigned char, 4> b;
    bytes(reinterpret_cast<char*>(b.data()), 4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[static_cast<std::size_t>(i)];
    return v;
  }
  double f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string str() {
    const auto n = u64();
    if (n > (1ull << 32)) fail("implausible string length");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  std::pair<std::string, Tensor> blob() {
    std::string name = str();
    const auto rank = u32();
    if (rank > 4) fail("blob " + name + " has rank " + std::to_string(rank));
    Shape shape(rank);
    std::uint64_t total = 1;
    for (auto& d : shape) {
      d = u64();
      total *= d;
      if (d == 0 || total > (1ull << 31)) fail("blob " + name + " has a bad shape");
    }
    std::vector<double> data(total);
    for (auto& x : data) x = f64();
    return {std::move(name), Tensor(shape, std::move(data))};
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw DataError("checkpoint " + origin_ + ": " + what);
  }

 private:
  std::istream& is_;
  std::string origin_;
};

}  // namespace

std::string fingerprint(const std::string& text) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 failed");
  }
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) {
    os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return os.str();
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot write checkpoint " + tmp);
    Writer w(os);
    os.write(kMagic, sizeof kMagic);
    w.u32(kVersion);
    os.put(static_cast<char>(ckpt.kind));
    w.str(ckpt.config_text);
    w.str(ckpt.fingerprint);
    w.u64(ckpt.updates);
    w.u64(ckpt.epoch);
    w.f64(ckpt.dev_loss);
    w.f64(ckpt.dev_cer);
    w.u64(ckpt.params.size());
    for (const auto& [name, t] : ckpt.params) w.blob(name, t);
    w.u64(ckpt.optimizer.size());
    for (const auto& [name, t] : ckpt.optimizer) w.blob(name, t);
    if (!os) throw DataError("error writing checkpoint " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint " + path.string());
  Reader r(is, path.string());
  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0) r.fail("bad magic");
  const auto version = r.u32();
  if (version != kVersion) r.fail("unsupported version " + std::to_string(version));
  char kind;
  r.bytes(&kind, 1);
  Checkpoint c;
  if (kind != static_cast<char>(Checkpoint::Kind::Training) &&
      kind != static_cast<char>(Checkpoint::Kind::Inference)) {
    r.fail("unknown kind");
  }
  c.kind = static_cast<Checkpoint::Kind>(kind);
  c.config_text = r.str();
  c.fingerprint = r.str();
  c.updates = r.u64();
  c.epoch = r.u64();
  c.dev_loss = r.f64();
  c.dev_cer = r.f64();
  for (auto n = r.u64(); n > 0; --n) c.params.insert(r.blob());
  for (auto n = r.u64(); n > 0; --n) c.optimizer.insert(r.blob());
  if (is.peek() != std::char_traits<char>::eof()) r.fail("trailing bytes");
  return c;
}

TensorMap snapshot(const ParameterList& params) {
  TensorMap out;
  for (const auto* p : params) {
    if (!out.emplace(p->name(), p->value()).second) {
      throw Error("duplicate parameter name " + p->name());
    }
  }
  return out;
}

void restore(const ParameterList& params, const TensorMap& values) {
  for (auto* p : params) {
    auto it = values.find(p->name());
    if (it == values.end()) throw DataError("checkpoint lacks parameter " + p->name());
    if (it->second.shape() != p->mutable_value().shape()) {
      throw ShapeError("checkpoint parameter " + p->name() + " has shape " +
                       shape_string(it->second.shape()) + ", model expects " +
                       shape_string(p->mutable_value().shape()));
    }
    p->mutable_value() = it->second;
  }
}

TensorMap optimizer_state(const Adam& adam) {
  TensorMap out;
  for (const auto& [name, slot] : adam.slots()) {
    out.emplace("m/" + name, slot.m);
    out.emplace("v/" + name, slot.v);
    out.emplace("t/" + name, Tensor::scalar(static_cast<double>(slot.t)));
  }
  return out;
}

void load_optimizer_state(Adam& adam, const TensorMap& state) {
  adam.slots().clear();
  for (const auto& [key, t] : state) {
    if (key.size() < 3 || key[1] != '/') throw DataError("bad optimizer entry " + key);
    auto& slot = adam.slots()[key.substr(2)];
    switch (key[0]) {
      case 'm': slot.m = t; break;
      case 'v': slot.v = t; break;
      case 't': slot.t = static_cast<std::uint64_t>(t.item()); break;
      default: throw DataError("bad optimizer entry " + key);
    }
  }
}

Checkpoint average_checkpoints(const std::vector<const Checkpoint*>& ckpts) {
  if (ckpts.empty()) throw ConfigError("no checkpoints to average");
  const Checkpoint& first = *ckpts.front();
  for (const auto* c : ckpts) {
    if (c->fingerprint != first.fingerprint) {
      throw ConfigError("cannot average checkpoints with different config fingerprints (" +
                        first.fingerprint.substr(0, 12) + " vs " + c->fingerprint.substr(0, 12) +
                        ")");
    }
    if (c->params.size() != first.params.size()) {
      throw ConfigError("cannot average checkpoints with different parameter sets");
    }
  }
  Checkpoint avg;
  avg.kind = first.kind;
  avg.config_text = first.config_text;
  avg.fingerprint = first.fingerprint;
  avg.updates = first.updates;
  avg.epoch = first.epoch;
  avg.dev_loss = first.dev_loss;
  avg.dev_cer = first.dev_cer;
  const double n = static_cast<double>(ckpts.size());
  for (const auto& [name, base] : first.params) {
    // base + sum(x - base) / n keeps the mean of identical tensors exact
    Tensor acc(base.shape(), 0.0);
    for (const auto* c : ckpts) {
      auto it = c->params.find(name);
      if (it == c->params.end() || it->second.shape() != base.shape()) {
        throw ConfigError("cannot average: parameter " + name + " missing or reshaped");
      }
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += it->second[i] - base[i];
    }
    Tensor mean = base;
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += acc[i] / n;
    avg.params.emplace(name, std::move(mean));
  }
  return avg;
}

Checkpoint export_inference_model(const Checkpoint& ckpt) {
  Checkpoint out;
  out.kind = Checkpoint::Kind::Inference;
  out.config_text = ckpt.config_text;
  out.fingerprint = ckpt.fingerprint;
  out.updates = ckpt.updates;
  out.epoch = ckpt.epoch;
  out.dev_loss = ckpt.dev_loss;
  out.dev_cer = ckpt.dev_cer;
  for (const auto& [name, t] : ckpt.params) {
    if (name.rfind("encoder.", 0) == 0) out.params.emplace(name, t);
  }
  return out;
}

}  // namespace cakt::training
