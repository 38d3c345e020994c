// SPDX-License-Identifier: Apache-2.0
#include "cakt/cli/run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "cakt/error.hpp"

namespace cakt::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::string fmt(std::uint64_t v) { return std::to_string(v); }
std::string fmt_bool(bool b) { return b ? "on" : "off"; }

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const char* first = text.data();
  const char* last = first + text.size();
  if (!text.empty() && text[0] == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || text.empty()) {
    throw ConfigError("config key " + key + ": cannot parse '" + text + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "on" || text == "true" || text == "1") return true;
  if (text == "off" || text == "false" || text == "0") return false;
  throw ConfigError("config key " + key + ": expected on/off, got '" + text + "'");
}

struct Field {
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
};

Field size_field(std::function<std::size_t&(RunConfig&)> ref) {
  return {[ref](const RunConfig& c) { return fmt(static_cast<std::uint64_t>(ref(const_cast<RunConfig&>(c)))); },
          [ref](RunConfig& c, const std::string& k, const std::string& v) {
            ref(c) = parse_number<std::size_t>(k, v);
          }};
}

Field u64_field(std::function<std::uint64_t&(RunConfig&)> ref) {
  return {[ref](const RunConfig& c) { return fmt(ref(const_cast<RunConfig&>(c))); },
          [ref](RunConfig& c, const std::string& k, const std::string& v) {
            ref(c) = parse_number<std::uint64_t>(k, v);
          }};
}

Field double_field(std::function<double&(RunConfig&)> ref) {
  return {[ref](const RunConfig& c) { return fmt(ref(const_cast<RunConfig&>(c))); },
          [ref](RunConfig& c, const std::string& k, const std::string& v) {
            ref(c) = parse_number<double>(k, v);
          }};
}

Field bool_field(std::function<bool&(RunConfig&)> ref) {
  return {[ref](const RunConfig& c) { return fmt_bool(ref(const_cast<RunConfig&>(c))); },
          [ref](RunConfig& c, const std::string& k, const std::string& v) {
            ref(c) = parse_bool(k, v);
          }};
}

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"vocab_size", size_field([](RunConfig& c) -> std::size_t& { return c.synth.vocab_size; })},
      {"feat_dim", size_field([](RunConfig& c) -> std::size_t& { return c.synth.f_in; })},
      {"d_model", size_field([](RunConfig& c) -> std::size_t& { return c.model.encoder.d_model; })},

      {"data.seed", u64_field([](RunConfig& c) -> std::uint64_t& { return c.synth.seed; })},
      {"data.n_train", size_field([](RunConfig& c) -> std::size_t& { return c.synth.n_train; })},
      {"data.n_dev", size_field([](RunConfig& c) -> std::size_t& { return c.synth.n_dev; })},
      {"data.n_test", size_field([](RunConfig& c) -> std::size_t& { return c.synth.n_test; })},
      {"data.seq_len_min", size_field([](RunConfig& c) -> std::size_t& { return c.synth.seq_len_min; })},
      {"data.seq_len_max", size_field([](RunConfig& c) -> std::size_t& { return c.synth.seq_len_max; })},
      {"data.frames_min", size_field([](RunConfig& c) -> std::size_t& { return c.synth.frames_min; })},
      {"data.frames_max", size_field([](RunConfig& c) -> std::size_t& { return c.synth.frames_max; })},
      {"data.noise_sigma", double_field([](RunConfig& c) -> double& { return c.synth.noise_sigma; })},
      {"data.silence_prob", double_field([](RunConfig& c) -> double& { return c.synth.silence_prob; })},

      {"encoder.n_layers", size_field([](RunConfig& c) -> std::size_t& { return c.model.encoder.n_layers; })},
      {"encoder.n_heads", size_field([](RunConfig& c) -> std::size_t& { return c.model.encoder.n_heads; })},
      {"encoder.ffn_dim", size_field([](RunConfig& c) -> std::size_t& { return c.model.encoder.ffn_dim; })},
      {"encoder.conv_width", size_field([](RunConfig& c) -> std::size_t& { return c.model.encoder.conv_width; })},
      {"encoder.conv_stride", size_field([](RunConfig& c) -> std::size_t& { return c.model.encoder.conv_stride; })},
      {"encoder.dropout", double_field([](RunConfig& c) -> double& { return c.model.encoder.dropout_rate; })},

      {"teacher.mode",
       {[](const RunConfig& c) {
          return std::string(c.model.teacher.mode == model::TeacherMode::Oracle ? "oracle" : "random");
        },
        [](RunConfig& c, const std::string& k, const std::string& v) {
          if (v == "oracle") c.model.teacher.mode = model::TeacherMode::Oracle;
          else if (v == "random") c.model.teacher.mode = model::TeacherMode::Random;
          else throw ConfigError("config key " + k + ": expected random or oracle, got '" + v + "'");
        }}},
      {"teacher.n_layers", size_field([](RunConfig& c) -> std::size_t& { return c.model.teacher.n_layers; })},
      {"teacher.n_heads", size_field([](RunConfig& c) -> std::size_t& { return c.model.teacher.n_heads; })},
      {"teacher.max_positions", size_field([](RunConfig& c) -> std::size_t& { return c.model.teacher.max_positions; })},
      {"teacher.seed", u64_field([](RunConfig& c) -> std::uint64_t& { return c.model.teacher.seed; })},

      {"kt.enabled", bool_field([](RunConfig& c) -> bool& { return c.train.kt_enabled; })},
      {"kt.k", double_field([](RunConfig& c) -> double& { return c.model.kt.k; })},
      {"kt.query",
       {[](const RunConfig& c) { return kt::to_string(c.model.kt.query_mode); },
        [](RunConfig& c, const std::string&, const std::string& v) {
          c.model.kt.query_mode = kt::parse_query_mode(v);
        }}},
      {"kt.shift",
       {[](const RunConfig& c) { return kt::to_string(c.model.kt.shift_mode); },
        [](RunConfig& c, const std::string&, const std::string& v) {
          c.model.kt.shift_mode = kt::parse_shift_mode(v);
        }}},
      {"kt.n_heads", size_field([](RunConfig& c) -> std::size_t& { return c.model.kt.n_heads; })},
      {"kt.stop_gradient", bool_field([](RunConfig& c) -> bool& { return c.train.kt_stop_gradient; })},

      {"train.seed", u64_field([](RunConfig& c) -> std::uint64_t& { return c.train.seed; })},
      {"train.lambda", double_field([](RunConfig& c) -> double& { return c.train.lambda; })},
      {"train.lr_peak", double_field([](RunConfig& c) -> double& { return c.train.lr_peak; })},
      {"train.warmup_steps", size_field([](RunConfig& c) -> std::size_t& { return c.train.warmup_steps; })},
      {"train.freeze_encoder_until", size_field([](RunConfig& c) -> std::size_t& { return c.train.freeze_encoder_until; })},
      {"train.max_epochs", size_field([](RunConfig& c) -> std::size_t& { return c.train.max_epochs; })},
      {"train.patience", size_field([](RunConfig& c) -> std::size_t& { return c.train.patience; })},
      {"train.avg_best_k", size_field([](RunConfig& c) -> std::size_t& { return c.train.avg_best_k; })},
      {"train.batch_size", size_field([](RunConfig& c) -> std::size_t& { return c.train.batch_size; })},
      {"train.grad_accum", size_field([](RunConfig& c) -> std::size_t& { return c.train.grad_accum; })},
      {"train.select_metric",
       {[](const RunConfig& c) { return training::to_string(c.train.select_metric); },
        [](RunConfig& c, const std::string&, const std::string& v) {
          c.train.select_metric = training::parse_select_metric(v);
        }}},
  };
  return table;
}

const Field& field(const std::string& key) {
  for (const auto& [name, f] : fields())
    if (name == key) return f;
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

RunConfig::RunConfig() = default;

void RunConfig::set(const std::string& key, const std::string& value) {
  field(key).set(*this, key, value);
  // keep the shared dimensions in lockstep across sections
  model.encoder.vocab_size = synth.vocab_size;
  model.teacher.vocab_size = synth.vocab_size;
  model.encoder.feat_dim = synth.f_in;
  model.teacher.d_teacher = model.encoder.d_model;
}

std::string RunConfig::get(const std::string& key) const { return field(key).get(*this); }

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [name, f] : fields()) out.push_back(name);
    return out;
  }();
  return names;
}

void RunConfig::validate() const {
  synth.validate();
  model.encoder.validate();
  model.kt.validate();
  train.validate();
  if (model.teacher.n_heads == 0 || model.encoder.d_model % model.teacher.n_heads != 0) {
    throw ConfigError("teacher.n_heads must divide d_model");
  }
  if (model.kt.n_heads == 0 || model.encoder.d_model % model.kt.n_heads != 0) {
    throw ConfigError("kt.n_heads must divide d_model");
  }
  if (model.teacher.mode == model::TeacherMode::Oracle &&
      model.teacher.table_size() > model.encoder.d_model) {
    throw ConfigError("oracle teacher needs d_model >= vocab_size + 3");
  }
  if (model.teacher.max_positions < synth.seq_len_max + 2) {
    throw ConfigError("teacher.max_positions must cover data.seq_len_max + 2");
  }
}

std::string RunConfig::canonical_text() const {
  std::ostringstream os;
  for (const auto& [name, f] : fields()) os << name << " = " << f.get(*this) << '\n';
  return os.str();
}

std::string RunConfig::fingerprint() const { return training::fingerprint(canonical_text()); }

data::FrameGeometry RunConfig::geometry() const {
  return {model.encoder.conv_width, model.encoder.conv_stride};
}

RunConfig RunConfig::parse(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string line;
  std::set<std::string> seen;
  for (std::size_t lineno = 1; std::getline(is, line); ++lineno) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(lineno) + ": ";
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    if (!seen.insert(key).second) throw ConfigError(where + "duplicate key '" + key + "'");
    try {
      cfg.set(key, trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse(ss.str(), path.string());
}

void RunConfig::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw ConfigError("cannot write config " + path.string());
  os << canonical_text();
}

void apply_overrides(RunConfig& cfg, const std::vector<std::string>& assignments) {
  for (const auto& a : assignments) {
    const auto eq = a.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + a + "' is not key=value");
    cfg.set(trim(a.substr(0, eq)), trim(a.substr(eq + 1)));
  }
}

}  // namespace cakt::cli
