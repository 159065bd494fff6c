#include "smgaa/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "smgaa/error.hpp"

namespace smgaa {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

std::size_t to_size(const std::string& v) {
  std::size_t used = 0;
  long long x = 0;
  try {
    x = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty() || x < 0) throw ConfigError("config", "expected a non-negative integer, got '" + v + "'");
  return static_cast<std::size_t>(x);
}

std::uint64_t to_u64(const std::string& v) {
  std::size_t used = 0;
  unsigned long long x = 0;
  try {
    x = std::stoull(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty() || v[0] == '-') throw ConfigError("config", "expected an unsigned integer, got '" + v + "'");
  return x;
}

double to_double(const std::string& v) {
  std::size_t used = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw ConfigError("config", "expected a number, got '" + v + "'");
  return x;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ConfigError("config", "expected true/false, got '" + v + "'");
}

template <std::size_t N>
std::array<std::size_t, N> to_sizes(const std::string& v) {
  auto parts = split_list(v);
  if (parts.size() != N)
    throw ConfigError("config", "expected " + std::to_string(N) + " comma-separated values, got '" + v + "'");
  std::array<std::size_t, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = to_size(parts[i]);
  return out;
}

template <typename Range, typename F>
std::string join(const Range& r, F f) {
  std::string s;
  for (const auto& v : r) {
    if (!s.empty()) s += ",";
    s += f(v);
  }
  return s;
}

struct Key {
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define SIZE_KEY(path) \
  Key { [](ExperimentConfig& c, const std::string& v) { c.path = to_size(v); }, \
        [](const ExperimentConfig& c) { return std::to_string(c.path); } }
#define DOUBLE_KEY(path) \
  Key { [](ExperimentConfig& c, const std::string& v) { c.path = to_double(v); }, \
        [](const ExperimentConfig& c) { return fmt_double(c.path); } }
#define BOOL_KEY(path) \
  Key { [](ExperimentConfig& c, const std::string& v) { c.path = to_bool(v); }, \
        [](const ExperimentConfig& c) { return std::string(c.path ? "true" : "false"); } }
#define SIZES_KEY(path, n) \
  Key { [](ExperimentConfig& c, const std::string& v) { c.path = to_sizes<n>(v); }, \
        [](const ExperimentConfig& c) { return join(c.path, [](std::size_t x) { return std::to_string(x); }); } }

const std::map<std::string, Key>& keys() {
  static const std::map<std::string, Key> table = {
      {"seed", Key{[](ExperimentConfig& c, const std::string& v) { c.seed = to_u64(v); },
                   [](const ExperimentConfig& c) { return std::to_string(c.seed); }}},
      {"model.in_f", SIZE_KEY(model.in_f)},
      {"model.stem_channels", SIZE_KEY(model.stem_channels)},
      {"model.cfeb_channels", SIZES_KEY(model.cfeb_channels, 2)},
      {"model.kappa", SIZE_KEY(model.kappa)},
      {"model.kappa2", SIZE_KEY(model.kappa2)},
      {"model.k_list", SIZES_KEY(model.k_list, 3)},
      {"model.pool_targets", SIZES_KEY(model.pool_targets, 3)},
      {"model.afi_kernel", SIZE_KEY(model.afi_kernel)},
      {"model.mgaa_bands", SIZES_KEY(model.mgaa_bands, 2)},
      {"model.use_mgaa", BOOL_KEY(model.use_mgaa)},
      {"model.use_pcem", BOOL_KEY(model.use_pcem)},
      {"model.use_fcem", BOOL_KEY(model.use_fcem)},
      {"model.use_shallow", BOOL_KEY(model.use_shallow)},
      {"model.use_deep", BOOL_KEY(model.use_deep)},
      {"model.bn_momentum", DOUBLE_KEY(model.bn_momentum)},
      {"model.bn_eps", DOUBLE_KEY(model.bn_eps)},
      {"train.batch_size", SIZE_KEY(train.batch_size)},
      {"train.max_epochs", SIZE_KEY(train.max_epochs)},
      {"train.patience", SIZE_KEY(train.patience)},
      {"train.lr_max", DOUBLE_KEY(train.lr_max)},
      {"train.lr_min", DOUBLE_KEY(train.lr_min)},
      {"train.weight_decay", DOUBLE_KEY(train.weight_decay)},
      {"train.beta1", DOUBLE_KEY(train.beta1)},
      {"train.beta2", DOUBLE_KEY(train.beta2)},
      {"train.adam_eps", DOUBLE_KEY(train.adam_eps)},
      {"train.grad_clip", DOUBLE_KEY(train.grad_clip)},
      {"train.split_ratio", DOUBLE_KEY(train.split_ratio)},
      {"train.recalibrate_bn", BOOL_KEY(train.recalibrate_bn)},
      {"train.seed", Key{[](ExperimentConfig& c, const std::string& v) { c.train.seed = to_u64(v); },
                         [](const ExperimentConfig& c) { return std::to_string(c.train.seed); }}},
      {"data.n_per_class", SIZE_KEY(data.n_per_class)},
      {"data.durations",
       Key{[](ExperimentConfig& c, const std::string& v) {
             c.data.durations.clear();
             for (const auto& p : split_list(v)) c.data.durations.push_back(parse_duration(p));
           },
           [](const ExperimentConfig& c) { return join(c.data.durations, duration_name); }}},
      {"data.feature", Key{[](ExperimentConfig& c, const std::string& v) { c.data.feature = features::parse_kind(v); },
                           [](const ExperimentConfig& c) { return features::kind_name(c.data.feature); }}},
      {"data.degraded_fraction", DOUBLE_KEY(data.degraded_fraction)},
      {"data.loss_rates",
       Key{[](ExperimentConfig& c, const std::string& v) {
             auto parts = split_list(v);
             if (parts.size() != kNumConditions)
               throw ConfigError("config", "data.loss_rates needs 6 values (C0..C5)");
             for (std::size_t i = 0; i < kNumConditions; ++i) c.data.conditions.loss_rates[i] = to_double(parts[i]);
           },
           [](const ExperimentConfig& c) { return join(c.data.conditions.loss_rates, fmt_double); }}},
  };
  return table;
}

#undef SIZE_KEY
#undef DOUBLE_KEY
#undef BOOL_KEY
#undef SIZES_KEY

}  // namespace

StageGeometry ModelConfig::stage(int s) const {
  if (s == 1) return {stem_channels, in_f, in_t};
  if (s == 2) {
    const std::size_t t1 = (in_t + 1) / 2;
    return {cfeb_channels[1], in_f / 4, (t1 + 1) / 2};
  }
  throw ConfigError("model", "stage index must be 1 or 2");
}

std::array<std::size_t, 3> ModelConfig::scaled_pool_targets(std::size_t f) const {
  std::array<std::size_t, 3> out{};
  for (std::size_t j = 0; j < 3; ++j) out[j] = (f * pool_targets[j] + kPoolReferenceF - 1) / kPoolReferenceF;
  return out;
}

std::size_t ModelConfig::classifier_inputs() const {
  const auto g = stage(2);
  return g.channels * g.f * g.t;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("model", m); };
  if (in_t < 1) fail("in_t must be positive");
  if (in_f < 4 || in_f % 4 != 0) fail("in_f must be a positive multiple of 4 (two CFEB halvings), got " + std::to_string(in_f));
  if (kappa < 1 || kappa2 < 1) fail("kappa and kappa2 must be positive");
  if (afi_kernel < 1 || afi_kernel % 2 == 0) fail("afi_kernel must be odd");
  for (std::size_t k : k_list)
    if (k < 1) fail("frequency kernel sizes must be positive");
  for (int s = 1; s <= 2; ++s) {
    const auto g = stage(s);
    const std::string where = "stage " + std::to_string(s) + " ";
    if (g.channels < kappa)
      fail(where + "channels " + std::to_string(g.channels) + " below kappa " + std::to_string(kappa));
    if (g.channels % kappa2 != 0)
      fail(where + "channels " + std::to_string(g.channels) + " not divisible by kappa2 " + std::to_string(kappa2));
    for (std::size_t t : scaled_pool_targets(g.f))
      if (t < 1 || t > g.f) fail(where + "pool target " + std::to_string(t) + " outside [1, " + std::to_string(g.f) + "]");
    const std::size_t bands = mgaa_bands[s - 1];
    if (bands < 1 || g.f % bands != 0)
      fail(where + "F=" + std::to_string(g.f) + " not divisible by MGAA band count " + std::to_string(bands));
  }
  if (cfeb_channels[0] < 1) fail("cfeb channels must be positive");
  if (!(bn_momentum > 0.0 && bn_momentum <= 1.0) || !(bn_eps > 0.0)) fail("invalid batch-norm hyperparameters");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("training", m); };
  if (batch_size < 2) fail("batch_size must be at least 2 (batch statistics)");
  if (max_epochs < 1) fail("max_epochs must be positive");
  if (patience < 1) fail("patience must be at least 1");
  if (!(lr_min > 0.0 && lr_min <= lr_max)) fail("need 0 < lr_min <= lr_max");
  if (weight_decay < 0.0) fail("weight_decay must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && adam_eps > 0.0)) fail("invalid AdamW moments");
  if (!(grad_clip > 0.0)) fail("grad_clip must be positive");
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) fail("split_ratio must lie in (0, 1)");
}

void DataConfig::validate() const {
  if (n_per_class < 1) throw ConfigError("config", "data.n_per_class must be positive");
  if (durations.empty()) throw ConfigError("config", "data.durations must not be empty");
  if (!(degraded_fraction >= 0.0 && degraded_fraction <= 1.0))
    throw ConfigError("config", "data.degraded_fraction must lie in [0, 1]");
  if (conditions.loss_rates[0] != 0.0) throw ConfigError("config", "C0 loss rate must be 0");
  for (std::size_t k = 1; k < kNumConditions; ++k) {
    if (!(conditions.loss_rates[k] >= 0.0 && conditions.loss_rates[k] < 1.0))
      throw ConfigError("config", "loss rates must lie in [0, 1)");
    if (k >= 2 && conditions.loss_rates[k] < conditions.loss_rates[k - 1])
      throw ConfigError("config", "loss rates must be nondecreasing from C1 to C5");
  }
}

void ExperimentConfig::validate() const {
  model.validate();
  train.validate();
  data.validate();
}

std::string ExperimentConfig::to_text() const {
  std::string out;
  for (const auto& [name, key] : keys()) out += name + " = " + key.get(*this) + "\n";
  return out;
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "line " + std::to_string(lineno) + ": ";
    if (eq == std::string::npos) throw ConfigError("config", where + "expected 'key = value'");
    const std::string name = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    auto it = keys().find(name);
    if (it == keys().end()) throw ConfigError("config", where + "unknown key '" + name + "'");
    try {
      it->second.set(cfg, value);
    } catch (const Error& e) {
      throw ConfigError("config", where + name + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config", "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

ModelConfig with_variant(ModelConfig cfg, const std::string& variant) {
  if (variant == "full") return cfg;
  if (variant == "no_mgaa") cfg.use_mgaa = false;
  else if (variant == "no_pcem") cfg.use_pcem = false;
  else if (variant == "no_fcem") cfg.use_fcem = false;
  else if (variant == "deep_only") cfg.use_shallow = false;
  else if (variant == "shallow_only") cfg.use_deep = false;
  else throw ConfigError("config", "unknown ablation variant '" + variant + "'");
  return cfg;
}

}  // namespace smgaa
