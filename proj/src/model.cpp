#include "smgaa/model.hpp"

#include <cmath>
#include <sstream>

#include "smgaa/error.hpp"
#include "smgaa/io.hpp"
#include "smgaa/rng.hpp"

namespace smgaa::model {

// ---- ParameterSet -----------------------------------------------------------

Tensor& ParameterSet::add(const std::string& path, Tensor t, bool trainable) {
  if (tensors_.count(path)) throw ConfigError("model", "duplicate parameter path " + path);
  t.set_requires_grad(trainable);
  if (!trainable) buffers_.insert(path);
  return tensors_[path] = std::move(t);
}

const Tensor& ParameterSet::get(const std::string& path) const {
  auto it = tensors_.find(path);
  if (it == tensors_.end()) throw ConfigError("model", "missing parameter " + path);
  return it->second;
}

Tensor& ParameterSet::get(const std::string& path) {
  auto it = tensors_.find(path);
  if (it == tensors_.end()) throw ConfigError("model", "missing parameter " + path);
  return it->second;
}

std::vector<std::pair<std::string, Tensor>> ParameterSet::trainable_params() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (const auto& [path, t] : tensors_)
    if (trainable(path)) out.emplace_back(path, t);
  return out;
}

std::size_t ParameterSet::count_trainable() const {
  std::size_t n = 0;
  for (const auto& [path, t] : tensors_)
    if (trainable(path)) n += t.numel();
  return n;
}

ops::NormStats ParameterSet::norm_stats(const std::string& path, double momentum, double eps) const {
  return ops::NormStats{get(path + ".running_mean"), get(path + ".running_var"), momentum, eps};
}

ParameterSet ParameterSet::clone() const {
  ParameterSet out;
  for (const auto& [path, t] : tensors_) out.add(path, t.clone(), trainable(path));
  return out;
}

void ParameterSet::copy_from(const ParameterSet& other) {
  if (other.tensors_.size() != tensors_.size()) throw ConfigError("model", "parameter sets differ in size");
  for (auto& [path, t] : tensors_) {
    const Tensor& src = other.get(path);
    if (src.shape() != t.shape()) throw ConfigError("model", "shape mismatch for " + path);
    std::copy(src.data().begin(), src.data().end(), t.data().begin());
  }
}

// ---- initialisation -----------------------------------------------------------

namespace {

class Builder {
 public:
  Builder(ParameterSet& ps, std::uint64_t seed) : ps_(ps), seed_(seed) {}

  void conv(const std::string& path, std::size_t cout, std::size_t cin_per_group, std::size_t kf, std::size_t kt) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(cin_per_group * kf * kt));
    Rng rng(mix_seed(seed_, fnv1a(path)));
    Tensor w({cout, cin_per_group, kf, kt});
    for (auto& v : w.data()) v = rng.uniform(-bound, bound);
    Tensor b({cout});
    for (auto& v : b.data()) v = rng.uniform(-bound, bound);
    ps_.add(path + ".weight", w);
    ps_.add(path + ".bias", b);
  }

  void norm(const std::string& path, std::size_t c) {
    ps_.add(path + ".gamma", Tensor::full({c}, 1.0));
    ps_.add(path + ".beta", Tensor::zeros({c}));
    ps_.add(path + ".running_mean", Tensor::zeros({c}), false);
    ps_.add(path + ".running_var", Tensor::full({c}, 1.0), false);
  }

  void linear(const std::string& path, std::size_t m, std::size_t n) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(n));
    Rng rng(mix_seed(seed_, fnv1a(path)));
    Tensor w({m, n});
    for (auto& v : w.data()) v = rng.uniform(-bound, bound);
    Tensor b({m});
    for (auto& v : b.data()) v = rng.uniform(-bound, bound);
    ps_.add(path + ".weight", w);
    ps_.add(path + ".bias", b);
  }

 private:
  ParameterSet& ps_;
  std::uint64_t seed_;
};

std::string stage_prefix(int stage) { return "stage" + std::to_string(stage); }

void build_block(Builder& b, const ModelConfig& cfg, int stage) {
  const auto g = cfg.stage(stage);
  const std::size_t c = g.channels, r = c / cfg.kappa, h = c / cfg.kappa2;
  const std::string p = stage_prefix(stage);
  if (cfg.use_pcem) {
    b.conv(p + ".pcem.pd.dw", c, 1, 3, 3);
    b.norm(p + ".pcem.pd.bn", c);
    b.conv(p + ".pcem.pd.pw", c, c, 1, 1);
    b.conv(p + ".pcem.ca.reduce", r, c, 1, 1);
    b.conv(p + ".pcem.ca.expand", c, r, 1, 1);
    b.conv(p + ".pcem.tfc.vt", c, c, 3, 1);
    b.conv(p + ".pcem.tfc.vf", c, c, 1, 3);
    b.norm(p + ".pcem.tfc.bn", c);
    b.conv(p + ".pcem.out", c, c, 1, 1);
  }
  if (cfg.use_mgaa) {
    b.conv(p + ".mgaa.reduce", r, c, 1, 1);
    b.conv(p + ".mgaa.expand", c, r, 1, 1);
  }
  if (cfg.use_fcem) {
    for (std::size_t i = 0; i < 3; ++i) {
      const std::string q = p + ".fcem.branch" + std::to_string(i + 1);
      b.conv(q + ".conv", h, c, cfg.k_list[i], 1);
      b.norm(q + ".bn", h);
    }
    b.conv(p + ".fcem.fuse.conv", c, 3 * h + 3 * c, 1, 1);
    b.norm(p + ".fcem.fuse.bn", c);
    b.conv(p + ".fcem.afi.dw", c, 1, cfg.afi_kernel, 1);
  }
}

}  // namespace

ParameterSet init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ParameterSet ps;
  Builder b(ps, seed);
  b.conv("stem", cfg.stem_channels, 1, 1, 1);
  if (cfg.use_shallow) build_block(b, cfg, 1);
  b.conv("cfeb1.conv", cfg.cfeb_channels[0], cfg.stem_channels, 3, 3);
  b.norm("cfeb1.bn", cfg.cfeb_channels[0]);
  b.conv("cfeb2.conv", cfg.cfeb_channels[1], cfg.cfeb_channels[0], 3, 3);
  b.norm("cfeb2.bn", cfg.cfeb_channels[1]);
  if (cfg.use_deep) build_block(b, cfg, 2);
  b.linear("classifier", 2, cfg.classifier_inputs());
  return ps;
}

// ---- layers -------------------------------------------------------------------

Tensor conv_layer(const Context& cx, const std::string& path, const Tensor& x, const Padding& pad,
                  std::size_t groups) {
  return ops::conv2d(x, cx.params.get(path + ".weight"), cx.params.get(path + ".bias"), pad, groups);
}

Tensor norm_layer(const Context& cx, const std::string& path, const Tensor& x) {
  auto stats = cx.params.norm_stats(path, cx.cfg.bn_momentum, cx.cfg.bn_eps);
  return ops::batch_norm(x, cx.params.get(path + ".gamma"), cx.params.get(path + ".beta"), stats, cx.mode);
}

// sigma_s(V_c(sigma_g(N_b(H_DW(z)))))
Tensor pd_forward(const Context& cx, const std::string& prefix, const Tensor& z) {
  const std::size_t c = z.dim(1);
  Tensor h = conv_layer(cx, prefix + ".pd.dw", z, {1, 1, 1, 1}, c);
  h = ops::gelu(norm_layer(cx, prefix + ".pd.bn", h));
  return ops::sigmoid(conv_layer(cx, prefix + ".pd.pw", h));
}

// sigma_s(W_p sigma_g(W_r GAP(z)))
Tensor ca_forward(const Context& cx, const std::string& prefix, const Tensor& z) {
  if (z.dim(1) < cx.cfg.kappa)
    throw ConfigError("model", "channel attention needs C >= kappa, got C=" + std::to_string(z.dim(1)));
  Tensor s = ops::global_avg_pool(z);
  s = ops::gelu(conv_layer(cx, prefix + ".ca.reduce", s));
  return ops::sigmoid(conv_layer(cx, prefix + ".ca.expand", s));
}

// sigma_g(N_b(V_f(V_t(z)))), V_t a (3,1) kernel and V_f a (1,3) kernel.
Tensor tfc_forward(const Context& cx, const std::string& prefix, const Tensor& z) {
  Tensor h = conv_layer(cx, prefix + ".tfc.vt", z, {1, 1, 0, 0});
  h = conv_layer(cx, prefix + ".tfc.vf", h, {0, 0, 1, 1});
  return ops::gelu(norm_layer(cx, prefix + ".tfc.bn", h));
}

Tensor pcem_forward(const Context& cx, const std::string& prefix, const Tensor& z) {
  Tensor p = pd_forward(cx, prefix, z);
  Tensor c = ca_forward(cx, prefix, z);
  Tensor t = tfc_forward(cx, prefix, z);
  return conv_layer(cx, prefix + ".out", ops::add(ops::mul(ops::mul(z, p), c), t));
}

Tensor mgaa_gates(const Context& cx, const std::string& prefix, const Tensor& z, std::size_t bands) {
  if (bands < 1 || z.dim(2) % bands != 0)
    throw ConfigError("model", "MGAA: F=" + std::to_string(z.dim(2)) + " not divisible by " + std::to_string(bands) +
                                   " bands");
  Tensor s = ops::mean_over_time(ops::adaptive_pool_f(z, bands, ops::PoolMode::kAvg));
  s = ops::gelu(conv_layer(cx, prefix + ".reduce", s));
  return ops::sigmoid(conv_layer(cx, prefix + ".expand", s));
}

Tensor mgaa_forward(const Context& cx, const std::string& prefix, const Tensor& z, std::size_t bands) {
  Tensor gate = ops::repeat_f(mgaa_gates(cx, prefix, z, bands), z.dim(2));
  return ops::add(z, ops::mul(z, gate));
}

Tensor mfa_branch(const Context& cx, const std::string& prefix, const Tensor& d, std::size_t i) {
  if (d.dim(1) % cx.cfg.kappa2 != 0)
    throw ConfigError("model", "MFA branch: C=" + std::to_string(d.dim(1)) + " not divisible by kappa2");
  const std::size_t k = cx.cfg.k_list.at(i);
  const std::string q = prefix + ".branch" + std::to_string(i + 1);
  Tensor h = conv_layer(cx, q + ".conv", d, {same_pad_before(k), same_pad_after(k), 0, 0});
  return ops::gelu(norm_layer(cx, q + ".bn", h));
}

Tensor mfa_pool(const Context& cx, const Tensor& d, std::size_t j) {
  const std::size_t f = d.dim(2);
  const std::size_t target = cx.cfg.scaled_pool_targets(f).at(j);
  const auto mode = j < 2 ? ops::PoolMode::kMax : ops::PoolMode::kAvg;
  return ops::bilinear_resize_f(ops::adaptive_pool_f(d, target, mode), f);
}

Tensor afi_forward(const Context& cx, const std::string& prefix, const Tensor& d) {
  const std::size_t k = cx.cfg.afi_kernel;
  return ops::sigmoid(conv_layer(cx, prefix + ".afi.dw", d, {k / 2, k / 2, 0, 0}, d.dim(1)));
}

Tensor fcem_fuse(const Context& cx, const std::string& prefix, const Tensor& d) {
  std::vector<Tensor> parts;
  for (std::size_t i = 0; i < 3; ++i) parts.push_back(mfa_branch(cx, prefix, d, i));
  for (std::size_t j = 0; j < 3; ++j) parts.push_back(mfa_pool(cx, d, j));
  Tensor cat = ops::concat_channels(parts);
  const std::size_t c = d.dim(1);
  if (cat.dim(1) != 3 * (c / cx.cfg.kappa2) + 3 * c)
    throw ConfigError("model", "FCEM concat width " + std::to_string(cat.dim(1)) + " is unexpected");
  return ops::gelu(norm_layer(cx, prefix + ".fuse.bn", conv_layer(cx, prefix + ".fuse.conv", cat)));
}

Tensor fcem_forward(const Context& cx, const std::string& prefix, const Tensor& d) {
  return ops::mul(fcem_fuse(cx, prefix, d), afi_forward(cx, prefix, d));
}

Tensor smgaa_block(const Context& cx, int stage, const Tensor& z) {
  const std::string p = stage_prefix(stage);
  Tensor h = z;
  if (cx.cfg.use_pcem) h = pcem_forward(cx, p + ".pcem", h);
  if (cx.cfg.use_mgaa) h = mgaa_forward(cx, p + ".mgaa", h, cx.cfg.mgaa_bands[stage - 1]);
  if (cx.cfg.use_fcem) h = fcem_forward(cx, p + ".fcem", h);
  if (h.shape() != z.shape())
    throw ConfigError("model", "S-MGAA block changed shape " + shape_str(z.shape()) + " -> " + shape_str(h.shape()));
  return h;
}

Tensor cfeb_forward(const Context& cx, const std::string& prefix, const Tensor& x) {
  if (x.dim(2) % 2 != 0) throw ConfigError("model", "CFEB needs an even F, got " + std::to_string(x.dim(2)));
  Tensor h = conv_layer(cx, prefix + ".conv", x, {1, 1, 1, 1});
  h = ops::gelu(norm_layer(cx, prefix + ".bn", h));
  return ops::max_pool_2x2(h);
}

Tensor full_forward(const ModelConfig& cfg, ParameterSet& params, const Tensor& features, NormMode mode) {
  if (features.rank() != 4 || features.dim(1) != 1 || features.dim(2) != cfg.in_f || features.dim(3) != cfg.in_t)
    throw ConfigError("model", "expected features [B,1," + std::to_string(cfg.in_f) + "," + std::to_string(cfg.in_t) +
                                   "], got " + shape_str(features.shape()));
  Context cx{cfg, params, mode};
  Tensor h = conv_layer(cx, "stem", features);
  if (cfg.use_shallow) h = smgaa_block(cx, 1, h);
  h = cfeb_forward(cx, "cfeb1", h);
  h = cfeb_forward(cx, "cfeb2", h);
  if (cfg.use_deep) h = smgaa_block(cx, 2, h);
  return ops::linear(ops::flatten(h), params.get("classifier.weight"), params.get("classifier.bias"));
}

std::vector<double> spoof_scores(const Tensor& logits) {
  if (logits.rank() != 2 || logits.dim(1) != 2) throw ConfigError("model", "logits must be [B,2]");
  std::vector<double> s(logits.dim(0));
  for (std::size_t b = 0; b < s.size(); ++b) {
    const double l0 = logits[2 * b], l1 = logits[2 * b + 1];
    const double m = std::max(l0, l1);
    s[b] = l1 - (m + std::log(std::exp(l0 - m) + std::exp(l1 - m)));
  }
  return s;
}

std::size_t count_params(const ParameterSet& params) { return params.count_trainable(); }

std::size_t count_flops(const ModelConfig& cfg, std::size_t in_t) {
  ModelConfig c = cfg;
  c.in_t = in_t;
  c.validate();
  auto conv = [](std::size_t cout, std::size_t cin_per_group, std::size_t kf, std::size_t kt, std::size_t positions) {
    return 2 * cout * cin_per_group * kf * kt * positions;
  };
  auto block = [&](int stage) {
    const auto g = c.stage(stage);
    const std::size_t ch = g.channels, r = ch / c.kappa, h = ch / c.kappa2, pos = g.f * g.t;
    std::size_t n = 0;
    if (c.use_pcem) {
      n += conv(ch, 1, 3, 3, pos) + conv(ch, ch, 1, 1, pos);  // PD
      n += conv(r, ch, 1, 1, 1) + conv(ch, r, 1, 1, 1);       // CA
      n += conv(ch, ch, 3, 1, pos) + conv(ch, ch, 1, 3, pos); // TFC
      n += conv(ch, ch, 1, 1, pos);                           // outer V_c
    }
    if (c.use_mgaa) {
      const std::size_t bands = c.mgaa_bands[stage - 1];
      n += conv(r, ch, 1, 1, bands) + conv(ch, r, 1, 1, bands);
    }
    if (c.use_fcem) {
      for (std::size_t k : c.k_list) n += conv(h, ch, k, 1, pos);
      n += conv(ch, 3 * h + 3 * ch, 1, 1, pos);
      n += conv(ch, 1, c.afi_kernel, 1, pos);
    }
    return n;
  };
  const auto s1 = c.stage(1);
  std::size_t n = conv(c.stem_channels, 1, 1, 1, s1.f * s1.t);
  if (c.use_shallow) n += block(1);
  n += conv(c.cfeb_channels[0], c.stem_channels, 3, 3, s1.f * s1.t);
  n += conv(c.cfeb_channels[1], c.cfeb_channels[0], 3, 3, (s1.f / 2) * ((s1.t + 1) / 2));
  if (c.use_deep) n += block(2);
  n += 2 * 2 * c.classifier_inputs();
  return n;
}

// ---- persistence ----------------------------------------------------------------

Model::Model(const ModelConfig& c, std::uint64_t seed) : cfg(c), params(init_params(c, seed)) {}

Model::Model(const ModelConfig& c, ParameterSet p) : cfg(c), params(std::move(p)) {
  cfg.validate();
  ParameterSet expected = init_params(cfg, 0);
  for (const auto& [path, t] : expected.all()) {
    if (!params.contains(path)) throw ConfigError("model", "checkpoint lacks parameter " + path);
    if (params.get(path).shape() != t.shape())
      throw ConfigError("model", "checkpoint shape mismatch for " + path + ": " +
                                     shape_str(params.get(path).shape()) + " vs " + shape_str(t.shape()));
  }
  if (params.all().size() != expected.all().size()) throw ConfigError("model", "checkpoint has extra parameters");
}

std::string model_config_text(const ModelConfig& cfg) {
  ExperimentConfig e;
  e.model = cfg;
  std::string out = "model.in_t = " + std::to_string(cfg.in_t) + "\n";
  std::istringstream in(e.to_text());
  std::string line;
  while (std::getline(in, line))
    if (line.rfind("model.", 0) == 0) out += line + "\n";
  return out;
}

ModelConfig parse_model_config(const std::string& text) {
  std::istringstream in(text);
  std::string line, rest;
  std::size_t in_t = 0;
  while (std::getline(in, line)) {
    if (line.rfind("model.in_t", 0) == 0) {
      const auto eq = line.find('=');
      in_t = std::stoul(line.substr(eq + 1));
    } else if (line.rfind("model.", 0) == 0) {
      rest += line + "\n";
    }
  }
  if (in_t == 0) throw ConfigError("model", "checkpoint config lacks model.in_t");
  ModelConfig cfg = parse_config(rest).model;
  cfg.in_t = in_t;
  cfg.validate();
  return cfg;
}

void save_model(const std::filesystem::path& path, const Model& m, const std::string& extra_config) {
  io::Checkpoint ck;
  ck.config_text = model_config_text(m.cfg);
  if (!extra_config.empty()) ck.config_text += "# run\n" + extra_config;
  ck.tensors = m.params.all();
  io::save_checkpoint(path, ck);
}

Model load_model(const std::filesystem::path& path) {
  auto ck = io::load_checkpoint(path);
  const auto cut = ck.config_text.find("# run\n");
  ModelConfig cfg = parse_model_config(ck.config_text.substr(0, cut));
  ParameterSet expected = init_params(cfg, 0);
  ParameterSet ps;
  for (auto& [name, t] : ck.tensors) {
    if (!expected.contains(name)) throw ConfigError("model", path.string() + ": unexpected parameter " + name);
    ps.add(name, t, expected.trainable(name));
  }
  return Model(cfg, std::move(ps));
}

}  // namespace smgaa::model
