#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "smgaa/config.hpp"
#include "smgaa/ops.hpp"
#include "smgaa/tensor.hpp"

namespace smgaa::model {

using ops::NormMode;

// Named tensors of a network. Trainable entries require gradients; running
// batch-norm statistics are buffers and are excluded from parameter counts.
class ParameterSet {
 public:
  Tensor& add(const std::string& path, Tensor t, bool trainable = true);
  const Tensor& get(const std::string& path) const;
  Tensor& get(const std::string& path);
  bool contains(const std::string& path) const { return tensors_.count(path) != 0; }
  bool trainable(const std::string& path) const { return buffers_.count(path) == 0; }

  const std::map<std::string, Tensor>& all() const { return tensors_; }
  // Trainable entries in path order.
  std::vector<std::pair<std::string, Tensor>> trainable_params() const;

  std::size_t count_trainable() const;

  // Running statistics for the norm layer at `path`, sharing storage with the
  // stored buffers.
  ops::NormStats norm_stats(const std::string& path, double momentum, double eps) const;

  // Deep copy (values only).
  ParameterSet clone() const;
  // Copies values from `other`; both sets must hold the same paths and shapes.
  void copy_from(const ParameterSet& other);

 private:
  std::map<std::string, Tensor> tensors_;
  std::set<std::string> buffers_;
};

// Builds every parameter of the network for `cfg` with fan-in uniform init.
ParameterSet init_params(const ModelConfig& cfg, std::uint64_t seed);

// Forward context shared by the block functions.
struct Context {
  const ModelConfig& cfg;
  ParameterSet& params;
  NormMode mode;
};

// Primitive layers over `params` at `path`.
Tensor conv_layer(const Context& cx, const std::string& path, const Tensor& x, const Padding& pad = {},
                  std::size_t groups = 1);
Tensor norm_layer(const Context& cx, const std::string& path, const Tensor& x);

// PCEM parts. `prefix` is e.g. "stage1.pcem".
Tensor pd_forward(const Context& cx, const std::string& prefix, const Tensor& z);
Tensor ca_forward(const Context& cx, const std::string& prefix, const Tensor& z);
Tensor tfc_forward(const Context& cx, const std::string& prefix, const Tensor& z);
Tensor pcem_forward(const Context& cx, const std::string& prefix, const Tensor& z);

// MGAA stand-in with `bands` frequency bands.
Tensor mgaa_gates(const Context& cx, const std::string& prefix, const Tensor& z, std::size_t bands);
Tensor mgaa_forward(const Context& cx, const std::string& prefix, const Tensor& z, std::size_t bands);

// FCEM parts; i and j are 0-based.
Tensor mfa_branch(const Context& cx, const std::string& prefix, const Tensor& d, std::size_t i);
Tensor mfa_pool(const Context& cx, const Tensor& d, std::size_t j);
Tensor afi_forward(const Context& cx, const std::string& prefix, const Tensor& d);
Tensor fcem_fuse(const Context& cx, const std::string& prefix, const Tensor& d);
Tensor fcem_forward(const Context& cx, const std::string& prefix, const Tensor& d);

// PCEM -> MGAA -> FCEM at stage 1 or 2, honouring the ablation switches.
Tensor smgaa_block(const Context& cx, int stage, const Tensor& z);
Tensor cfeb_forward(const Context& cx, const std::string& prefix, const Tensor& x);

// Feature batch [B,1,F,T] -> logits [B,2].
Tensor full_forward(const ModelConfig& cfg, ParameterSet& params, const Tensor& features, NormMode mode);

// Spoof-class log-probability per row of the logits.
std::vector<double> spoof_scores(const Tensor& logits);

std::size_t count_params(const ParameterSet& params);
// Analytic per-sample FLOPs of conv and linear layers for input length `in_t`.
std::size_t count_flops(const ModelConfig& cfg, std::size_t in_t);

// Model bundled with its configuration, saved as one checkpoint file.
struct Model {
  ModelConfig cfg;
  ParameterSet params;

  Model(const ModelConfig& c, std::uint64_t seed);
  Model(const ModelConfig& c, ParameterSet p);

  Tensor forward(const Tensor& features, NormMode mode) { return full_forward(cfg, params, features, mode); }
};

void save_model(const std::filesystem::path& path, const Model& m, const std::string& extra_config = "");
Model load_model(const std::filesystem::path& path);
std::string model_config_text(const ModelConfig& cfg);
ModelConfig parse_model_config(const std::string& text);

}  // namespace smgaa::model
