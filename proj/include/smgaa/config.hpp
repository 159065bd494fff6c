#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "smgaa/degrade.hpp"
#include "smgaa/features.hpp"

namespace smgaa {

// Frequency extent at which the configured pool targets apply unscaled.
inline constexpr std::size_t kPoolReferenceF = 60;

struct StageGeometry {
  std::size_t channels, f, t;
};

struct ModelConfig {
  std::size_t in_f = features::kCeps;
  std::size_t in_t = 16;
  std::size_t stem_channels = 16;
  std::array<std::size_t, 2> cfeb_channels{64, 128};
  std::size_t kappa = 8;
  std::size_t kappa2 = 2;
  std::array<std::size_t, 3> k_list{20, 15, 10};
  std::array<std::size_t, 3> pool_targets{20, 30, 20};
  std::size_t afi_kernel = 7;
  // Frequency band count of the MGAA stand-in at stage 1 and stage 2.
  std::array<std::size_t, 2> mgaa_bands{4, 3};

  bool use_mgaa = true;
  bool use_pcem = true;
  bool use_fcem = true;
  bool use_shallow = true;  // stage-1 block
  bool use_deep = true;     // stage-2 block

  double bn_momentum = 0.1;
  double bn_eps = 1e-5;

  // stage 1 = after the stem, stage 2 = after both CFEBs.
  StageGeometry stage(int s) const;
  // ceil(f * target / 60) for each configured pool target.
  std::array<std::size_t, 3> scaled_pool_targets(std::size_t f) const;
  std::size_t classifier_inputs() const;

  // Throws ConfigError naming the violated constraint.
  void validate() const;
};

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t max_epochs = 5;
  std::size_t patience = 3;
  double lr_max = 1e-3;
  double lr_min = 1e-5;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 5.0;
  double split_ratio = 0.8;
  // Re-estimate batch-norm running statistics on the training split after
  // each epoch instead of relying on the momentum averages alone.
  bool recalibrate_bn = true;
  std::uint64_t seed = 7;

  void validate() const;
};

struct DataConfig {
  std::size_t n_per_class = 60;
  std::vector<double> durations{0.5, 1.0, 1.5, 2.0};
  features::FeatureKind feature = features::FeatureKind::kMfcc;
  // Fraction of training clips replaced by a degraded copy (C1..C5 drawn
  // uniformly).
  double degraded_fraction = 0.5;
  degrade::ConditionMap conditions;

  void validate() const;
};

struct ExperimentConfig {
  ModelConfig model;
  TrainConfig train;
  DataConfig data;
  std::uint64_t seed = 7;

  void validate() const;
  // Fully resolved "key = value" text; parse(to_text()) reproduces the config.
  std::string to_text() const;
};

// Architecture ablations: full, no_mgaa, no_pcem, no_fcem, deep_only,
// shallow_only. deep_only drops the stage-1 block, shallow_only the stage-2 one.
inline constexpr std::array<const char*, 6> kAblationVariants{"full",    "no_mgaa",   "no_pcem",
                                                              "no_fcem", "deep_only", "shallow_only"};
ModelConfig with_variant(ModelConfig cfg, const std::string& variant);

// "key = value" lines, '#' comments. Unknown keys and malformed values raise
// ConfigError with the line number.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace smgaa
