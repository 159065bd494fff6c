#pragma once

#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "smgaa/config.hpp"
#include "smgaa/dataset.hpp"
#include "smgaa/model.hpp"

namespace smgaa::train {

// Mean over the batch of -log softmax(logits)[label], via log-sum-exp.
// logits is [B,2]; labels are 0 or 1. Differentiable.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);

// lr_min + (lr_max - lr_min) * (1 + cos(pi * step / total)) / 2.
double cosine_lr(std::size_t step, std::size_t total_steps, double lr_max, double lr_min);

// Scales all gradients so their joint L2 norm is at most `max_norm`. Returns
// the norm before scaling.
double clip_grad_norm(const std::vector<std::pair<std::string, Tensor>>& params, double max_norm);

// Adam with decoupled weight decay:
//   theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + lambda * theta)
class AdamW {
 public:
  struct Hyper {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
  };
  struct Moments {
    std::vector<double> m, v;
  };

  explicit AdamW(Hyper h) : h_(h) {}

  // Applies one update from the accumulated gradients. Parameters without a
  // gradient buffer are treated as having a zero gradient.
  void step(const std::vector<std::pair<std::string, Tensor>>& params, double lr);

  std::size_t steps() const { return steps_; }
  const Moments& moments(const std::string& path) const;

 private:
  Hyper h_;
  std::size_t steps_ = 0;
  std::map<std::string, Moments> state_;
};

struct Split {
  std::vector<std::size_t> train, val;
};

// Per-class seeded shuffle, then the first round(ratio * n_class) of each
// class go to train. Throws when either side would miss a class.
Split stratified_split(const data::Dataset& ds, double ratio, std::uint64_t seed);

// Resets batch-norm running statistics and re-estimates them as the
// cumulative average over the given samples, in fixed order.
void recalibrate_bn(model::Model& m, const data::Dataset& ds, const std::vector<std::size_t>& idx,
                    std::size_t batch);

struct EpochLog {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_eer = 0.0;
  double val_loss = 0.0;
  double wall_seconds = 0.0;
};

struct FitOptions {
  // Written after every epoch when non-empty.
  std::filesystem::path log_csv;
  // Best checkpoint, written whenever validation EER improves.
  std::filesystem::path checkpoint;
  std::string extra_config;
  std::function<void(const EpochLog&)> on_epoch;
  // Loss of each optimizer step, for inspection.
  std::vector<double>* step_losses = nullptr;
};

struct FitResult {
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_val_eer = 1.0;
  bool stopped_early = false;
};

// Trains `m` in place; on return it holds the best-validation parameters.
FitResult fit(model::Model& m, const data::Dataset& ds, const TrainConfig& cfg, const FitOptions& opts = {});

// Early-stopping bookkeeping: feed one validation EER per epoch.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience);
  // Returns true when this epoch is a new best: lower EER, or equal EER and
  // lower validation loss.
  bool update(double val_eer, double val_loss = 0.0);
  bool should_stop() const { return bad_epochs_ >= patience_; }
  double best() const { return best_; }

 private:
  std::size_t patience_;
  std::size_t bad_epochs_ = 0;
  double best_;
  double best_loss_ = std::numeric_limits<double>::infinity();
};

void write_log(const std::filesystem::path& path, const std::vector<EpochLog>& log);

}  // namespace smgaa::train
