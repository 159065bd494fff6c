#include "smgaa/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "smgaa/error.hpp"
#include "smgaa/evaluation.hpp"
#include "smgaa/io.hpp"
#include "smgaa/log.hpp"
#include "smgaa/rng.hpp"

namespace smgaa::train {

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2 || logits.dim(1) != 2) throw ConfigError("train", "cross_entropy expects [B,2] logits");
  const std::size_t b = logits.dim(0);
  if (b == 0) throw ConfigError("train", "cross_entropy on an empty batch");
  if (labels.size() != b) throw ConfigError("train", "cross_entropy: label count differs from batch size");
  std::vector<double> probs(2 * b);
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw ConfigError("train", "labels must be 0 or 1");
    const double a = logits[2 * i], c = logits[2 * i + 1];
    const double mx = std::max(a, c);
    const double lse = mx + std::log(std::exp(a - mx) + std::exp(c - mx));
    total += lse - logits[2 * i + labels[i]];
    probs[2 * i] = std::exp(a - lse);
    probs[2 * i + 1] = std::exp(c - lse);
  }
  Tensor out = Tensor::scalar(total / static_cast<double>(b));
  if (GradTape::should_record({&logits})) {
    GradTape::current()->record(GradTape::Entry{
        "cross_entropy", {logits}, out, [logits, out, probs, labels, b]() {
          const double g = out.grad()[0] / static_cast<double>(b);
          auto gi = logits.grad_buffer();
          for (std::size_t i = 0; i < b; ++i)
            for (std::size_t k = 0; k < 2; ++k)
              gi[2 * i + k] += g * (probs[2 * i + k] - (static_cast<int>(k) == labels[i] ? 1.0 : 0.0));
        }});
  }
  return out;
}

double cosine_lr(std::size_t step, std::size_t total_steps, double lr_max, double lr_min) {
  if (total_steps == 0) throw ConfigError("train", "cosine_lr: total_steps must be positive");
  if (step > total_steps) throw ConfigError("train", "cosine_lr: step beyond total_steps");
  if (step == total_steps) return lr_min;
  const double phase = std::numbers::pi * static_cast<double>(step) / static_cast<double>(total_steps);
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(phase));
}

double clip_grad_norm(const std::vector<std::pair<std::string, Tensor>>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& [path, t] : params)
    for (double g : t.grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (std::isfinite(norm) && norm > max_norm) {
    const double scale = max_norm / norm;
    for (const auto& [path, t] : params)
      if (t.has_grad())
        for (double& g : t.grad_buffer()) g *= scale;
  }
  return norm;
}

void AdamW::step(const std::vector<std::pair<std::string, Tensor>>& params, double lr) {
  for (const auto& [path, t] : params)
    for (double g : t.grad())
      if (!std::isfinite(g)) throw NumericError("train", "non-finite gradient in " + path);
  ++steps_;
  const double bc1 = 1.0 - std::pow(h_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(h_.beta2, static_cast<double>(steps_));
  for (const auto& [path, param] : params) {
    Tensor t = param;
    auto& st = state_[path];
    if (st.m.empty()) {
      st.m.assign(t.numel(), 0.0);
      st.v.assign(t.numel(), 0.0);
    }
    if (st.m.size() != t.numel()) throw ConfigError("train", "optimizer state shape changed for " + path);
    auto grad = t.grad();
    auto w = t.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double g = grad.empty() ? 0.0 : grad[i];
      st.m[i] = h_.beta1 * st.m[i] + (1.0 - h_.beta1) * g;
      st.v[i] = h_.beta2 * st.v[i] + (1.0 - h_.beta2) * g * g;
      const double mh = st.m[i] / bc1, vh = st.v[i] / bc2;
      w[i] -= lr * (mh / (std::sqrt(vh) + h_.eps) + h_.weight_decay * w[i]);
    }
  }
}

const AdamW::Moments& AdamW::moments(const std::string& path) const {
  auto it = state_.find(path);
  if (it == state_.end()) throw ConfigError("train", "no optimizer state for " + path);
  return it->second;
}

Split stratified_split(const data::Dataset& ds, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("train", "split ratio must be in (0,1)");
  Split s;
  for (int cls = 0; cls < 2; ++cls) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < ds.size(); ++i)
      if (static_cast<int>(ds[i].label) == cls) idx.push_back(i);
    Rng rng(mix_seed(seed, 0x5b117 + cls));
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
    const auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(idx.size())));
    if (n_train == 0 || n_train == idx.size())
      throw ConfigError("train", "split leaves no " + label_name(static_cast<Label>(cls)) + " clips in " +
                                     (n_train == 0 ? "train" : "validation"));
    s.train.insert(s.train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.val.insert(s.val.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  return s;
}

namespace {

std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& order, std::size_t batch) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < order.size(); i += batch)
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + batch)));
  // A single-sample batch has no batch-norm statistics worth using.
  if (out.size() > 1 && out.back().size() == 1) {
    out[out.size() - 2].push_back(out.back().front());
    out.pop_back();
  }
  return out;
}

data::Dataset subset(const data::Dataset& ds, const std::vector<std::size_t>& idx) {
  data::Dataset out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(ds[i]);
  return out;
}

}  // namespace

void recalibrate_bn(model::Model& m, const data::Dataset& ds, const std::vector<std::size_t>& idx,
                    std::size_t batch) {
  for (const auto& [path, t] : m.params.all())
    if (path.ends_with(".running_mean") || path.ends_with(".running_var")) {
      Tensor h = t;
      std::fill(h.data().begin(), h.data().end(), 0.0);
    }
  auto batches = make_batches(idx, batch);
  ModelConfig cfg = m.cfg;
  for (std::size_t k = 0; k < batches.size(); ++k) {
    cfg.bn_momentum = 1.0 / static_cast<double>(k + 1);
    model::full_forward(cfg, m.params, data::stack(ds, batches[k]), model::NormMode::kTrain);
  }
}

EarlyStopping::EarlyStopping(std::size_t patience) : patience_(patience), best_(std::numeric_limits<double>::infinity()) {
  if (patience == 0) throw ConfigError("train", "patience must be at least 1");
}

bool EarlyStopping::update(double val_eer, double val_loss) {
  if (val_eer < best_ || (val_eer == best_ && val_loss < best_loss_)) {
    best_ = val_eer;
    best_loss_ = val_loss;
    bad_epochs_ = 0;
    return true;
  }
  ++bad_epochs_;
  return false;
}

void write_log(const std::filesystem::path& path, const std::vector<EpochLog>& log) {
  io::CsvTable t;
  t.header = {"epoch", "step", "lr", "train_loss", "val_eer", "val_loss", "wall_seconds"};
  auto num = [](double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  for (const auto& e : log)
    t.rows.push_back({std::to_string(e.epoch), std::to_string(e.step), num(e.lr), num(e.train_loss), num(e.val_eer),
                      num(e.val_loss), num(e.wall_seconds)});
  io::write_csv(path, t);
}

FitResult fit(model::Model& m, const data::Dataset& ds, const TrainConfig& cfg, const FitOptions& opts) {
  cfg.validate();
  const Split split = stratified_split(ds, cfg.split_ratio, cfg.seed);
  const data::Dataset val = subset(ds, split.val);
  const std::size_t per_epoch = make_batches(split.train, cfg.batch_size).size();
  const std::size_t total_steps = cfg.max_epochs * per_epoch;

  auto params = m.params.trainable_params();
  for (auto& [path, t] : params) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  AdamW opt({cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay});
  EarlyStopping stopper(cfg.patience);
  model::ParameterSet best = m.params.clone();
  FitResult res;
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t step = 0;
  log::info("train: " + std::to_string(split.train.size()) + " train / " + std::to_string(split.val.size()) +
            " val clips, " + std::to_string(per_epoch) + " steps per epoch");

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::vector<std::size_t> order = split.train;
    Rng rng(mix_seed(cfg.seed, 0xe90c + epoch));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    double loss_sum = 0.0, lr = cfg.lr_max;
    const auto batches = make_batches(order, cfg.batch_size);
    for (const auto& b : batches) {
      lr = cosine_lr(step, total_steps, cfg.lr_max, cfg.lr_min);
      GradTape tape;
      Tensor loss;
      {
        GradTape::Scope scope(tape);
        loss = cross_entropy(m.forward(data::stack(ds, b), model::NormMode::kTrain), data::labels(ds, b));
      }
      if (!std::isfinite(loss.item())) throw NumericError("train", "non-finite loss at step " + std::to_string(step));
      tape.backward(loss);
      clip_grad_norm(params, cfg.grad_clip);
      opt.step(params, lr);
      for (auto& [path, t] : params) t.zero_grad();
      loss_sum += loss.item();
      if (opts.step_losses) opts.step_losses->push_back(loss.item());
      ++step;
      log::debug("train: step " + std::to_string(step) + " loss " + std::to_string(loss.item()));
    }
    if (cfg.recalibrate_bn) recalibrate_bn(m, ds, split.train, cfg.batch_size);
    const auto scores = eval::score_dataset(m, val);
    std::vector<Label> val_labels;
    double val_loss = 0.0;
    for (std::size_t i = 0; i < val.size(); ++i) {
      val_labels.push_back(val[i].label);
      // Scores are log P(spoof).
      val_loss -= val[i].label == Label::kSpoof ? scores[i] : std::log(std::max(-std::expm1(scores[i]), 1e-300));
    }
    EpochLog e;
    e.epoch = epoch;
    e.step = step;
    e.lr = lr;
    e.train_loss = loss_sum / static_cast<double>(batches.size());
    e.val_eer = eval::compute_eer(scores, val_labels).eer;
    e.val_loss = val_loss / static_cast<double>(val.size());
    e.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.log.push_back(e);
    if (stopper.update(e.val_eer, e.val_loss)) {
      best.copy_from(m.params);
      res.best_epoch = epoch;
      res.best_val_eer = e.val_eer;
      if (!opts.checkpoint.empty()) model::save_model(opts.checkpoint, model::Model(m.cfg, best.clone()), opts.extra_config);
    }
    if (!opts.log_csv.empty()) write_log(opts.log_csv, res.log);
    if (opts.on_epoch) opts.on_epoch(e);
    log::info("train: epoch " + std::to_string(epoch) + " loss " + std::to_string(e.train_loss) + " val_eer " +
              std::to_string(e.val_eer) + " val_loss " + std::to_string(e.val_loss));
    if (stopper.should_stop()) {
      res.stopped_early = epoch < cfg.max_epochs;
      break;
    }
  }
  for (auto& [path, t] : params) t.set_requires_grad(false);
  m.params.copy_from(best);
  return res;
}

}  // namespace smgaa::train
