#pragma once

// Randomized finite-difference cases, one per operator, with shapes drawn from
// the generator. Each loss is sum(op(...) * r) for a fixed random r.

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "smgaa/ops.hpp"
#include "smgaa/training.hpp"
#include "test_support.hpp"

namespace smgaa::testing {

struct GradCase {
  std::string name;
  std::function<Tensor()> loss;
  std::vector<GradTarget> targets;
};

inline Tensor weighted_sum(const Tensor& y, const Tensor& w) { return ops::sum(ops::mul(y, w)); }

inline std::vector<GradCase> op_grad_cases(Rng& rng) {
  auto t = [&](Shape s) { return random_tensor(s, rng); };
  auto pick = [&](std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); };
  auto like = [&](const Tensor& y) { return t(y.shape()); };
  std::vector<GradCase> cases;

  {
    const std::size_t b = pick(1, 2), cin = pick(1, 3), cout = pick(1, 4), f = pick(3, 6), tt = pick(2, 5);
    const std::size_t kf = pick(1, 3), kt = pick(1, 2);
    Tensor x = t({b, cin, f, tt}), w = t({cout, cin, kf, kt}), bias = t({cout});
    const Padding pad{same_pad_before(kf), same_pad_after(kf), same_pad_before(kt), same_pad_after(kt)};
    Tensor r = like(ops::conv2d(x, w, bias, pad));
    cases.push_back({"conv2d", [=] { return weighted_sum(ops::conv2d(x, w, bias, pad), r); },
                     {{"x", x}, {"w", w}, {"b", bias}}});
  }
  {
    const std::size_t c = pick(1, 4), f = pick(4, 8), k = pick(2, 5);
    Tensor x = t({pick(1, 2), c, f, pick(1, 3)}), w = t({c, 1, k, 1}), bias = t({c});
    const Padding pad{same_pad_before(k), same_pad_after(k), 0, 0};
    Tensor r = like(ops::conv2d(x, w, bias, pad, c));
    cases.push_back({"depthwise_conv2d", [=] { return weighted_sum(ops::conv2d(x, w, bias, pad, c), r); },
                     {{"x", x}, {"w", w}, {"b", bias}}});
  }
  {
    const std::size_t c = pick(1, 3);
    Tensor x = t({pick(2, 3), c, pick(2, 4), pick(1, 3)}), g = t({c}), be = t({c}), r = like(x);
    auto stats = std::make_shared<ops::NormStats>(
        ops::NormStats{t({c}), random_tensor({c}, rng, 0.5, 2.0), 0.1, 1e-5});
    cases.push_back({"batch_norm_train",
                     [=] { return weighted_sum(ops::batch_norm(x, g, be, *stats, ops::NormMode::kTrain), r); },
                     {{"x", x}, {"gamma", g}, {"beta", be}}});
    cases.push_back({"batch_norm_eval",
                     [=] { return weighted_sum(ops::batch_norm(x, g, be, *stats, ops::NormMode::kEval), r); },
                     {{"x", x}, {"gamma", g}, {"beta", be}}});
  }
  {
    Tensor x = t({pick(1, 2), pick(1, 3), pick(1, 4), pick(1, 3)}), r = like(x);
    cases.push_back({"gelu", [=] { return weighted_sum(ops::gelu(x), r); }, {{"x", x}}});
    cases.push_back({"sigmoid", [=] { return weighted_sum(ops::sigmoid(x), r); }, {{"x", x}}});
  }
  {
    const std::size_t b = pick(1, 2), c = pick(1, 3), f = pick(2, 7), tt = pick(1, 4), target = pick(1, f);
    Tensor x = t({b, c, f, tt});
    Tensor r = t({b, c, 1, 1}), rt = t({b, c, f, 1}), ra = t({b, c, target, tt});
    cases.push_back({"global_avg_pool", [=] { return weighted_sum(ops::global_avg_pool(x), r); }, {{"x", x}}});
    cases.push_back({"mean_over_time", [=] { return weighted_sum(ops::mean_over_time(x), rt); }, {{"x", x}}});
    cases.push_back({"adaptive_max_pool_f",
                     [=] { return weighted_sum(ops::adaptive_pool_f(x, target, ops::PoolMode::kMax), ra); },
                     {{"x", x}}});
    cases.push_back({"adaptive_avg_pool_f",
                     [=] { return weighted_sum(ops::adaptive_pool_f(x, target, ops::PoolMode::kAvg), ra); },
                     {{"x", x}}});
  }
  {
    const std::size_t f = pick(2, 5), target = pick(1, 10);
    Tensor x = t({pick(1, 2), pick(1, 2), f, pick(1, 3)});
    Tensor r = like(ops::bilinear_resize_f(x, target));
    cases.push_back({"bilinear_resize_f", [=] { return weighted_sum(ops::bilinear_resize_f(x, target), r); },
                     {{"x", x}}});
  }
  {
    const std::size_t f = pick(1, 3), target = f * pick(1, 4);
    Tensor x = t({pick(1, 2), pick(1, 2), f, pick(1, 3)});
    Tensor r = like(ops::repeat_f(x, target));
    cases.push_back({"repeat_f", [=] { return weighted_sum(ops::repeat_f(x, target), r); }, {{"x", x}}});
  }
  {
    Tensor x = t({pick(1, 2), pick(1, 2), 2 * pick(1, 3), pick(1, 5)});
    Tensor r = like(ops::max_pool_2x2(x));
    cases.push_back({"max_pool_2x2", [=] { return weighted_sum(ops::max_pool_2x2(x), r); }, {{"x", x}}});
  }
  {
    const std::size_t b = pick(1, 2), c = pick(1, 3), f = pick(1, 4), tt = pick(1, 3);
    Tensor a = t({b, c, f, tt}), g = t({b, c, 1, 1}), h = t({1, c, f, 1}), r = like(a);
    cases.push_back({"mul_broadcast", [=] { return weighted_sum(ops::mul(ops::mul(a, g), h), r); },
                     {{"a", a}, {"g", g}, {"h", h}}});
    cases.push_back({"add_broadcast", [=] { return weighted_sum(ops::add(ops::add(a, g), h), r); },
                     {{"a", a}, {"g", g}, {"h", h}}});
  }
  {
    const std::size_t b = pick(1, 2), f = pick(1, 3), tt = pick(1, 3);
    Tensor a = t({b, pick(1, 3), f, tt}), c = t({b, pick(1, 3), f, tt});
    Tensor r = like(ops::concat_channels({a, c}));
    cases.push_back({"concat_channels", [=] { return weighted_sum(ops::concat_channels({a, c}), r); },
                     {{"a", a}, {"b", c}}});
  }
  {
    const std::size_t b = pick(1, 3), c = pick(1, 2), f = pick(1, 3), tt = pick(1, 2), out = pick(1, 4);
    Tensor x = t({b, c, f, tt}), w = t({out, c * f * tt}), bias = t({out}), r = t({b, out});
    cases.push_back({"flatten_linear", [=] { return weighted_sum(ops::linear(ops::flatten(x), w, bias), r); },
                     {{"x", x}, {"w", w}, {"b", bias}}});
  }
  {
    const std::size_t b = pick(1, 5);
    Tensor logits = random_tensor({b, 2}, rng, -3.0, 3.0);
    std::vector<int> labels(b);
    for (auto& l : labels) l = static_cast<int>(rng.below(2));
    cases.push_back({"cross_entropy", [=] { return train::cross_entropy(logits, labels); }, {{"logits", logits}}});
  }
  return cases;
}

}  // namespace smgaa::testing
