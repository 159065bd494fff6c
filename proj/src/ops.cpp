#include "smgaa/ops.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "smgaa/error.hpp"

namespace smgaa::ops {

namespace {

thread_local FlopCounter* g_flop_counter = nullptr;

void count_flops(std::size_t n) {
  if (g_flop_counter) g_flop_counter->add(n);
}

void require_rank4(const Tensor& x, const char* op) {
  if (!x.defined() || x.rank() != 4)
    throw ConfigError("ops", std::string(op) + " expects a rank-4 (B,C,F,T) tensor, got " +
                                 (x.defined() ? shape_str(x.shape()) : "<undefined>"));
}

void record(const char* name, std::vector<Tensor> inputs, const Tensor& out,
            GradTape::Backward fn) {
  GradTape::current()->record(
      GradTape::Entry{name, std::move(inputs), out, std::move(fn)});
}

struct Dims4 {
  std::size_t b, c, f, t;
  explicit Dims4(const Shape& s) : b(s[0]), c(s[1]), f(s[2]), t(s[3]) {}
};

}  // namespace

FlopCounter::FlopCounter() : previous_(g_flop_counter) { g_flop_counter = this; }
FlopCounter::~FlopCounter() { g_flop_counter = previous_; }
FlopCounter* FlopCounter::current() { return g_flop_counter; }

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, const Padding& pad,
              std::size_t groups) {
  require_rank4(input, "conv2d");
  require_rank4(weight, "conv2d kernel");
  if (groups == 0) throw ConfigError("ops", "conv2d groups must be positive");
  ConvGeometry g;
  g.batch = input.dim(0);
  g.in_channels = input.dim(1);
  g.in_f = input.dim(2);
  g.in_t = input.dim(3);
  g.out_channels = weight.dim(0);
  g.groups = groups;
  g.k_f = weight.dim(2);
  g.k_t = weight.dim(3);
  g.pad = pad;
  if (g.in_channels % groups != 0)
    throw ConfigError("ops", "conv2d groups=" + std::to_string(groups) +
                                 " does not divide input channels " + std::to_string(g.in_channels));
  if (g.out_channels % groups != 0)
    throw ConfigError("ops", "conv2d groups=" + std::to_string(groups) +
                                 " does not divide output channels " +
                                 std::to_string(g.out_channels));
  if (weight.dim(1) != g.in_per_group())
    throw ConfigError("ops", "conv2d kernel channel dimension " + std::to_string(weight.dim(1)) +
                                 " != input channels / groups " + std::to_string(g.in_per_group()));
  if (g.k_f > g.in_f + pad.top + pad.bottom)
    throw ConfigError("ops", "conv2d kernel frequency extent " + std::to_string(g.k_f) +
                                 " exceeds padded input frequency extent " +
                                 std::to_string(g.in_f + pad.top + pad.bottom));
  if (g.k_t > g.in_t + pad.left + pad.right)
    throw ConfigError("ops", "conv2d kernel time extent " + std::to_string(g.k_t) +
                                 " exceeds padded input time extent " +
                                 std::to_string(g.in_t + pad.left + pad.right));
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != g.out_channels))
    throw ConfigError("ops", "conv2d bias shape " + shape_str(bias.shape()) + " != [" +
                                 std::to_string(g.out_channels) + "]");

  Tensor out(Shape{g.batch, g.out_channels, g.out_f(), g.out_t()});
  kernels::conv2d_forward(g, input.data(), weight.data(),
                          bias.defined() ? bias.data() : std::span<const double>{}, out.data());
  count_flops(g.flops_per_sample());

  if (GradTape::should_record({&input, &weight, &bias})) {
    record("conv2d", {input, weight, bias}, out, [g, input, weight, bias, out]() mutable {
      auto gout = out.grad();
      if (input.requires_grad())
        kernels::conv2d_backward_input(g, gout, weight.data(), input.grad_buffer());
      const bool want_b = bias.defined() && bias.requires_grad();
      if (weight.requires_grad() || want_b) {
        std::vector<double> scratch_w;
        std::span<double> gw;
        if (weight.requires_grad()) {
          gw = weight.grad_buffer();
        } else {
          scratch_w.assign(weight.numel(), 0.0);
          gw = scratch_w;
        }
        kernels::conv2d_backward_weight(g, gout, input.data(), gw,
                                        want_b ? bias.grad_buffer() : std::span<double>{});
      }
    });
  }
  return out;
}

Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta, NormStats& stats,
                  NormMode mode) {
  require_rank4(input, "batch_norm");
  const Dims4 d(input.shape());
  const Shape cshape{d.c};
  if (gamma.shape() != cshape || beta.shape() != cshape || stats.running_mean.shape() != cshape ||
      stats.running_var.shape() != cshape)
    throw ConfigError("ops", "batch_norm affine/statistics tensors must have shape [" +
                                 std::to_string(d.c) + "]");
  const std::size_t plane = d.f * d.t;
  const std::size_t n = d.b * plane;
  if (mode == NormMode::kTrain && n < 2)
    throw NumericError("ops", "batch_norm degenerate batch: B*F*T = " + std::to_string(n) +
                                  " < 2 in train mode");

  std::vector<double> mean(d.c), inv_std(d.c);
  const auto x = input.data();
  if (mode == NormMode::kTrain) {
    for (std::size_t c = 0; c < d.c; ++c) {
      double s = 0.0;
      for (std::size_t b = 0; b < d.b; ++b) {
        const double* p = x.data() + (b * d.c + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) s += p[i];
      }
      const double mu = s / static_cast<double>(n);
      double v = 0.0;
      for (std::size_t b = 0; b < d.b; ++b) {
        const double* p = x.data() + (b * d.c + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) v += (p[i] - mu) * (p[i] - mu);
      }
      const double var = v / static_cast<double>(n);
      mean[c] = mu;
      inv_std[c] = 1.0 / std::sqrt(var + stats.eps);
      const double unbiased = v / static_cast<double>(n - 1);
      stats.running_mean[c] = (1.0 - stats.momentum) * stats.running_mean[c] + stats.momentum * mu;
      stats.running_var[c] =
          (1.0 - stats.momentum) * stats.running_var[c] + stats.momentum * unbiased;
    }
  } else {
    for (std::size_t c = 0; c < d.c; ++c) {
      mean[c] = stats.running_mean[c];
      inv_std[c] = 1.0 / std::sqrt(stats.running_var[c] + stats.eps);
    }
  }

  Tensor out(input.shape());
  Tensor xhat(input.shape());
  for (std::size_t b = 0; b < d.b; ++b)
    for (std::size_t c = 0; c < d.c; ++c) {
      const std::size_t off = (b * d.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const double h = (x[off + i] - mean[c]) * inv_std[c];
        xhat[off + i] = h;
        out[off + i] = gamma[c] * h + beta[c];
      }
    }

  if (GradTape::should_record({&input, &gamma, &beta})) {
    const bool train = mode == NormMode::kTrain;
    record("batch_norm", {input, gamma, beta}, out,
           [d, n, plane, train, input, gamma, beta, out, xhat, inv_std]() mutable {
             auto gout = out.grad();
             std::vector<double> sum_dy(d.c, 0.0), sum_dy_xhat(d.c, 0.0);
             for (std::size_t b = 0; b < d.b; ++b)
               for (std::size_t c = 0; c < d.c; ++c) {
                 const std::size_t off = (b * d.c + c) * plane;
                 for (std::size_t i = 0; i < plane; ++i) {
                   sum_dy[c] += gout[off + i];
                   sum_dy_xhat[c] += gout[off + i] * xhat[off + i];
                 }
               }
             if (gamma.requires_grad()) {
               auto gg = gamma.grad_buffer();
               for (std::size_t c = 0; c < d.c; ++c) gg[c] += sum_dy_xhat[c];
             }
             if (beta.requires_grad()) {
               auto gb = beta.grad_buffer();
               for (std::size_t c = 0; c < d.c; ++c) gb[c] += sum_dy[c];
             }
             if (!input.requires_grad()) return;
             auto gi = input.grad_buffer();
             const double inv_n = 1.0 / static_cast<double>(n);
             for (std::size_t b = 0; b < d.b; ++b)
               for (std::size_t c = 0; c < d.c; ++c) {
                 const std::size_t off = (b * d.c + c) * plane;
                 const double k = gamma[c] * inv_std[c];
                 if (train) {
                   for (std::size_t i = 0; i < plane; ++i)
                     gi[off + i] += k * (gout[off + i] - inv_n * sum_dy[c] -
                                         xhat[off + i] * inv_n * sum_dy_xhat[c]);
                 } else {
                   for (std::size_t i = 0; i < plane; ++i) gi[off + i] += k * gout[off + i];
                 }
               }
           });
  }
  return out;
}

Tensor gelu(const Tensor& x) {
  Tensor out(x.shape());
  const double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
  for (std::size_t i = 0; i < x.numel(); ++i)
    out[i] = x[i] * 0.5 * (1.0 + std::erf(x[i] * inv_sqrt2));
  if (GradTape::should_record({&x})) {
    record("gelu", {x}, out, [x, out, inv_sqrt2]() mutable {
      auto gout = out.grad();
      auto gi = x.grad_buffer();
      const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
      for (std::size_t i = 0; i < x.numel(); ++i) {
        const double v = x[i];
        const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
        const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
        gi[i] += gout[i] * (cdf + v * pdf);
      }
    });
  }
  return out;
}

Tensor sigmoid(const Tensor& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double v = x[i];
    if (v >= 0.0) {
      out[i] = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      out[i] = e / (1.0 + e);
    }
  }
  if (GradTape::should_record({&x})) {
    record("sigmoid", {x}, out, [x, out]() mutable {
      auto gout = out.grad();
      auto gi = x.grad_buffer();
      for (std::size_t i = 0; i < x.numel(); ++i) gi[i] += gout[i] * out[i] * (1.0 - out[i]);
    });
  }
  return out;
}

Tensor global_avg_pool(const Tensor& x) {
  require_rank4(x, "global_avg_pool");
  const Dims4 d(x.shape());
  const std::size_t plane = d.f * d.t;
  Tensor out(Shape{d.b, d.c, 1, 1});
  for (std::size_t p = 0; p < d.b * d.c; ++p) {
    double s = 0.0;
    for (std::size_t i = 0; i < plane; ++i) s += x[p * plane + i];
    out[p] = s / static_cast<double>(plane);
  }
  if (GradTape::should_record({&x})) {
    record("global_avg_pool", {x}, out, [d, plane, x, out]() mutable {
      auto gout = out.grad();
      auto gi = x.grad_buffer();
      const double inv = 1.0 / static_cast<double>(plane);
      for (std::size_t p = 0; p < d.b * d.c; ++p)
        for (std::size_t i = 0; i < plane; ++i) gi[p * plane + i] += gout[p] * inv;
    });
  }
  return out;
}

Tensor mean_over_time(const Tensor& x) {
  require_rank4(x, "mean_over_time");
  const Dims4 d(x.shape());
  const std::size_t rows = d.b * d.c * d.f;
  Tensor out(Shape{d.b, d.c, d.f, 1});
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t t = 0; t < d.t; ++t) s += x[r * d.t + t];
    out[r] = s / static_cast<double>(d.t);
  }
  if (GradTape::should_record({&x})) {
    record("mean_over_time", {x}, out, [d, rows, x, out]() mutable {
      auto gout = out.grad();
      auto gi = x.grad_buffer();
      const double inv = 1.0 / static_cast<double>(d.t);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t t = 0; t < d.t; ++t) gi[r * d.t + t] += gout[r] * inv;
    });
  }
  return out;
}

Tensor adaptive_pool_f(const Tensor& x, std::size_t target_f, PoolMode mode) {
  require_rank4(x, "adaptive_pool_f");
  const Dims4 d(x.shape());
  if (target_f == 0) throw ConfigError("ops", "adaptive_pool_f target_f must be positive");
  if (target_f > d.f)
    throw ConfigError("ops", "adaptive_pool_f target_f " + std::to_string(target_f) +
                                 " exceeds frequency extent " + std::to_string(d.f));
  std::vector<std::size_t> start(target_f), end(target_f);
  for (std::size_t i = 0; i < target_f; ++i) {
    start[i] = i * d.f / target_f;
    end[i] = (i + 1) * d.f / target_f;
  }
  Tensor out(Shape{d.b, d.c, target_f, d.t});
  std::vector<std::size_t> argmax(mode == PoolMode::kMax ? out.numel() : 0);
  for (std::size_t p = 0; p < d.b * d.c; ++p)
    for (std::size_t i = 0; i < target_f; ++i)
      for (std::size_t t = 0; t < d.t; ++t) {
        const std::size_t o = (p * target_f + i) * d.t + t;
        if (mode == PoolMode::kMax) {
          std::size_t best = (p * d.f + start[i]) * d.t + t;
          for (std::size_t f = start[i] + 1; f < end[i]; ++f) {
            const std::size_t idx = (p * d.f + f) * d.t + t;
            if (x[idx] > x[best]) best = idx;
          }
          out[o] = x[best];
          argmax[o] = best;
        } else {
          double s = 0.0;
          for (std::size_t f = start[i]; f < end[i]; ++f) s += x[(p * d.f + f) * d.t + t];
          out[o] = s / static_cast<double>(end[i] - start[i]);
        }
      }
  if (GradTape::should_record({&x})) {
    record(mode == PoolMode::kMax ? "adaptive_max_pool_f" : "adaptive_avg_pool_f", {x}, out,
           [d, target_f, mode, start, end, argmax, x, out]() mutable {
             auto gout = out.grad();
             auto gi = x.grad_buffer();
             if (mode == PoolMode::kMax) {
               for (std::size_t o = 0; o < out.numel(); ++o) gi[argmax[o]] += gout[o];
               return;
             }
             for (std::size_t p = 0; p < d.b * d.c; ++p)
               for (std::size_t i = 0; i < target_f; ++i) {
                 const double inv = 1.0 / static_cast<double>(end[i] - start[i]);
                 for (std::size_t t = 0; t < d.t; ++t) {
                   const double g = gout[(p * target_f + i) * d.t + t] * inv;
                   for (std::size_t f = start[i]; f < end[i]; ++f) gi[(p * d.f + f) * d.t + t] += g;
                 }
               }
           });
  }
  return out;
}

Tensor bilinear_resize_f(const Tensor& x, std::size_t target_f) {
  require_rank4(x, "bilinear_resize_f");
  if (target_f == 0) throw ConfigError("ops", "bilinear_resize_f target_f must be positive");
  const Dims4 d(x.shape());
  std::vector<std::size_t> lo(target_f), hi(target_f);
  std::vector<double> w(target_f);
  const double scale = static_cast<double>(d.f) / static_cast<double>(target_f);
  for (std::size_t i = 0; i < target_f; ++i) {
    double src = (static_cast<double>(i) + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(d.f - 1));
    lo[i] = static_cast<std::size_t>(std::floor(src));
    hi[i] = std::min(lo[i] + 1, d.f - 1);
    w[i] = src - static_cast<double>(lo[i]);
  }
  Tensor out(Shape{d.b, d.c, target_f, d.t});
  for (std::size_t p = 0; p < d.b * d.c; ++p)
    for (std::size_t i = 0; i < target_f; ++i) {
      const double* r0 = x.data().data() + (p * d.f + lo[i]) * d.t;
      const double* r1 = x.data().data() + (p * d.f + hi[i]) * d.t;
      double* o = out.data().data() + (p * target_f + i) * d.t;
      for (std::size_t t = 0; t < d.t; ++t) o[t] = (1.0 - w[i]) * r0[t] + w[i] * r1[t];
    }
  if (GradTape::should_record({&x})) {
    record("bilinear_resize_f", {x}, out, [d, target_f, lo, hi, w, x, out]() mutable {
      auto gout = out.grad();
      auto gi = x.grad_buffer();
      for (std::size_t p = 0; p < d.b * d.c; ++p)
        for (std::size_t i = 0; i < target_f; ++i)
          for (std::size_t t = 0; t < d.t; ++t) {
            const double g = gout[(p * target_f + i) * d.t + t];
            gi[(p * d.f + lo[i]) * d.t + t] += (1.0 - w[i]) * g;
            gi[(p * d.f + hi[i]) * d.t + t] += w[i] * g;
          }
    });
  }
  return out;
}

Tensor repeat_f(const Tensor& x, std::size_t target_f) {
  require_rank4(x, "repeat_f");
  const Dims4 d(x.shape());
  if (target_f == 0 || target_f % d.f != 0)
    throw ConfigError("ops", "repeat_f target " + std::to_string(target_f) +
                                 " is not a multiple of " + std::to_string(d.f));
  const std::size_t rep = target_f / d.f;
  Tensor out(Shape{d.b, d.c, target_f, d.t});
  for (std::size_t p = 0; p < d.b * d.c; ++p)
    for (std::size_t f = 0; f < target_f; ++f)
      for (std::size_t t = 0; t < d.t; ++t)
        out[(p * target_f + f) * d.t + t] = x[(p * d.f + f / rep) * d.t + t];
  if (GradTape::should_record({&x})) {
    record("repeat_f", {x}, out, [d, target_f, rep, x, out]() mutable {
      auto gout = out.grad();
      auto gi = x.grad_buffer();
      for (std::size_t p = 0; p < d.b * d.c; ++p)
        for (std::size_t f = 0; f < target_f; ++f)
          for (std::size_t t = 0; t < d.t; ++t)
            gi[(p * d.f + f / rep) * d.t + t] += gout[(p * target_f + f) * d.t + t];
    });
  }
  return out;
}

Tensor max_pool_2x2(const Tensor& x) {
  require_rank4(x, "max_pool_2x2");
  const Dims4 d(x.shape());
  if (d.f % 2 != 0)
    throw ConfigError("ops", "max_pool_2x2 requires an even frequency extent, got " +
                                 std::to_string(d.f));
  const std::size_t of = d.f / 2, ot = (d.t + 1) / 2;
  Tensor out(Shape{d.b, d.c, of, ot});
  std::vector<std::size_t> argmax(out.numel());
  for (std::size_t p = 0; p < d.b * d.c; ++p)
    for (std::size_t f = 0; f < of; ++f)
      for (std::size_t t = 0; t < ot; ++t) {
        std::size_t best = (p * d.f + 2 * f) * d.t + 2 * t;
        for (std::size_t df = 0; df < 2; ++df)
          for (std::size_t dt = 0; dt < 2; ++dt) {
            const std::size_t tt = 2 * t + dt;
            if (tt >= d.t) continue;
            const std::size_t idx = (p * d.f + 2 * f + df) * d.t + tt;
            if (x[idx] > x[best]) best = idx;
          }
        const std::size_t o = (p * of + f) * ot + t;
        out[o] = x[best];
        argmax[o] = best;
      }
  if (GradTape::should_record({&x})) {
    record("max_pool_2x2", {x}, out, [argmax, x, out]() mutable {
      auto gout = out.grad();
      auto gi = x.grad_buffer();
      for (std::size_t o = 0; o < out.numel(); ++o) gi[argmax[o]] += gout[o];
    });
  }
  return out;
}

Shape broadcast_shape(const Shape& a, const Shape& b) {
  if (a.size() != b.size())
    throw ConfigError("ops", "broadcast requires equal ranks, got " + shape_str(a) + " and " +
                                 shape_str(b));
  Shape out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == b[i] || b[i] == 1) {
      out[i] = a[i];
    } else if (a[i] == 1) {
      out[i] = b[i];
    } else {
      throw ConfigError("ops", "shapes " + shape_str(a) + " and " + shape_str(b) +
                                   " are not broadcast-compatible on axis " + std::to_string(i));
    }
  }
  return out;
}

namespace {

// Strides of `s` (padded to rank 4) with zero stride on axes that broadcast
// against `out`.
std::array<std::size_t, 4> broadcast_strides(const Shape& s, const Shape& out) {
  std::array<std::size_t, 4> dims{1, 1, 1, 1}, odims{1, 1, 1, 1}, strides{};
  const std::size_t off = 4 - s.size();
  for (std::size_t i = 0; i < s.size(); ++i) {
    dims[off + i] = s[i];
    odims[off + i] = out[i];
  }
  std::size_t acc = 1;
  for (std::size_t i = 4; i-- > 0;) {
    strides[i] = (dims[i] == 1 && odims[i] != 1) ? 0 : acc;
    acc *= dims[i];
  }
  return strides;
}

std::array<std::size_t, 4> padded_dims(const Shape& s) {
  std::array<std::size_t, 4> dims{1, 1, 1, 1};
  const std::size_t off = 4 - s.size();
  for (std::size_t i = 0; i < s.size(); ++i) dims[off + i] = s[i];
  return dims;
}

template <typename Fn>
void for_each_broadcast(const Shape& out_shape, const std::array<std::size_t, 4>& sa,
                        const std::array<std::size_t, 4>& sb, Fn&& fn) {
  const auto od = padded_dims(out_shape);
  std::size_t o = 0;
  for (std::size_t i0 = 0; i0 < od[0]; ++i0)
    for (std::size_t i1 = 0; i1 < od[1]; ++i1)
      for (std::size_t i2 = 0; i2 < od[2]; ++i2)
        for (std::size_t i3 = 0; i3 < od[3]; ++i3, ++o)
          fn(o, i0 * sa[0] + i1 * sa[1] + i2 * sa[2] + i3 * sa[3],
             i0 * sb[0] + i1 * sb[1] + i2 * sb[2] + i3 * sb[3]);
}

enum class Binary { kAdd, kMul };

Tensor binary(const Tensor& a, const Tensor& b, Binary kind) {
  const Shape out_shape = broadcast_shape(a.shape(), b.shape());
  const auto sa = broadcast_strides(a.shape(), out_shape);
  const auto sb = broadcast_strides(b.shape(), out_shape);
  Tensor out(out_shape);
  if (kind == Binary::kAdd) {
    for_each_broadcast(out_shape, sa, sb,
                       [&](std::size_t o, std::size_t ia, std::size_t ib) { out[o] = a[ia] + b[ib]; });
  } else {
    for_each_broadcast(out_shape, sa, sb,
                       [&](std::size_t o, std::size_t ia, std::size_t ib) { out[o] = a[ia] * b[ib]; });
  }
  if (GradTape::should_record({&a, &b})) {
    record(kind == Binary::kAdd ? "add" : "mul", {a, b}, out,
           [kind, out_shape, sa, sb, a, b, out]() mutable {
             auto gout = out.grad();
             const bool ga_on = a.requires_grad(), gb_on = b.requires_grad();
             std::span<double> ga = ga_on ? a.grad_buffer() : std::span<double>{};
             std::span<double> gb = gb_on ? b.grad_buffer() : std::span<double>{};
             for_each_broadcast(out_shape, sa, sb,
                                [&](std::size_t o, std::size_t ia, std::size_t ib) {
                                  if (kind == Binary::kAdd) {
                                    if (ga_on) ga[ia] += gout[o];
                                    if (gb_on) gb[ib] += gout[o];
                                  } else {
                                    if (ga_on) ga[ia] += gout[o] * b[ib];
                                    if (gb_on) gb[ib] += gout[o] * a[ia];
                                  }
                                });
           });
  }
  return out;
}

}  // namespace

Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::kMul); }
Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::kAdd); }

Tensor concat_channels(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ConfigError("ops", "concat_channels of zero tensors");
  for (const auto& p : parts) require_rank4(p, "concat_channels");
  const Dims4 d0(parts[0].shape());
  std::size_t channels = 0;
  for (const auto& p : parts) {
    if (p.dim(0) != d0.b || p.dim(2) != d0.f || p.dim(3) != d0.t)
      throw ConfigError("ops", "concat_channels shape mismatch: " + shape_str(parts[0].shape()) +
                                   " vs " + shape_str(p.shape()));
    channels += p.dim(1);
  }
  const std::size_t plane = d0.f * d0.t;
  Tensor out(Shape{d0.b, channels, d0.f, d0.t});
  for (std::size_t b = 0; b < d0.b; ++b) {
    std::size_t c0 = 0;
    for (const auto& p : parts) {
      const std::size_t n = p.dim(1) * plane;
      std::copy_n(p.data().data() + b * n, n, out.data().data() + (b * channels + c0) * plane);
      c0 += p.dim(1);
    }
  }
  if (GradTape::should_record(parts)) {
    record("concat_channels", parts, out, [parts, channels, plane, d0, out]() mutable {
      auto gout = out.grad();
      for (std::size_t b = 0; b < d0.b; ++b) {
        std::size_t c0 = 0;
        for (auto& p : parts) {
          const std::size_t n = p.dim(1) * plane;
          if (p.requires_grad()) {
            auto gp = p.grad_buffer();
            const double* src = gout.data() + (b * channels + c0) * plane;
            for (std::size_t i = 0; i < n; ++i) gp[b * n + i] += src[i];
          }
          c0 += p.dim(1);
        }
      }
    });
  }
  return out;
}

Tensor flatten(const Tensor& x) {
  const std::size_t b = x.dim(0);
  Tensor out(Shape{b, x.numel() / b}, std::vector<double>(x.data().begin(), x.data().end()));
  if (GradTape::should_record({&x})) {
    record("flatten", {x}, out, [x, out]() mutable {
      auto gout = out.grad();
      auto gi = x.grad_buffer();
      for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += gout[i];
    });
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.rank() != 2 || weight.rank() != 2)
    throw ConfigError("ops", "linear expects (B,N) input and (M,N) weight, got " +
                                 shape_str(x.shape()) + " and " + shape_str(weight.shape()));
  const std::size_t bsz = x.dim(0), n = x.dim(1), m = weight.dim(0);
  if (weight.dim(1) != n)
    throw ConfigError("ops", "linear input width " + std::to_string(n) + " != weight width " +
                                 std::to_string(weight.dim(1)));
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != m))
    throw ConfigError("ops", "linear bias shape " + shape_str(bias.shape()) + " != [" +
                                 std::to_string(m) + "]");
  Tensor out(Shape{bsz, m});
  kernels::gemm(false, true, bsz, m, n, 1.0, x.data().data(), n, weight.data().data(), n, 0.0,
                out.data().data(), m);
  if (bias.defined())
    for (std::size_t b = 0; b < bsz; ++b)
      for (std::size_t j = 0; j < m; ++j) out[b * m + j] += bias[j];
  count_flops(2 * m * n);

  if (GradTape::should_record({&x, &weight, &bias})) {
    record("linear", {x, weight, bias}, out, [bsz, n, m, x, weight, bias, out]() mutable {
      auto gout = out.grad();
      if (x.requires_grad())
        kernels::gemm(false, false, bsz, n, m, 1.0, gout.data(), m, weight.data().data(), n, 1.0,
                      x.grad_buffer().data(), n);
      if (weight.requires_grad())
        kernels::gemm(true, false, m, n, bsz, 1.0, gout.data(), m, x.data().data(), n, 1.0,
                      weight.grad_buffer().data(), n);
      if (bias.defined() && bias.requires_grad()) {
        auto gb = bias.grad_buffer();
        for (std::size_t b = 0; b < bsz; ++b)
          for (std::size_t j = 0; j < m; ++j) gb[j] += gout[b * m + j];
      }
    });
  }
  return out;
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  Tensor out = Tensor::scalar(s);
  if (GradTape::should_record({&x})) {
    record("sum", {x}, out, [x, out]() mutable {
      const double g = out.grad()[0];
      auto gi = x.grad_buffer();
      for (auto& v : gi) v += g;
    });
  }
  return out;
}

}  // namespace smgaa::ops
