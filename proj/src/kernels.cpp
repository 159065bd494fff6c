#include "smgaa/kernels.hpp"

#include <omp.h>

#include <Eigen/Core>
#include <algorithm>
#include <vector>

namespace smgaa::kernels {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstView = Eigen::Map<const RowMat, Eigen::Unaligned, Eigen::OuterStride<>>;
using View = Eigen::Map<RowMat, Eigen::Unaligned, Eigen::OuterStride<>>;

ConstView view(const double* p, std::size_t rows, std::size_t cols, std::size_t ld) {
  return ConstView(p, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols),
                   Eigen::OuterStride<>(static_cast<Eigen::Index>(ld)));
}

bool is_depthwise(const ConvGeometry& g) {
  return g.groups > 1 && g.in_per_group() == 1 && g.out_per_group() == 1;
}

bool is_plain_pointwise(const ConvGeometry& g) {
  return g.k_f == 1 && g.k_t == 1 && g.pad == Padding{};
}

// Output index range [lo, hi) for which in = out + k - pad_before stays inside
// [0, in_extent).
inline void valid_range(std::size_t k, std::size_t pad_before, std::size_t in_extent,
                        std::size_t out_extent, std::size_t& lo, std::size_t& hi) {
  lo = pad_before > k ? pad_before - k : 0;
  const std::ptrdiff_t upper = static_cast<std::ptrdiff_t>(in_extent) +
                               static_cast<std::ptrdiff_t>(pad_before) -
                               static_cast<std::ptrdiff_t>(k);
  hi = upper <= 0 ? 0 : std::min<std::size_t>(out_extent, static_cast<std::size_t>(upper));
  if (hi < lo) hi = lo;
}

// col[(ci*kF + kf)*kT + kt][f*T' + t] = in[ci][f + kf - top][t + kt - left]
void im2col(const ConvGeometry& g, const double* in, double* col) {
  const std::size_t of = g.out_f(), ot = g.out_t(), plane = of * ot;
  for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
    const double* src = in + ci * g.in_f * g.in_t;
    for (std::size_t kf = 0; kf < g.k_f; ++kf) {
      std::size_t f_lo, f_hi;
      valid_range(kf, g.pad.top, g.in_f, of, f_lo, f_hi);
      for (std::size_t kt = 0; kt < g.k_t; ++kt) {
        std::size_t t_lo, t_hi;
        valid_range(kt, g.pad.left, g.in_t, ot, t_lo, t_hi);
        double* dst = col + ((ci * g.k_f + kf) * g.k_t + kt) * plane;
        std::fill(dst, dst + plane, 0.0);
        for (std::size_t f = f_lo; f < f_hi; ++f) {
          const double* row = src + (f + kf - g.pad.top) * g.in_t;
          double* out_row = dst + f * ot;
          for (std::size_t t = t_lo; t < t_hi; ++t) out_row[t] = row[t + kt - g.pad.left];
        }
      }
    }
  }
}

void col2im_add(const ConvGeometry& g, const double* col, double* in) {
  const std::size_t of = g.out_f(), ot = g.out_t(), plane = of * ot;
  for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
    double* dst = in + ci * g.in_f * g.in_t;
    for (std::size_t kf = 0; kf < g.k_f; ++kf) {
      std::size_t f_lo, f_hi;
      valid_range(kf, g.pad.top, g.in_f, of, f_lo, f_hi);
      for (std::size_t kt = 0; kt < g.k_t; ++kt) {
        std::size_t t_lo, t_hi;
        valid_range(kt, g.pad.left, g.in_t, ot, t_lo, t_hi);
        const double* src = col + ((ci * g.k_f + kf) * g.k_t + kt) * plane;
        for (std::size_t f = f_lo; f < f_hi; ++f) {
          double* row = dst + (f + kf - g.pad.top) * g.in_t;
          const double* in_row = src + f * ot;
          for (std::size_t t = t_lo; t < t_hi; ++t) row[t + kt - g.pad.left] += in_row[t];
        }
      }
    }
  }
}

void depthwise_forward(const ConvGeometry& g, const double* input, const double* weight,
                       const double* bias, double* output) {
  const std::size_t of = g.out_f(), ot = g.out_t();
  const auto planes = static_cast<std::ptrdiff_t>(g.batch * g.in_channels);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t p = 0; p < planes; ++p) {
    const std::size_t c = static_cast<std::size_t>(p) % g.in_channels;
    const double* src = input + p * g.in_f * g.in_t;
    double* dst = output + p * of * ot;
    std::fill(dst, dst + of * ot, bias ? bias[c] : 0.0);
    const double* w = weight + c * g.k_f * g.k_t;
    for (std::size_t kf = 0; kf < g.k_f; ++kf) {
      std::size_t f_lo, f_hi;
      valid_range(kf, g.pad.top, g.in_f, of, f_lo, f_hi);
      for (std::size_t kt = 0; kt < g.k_t; ++kt) {
        std::size_t t_lo, t_hi;
        valid_range(kt, g.pad.left, g.in_t, ot, t_lo, t_hi);
        const double wv = w[kf * g.k_t + kt];
        for (std::size_t f = f_lo; f < f_hi; ++f) {
          const double* row = src + (f + kf - g.pad.top) * g.in_t;
          double* out_row = dst + f * ot;
          for (std::size_t t = t_lo; t < t_hi; ++t) out_row[t] += wv * row[t + kt - g.pad.left];
        }
      }
    }
  }
}

void depthwise_backward_input(const ConvGeometry& g, const double* grad_output,
                              const double* weight, double* grad_input) {
  const std::size_t of = g.out_f(), ot = g.out_t();
  const auto planes = static_cast<std::ptrdiff_t>(g.batch * g.in_channels);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t p = 0; p < planes; ++p) {
    const std::size_t c = static_cast<std::size_t>(p) % g.in_channels;
    const double* go = grad_output + p * of * ot;
    double* gi = grad_input + p * g.in_f * g.in_t;
    const double* w = weight + c * g.k_f * g.k_t;
    for (std::size_t kf = 0; kf < g.k_f; ++kf) {
      std::size_t f_lo, f_hi;
      valid_range(kf, g.pad.top, g.in_f, of, f_lo, f_hi);
      for (std::size_t kt = 0; kt < g.k_t; ++kt) {
        std::size_t t_lo, t_hi;
        valid_range(kt, g.pad.left, g.in_t, ot, t_lo, t_hi);
        const double wv = w[kf * g.k_t + kt];
        for (std::size_t f = f_lo; f < f_hi; ++f) {
          double* row = gi + (f + kf - g.pad.top) * g.in_t;
          const double* go_row = go + f * ot;
          for (std::size_t t = t_lo; t < t_hi; ++t) row[t + kt - g.pad.left] += wv * go_row[t];
        }
      }
    }
  }
}

void depthwise_backward_weight(const ConvGeometry& g, const double* grad_output,
                               const double* input, double* grad_weight, double* grad_bias) {
  const std::size_t of = g.out_f(), ot = g.out_t();
  const auto channels = static_cast<std::ptrdiff_t>(g.in_channels);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t cc = 0; cc < channels; ++cc) {
    const auto c = static_cast<std::size_t>(cc);
    double* gw = grad_weight + c * g.k_f * g.k_t;
    for (std::size_t b = 0; b < g.batch; ++b) {
      const std::size_t p = b * g.in_channels + c;
      const double* go = grad_output + p * of * ot;
      const double* src = input + p * g.in_f * g.in_t;
      if (grad_bias) {
        double s = 0.0;
        for (std::size_t i = 0; i < of * ot; ++i) s += go[i];
        grad_bias[c] += s;
      }
      for (std::size_t kf = 0; kf < g.k_f; ++kf) {
        std::size_t f_lo, f_hi;
        valid_range(kf, g.pad.top, g.in_f, of, f_lo, f_hi);
        for (std::size_t kt = 0; kt < g.k_t; ++kt) {
          std::size_t t_lo, t_hi;
          valid_range(kt, g.pad.left, g.in_t, ot, t_lo, t_hi);
          double s = 0.0;
          for (std::size_t f = f_lo; f < f_hi; ++f) {
            const double* row = src + (f + kf - g.pad.top) * g.in_t;
            const double* go_row = go + f * ot;
            for (std::size_t t = t_lo; t < t_hi; ++t) s += go_row[t] * row[t + kt - g.pad.left];
          }
          gw[kf * g.k_t + kt] += s;
        }
      }
    }
  }
}

}  // namespace

int max_threads() { return omp_get_max_threads(); }

void set_threads(int n) { omp_set_num_threads(std::max(1, n)); }

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, double alpha,
          const double* a, std::size_t lda, const double* b, std::size_t ldb, double beta,
          double* c, std::size_t ldc) {
  View out(c, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n),
           Eigen::OuterStride<>(static_cast<Eigen::Index>(ldc)));
  if (beta == 0.0) out.setZero();
  else if (beta != 1.0) out *= beta;
  const auto av = trans_a ? view(a, k, m, lda) : view(a, m, k, lda);
  const auto bv = trans_b ? view(b, n, k, ldb) : view(b, k, n, ldb);
  if (trans_a && trans_b) out.noalias() += alpha * av.transpose() * bv.transpose();
  else if (trans_a) out.noalias() += alpha * av.transpose() * bv;
  else if (trans_b) out.noalias() += alpha * av * bv.transpose();
  else out.noalias() += alpha * av * bv;
}

void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> output) {
  const double* bias_ptr = bias.empty() ? nullptr : bias.data();
  if (is_depthwise(g)) {
    depthwise_forward(g, input.data(), weight.data(), bias_ptr, output.data());
    return;
  }
  const std::size_t plane = g.out_f() * g.out_t();
  const std::size_t k_group = g.in_per_group() * g.k_f * g.k_t;
  const std::size_t cout_group = g.out_per_group();
  const bool direct = is_plain_pointwise(g);
  const auto batch = static_cast<std::ptrdiff_t>(g.batch);
#pragma omp parallel
  {
    std::vector<double> col(direct ? 0 : g.in_channels * g.k_f * g.k_t * plane);
#pragma omp for schedule(static)
    for (std::ptrdiff_t b = 0; b < batch; ++b) {
      const double* in_b = input.data() + b * g.in_channels * g.in_f * g.in_t;
      double* out_b = output.data() + b * g.out_channels * plane;
      const double* cols = in_b;
      if (!direct) {
        im2col(g, in_b, col.data());
        cols = col.data();
      }
      for (std::size_t grp = 0; grp < g.groups; ++grp) {
        gemm(false, false, cout_group, plane, k_group, 1.0, weight.data() + grp * cout_group * k_group,
             k_group, cols + grp * k_group * plane, plane, 0.0, out_b + grp * cout_group * plane,
             plane);
      }
      if (bias_ptr) {
        for (std::size_t co = 0; co < g.out_channels; ++co) {
          double* row = out_b + co * plane;
          for (std::size_t i = 0; i < plane; ++i) row[i] += bias_ptr[co];
        }
      }
    }
  }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> grad_output,
                           std::span<const double> weight, std::span<double> grad_input) {
  if (is_depthwise(g)) {
    depthwise_backward_input(g, grad_output.data(), weight.data(), grad_input.data());
    return;
  }
  const std::size_t plane = g.out_f() * g.out_t();
  const std::size_t k_group = g.in_per_group() * g.k_f * g.k_t;
  const std::size_t cout_group = g.out_per_group();
  const bool direct = is_plain_pointwise(g);
  const auto batch = static_cast<std::ptrdiff_t>(g.batch);
#pragma omp parallel
  {
    std::vector<double> col(g.in_channels * g.k_f * g.k_t * plane);
#pragma omp for schedule(static)
    for (std::ptrdiff_t b = 0; b < batch; ++b) {
      const double* go_b = grad_output.data() + b * g.out_channels * plane;
      double* gi_b = grad_input.data() + b * g.in_channels * g.in_f * g.in_t;
      for (std::size_t grp = 0; grp < g.groups; ++grp) {
        gemm(true, false, k_group, plane, cout_group, 1.0, weight.data() + grp * cout_group * k_group,
             k_group, go_b + grp * cout_group * plane, plane, 0.0, col.data() + grp * k_group * plane,
             plane);
      }
      if (direct) {
        for (std::size_t i = 0; i < col.size(); ++i) gi_b[i] += col[i];
      } else {
        col2im_add(g, col.data(), gi_b);
      }
    }
  }
}

void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> grad_output,
                            std::span<const double> input, std::span<double> grad_weight,
                            std::span<double> grad_bias) {
  double* gb = grad_bias.empty() ? nullptr : grad_bias.data();
  if (is_depthwise(g)) {
    depthwise_backward_weight(g, grad_output.data(), input.data(), grad_weight.data(), gb);
    return;
  }
  const std::size_t plane = g.out_f() * g.out_t();
  const std::size_t k_group = g.in_per_group() * g.k_f * g.k_t;
  const std::size_t cout_group = g.out_per_group();
  const bool direct = is_plain_pointwise(g);
  const std::size_t wn = g.weight_numel();

  // Per-sample partial gradients reduced in sample order, so the summation
  // order does not depend on how samples were spread over threads.
  const std::size_t chunk = std::min<std::size_t>(g.batch, static_cast<std::size_t>(max_threads()));
  std::vector<double> partial_w(chunk * wn);
  std::vector<double> partial_b(gb ? chunk * g.out_channels : 0);
  for (std::size_t b0 = 0; b0 < g.batch; b0 += chunk) {
    const auto count = static_cast<std::ptrdiff_t>(std::min(chunk, g.batch - b0));
#pragma omp parallel
    {
      std::vector<double> col(direct ? 0 : g.in_channels * g.k_f * g.k_t * plane);
#pragma omp for schedule(static)
      for (std::ptrdiff_t i = 0; i < count; ++i) {
        const std::size_t b = b0 + static_cast<std::size_t>(i);
        const double* in_b = input.data() + b * g.in_channels * g.in_f * g.in_t;
        const double* go_b = grad_output.data() + b * g.out_channels * plane;
        const double* cols = in_b;
        if (!direct) {
          im2col(g, in_b, col.data());
          cols = col.data();
        }
        double* pw = partial_w.data() + i * wn;
        for (std::size_t grp = 0; grp < g.groups; ++grp) {
          gemm(false, true, cout_group, k_group, plane, 1.0, go_b + grp * cout_group * plane, plane,
               cols + grp * k_group * plane, plane, 0.0, pw + grp * cout_group * k_group, k_group);
        }
        if (gb) {
          double* pb = partial_b.data() + i * g.out_channels;
          for (std::size_t co = 0; co < g.out_channels; ++co) {
            const double* row = go_b + co * plane;
            double s = 0.0;
            for (std::size_t p = 0; p < plane; ++p) s += row[p];
            pb[co] = s;
          }
        }
      }
    }
    for (std::ptrdiff_t i = 0; i < count; ++i) {
      const double* pw = partial_w.data() + i * wn;
      for (std::size_t j = 0; j < wn; ++j) grad_weight[j] += pw[j];
      if (gb) {
        const double* pb = partial_b.data() + i * g.out_channels;
        for (std::size_t co = 0; co < g.out_channels; ++co) gb[co] += pb[co];
      }
    }
  }
}

namespace reference {

void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> output) {
  const std::size_t of = g.out_f(), ot = g.out_t();
  const std::size_t cin_g = g.in_per_group(), cout_g = g.out_per_group();
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t co = 0; co < g.out_channels; ++co) {
      const std::size_t grp = co / cout_g;
      for (std::size_t f = 0; f < of; ++f)
        for (std::size_t t = 0; t < ot; ++t) {
          double acc = bias.empty() ? 0.0 : bias[co];
          for (std::size_t cl = 0; cl < cin_g; ++cl) {
            const std::size_t ci = grp * cin_g + cl;
            for (std::size_t kf = 0; kf < g.k_f; ++kf)
              for (std::size_t kt = 0; kt < g.k_t; ++kt) {
                const auto fi = static_cast<std::ptrdiff_t>(f + kf) -
                                static_cast<std::ptrdiff_t>(g.pad.top);
                const auto ti = static_cast<std::ptrdiff_t>(t + kt) -
                                static_cast<std::ptrdiff_t>(g.pad.left);
                if (fi < 0 || ti < 0 || fi >= static_cast<std::ptrdiff_t>(g.in_f) ||
                    ti >= static_cast<std::ptrdiff_t>(g.in_t))
                  continue;
                acc += weight[((co * cin_g + cl) * g.k_f + kf) * g.k_t + kt] *
                       input[((b * g.in_channels + ci) * g.in_f + fi) * g.in_t + ti];
              }
          }
          output[((b * g.out_channels + co) * of + f) * ot + t] = acc;
        }
    }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> grad_output,
                           std::span<const double> weight, std::span<double> grad_input) {
  const std::size_t of = g.out_f(), ot = g.out_t();
  const std::size_t cin_g = g.in_per_group(), cout_g = g.out_per_group();
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t co = 0; co < g.out_channels; ++co) {
      const std::size_t grp = co / cout_g;
      for (std::size_t f = 0; f < of; ++f)
        for (std::size_t t = 0; t < ot; ++t) {
          const double go = grad_output[((b * g.out_channels + co) * of + f) * ot + t];
          for (std::size_t cl = 0; cl < cin_g; ++cl) {
            const std::size_t ci = grp * cin_g + cl;
            for (std::size_t kf = 0; kf < g.k_f; ++kf)
              for (std::size_t kt = 0; kt < g.k_t; ++kt) {
                const auto fi = static_cast<std::ptrdiff_t>(f + kf) -
                                static_cast<std::ptrdiff_t>(g.pad.top);
                const auto ti = static_cast<std::ptrdiff_t>(t + kt) -
                                static_cast<std::ptrdiff_t>(g.pad.left);
                if (fi < 0 || ti < 0 || fi >= static_cast<std::ptrdiff_t>(g.in_f) ||
                    ti >= static_cast<std::ptrdiff_t>(g.in_t))
                  continue;
                grad_input[((b * g.in_channels + ci) * g.in_f + fi) * g.in_t + ti] +=
                    go * weight[((co * cin_g + cl) * g.k_f + kf) * g.k_t + kt];
              }
          }
        }
    }
}

void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> grad_output,
                            std::span<const double> input, std::span<double> grad_weight,
                            std::span<double> grad_bias) {
  const std::size_t of = g.out_f(), ot = g.out_t();
  const std::size_t cin_g = g.in_per_group(), cout_g = g.out_per_group();
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t co = 0; co < g.out_channels; ++co) {
      const std::size_t grp = co / cout_g;
      for (std::size_t f = 0; f < of; ++f)
        for (std::size_t t = 0; t < ot; ++t) {
          const double go = grad_output[((b * g.out_channels + co) * of + f) * ot + t];
          if (!grad_bias.empty()) grad_bias[co] += go;
          for (std::size_t cl = 0; cl < cin_g; ++cl) {
            const std::size_t ci = grp * cin_g + cl;
            for (std::size_t kf = 0; kf < g.k_f; ++kf)
              for (std::size_t kt = 0; kt < g.k_t; ++kt) {
                const auto fi = static_cast<std::ptrdiff_t>(f + kf) -
                                static_cast<std::ptrdiff_t>(g.pad.top);
                const auto ti = static_cast<std::ptrdiff_t>(t + kt) -
                                static_cast<std::ptrdiff_t>(g.pad.left);
                if (fi < 0 || ti < 0 || fi >= static_cast<std::ptrdiff_t>(g.in_f) ||
                    ti >= static_cast<std::ptrdiff_t>(g.in_t))
                  continue;
                grad_weight[((co * cin_g + cl) * g.k_f + kf) * g.k_t + kt] +=
                    go * input[((b * g.in_channels + ci) * g.in_f + fi) * g.in_t + ti];
              }
          }
        }
    }
}

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, double alpha,
          const double* a, std::size_t lda, const double* b, std::size_t ldb, double beta,
          double* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = trans_a ? a[p * lda + i] : a[i * lda + p];
        const double bv = trans_b ? b[j * ldb + p] : b[p * ldb + j];
        acc += av * bv;
      }
      c[i * ldc + j] = alpha * acc + (beta == 0.0 ? 0.0 : beta * c[i * ldc + j]);
    }
}

}  // namespace reference
}  // namespace smgaa::kernels
