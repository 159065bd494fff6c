#pragma once

#include <cstddef>
#include <span>

namespace smgaa {

struct Padding {
  std::size_t top = 0;
  std::size_t bottom = 0;
  std::size_t left = 0;
  std::size_t right = 0;

  bool operator==(const Padding&) const = default;
};

// "Same" padding for a kernel extent k at stride 1. Even extents split as
// (ceil((k-1)/2), floor((k-1)/2)), e.g. k=20 -> (10, 9).
constexpr std::size_t same_pad_before(std::size_t k) { return k / 2; }
constexpr std::size_t same_pad_after(std::size_t k) { return (k - 1) / 2; }

struct ConvGeometry {
  std::size_t batch = 1;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t groups = 1;
  std::size_t in_f = 1;
  std::size_t in_t = 1;
  std::size_t k_f = 1;
  std::size_t k_t = 1;
  Padding pad;

  std::size_t out_f() const { return in_f + pad.top + pad.bottom - k_f + 1; }
  std::size_t out_t() const { return in_t + pad.left + pad.right - k_t + 1; }
  std::size_t in_per_group() const { return in_channels / groups; }
  std::size_t out_per_group() const { return out_channels / groups; }
  std::size_t weight_numel() const { return out_channels * in_per_group() * k_f * k_t; }
  std::size_t input_numel() const { return batch * in_channels * in_f * in_t; }
  std::size_t output_numel() const { return batch * out_channels * out_f() * out_t(); }
  // Multiply-accumulate count for one sample, two FLOPs each.
  std::size_t flops_per_sample() const {
    return 2 * out_channels * in_per_group() * k_f * k_t * out_f() * out_t();
  }
};

// Stride-1 grouped 2-D convolution kernels over NCHW-ordered (B, C, F, T)
// buffers, weights (Cout, Cin/groups, kF, kT). Backward kernels accumulate
// into their outputs. `bias` / `grad_bias` may be empty.
//
// The default kernels run samples and channels in parallel with OpenMP and
// route dense contractions through Eigen. Every output element is produced by
// one thread in a fixed order, so results are bit-identical for any thread
// count. The `reference` kernels are plain serial loops kept as the oracle for
// tests and the benchmark baseline.
namespace kernels {

void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> output);

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> grad_output,
                           std::span<const double> weight, std::span<double> grad_input);

void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> grad_output,
                            std::span<const double> input, std::span<double> grad_weight,
                            std::span<double> grad_bias);

// C[m,n] = alpha * op(A)[m,k] * op(B)[k,n] + beta * C, row-major.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, double alpha,
          const double* a, std::size_t lda, const double* b, std::size_t ldb, double beta,
          double* c, std::size_t ldc);

int max_threads();
void set_threads(int n);

namespace reference {

void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> output);

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> grad_output,
                           std::span<const double> weight, std::span<double> grad_input);

void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> grad_output,
                            std::span<const double> input, std::span<double> grad_weight,
                            std::span<double> grad_bias);

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, double alpha,
          const double* a, std::size_t lda, const double* b, std::size_t ldb, double beta,
          double* c, std::size_t ldc);

}  // namespace reference
}  // namespace kernels
}  // namespace smgaa
