#pragma once

#include <cstddef>
#include <vector>

#include "smgaa/kernels.hpp"
#include "smgaa/tensor.hpp"

// Differentiable operators. Every function computes its forward result
// eagerly and, when a GradTape is installed on the calling thread and some
// input requires a gradient, records its adjoint on that tape.
namespace smgaa::ops {

// Stride-1 grouped convolution. `bias` may be an undefined Tensor.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              const Padding& pad = {}, std::size_t groups = 1);

enum class NormMode { kTrain, kEval };

// Running statistics owned by a batch-norm layer. Updated in place by
// `batch_norm` in train mode.
struct NormStats {
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.1;
  double eps = 1e-5;
};

Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta, NormStats& stats,
                  NormMode mode);

Tensor gelu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

// (B,C,F,T) -> (B,C,1,1) mean over F and T.
Tensor global_avg_pool(const Tensor& x);
// (B,C,F,T) -> (B,C,F,1) mean over T.
Tensor mean_over_time(const Tensor& x);

enum class PoolMode { kMax, kAvg };

// Pools the frequency axis into `target_f` bins [floor(i*F/n), floor((i+1)*F/n)),
// preserving T.
Tensor adaptive_pool_f(const Tensor& x, std::size_t target_f, PoolMode mode);

// Linear interpolation along F to `target_f` rows, half-pixel centers
// (align_corners = false), edge clamped.
Tensor bilinear_resize_f(const Tensor& x, std::size_t target_f);

// Repeats each of the g rows of a (B,C,g,T) tensor F/g times along F.
Tensor repeat_f(const Tensor& x, std::size_t target_f);

// 2x2 max pooling, stride 2. F must be even; T uses ceil mode.
Tensor max_pool_2x2(const Tensor& x);

// Elementwise with broadcasting over size-1 axes of equal-rank operands.
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);

// Concatenate along axis 1 (channels).
Tensor concat_channels(const std::vector<Tensor>& parts);

// (B, ...) -> (B, prod(...)) in row-major order.
Tensor flatten(const Tensor& x);
// (B,N) x (M,N)^T + (M) -> (B,M). `bias` may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor sum(const Tensor& x);

// Broadcast shape of two operands, or throws ConfigError.
Shape broadcast_shape(const Shape& a, const Shape& b);

// Counts convolution and linear FLOPs (per sample) while installed.
class FlopCounter {
 public:
  FlopCounter();
  ~FlopCounter();
  FlopCounter(const FlopCounter&) = delete;
  FlopCounter& operator=(const FlopCounter&) = delete;

  std::size_t flops() const { return flops_; }
  void add(std::size_t n) { flops_ += n; }
  static FlopCounter* current();

 private:
  std::size_t flops_ = 0;
  FlopCounter* previous_;
};

}  // namespace smgaa::ops
