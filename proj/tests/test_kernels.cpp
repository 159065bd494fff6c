#include <gtest/gtest.h>

#include <vector>

#include "smgaa/error.hpp"
#include "smgaa/kernels.hpp"
#include "smgaa/ops.hpp"
#include "test_support.hpp"

using namespace smgaa;
using smgaa::testing::max_abs_diff;
using smgaa::testing::random_tensor;

namespace {

// Six nested loops over (b, co, f, t, ci, kf, kt) written independently of the
// library, zero padding handled by bounds checks.
std::vector<double> naive_conv(const Tensor& in, const Tensor& w, const Padding& pad,
                               std::size_t groups) {
  const std::size_t B = in.dim(0), C = in.dim(1), F = in.dim(2), T = in.dim(3);
  const std::size_t CO = w.dim(0), CG = w.dim(1), KF = w.dim(2), KT = w.dim(3);
  const std::size_t OF = F + pad.top + pad.bottom - KF + 1;
  const std::size_t OT = T + pad.left + pad.right - KT + 1;
  const std::size_t cout_per_group = CO / groups;
  (void)C;
  std::vector<double> out(B * CO * OF * OT, 0.0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t co = 0; co < CO; ++co)
      for (std::size_t f = 0; f < OF; ++f)
        for (std::size_t t = 0; t < OT; ++t) {
          double acc = 0.0;
          for (std::size_t cg = 0; cg < CG; ++cg)
            for (std::size_t kf = 0; kf < KF; ++kf)
              for (std::size_t kt = 0; kt < KT; ++kt) {
                const long fi = static_cast<long>(f + kf) - static_cast<long>(pad.top);
                const long ti = static_cast<long>(t + kt) - static_cast<long>(pad.left);
                if (fi < 0 || ti < 0 || fi >= static_cast<long>(F) || ti >= static_cast<long>(T))
                  continue;
                const std::size_t ci = (co / cout_per_group) * CG + cg;
                acc += w.at(co, cg, kf, kt) * in.at(b, ci, fi, ti);
              }
          out[((b * CO + co) * OF + f) * OT + t] = acc;
        }
  return out;
}

ConvGeometry geometry(std::size_t b, std::size_t cin, std::size_t cout, std::size_t groups,
                      std::size_t f, std::size_t t, std::size_t kf, std::size_t kt, Padding pad) {
  ConvGeometry g;
  g.batch = b;
  g.in_channels = cin;
  g.out_channels = cout;
  g.groups = groups;
  g.in_f = f;
  g.in_t = t;
  g.k_f = kf;
  g.k_t = kt;
  g.pad = pad;
  return g;
}

std::vector<ConvGeometry> geometries() {
  return {
      geometry(2, 3, 5, 1, 7, 6, 3, 3, {1, 1, 1, 1}),
      geometry(3, 4, 4, 4, 9, 5, 3, 3, {1, 1, 1, 1}),      // depthwise
      geometry(2, 4, 6, 2, 6, 6, 3, 2, {0, 2, 1, 0}),      // grouped, asymmetric
      geometry(2, 6, 3, 1, 12, 4, 1, 1, {}),               // plain pointwise
      geometry(2, 8, 4, 1, 15, 4, 20, 1, {10, 9, 0, 0}),   // kernel taller than input
      geometry(1, 5, 5, 5, 8, 3, 7, 1, {3, 3, 0, 0}),      // AFI-style depthwise
      geometry(4, 2, 3, 1, 5, 7, 3, 1, {1, 1, 0, 0}),
      geometry(2, 3, 4, 1, 4, 5, 1, 3, {0, 0, 1, 1}),
  };
}

}  // namespace

TEST(Conv2d, IdentityPointwiseKernel) {
  Tensor in = Tensor::full({1, 1, 3, 3}, 1.0);
  Tensor w = Tensor::full({1, 1, 1, 1}, 1.0);
  Tensor out = ops::conv2d(in, w, Tensor{});
  ASSERT_EQ(out.shape(), in.shape());
  for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(out[i], 1.0);
}

TEST(Conv2d, FullWindowSum) {
  Tensor in({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  Tensor w = Tensor::full({1, 1, 3, 3}, 1.0);
  Tensor out = ops::conv2d(in, w, Tensor{});
  ASSERT_EQ(out.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_EQ(out[0], 45.0);
}

TEST(Conv2d, DepthwiseMatchesLoopOracle) {
  Rng rng(11);
  Tensor in = random_tensor({2, 4, 6, 5}, rng);
  Tensor w = random_tensor({4, 1, 3, 3}, rng);
  const Padding pad{1, 1, 1, 1};
  Tensor out = ops::conv2d(in, w, Tensor{}, pad, 4);
  ASSERT_EQ(out.shape(), (Shape{2, 4, 6, 5}));
  auto expected = naive_conv(in, w, pad, 4);
  EXPECT_LE(max_abs_diff(out.data(), expected), 1e-12);
}

TEST(Conv2d, AllGeometriesMatchLoopOracle) {
  Rng rng(12);
  for (const auto& g : geometries()) {
    Tensor in = random_tensor({g.batch, g.in_channels, g.in_f, g.in_t}, rng);
    Tensor w = random_tensor({g.out_channels, g.in_per_group(), g.k_f, g.k_t}, rng);
    Tensor out = ops::conv2d(in, w, Tensor{}, g.pad, g.groups);
    EXPECT_EQ(out.shape(), (Shape{g.batch, g.out_channels, g.out_f(), g.out_t()}));
    EXPECT_LE(max_abs_diff(out.data(), naive_conv(in, w, g.pad, g.groups)), 1e-12);
  }
}

TEST(Kernels, ParallelMatchesReferenceForwardAndBackward) {
  Rng rng(13);
  for (const auto& g : geometries()) {
    Tensor in = random_tensor({g.batch, g.in_channels, g.in_f, g.in_t}, rng);
    Tensor w = random_tensor({g.out_channels, g.in_per_group(), g.k_f, g.k_t}, rng);
    Tensor bias = random_tensor({g.out_channels}, rng);
    Tensor gout = random_tensor({g.batch, g.out_channels, g.out_f(), g.out_t()}, rng);

    std::vector<double> out_a(g.output_numel()), out_b(g.output_numel());
    kernels::conv2d_forward(g, in.data(), w.data(), bias.data(), out_a);
    kernels::reference::conv2d_forward(g, in.data(), w.data(), bias.data(), out_b);
    EXPECT_LE(max_abs_diff(out_a, out_b), 1e-12);

    std::vector<double> gi_a(g.input_numel(), 0.5), gi_b(g.input_numel(), 0.5);
    kernels::conv2d_backward_input(g, gout.data(), w.data(), gi_a);
    kernels::reference::conv2d_backward_input(g, gout.data(), w.data(), gi_b);
    EXPECT_LE(max_abs_diff(gi_a, gi_b), 1e-12);

    std::vector<double> gw_a(g.weight_numel(), 0.25), gw_b(g.weight_numel(), 0.25);
    std::vector<double> gb_a(g.out_channels, 0.0), gb_b(g.out_channels, 0.0);
    kernels::conv2d_backward_weight(g, gout.data(), in.data(), gw_a, gb_a);
    kernels::reference::conv2d_backward_weight(g, gout.data(), in.data(), gw_b, gb_b);
    EXPECT_LE(max_abs_diff(gw_a, gw_b), 1e-11);
    EXPECT_LE(max_abs_diff(gb_a, gb_b), 1e-11);
  }
}

TEST(Kernels, BitIdenticalAcrossThreadCounts) {
  Rng rng(14);
  const int saved = kernels::max_threads();
  for (const auto& g : geometries()) {
    Tensor in = random_tensor({g.batch, g.in_channels, g.in_f, g.in_t}, rng);
    Tensor w = random_tensor({g.out_channels, g.in_per_group(), g.k_f, g.k_t}, rng);
    Tensor gout = random_tensor({g.batch, g.out_channels, g.out_f(), g.out_t()}, rng);
    std::vector<std::vector<double>> outs, gws;
    for (int threads : {1, 3}) {
      kernels::set_threads(threads);
      std::vector<double> out(g.output_numel()), gw(g.weight_numel(), 0.0), gb(g.out_channels, 0.0);
      kernels::conv2d_forward(g, in.data(), w.data(), {}, out);
      kernels::conv2d_backward_weight(g, gout.data(), in.data(), gw, gb);
      outs.push_back(out);
      gws.push_back(gw);
    }
    EXPECT_EQ(outs[0], outs[1]);
    EXPECT_EQ(gws[0], gws[1]);
  }
  kernels::set_threads(saved);
}

TEST(Kernels, GemmMatchesReference) {
  Rng rng(15);
  // Large shapes hit the blocked code paths of the backend.
  const std::size_t dims[][3] = {{5, 7, 4}, {8, 960, 320}, {64, 480, 1152}, {33, 17, 257}};
  for (const auto& [m, n, k] : dims)
  for (bool ta : {false, true})
    for (bool tb : {false, true}) {
      Tensor a = random_tensor({m * k}, rng), b = random_tensor({k * n}, rng);
      std::vector<double> c1(m * n, 1.0), c2(m * n, 1.0);
      const std::size_t lda = ta ? m : k, ldb = tb ? k : n;
      kernels::gemm(ta, tb, m, n, k, 0.5, a.data().data(), lda, b.data().data(), ldb, 2.0, c1.data(), n);
      kernels::reference::gemm(ta, tb, m, n, k, 0.5, a.data().data(), lda, b.data().data(), ldb, 2.0,
                               c2.data(), n);
      EXPECT_LE(max_abs_diff(c1, c2), 1e-12) << m << "x" << n << "x" << k;
    }
}

TEST(Conv2d, Linearity) {
  Rng rng(16);
  Tensor a = random_tensor({2, 3, 8, 6}, rng), b = random_tensor({2, 3, 8, 6}, rng);
  Tensor k = random_tensor({4, 3, 3, 3}, rng);
  const Padding pad{1, 1, 1, 1};
  Tensor lhs = ops::conv2d(ops::add(a, b), k, Tensor{}, pad);
  Tensor rhs = ops::add(ops::conv2d(a, k, Tensor{}, pad), ops::conv2d(b, k, Tensor{}, pad));
  EXPECT_LE(max_abs_diff(lhs.data(), rhs.data()), 1e-10);
}

TEST(Conv2d, ConfigurationErrors) {
  Tensor in({1, 3, 4, 4});
  EXPECT_THROW(ops::conv2d(in, Tensor({4, 1, 3, 3}), Tensor{}, {1, 1, 1, 1}, 2), ConfigError);
  EXPECT_THROW(ops::conv2d(in, Tensor({3, 2, 3, 3}), Tensor{}, {1, 1, 1, 1}, 1), ConfigError);
  EXPECT_THROW(ops::conv2d(in, Tensor({3, 3, 5, 1}), Tensor{}), ConfigError);
  EXPECT_THROW(ops::conv2d(in, Tensor({3, 3, 1, 1}), Tensor({2})), ConfigError);
  try {
    ops::conv2d(in, Tensor({3, 3, 5, 1}), Tensor{});
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("frequency"), std::string::npos);
  }
}

TEST(Conv2d, SamePaddingSplit) {
  EXPECT_EQ(same_pad_before(20), 10u);
  EXPECT_EQ(same_pad_after(20), 9u);
  EXPECT_EQ(same_pad_before(15), 7u);
  EXPECT_EQ(same_pad_after(15), 7u);
  EXPECT_EQ(same_pad_before(10), 5u);
  EXPECT_EQ(same_pad_after(10), 4u);
  for (std::size_t k : {20u, 15u, 10u, 7u, 3u}) {
    ConvGeometry g;
    g.in_f = 60;
    g.k_f = k;
    g.pad = {same_pad_before(k), same_pad_after(k), 0, 0};
    EXPECT_EQ(g.out_f(), 60u);
  }
}
