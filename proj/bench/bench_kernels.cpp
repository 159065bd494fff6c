// Serial reference kernels against the OpenMP/Eigen ones on layer shapes from
// the model at 2.0 s (F=60, T=63).

#include <benchmark/benchmark.h>

#include <vector>

#include "smgaa/kernels.hpp"
#include "smgaa/model.hpp"
#include "smgaa/rng.hpp"

using namespace smgaa;

namespace {

struct Layer {
  ConvGeometry g;
  std::vector<double> in, w, b, out;
};

Layer make_layer(std::size_t cin, std::size_t cout, std::size_t groups, std::size_t kf, std::size_t kt,
                 std::size_t f, std::size_t t, std::size_t batch) {
  Layer l;
  l.g = {batch, cin, cout, groups, f, t, kf, kt,
         {same_pad_before(kf), same_pad_after(kf), same_pad_before(kt), same_pad_after(kt)}};
  Rng rng(1);
  l.in.resize(l.g.input_numel());
  l.w.resize(l.g.weight_numel());
  l.b.resize(cout);
  l.out.resize(l.g.output_numel());
  for (auto& v : l.in) v = rng.normal();
  for (auto& v : l.w) v = rng.normal();
  return l;
}

// args: cin, cout, groups, kf, kt, batch
Layer from_state(const benchmark::State& st) {
  return make_layer(st.range(0), st.range(1), st.range(2), st.range(3), st.range(4), 60, 63, st.range(5));
}

void set_counters(benchmark::State& st, const ConvGeometry& g) {
  st.counters["GFLOP/s"] = benchmark::Counter(static_cast<double>(g.flops_per_sample() * g.batch) * 1e-9,
                                              benchmark::Counter::kIsIterationInvariantRate);
}

void BM_ConvForwardReference(benchmark::State& st) {
  auto l = from_state(st);
  for (auto _ : st) {
    kernels::reference::conv2d_forward(l.g, l.in, l.w, l.b, l.out);
    benchmark::DoNotOptimize(l.out.data());
  }
  set_counters(st, l.g);
}

void BM_ConvForward(benchmark::State& st) {
  auto l = from_state(st);
  for (auto _ : st) {
    kernels::conv2d_forward(l.g, l.in, l.w, l.b, l.out);
    benchmark::DoNotOptimize(l.out.data());
  }
  set_counters(st, l.g);
}

void BM_ConvBackwardWeightReference(benchmark::State& st) {
  auto l = from_state(st);
  std::vector<double> go(l.out.size(), 0.5), gw(l.w.size()), gb(l.b.size());
  for (auto _ : st) {
    kernels::reference::conv2d_backward_weight(l.g, go, l.in, gw, gb);
    benchmark::DoNotOptimize(gw.data());
  }
  set_counters(st, l.g);
}

void BM_ConvBackwardWeight(benchmark::State& st) {
  auto l = from_state(st);
  std::vector<double> go(l.out.size(), 0.5), gw(l.w.size()), gb(l.b.size());
  for (auto _ : st) {
    kernels::conv2d_backward_weight(l.g, go, l.in, gw, gb);
    benchmark::DoNotOptimize(gw.data());
  }
  set_counters(st, l.g);
}

void BM_ModelForward(benchmark::State& st) {
  ModelConfig cfg;
  cfg.in_t = 63;
  model::Model m(cfg, 1);
  Tensor x = Tensor::zeros({static_cast<std::size_t>(st.range(0)), 1, 60, 63});
  Rng rng(2);
  for (auto& v : x.data()) v = rng.normal();
  for (auto _ : st) benchmark::DoNotOptimize(m.forward(x, model::NormMode::kEval));
}

void conv_shapes(benchmark::internal::Benchmark* b) {
  b->ArgNames({"cin", "cout", "groups", "kf", "kt", "batch"});
  b->Args({64, 64, 1, 3, 3, 8});    // dense 3x3 after the first CFEB
  b->Args({64, 64, 64, 20, 1, 8});  // depthwise frequency kernel
  b->Args({128, 16, 1, 1, 1, 8});   // 1x1 squeeze
  b->Unit(benchmark::kMillisecond);
}

}  // namespace

BENCHMARK(BM_ConvForwardReference)->Apply(conv_shapes);
BENCHMARK(BM_ConvForward)->Apply(conv_shapes);
BENCHMARK(BM_ConvBackwardWeightReference)->Apply(conv_shapes);
BENCHMARK(BM_ConvBackwardWeight)->Apply(conv_shapes);
BENCHMARK(BM_ModelForward)->Arg(1)->Arg(32)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
