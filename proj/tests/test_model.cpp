#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "literal.hpp"
#include "smgaa/error.hpp"
#include "smgaa/model.hpp"
#include "test_support.hpp"

using namespace smgaa;
using namespace smgaa::model;
using smgaa::testing::max_abs_diff;
using smgaa::testing::random_tensor;

namespace {

ModelConfig default_cfg(std::size_t t) {
  ModelConfig c;
  c.in_t = t;
  return c;
}

ModelConfig reduced_cfg() {
  ModelConfig c;
  c.in_f = 12;
  c.in_t = 6;
  c.stem_channels = 8;
  c.cfeb_channels = {8, 16};
  return c;
}

// Nudges every batch-norm affine and running statistic away from its
// initial value so eval-mode comparisons exercise them.
void perturb_norms(ParameterSet& ps, std::uint64_t seed) {
  Rng rng(seed);
  for (const auto& [path, t] : ps.all()) {
    Tensor h = t;
    if (path.ends_with(".gamma")) for (auto& v : h.data()) v = rng.uniform(0.5, 1.5);
    if (path.ends_with(".beta")) for (auto& v : h.data()) v = rng.uniform(-0.3, 0.3);
    if (path.ends_with(".running_mean")) for (auto& v : h.data()) v = rng.uniform(-0.2, 0.2);
    if (path.ends_with(".running_var")) for (auto& v : h.data()) v = rng.uniform(0.5, 2.0);
  }
}

void fill(ParameterSet& ps, const std::string& prefix, double w, double b) {
  for (double& v : ps.get(prefix + ".weight").data()) v = w;
  for (double& v : ps.get(prefix + ".bias").data()) v = b;
}

bool strictly_unit(const Tensor& t) {
  for (double v : t.data())
    if (!(v > 0.0 && v < 1.0)) return false;
  return true;
}

}  // namespace

// ---- PCEM parts -------------------------------------------------------------

TEST(Pd, RangeShapeAndZeroWeights) {
  auto cfg = default_cfg(16);
  auto ps = init_params(cfg, 1);
  Context cx{cfg, ps, NormMode::kTrain};
  Rng rng(2);
  Tensor z = random_tensor({2, 16, 60, 16}, rng, -3, 3);
  Tensor p = pd_forward(cx, "stage1.pcem", z);
  EXPECT_EQ(p.shape(), z.shape());
  EXPECT_TRUE(strictly_unit(p));
  fill(ps, "stage1.pcem.pd.dw", 0.0, 0.0);
  fill(ps, "stage1.pcem.pd.pw", 0.0, 0.0);
  Tensor half = pd_forward(cx, "stage1.pcem", z);
  for (double v : half.data()) EXPECT_EQ(v, 0.5);
}

TEST(Ca, GateRangeBottleneckAndPermutationInvariance) {
  auto cfg = default_cfg(16);
  auto ps = init_params(cfg, 3);
  Context cx{cfg, ps, NormMode::kEval};
  EXPECT_EQ(ps.get("stage1.pcem.ca.reduce.weight").shape(), (Shape{2, 16, 1, 1}));
  Rng rng(4);
  Tensor z = random_tensor({2, 16, 60, 16}, rng, -2, 2);
  Tensor g = ca_forward(cx, "stage1.pcem", z);
  EXPECT_EQ(g.shape(), (Shape{2, 16, 1, 1}));
  EXPECT_TRUE(strictly_unit(g));
  // Reverse the F and T axes; the mean is unchanged up to summation order.
  Tensor r(z.shape());
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t c = 0; c < 16; ++c)
      for (std::size_t f = 0; f < 60; ++f)
        for (std::size_t t = 0; t < 16; ++t) r.at(b, c, f, t) = z.at(b, c, 59 - f, 15 - t);
  EXPECT_LE(max_abs_diff(ca_forward(cx, "stage1.pcem", r).data(), g.data()), 1e-14);
}

TEST(Tfc, ShapeZeroInputAndLoopOracle) {
  for (std::size_t t : {16u, 32u, 47u, 63u}) {
    auto cfg = default_cfg(t);
    auto ps = init_params(cfg, 5);
    Context cx{cfg, ps, NormMode::kTrain};
    Rng rng(t);
    Tensor z = random_tensor({2, 16, 60, t}, rng);
    EXPECT_EQ(tfc_forward(cx, "stage1.pcem", z).shape(), z.shape());
  }
  auto cfg = default_cfg(16);
  auto ps = init_params(cfg, 6);
  Context cx{cfg, ps, NormMode::kEval};
  perturb_norms(ps, 7);
  for (const char* p : {"stage1.pcem.tfc.vt.bias", "stage1.pcem.tfc.vf.bias"})
    for (double& v : ps.get(p).data()) v = 0.0;
  Tensor zero({1, 16, 60, 16});
  Tensor pre = ops::conv2d(ops::conv2d(zero, ps.get("stage1.pcem.tfc.vt.weight"), ps.get("stage1.pcem.tfc.vt.bias"),
                                       {1, 1, 0, 0}),
                           ps.get("stage1.pcem.tfc.vf.weight"), ps.get("stage1.pcem.tfc.vf.bias"), {0, 0, 1, 1});
  for (double v : pre.data()) EXPECT_EQ(v, 0.0);

  Rng rng(8);
  Tensor z = random_tensor({2, 16, 60, 16}, rng);
  literal::Layers L{ps, cfg, false};
  Tensor vt = literal::conv(z, L.w("stage1.pcem.tfc.vt"), L.b("stage1.pcem.tfc.vt"), {1, 1, 0, 0}, 1);
  Tensor vf = literal::conv(vt, L.w("stage1.pcem.tfc.vf"), L.b("stage1.pcem.tfc.vf"), {0, 0, 1, 1}, 1);
  Tensor expected = literal::gelu(L.bn("stage1.pcem.tfc.bn", vf));
  EXPECT_LE(max_abs_diff(tfc_forward(cx, "stage1.pcem", z).data(), expected.data()), 1e-10);
}

TEST(Pcem, ForcedGatesReduceToMixOfResidualAndTfc) {
  auto cfg = default_cfg(32);
  auto ps = init_params(cfg, 9);
  Context cx{cfg, ps, NormMode::kEval};
  perturb_norms(ps, 10);
  // sigmoid(40) rounds to exactly 1.0 in double precision.
  fill(ps, "stage1.pcem.pd.pw", 0.0, 40.0);
  fill(ps, "stage1.pcem.ca.expand", 0.0, 40.0);
  Rng rng(11);
  Tensor z = random_tensor({2, 16, 60, 32}, rng);
  Tensor out = pcem_forward(cx, "stage1.pcem", z);
  EXPECT_EQ(out.shape(), z.shape());
  Tensor expected = conv_layer(cx, "stage1.pcem.out", ops::add(z, tfc_forward(cx, "stage1.pcem", z)));
  EXPECT_LE(max_abs_diff(out.data(), expected.data()), 1e-12);
}

TEST(Pcem, MatchesLiteralEquation) {
  for (bool train : {true, false}) {
    auto cfg = default_cfg(16);
    auto ps = init_params(cfg, 12);
    perturb_norms(ps, 13);
    Rng rng(14);
    Tensor z = random_tensor({2, 16, 60, 16}, rng);
    literal::Layers L{ps, cfg, train};
    Tensor expected = literal::pcem(L, "stage1.pcem", z);
    Context cx{cfg, ps, train ? NormMode::kTrain : NormMode::kEval};
    EXPECT_LE(max_abs_diff(pcem_forward(cx, "stage1.pcem", z).data(), expected.data()), 1e-10);
  }
}

// ---- MGAA stand-in ----------------------------------------------------------

TEST(Mgaa, ZeroGateBranchGivesHalfResidual) {
  auto cfg = default_cfg(16);
  auto ps = init_params(cfg, 15);
  fill(ps, "stage1.mgaa.reduce", 0.0, 0.0);
  fill(ps, "stage1.mgaa.expand", 0.0, 0.0);
  Context cx{cfg, ps, NormMode::kEval};
  Rng rng(16);
  Tensor z = random_tensor({2, 16, 60, 16}, rng);
  Tensor out = mgaa_forward(cx, "stage1.mgaa", z, 4);
  for (std::size_t i = 0; i < z.numel(); ++i) EXPECT_DOUBLE_EQ(out[i], z[i] + 0.5 * z[i]);
}

TEST(Mgaa, BandLocalPerturbationOnlyMovesThatGate) {
  auto cfg = default_cfg(16);
  auto ps = init_params(cfg, 17);
  Context cx{cfg, ps, NormMode::kEval};
  Rng rng(18);
  Tensor z = random_tensor({1, 16, 60, 16}, rng);
  Tensor g0 = mgaa_gates(cx, "stage1.mgaa", z, 4);
  ASSERT_EQ(g0.shape(), (Shape{1, 16, 4, 1}));
  EXPECT_TRUE(strictly_unit(g0));
  Tensor z2 = z.clone();
  for (std::size_t f = 30; f < 45; ++f) z2.at(0, 3, f, 5) += 2.0;  // band 2 only
  Tensor g1 = mgaa_gates(cx, "stage1.mgaa", z2, 4);
  for (std::size_t c = 0; c < 16; ++c)
    for (std::size_t band = 0; band < 4; ++band) {
      const double d = std::abs(g1.at(0, c, band, 0) - g0.at(0, c, band, 0));
      if (band == 2) EXPECT_GT(d, 0.0);
      else EXPECT_EQ(d, 0.0);
    }
  EXPECT_THROW(mgaa_forward(cx, "stage1.mgaa", z, 7), ConfigError);
}

// ---- FCEM parts -------------------------------------------------------------

TEST(Mfa, BranchGeometryAndZeroInput) {
  auto cfg = default_cfg(16);
  auto ps = init_params(cfg, 19);
  Context cx{cfg, ps, NormMode::kTrain};
  EXPECT_EQ(same_pad_before(20), 10u);
  EXPECT_EQ(same_pad_after(20), 9u);
  Rng rng(20);
  Tensor d = random_tensor({2, 16, 60, 16}, rng);
  for (std::size_t i = 0; i < 3; ++i) {
    Tensor b = mfa_branch(cx, "stage1.fcem", d, i);
    EXPECT_EQ(b.shape(), (Shape{2, 8, 60, 16}));
    const std::string q = "stage1.fcem.branch" + std::to_string(i + 1) + ".conv";
    const std::size_t k = cfg.k_list[i];
    Tensor pre = ops::conv2d(Tensor({1, 16, 60, 16}), ps.get(q + ".weight"), Tensor{},
                             {same_pad_before(k), same_pad_after(k), 0, 0});
    for (double v : pre.data()) EXPECT_EQ(v, 0.0);
  }
  Tensor odd = random_tensor({2, 15, 60, 16}, rng);
  EXPECT_THROW(mfa_branch(cx, "stage1.fcem", odd, 0), ConfigError);
}

TEST(Mfa, PoolTargetsConstantsAndOrdering) {
  auto cfg = default_cfg(16);
  EXPECT_EQ(cfg.scaled_pool_targets(60), (std::array<std::size_t, 3>{20, 30, 20}));
  EXPECT_EQ(cfg.scaled_pool_targets(15), (std::array<std::size_t, 3>{5, 8, 5}));
  auto ps = init_params(cfg, 21);
  Context cx{cfg, ps, NormMode::kEval};
  Tensor c = Tensor::full({1, 16, 60, 16}, 0.37);
  for (std::size_t j = 0; j < 3; ++j) {
    Tensor out = mfa_pool(cx, c, j);
    EXPECT_EQ(out.shape(), c.shape());
    for (double v : out.data()) EXPECT_NEAR(v, 0.37, 1e-15);
  }
  Rng rng(22);
  Tensor d = random_tensor({2, 16, 60, 16}, rng);
  Tensor mx = ops::adaptive_pool_f(d, 20, ops::PoolMode::kMax), av = ops::adaptive_pool_f(d, 20, ops::PoolMode::kAvg);
  for (std::size_t i = 0; i < mx.numel(); ++i) EXPECT_GE(mx[i], av[i]);
}

TEST(Fcem, ConcatWidthGateRangeAndLiteralEquation) {
  auto cfg = default_cfg(16);
  auto ps = init_params(cfg, 23);
  EXPECT_EQ(ps.get("stage1.fcem.fuse.conv.weight").dim(1), 72u);
  perturb_norms(ps, 24);
  Rng rng(25);
  Tensor d = random_tensor({2, 16, 60, 16}, rng);
  for (bool train : {true, false}) {
    Context cx{cfg, ps, train ? NormMode::kTrain : NormMode::kEval};
    EXPECT_TRUE(strictly_unit(afi_forward(cx, "stage1.fcem", d)));
    literal::Layers L{ps, cfg, train};
    Tensor expected = literal::fcem(L, "stage1.fcem", d);
    Tensor out = fcem_forward(cx, "stage1.fcem", d);
    EXPECT_EQ(out.shape(), d.shape());
    EXPECT_LE(max_abs_diff(out.data(), expected.data()), 1e-10);
  }
  // Stage-2 geometry: C=128, F=15, scaled targets (5,8,5).
  auto cfg2 = default_cfg(16);
  auto ps2 = init_params(cfg2, 26);
  perturb_norms(ps2, 27);
  Tensor d2 = random_tensor({2, 128, 15, 4}, rng);
  Context cx2{cfg2, ps2, NormMode::kEval};
  literal::Layers L2{ps2, cfg2, false};
  EXPECT_LE(max_abs_diff(fcem_forward(cx2, "stage2.fcem", d2).data(), literal::fcem(L2, "stage2.fcem", d2).data()),
            1e-10);
}

// ---- blocks and full network ------------------------------------------------

TEST(Block, ShapePreservedAtBothStagesForAllDurations) {
  for (std::size_t t : {16u, 32u, 47u, 63u}) {
    auto cfg = default_cfg(t);
    auto ps = init_params(cfg, 28);
    Context cx{cfg, ps, NormMode::kTrain};
    Rng rng(t);
    for (int stage = 1; stage <= 2; ++stage) {
      const auto g = cfg.stage(stage);
      Tensor z = random_tensor({2, g.channels, g.f, g.t}, rng);
      EXPECT_EQ(smgaa_block(cx, stage, z).shape(), z.shape()) << "stage " << stage << " T " << t;
    }
  }
}

TEST(Block, DeterministicInEvalAndFcemMatters) {
  auto cfg = default_cfg(16);
  auto ps = init_params(cfg, 29);
  Context cx{cfg, ps, NormMode::kEval};
  Rng rng(30);
  Tensor z = random_tensor({2, 16, 60, 16}, rng);
  Tensor a = smgaa_block(cx, 1, z), b = smgaa_block(cx, 1, z);
  EXPECT_EQ(max_abs_diff(a.data(), b.data()), 0.0);
  auto no_fcem = cfg;
  no_fcem.use_fcem = false;
  Context cx2{no_fcem, ps, NormMode::kEval};
  EXPECT_GT(max_abs_diff(smgaa_block(cx2, 1, z).data(), a.data()), 1e-3);
}

TEST(Cfeb, GeometryAndConstantInterior) {
  auto cfg = default_cfg(16);
  auto ps = init_params(cfg, 31);
  Context cx{cfg, ps, NormMode::kTrain};
  Rng rng(32);
  Tensor x = random_tensor({2, 16, 60, 16}, rng);
  Tensor y = cfeb_forward(cx, "cfeb1", x);
  EXPECT_EQ(y.shape(), (Shape{2, 64, 30, 8}));
  EXPECT_EQ(cfeb_forward(cx, "cfeb2", y).shape(), (Shape{2, 128, 15, 4}));
  Tensor c = Tensor::full({1, 16, 8, 8}, 0.6);
  Tensor pre = conv_layer(cx, "cfeb1.conv", c, {1, 1, 1, 1});
  for (std::size_t o = 0; o < 64; ++o)
    for (std::size_t f = 1; f < 7; ++f)
      for (std::size_t t = 1; t < 7; ++t) EXPECT_NEAR(pre.at(0, o, f, t), pre.at(0, o, 1, 1), 1e-12);
  EXPECT_THROW(cfeb_forward(cx, "cfeb1", random_tensor({1, 16, 7, 4}, rng)), ConfigError);
}

TEST(FullForward, ShapeFinitenessAndEvalDeterminism) {
  auto cfg = default_cfg(16);
  Model m(cfg, 33);
  Rng rng(34);
  Tensor x = random_tensor({4, 1, 60, 16}, rng, -2, 2);
  Tensor a = m.forward(x, NormMode::kEval), b = m.forward(x, NormMode::kEval);
  EXPECT_EQ(a.shape(), (Shape{4, 2}));
  for (double v : a.data()) EXPECT_TRUE(std::isfinite(v));
  EXPECT_TRUE(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
  auto s = spoof_scores(a);
  for (std::size_t i = 0; i < 4; ++i) {
    const double p1 = std::exp(s[i]);
    const double p0 = std::exp(a[2 * i]) / (std::exp(a[2 * i]) + std::exp(a[2 * i + 1]));
    EXPECT_NEAR(p0 + p1, 1.0, 1e-12);
  }
  EXPECT_THROW(m.forward(random_tensor({4, 1, 60, 17}, rng), NormMode::kEval), ConfigError);
}

TEST(FullForward, ReducedConfigGradientsMatchFiniteDifferences) {
  auto cfg = reduced_cfg();
  auto ps = init_params(cfg, 35);
  perturb_norms(ps, 36);
  Rng rng(37);
  Tensor x = random_tensor({2, 1, 12, 6}, rng, -2, 2);
  Tensor w = random_tensor({2, 2}, rng);
  std::vector<smgaa::testing::GradTarget> targets;
  for (auto& [path, t] : ps.trainable_params()) targets.push_back({path, t});
  auto res = smgaa::testing::grad_check(
      [&] { return ops::sum(ops::mul(full_forward(cfg, ps, x, NormMode::kTrain), w)); }, targets, 1e-4, 12);
  EXPECT_LE(res.max_rel_err, 1e-4) << res.worst;
  EXPECT_GT(res.checked, 200u);
  EXPECT_LE(res.skipped * 20, res.checked);
}

// ---- complexity ---------------------------------------------------------------

TEST(Complexity, AnalyticFlopsMatchInstrumentedCount) {
  for (std::size_t t : {16u, 32u, 47u, 63u}) {
    for (int variant = 0; variant < 6; ++variant) {
      auto cfg = default_cfg(t);
      if (variant == 1) cfg.use_mgaa = false;
      if (variant == 2) cfg.use_pcem = false;
      if (variant == 3) cfg.use_fcem = false;
      if (variant == 4) cfg.use_shallow = false;
      if (variant == 5) cfg.use_deep = false;
      auto ps = init_params(cfg, 38);
      Tensor x({2, 1, 60, t});
      ops::FlopCounter counter;
      full_forward(cfg, ps, x, NormMode::kTrain);
      EXPECT_EQ(counter.flops(), count_flops(cfg, t)) << "T " << t << " variant " << variant;
    }
  }
}

TEST(Complexity, MonotoneFlopsAndClassifierOnlyParamGrowth) {
  std::size_t prev_flops = 0;
  std::size_t body = 0;
  for (std::size_t t : {16u, 32u, 47u, 63u}) {
    auto cfg = default_cfg(t);
    auto ps = init_params(cfg, 39);
    const std::size_t f = count_flops(cfg, t);
    EXPECT_GT(f, prev_flops);
    prev_flops = f;
    const std::size_t cls = ps.get("classifier.weight").numel() + ps.get("classifier.bias").numel();
    EXPECT_EQ(cls, 2 * cfg.classifier_inputs() + 2);
    if (body == 0) body = count_params(ps) - cls;
    EXPECT_EQ(count_params(ps) - cls, body);
  }
}

TEST(Complexity, FormulaInstances) {
  ops::FlopCounter counter;
  ops::conv2d(Tensor({1, 6, 5, 7}), Tensor({6, 6, 1, 1}), Tensor{});
  EXPECT_EQ(counter.flops(), 2u * 6 * 6 * 5 * 7);
  ParameterSet ps;
  ps.add("lin.weight", Tensor({3, 4}));
  ps.add("lin.bias", Tensor({3}));
  ps.add("bn.running_mean", Tensor({3}), false);
  EXPECT_EQ(count_params(ps), 3u * 4 + 3);
}

// ---- config and persistence -------------------------------------------------

TEST(ModelConfigTest, ValidationErrors) {
  auto bad = default_cfg(16);
  bad.stem_channels = 4;  // below kappa
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = default_cfg(16);
  bad.stem_channels = 9;  // odd
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = default_cfg(16);
  bad.mgaa_bands = {4, 4};  // stage-2 F=15
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = default_cfg(16);
  bad.in_f = 62;
  EXPECT_THROW(bad.validate(), ConfigError);
  EXPECT_NO_THROW(reduced_cfg().validate());
}

TEST(Checkpoint, SaveLoadReproducesLogits) {
  auto cfg = default_cfg(32);
  cfg.use_mgaa = false;
  Model m(cfg, 40);
  perturb_norms(m.params, 41);
  auto path = std::filesystem::temp_directory_path() / "smgaa_test_model.smgc";
  save_model(path, m, "seed = 3\n");
  Model n = load_model(path);
  EXPECT_FALSE(n.cfg.use_mgaa);
  EXPECT_EQ(n.cfg.in_t, 32u);
  Rng rng(42);
  Tensor x = random_tensor({3, 1, 60, 32}, rng);
  Tensor a = m.forward(x, NormMode::kEval), b = n.forward(x, NormMode::kEval);
  EXPECT_TRUE(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
  EXPECT_EQ(count_params(n.params), count_params(m.params));
}
