#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "smgaa/degrade.hpp"
#include "smgaa/error.hpp"
#include "smgaa/rng.hpp"

using namespace smgaa;
using namespace smgaa::degrade;

namespace {

std::vector<double> sine(double hz, std::size_t n, double amp = 0.5) {
  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = amp * std::sin(2 * std::numbers::pi * hz * i / 16000.0);
  return s;
}

double rms(const std::vector<double>& x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return std::sqrt(e / x.size());
}

AudioClip noise_clip(std::uint64_t seed) {
  Rng rng(seed);
  AudioClip c;
  c.duration_s = 1.0;
  c.samples.resize(16000);
  for (auto& v : c.samples) v = rng.uniform(-0.8, 0.8);
  return c;
}

}  // namespace

TEST(Codec, CompandersFixZeroAndStayClose) {
  const std::vector<double> zero{0.0};
  EXPECT_EQ(mu_law(zero)[0], 0.0);
  EXPECT_EQ(a_law(zero)[0], 0.0);
  auto s = sine(440, 4000);
  for (auto f : {mu_law, a_law}) {
    auto y = f(s);
    for (std::size_t i = 0; i < s.size(); ++i) EXPECT_LE(std::abs(y[i] - s[i]), 0.02);
  }
  // Odd symmetry.
  const std::vector<double> pm{0.3, -0.3};
  EXPECT_EQ(mu_law(pm)[0], -mu_law(pm)[1]);
}

TEST(Codec, SixBitErrorBound) {
  std::vector<double> sweep(20001);
  for (std::size_t i = 0; i < sweep.size(); ++i) sweep[i] = -1.0 + 2.0 * i / 20000.0;
  auto y = requantize_6bit(sweep);
  double worst = 0.0;
  for (std::size_t i = 0; i < sweep.size(); ++i) worst = std::max(worst, std::abs(y[i] - sweep[i]));
  EXPECT_LE(worst, 1.0 / 63.0 + 1e-15);
  EXPECT_GT(worst, 0.9 / 63.0);
}

TEST(Codec, LowpassRejectsSixKilohertz) {
  auto s = sine(6000, 8000);
  EXPECT_LE(rms(lowpass_4k(s)), 0.05 * rms(s));
  auto pass = sine(1000, 8000);
  EXPECT_NEAR(rms(lowpass_4k(pass)) / rms(pass), 1.0, 0.01);
  auto h = lowpass_taps();
  double sum = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    sum += h[i];
    EXPECT_NEAR(h[i], h[h.size() - 1 - i], 1e-15);
  }
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(Codec, ResampleKeepsEvenSamplesAndInterpolates) {
  std::vector<double> x{0.0, 0.9, 0.2, -0.4, 0.6};
  auto y = resample_8k(x);
  EXPECT_EQ(y[0], 0.0);
  EXPECT_EQ(y[2], 0.2);
  EXPECT_EQ(y[4], 0.6);
  EXPECT_DOUBLE_EQ(y[1], 0.1);
  EXPECT_DOUBLE_EQ(y[3], 0.4);
}

TEST(Codec, LengthPreservedAndUnknownIdRejected) {
  auto clip = noise_clip(1);
  for (int id = 1; id <= kNumCodecs; ++id) {
    auto y = apply_codec(clip.samples, id);
    ASSERT_EQ(y.size(), clip.samples.size());
    for (double v : y) EXPECT_TRUE(v >= -1.0 && v <= 1.0);
  }
  EXPECT_THROW(apply_codec(clip.samples, 0), ConfigError);
  EXPECT_THROW(apply_codec(clip.samples, 7), ConfigError);
}

TEST(PacketLoss, RateZeroIsIdentity) {
  auto clip = noise_clip(2);
  EXPECT_EQ(apply_packet_loss(clip.samples, 0.0, 5), clip.samples);
  EXPECT_THROW(apply_packet_loss(clip.samples, 1.0, 5), ConfigError);
  EXPECT_THROW(apply_packet_loss(clip.samples, -0.1, 5), ConfigError);
}

TEST(PacketLoss, DropFractionConcentrates) {
  auto mask = packet_loss_mask(10000 * kPacketSamples, 0.1, 42);
  ASSERT_EQ(mask.size(), 10000u);
  const double frac = std::count(mask.begin(), mask.end(), true) / 10000.0;
  EXPECT_NEAR(frac, 0.1, 0.01);
}

TEST(PacketLoss, DeterministicAndFrameAligned) {
  auto clip = noise_clip(3);
  auto a = apply_packet_loss(clip.samples, 0.3, 9), b = apply_packet_loss(clip.samples, 0.3, 9);
  EXPECT_EQ(a, b);
  auto mask = packet_loss_mask(clip.samples.size(), 0.3, 9);
  for (std::size_t p = 0; p < mask.size(); ++p)
    for (std::size_t i = p * kPacketSamples; i < (p + 1) * kPacketSamples; ++i)
      EXPECT_EQ(a[i], mask[p] ? 0.0 : clip.samples[i]);
}

TEST(PacketLoss, ExpectedEnergyNonincreasingInRate) {
  auto clip = noise_clip(4);
  const double rates[] = {0.0, 0.05, 0.10, 0.15, 0.20};
  std::vector<double> mean(5, 0.0), sq(5, 0.0);
  const int seeds = 200;
  for (int r = 0; r < 5; ++r)
    for (int s = 0; s < seeds; ++s) {
      const double e = std::pow(rms(apply_packet_loss(clip.samples, rates[r], s)), 2);
      mean[r] += e / seeds;
      sq[r] += e * e / seeds;
    }
  for (int r = 1; r < 5; ++r) {
    const double sd = std::sqrt(std::max(0.0, sq[r] - mean[r] * mean[r]) / seeds);
    EXPECT_LE(mean[r], mean[r - 1] + 3 * sd);
  }
}

TEST(Conditions, SpecInvariantsAndPipeline) {
  auto clip = noise_clip(5);
  clip.condition = 0;
  auto c0 = condition_pipeline(clip, make_spec(0, 3, 1));
  EXPECT_EQ(c0.samples, clip.samples);
  EXPECT_EQ(c0.condition, 0);

  auto s1 = make_spec(1, 2, 1);
  EXPECT_EQ(s1.loss_rate, 0.0);
  auto c1 = condition_pipeline(clip, s1);
  EXPECT_EQ(c1.samples, apply_codec(clip.samples, 2));
  EXPECT_EQ(c1.condition, 1);

  double prev = -1.0;
  for (int k = 1; k <= 5; ++k) {
    auto s = make_spec(k, 1, 7);
    EXPECT_DOUBLE_EQ(s.loss_rate, (k - 1) * 0.05);
    EXPECT_GE(s.loss_rate, prev);
    prev = s.loss_rate;
  }
  DegradationSpec bad;
  bad.condition = 0;
  bad.codec_id = 1;
  EXPECT_THROW(bad.validate(), ConfigError);
  ConditionMap decreasing;
  decreasing.loss_rates = {0, 0.2, 0.1, 0.1, 0.1, 0.1};
  EXPECT_THROW(make_spec(2, 1, 1, decreasing), ConfigError);
}

TEST(Conditions, C5DropsAboutTwentyPercent) {
  std::size_t dropped = 0, total = 0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    auto m = packet_loss_mask(32000, make_spec(5, 1, s).loss_rate, s);
    dropped += std::count(m.begin(), m.end(), true);
    total += m.size();
  }
  EXPECT_NEAR(static_cast<double>(dropped) / total, 0.20, 0.03);
}

TEST(Conditions, CodecChoiceCoversAllIds) {
  std::vector<int> seen(kNumCodecs + 1, 0);
  for (std::uint64_t i = 0; i < 600; ++i) ++seen[choose_codec(11, i)];
  EXPECT_EQ(seen[0], 0);
  for (int id = 1; id <= kNumCodecs; ++id) EXPECT_GT(seen[id], 60);
}
