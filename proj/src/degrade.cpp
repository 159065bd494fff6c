#include "smgaa/degrade.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "smgaa/error.hpp"
#include "smgaa/rng.hpp"

namespace smgaa::degrade {

namespace {

constexpr double kMu = 255.0;
constexpr double kA = 87.6;
constexpr double kLevels = 127.0;  // 8-bit sign-magnitude code

double quantize8(double y) { return std::round(std::clamp(y, -1.0, 1.0) * kLevels) / kLevels; }

double mu_compress(double x) { return std::copysign(std::log1p(kMu * std::abs(x)) / std::log1p(kMu), x); }
double mu_expand(double y) { return std::copysign(std::expm1(std::abs(y) * std::log1p(kMu)) / kMu, y); }

double a_compress(double x) {
  const double a = std::abs(x);
  const double d = 1.0 + std::log(kA);
  const double y = a < 1.0 / kA ? kA * a / d : (1.0 + std::log(kA * a)) / d;
  return std::copysign(y, x);
}
double a_expand(double y) {
  const double a = std::abs(y);
  const double d = 1.0 + std::log(kA);
  const double x = a < 1.0 / d ? a * d / kA : std::exp(a * d - 1.0) / kA;
  return std::copysign(x, y);
}

std::size_t mirror(long i, std::size_t n) {
  if (n == 1) return 0;
  const long period = 2 * static_cast<long>(n) - 2;
  long m = i % period;
  if (m < 0) m += period;
  return static_cast<std::size_t>(m < static_cast<long>(n) ? m : period - m);
}

}  // namespace

std::vector<double> mu_law(std::span<const double> x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = mu_expand(quantize8(mu_compress(x[i])));
  return out;
}

std::vector<double> a_law(std::span<const double> x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = a_expand(quantize8(a_compress(x[i])));
  return out;
}

std::vector<double> resample_8k(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; i += 2) out[i] = x[i];
  for (std::size_t i = 1; i < n; i += 2) out[i] = i + 1 < n ? 0.5 * (x[i - 1] + x[i + 1]) : x[i - 1];
  return out;
}

std::vector<double> requantize_6bit(std::span<const double> x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double q = std::round((std::clamp(x[i], -1.0, 1.0) + 1.0) * 63.0 / 2.0);
    out[i] = q * 2.0 / 63.0 - 1.0;
  }
  return out;
}

std::array<double, kLowpassTaps> lowpass_taps() {
  constexpr double fc = 0.25;
  constexpr long mid = kLowpassTaps / 2;
  std::array<double, kLowpassTaps> h{};
  double sum = 0.0;
  for (std::size_t n = 0; n < kLowpassTaps; ++n) {
    const double m = static_cast<double>(static_cast<long>(n) - mid);
    const double sinc = m == 0.0 ? 2.0 * fc : std::sin(2.0 * std::numbers::pi * fc * m) / (std::numbers::pi * m);
    const double w = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / (kLowpassTaps - 1));
    h[n] = sinc * w;
    sum += h[n];
  }
  for (auto& v : h) v /= sum;
  return h;
}

// Centred (zero-delay) FIR with mirrored edges.
std::vector<double> lowpass_4k(std::span<const double> x) {
  static const auto h = lowpass_taps();
  constexpr long mid = kLowpassTaps / 2;
  const std::size_t n = x.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < kLowpassTaps; ++k)
      acc += h[k] * x[mirror(static_cast<long>(i) + mid - static_cast<long>(k), n)];
    out[i] = std::clamp(acc, -1.0, 1.0);
  }
  return out;
}

std::vector<double> apply_codec(std::span<const double> x, int codec_id) {
  switch (codec_id) {
    case 1: return mu_law(x);
    case 2: return a_law(x);
    case 3: return resample_8k(x);
    case 4: return requantize_6bit(x);
    case 5: return lowpass_4k(x);
    case 6: {
      auto y = mu_law(x);
      return resample_8k(y);
    }
    default:
      throw ConfigError("degrade", "unknown codec id " + std::to_string(codec_id) + " (expected 1..6)");
  }
}

std::vector<bool> packet_loss_mask(std::size_t n_samples, double loss_rate, std::uint64_t seed) {
  if (!(loss_rate >= 0.0 && loss_rate < 1.0))
    throw ConfigError("degrade", "loss rate must lie in [0, 1), got " + std::to_string(loss_rate));
  const std::size_t packets = (n_samples + kPacketSamples - 1) / kPacketSamples;
  std::vector<bool> mask(packets);
  Rng rng(mix_seed(seed, 0x10557));
  for (std::size_t p = 0; p < packets; ++p) mask[p] = rng.bernoulli(loss_rate);
  return mask;
}

std::vector<double> apply_packet_loss(std::span<const double> x, double loss_rate, std::uint64_t seed) {
  const auto mask = packet_loss_mask(x.size(), loss_rate, seed);
  std::vector<double> out(x.begin(), x.end());
  for (std::size_t p = 0; p < mask.size(); ++p) {
    if (!mask[p]) continue;
    const std::size_t end = std::min(x.size(), (p + 1) * kPacketSamples);
    std::fill(out.begin() + static_cast<long>(p * kPacketSamples), out.begin() + static_cast<long>(end), 0.0);
  }
  return out;
}

void DegradationSpec::validate() const {
  condition_name(condition);
  if (condition == 0 && (codec_id != 0 || loss_rate != 0.0))
    throw ConfigError("degrade", "C0 must have no codec and no packet loss");
  if (condition > 0 && (codec_id < 1 || codec_id > kNumCodecs))
    throw ConfigError("degrade", "condition " + condition_name(condition) + " needs a codec id in 1..6");
  if (!(loss_rate >= 0.0 && loss_rate < 1.0)) throw ConfigError("degrade", "loss rate outside [0, 1)");
}

int choose_codec(std::uint64_t seed, std::uint64_t clip_index) {
  return 1 + static_cast<int>(mix_seed(seed, clip_index) % kNumCodecs);
}

DegradationSpec make_spec(int condition, int codec_id, std::uint64_t seed, const ConditionMap& map) {
  condition_name(condition);
  for (std::size_t k = 2; k < kNumConditions; ++k)
    if (map.loss_rates[k] < map.loss_rates[k - 1])
      throw ConfigError("degrade", "loss rates must be nondecreasing from C1 to C5");
  DegradationSpec s;
  s.condition = condition;
  s.codec_id = condition == 0 ? 0 : codec_id;
  s.loss_rate = condition == 0 ? 0.0 : map.loss_rates[static_cast<std::size_t>(condition)];
  s.seed = seed;
  s.validate();
  return s;
}

AudioClip condition_pipeline(const AudioClip& clip, const DegradationSpec& spec) {
  spec.validate();
  AudioClip out = clip;
  out.condition = spec.condition;
  if (spec.condition == 0) return out;
  out.samples = apply_codec(clip.samples, spec.codec_id);
  if (spec.loss_rate > 0.0) out.samples = apply_packet_loss(out.samples, spec.loss_rate, spec.seed);
  return out;
}

}  // namespace smgaa::degrade
