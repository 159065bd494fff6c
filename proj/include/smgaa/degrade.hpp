#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "smgaa/audio.hpp"

namespace smgaa::degrade {

inline constexpr int kNumCodecs = 6;
inline constexpr std::size_t kPacketSamples = 320;  // 20 ms at 16 kHz
inline constexpr std::size_t kLowpassTaps = 63;

// Codec proxies, all length preserving:
//   1 mu-law 8-bit, 2 A-law 8-bit, 3 8 kHz round trip, 4 6-bit requantisation,
//   5 4 kHz low-pass, 6 mu-law followed by the 8 kHz round trip.
std::vector<double> apply_codec(std::span<const double> x, int codec_id);

std::vector<double> mu_law(std::span<const double> x);
std::vector<double> a_law(std::span<const double> x);
std::vector<double> resample_8k(std::span<const double> x);
std::vector<double> requantize_6bit(std::span<const double> x);
std::vector<double> lowpass_4k(std::span<const double> x);
// Centred 63-tap Hamming windowed-sinc, cutoff 0.25 cycles/sample, unit DC gain.
std::array<double, kLowpassTaps> lowpass_taps();

// One entry per 20 ms packet; true when the packet is dropped.
std::vector<bool> packet_loss_mask(std::size_t n_samples, double loss_rate, std::uint64_t seed);
std::vector<double> apply_packet_loss(std::span<const double> x, double loss_rate, std::uint64_t seed);

// Loss rate per condition; index 0 is the clean condition.
struct ConditionMap {
  std::array<double, kNumConditions> loss_rates{0.0, 0.0, 0.05, 0.10, 0.15, 0.20};
};

struct DegradationSpec {
  int condition = 0;
  int codec_id = 0;  // 0 = none
  double loss_rate = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

// Codec drawn uniformly from 1..6 for the clip identified by (seed, clip_index).
int choose_codec(std::uint64_t seed, std::uint64_t clip_index);

DegradationSpec make_spec(int condition, int codec_id, std::uint64_t seed, const ConditionMap& map = {});

// C0: identity. Ck: codec then packet loss. The returned clip carries the
// condition tag of the spec.
AudioClip condition_pipeline(const AudioClip& clip, const DegradationSpec& spec);

}  // namespace smgaa::degrade
