#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "smgaa/audio.hpp"

namespace smgaa::synth {

// Spoof clips have these bands removed. Centres in Hz; each notch spans
// kNotchHalfWidth on either side.
inline constexpr std::array<double, 4> kNotchCentres{500.0, 1500.0, 2500.0, 3500.0};
inline constexpr double kNotchHalfWidth = 125.0;
// Spoof clips get a DC step at every multiple of this many samples.
inline constexpr std::size_t kStepPeriod = 256;

// Bona fide: harmonic stack with vibrato and a smooth amplitude envelope plus
// pink noise. Spoof: the same construction with the notch comb applied and
// per-frame offsets added. Deterministic in (label, duration, seed).
AudioClip make_clip(Label label, double duration_s, std::uint64_t seed);

// log10 of reference-band energy over notch-band energy; higher means more
// spoof-like.
double oracle_score(std::span<const double> samples);

// n_per_class clips of each label for every duration, ids like
// "spoof_1.0_00012". Raises NumericError unless the oracle separates the
// generated set with zero EER.
std::vector<ClipRecord> make_corpus(std::size_t n_per_class, const std::vector<double>& durations, std::uint64_t seed);

double oracle_eer(const std::vector<ClipRecord>& records);

}  // namespace smgaa::synth
