#include "smgaa/synth.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <numbers>

#include "fft.hpp"
#include "smgaa/error.hpp"
#include "smgaa/evaluation.hpp"
#include "smgaa/rng.hpp"

namespace smgaa::synth {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Paul Kellet's economy pink filter on white noise.
std::vector<double> pink_noise(std::size_t n, Rng& rng) {
  std::vector<double> out(n);
  double b0 = 0, b1 = 0, b2 = 0;
  for (auto& v : out) {
    const double w = rng.uniform(-1.0, 1.0);
    b0 = 0.99765 * b0 + w * 0.0990460;
    b1 = 0.96300 * b1 + w * 0.2965164;
    b2 = 0.57000 * b2 + w * 1.0526913;
    v = b0 + b1 + b2 + w * 0.1848;
  }
  return out;
}

double rms(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s / static_cast<double>(x.size()));
}

double bin_hz(std::size_t k, std::size_t n) {
  return static_cast<double>(k) * kSampleRate / static_cast<double>(n);
}

bool in_notch(double hz, double half_width) {
  for (double c : kNotchCentres)
    if (std::abs(hz - c) <= half_width) return true;
  return false;
}

void apply_notches(std::vector<double>& x) {
  auto bins = fft::rfft(x);
  for (std::size_t k = 0; k < bins.size(); ++k)
    if (in_notch(bin_hz(k, x.size()), kNotchHalfWidth)) bins[k] = 0.0;
  x = fft::irfft(bins, x.size());
}

}  // namespace

AudioClip make_clip(Label label, double duration_s, std::uint64_t seed) {
  const std::size_t n = samples_for(duration_s);
  Rng rng(seed);
  const double fs = kSampleRate;

  const double f0 = rng.uniform(90.0, 240.0);
  const double vib_rate = rng.uniform(3.0, 7.0), vib_depth = rng.uniform(0.0, 0.03) * f0;
  const double vib_phase = rng.uniform(0.0, kTwoPi);
  const std::size_t harmonics = static_cast<std::size_t>(7000.0 / (f0 * 1.03));
  const double tilt = rng.uniform(0.7, 1.3);
  // Harmonic k contributes amp_k * sin(k*theta + phase_k), evaluated as
  // Im(e^{i phase_k} z^k) with z = e^{i theta}.
  std::vector<double> a_cos(harmonics), a_sin(harmonics);
  for (std::size_t k = 0; k < harmonics; ++k) {
    const double amp = rng.uniform(0.5, 1.0) / std::pow(static_cast<double>(k + 1), tilt);
    const double phase = rng.uniform(0.0, kTwoPi);
    a_cos[k] = amp * std::cos(phase);
    a_sin[k] = amp * std::sin(phase);
  }
  std::array<double, 2> env_rate{rng.uniform(0.5, 3.0), rng.uniform(0.5, 3.0)};
  std::array<double, 2> env_phase{rng.uniform(0.0, kTwoPi), rng.uniform(0.0, kTwoPi)};

  std::vector<double> x(n);
  double theta = 0.0;
  const std::size_t fade = static_cast<std::size_t>(0.01 * fs);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / fs;
    const double f = f0 + vib_depth * std::sin(kTwoPi * vib_rate * t + vib_phase);
    theta += kTwoPi * f / fs;
    const std::complex<double> z = std::polar(1.0, theta);
    std::complex<double> p = z;
    double s = 0.0;
    for (std::size_t k = 0; k < harmonics; ++k, p *= z) s += a_cos[k] * p.imag() + a_sin[k] * p.real();
    double env = 0.65 + 0.2 * std::sin(kTwoPi * env_rate[0] * t + env_phase[0]) +
                 0.15 * std::sin(kTwoPi * env_rate[1] * t + env_phase[1]);
    if (i < fade) env *= 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(i) / fade);
    if (n - 1 - i < fade) env *= 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(n - 1 - i) / fade);
    x[i] = env * s;
  }
  auto noise = pink_noise(n, rng);
  const double snr_db = rng.uniform(20.0, 30.0);
  const double noise_gain = rms(x) / rms(noise) * std::pow(10.0, -snr_db / 20.0);
  for (std::size_t i = 0; i < n; ++i) x[i] += noise_gain * noise[i];

  if (label == Label::kSpoof) {
    apply_notches(x);
    const double step = 0.08 * rms(x);
    for (std::size_t start = 0; start < n; start += kStepPeriod) {
      const double offset = rng.uniform(-step, step);
      for (std::size_t i = start; i < std::min(n, start + kStepPeriod); ++i) x[i] += offset;
    }
  }

  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  const double gain = rng.uniform(0.3, 0.8) / peak;
  for (double& v : x) v *= gain;

  AudioClip clip;
  clip.samples = std::move(x);
  clip.duration_s = duration_s;
  clip.label = label;
  clip.condition = 0;
  return clip;
}

double oracle_score(std::span<const double> samples) {
  const auto bins = fft::rfft(samples);
  double notch = 0.0, ref = 0.0;
  for (std::size_t k = 0; k < bins.size(); ++k) {
    const double hz = bin_hz(k, samples.size());
    const double e = std::norm(bins[k]);
    if (in_notch(hz, 0.8 * kNotchHalfWidth)) notch += e;
    else if (hz >= 300.0 && hz <= 3900.0 && !in_notch(hz, 1.2 * kNotchHalfWidth)) ref += e;
  }
  return std::log10((ref + 1e-30) / (notch + 1e-30));
}

std::vector<ClipRecord> make_corpus(std::size_t n_per_class, const std::vector<double>& durations, std::uint64_t seed) {
  if (n_per_class == 0) throw ConfigError("synth", "n_per_class must be at least 1");
  std::vector<ClipRecord> out;
  std::vector<std::pair<Label, double>> jobs;
  for (double d : durations) {
    duration_index(d);
    for (Label lab : {Label::kBonaFide, Label::kSpoof})
      for (std::size_t i = 0; i < n_per_class; ++i) {
        char id[64];
        std::snprintf(id, sizeof id, "%s_%s_%05zu", label_name(lab).c_str(), duration_name(d).c_str(), i);
        out.push_back({id, AudioClip{}});
        jobs.emplace_back(lab, d);
      }
  }
  // Clip content depends only on (seed, id), so generation order is free.
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(out.size()); ++i) {
    auto& r = out[static_cast<std::size_t>(i)];
    const auto [lab, d] = jobs[static_cast<std::size_t>(i)];
    r.clip = make_clip(lab, d, mix_seed(seed, fnv1a(r.id)));
  }
  const double e = oracle_eer(out);
  if (e != 0.0) throw NumericError("synth", "band-energy oracle EER is " + std::to_string(e) + ", expected 0");
  return out;
}

double oracle_eer(const std::vector<ClipRecord>& records) {
  std::vector<double> s;
  std::vector<Label> l;
  for (const auto& r : records) {
    s.push_back(oracle_score(r.clip.samples));
    l.push_back(r.clip.label);
  }
  return eval::compute_eer(s, l).eer;
}

}  // namespace smgaa::synth
