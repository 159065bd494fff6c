#include "smgaa/features.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <numbers>

#include "fft.hpp"
#include "smgaa/error.hpp"

namespace smgaa::features {

namespace {

using fft::FftwFree;
using fft::r2c_plan;

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Index into [0, n) under repeated mirror reflection without edge repeat.
std::size_t reflect_index(long i, std::size_t n) {
  const long period = 2 * static_cast<long>(n) - 2;
  long m = i % period;
  if (m < 0) m += period;
  return static_cast<std::size_t>(m < static_cast<long>(n) ? m : period - m);
}

}  // namespace

std::string kind_name(FeatureKind k) {
  switch (k) {
    case FeatureKind::kMfcc: return "mfcc";
    case FeatureKind::kLfcc: return "lfcc";
    case FeatureKind::kCqcc: return "cqcc";
  }
  return "?";
}

FeatureKind parse_kind(const std::string& s) {
  if (s == "mfcc" || s == "MFCC") return FeatureKind::kMfcc;
  if (s == "lfcc" || s == "LFCC") return FeatureKind::kLfcc;
  if (s == "cqcc" || s == "CQCC") return FeatureKind::kCqcc;
  throw ConfigError("features", "unknown feature kind '" + s + "'");
}

FilterScale scale_for(FeatureKind k) {
  switch (k) {
    case FeatureKind::kMfcc: return FilterScale::kMel;
    case FeatureKind::kLfcc: return FilterScale::kLinear;
    case FeatureKind::kCqcc: return FilterScale::kGeometric;
  }
  return FilterScale::kMel;
}

std::size_t frame_count(std::size_t len, std::size_t hop) { return (len + hop - 1) / hop; }

std::size_t expected_frames(double duration_s) { return frame_count(samples_for(duration_s)); }

Matrix frame_and_window(std::span<const double> samples, std::size_t win, std::size_t hop) {
  if (hop < 1 || win < hop) throw ConfigError("features", "framing requires win >= hop >= 1");
  if (samples.size() < 2) throw ConfigError("features", "clip shorter than 2 samples");
  const std::size_t n = samples.size();
  const std::size_t frames = frame_count(n, hop);
  const long pad = static_cast<long>(win / 2);
  std::vector<double> window(win);
  for (std::size_t i = 0; i < win; ++i)
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(win));
  Matrix out(frames, win);
  for (std::size_t f = 0; f < frames; ++f)
    for (std::size_t i = 0; i < win; ++i) {
      const long src = static_cast<long>(f * hop + i) - pad;
      out(f, i) = samples[reflect_index(src, n)] * window[i];
    }
  return out;
}

Matrix power_spectrum(const Matrix& frames, std::size_t nfft) {
  if (nfft < frames.cols) throw ConfigError("features", "nfft must be at least the window length");
  const std::size_t bins = nfft / 2 + 1;
  fftw_plan plan = r2c_plan(nfft);
  std::unique_ptr<double, FftwFree> in(fftw_alloc_real(nfft));
  std::unique_ptr<fftw_complex, FftwFree> out(fftw_alloc_complex(bins));
  Matrix spec(frames.rows, bins);
  for (std::size_t r = 0; r < frames.rows; ++r) {
    std::fill(in.get(), in.get() + nfft, 0.0);
    std::copy(frames.row(r).begin(), frames.row(r).end(), in.get());
    fftw_execute_dft_r2c(plan, in.get(), out.get());
    for (std::size_t k = 0; k < bins; ++k) {
      const double re = out.get()[k][0], im = out.get()[k][1];
      spec(r, k) = re * re + im * im;
    }
  }
  return spec;
}

std::vector<double> filter_edges(FilterScale scale, std::size_t n_filters, int sample_rate) {
  if (n_filters < 2) throw ConfigError("features", "need at least 2 filters");
  const double nyquist = sample_rate / 2.0;
  const std::size_t n = n_filters + 2;
  std::vector<double> edges(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = static_cast<double>(i) / static_cast<double>(n - 1);
    switch (scale) {
      case FilterScale::kMel:
        edges[i] = mel_to_hz(u * hz_to_mel(nyquist));
        break;
      case FilterScale::kLinear:
        edges[i] = u * nyquist;
        break;
      case FilterScale::kGeometric:
        edges[i] = kGeometricFmin * std::pow(nyquist / kGeometricFmin, u);
        break;
    }
  }
  edges.front() = scale == FilterScale::kGeometric ? kGeometricFmin : 0.0;
  edges.back() = nyquist;
  return edges;
}

Matrix filterbank_matrix(FilterScale scale, std::size_t n_filters, std::size_t nfft, int sample_rate) {
  const auto edges = filter_edges(scale, n_filters, sample_rate);
  const std::size_t bins = nfft / 2 + 1;
  const double bin_hz = static_cast<double>(sample_rate) / static_cast<double>(nfft);
  Matrix w(n_filters, bins);
  for (std::size_t m = 0; m < n_filters; ++m) {
    const double lo = edges[m], c = edges[m + 1], hi = edges[m + 2];
    bool any = false;
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * bin_hz;
      double v = 0.0;
      if (f > lo && f <= c) v = (f - lo) / (c - lo);
      else if (f > c && f < hi) v = (hi - f) / (hi - c);
      w(m, k) = v;
      any = any || v > 0.0;
    }
    if (!any)
      throw ConfigError("features", std::to_string(n_filters) + " filters exceed the FFT resolution (filter " +
                                        std::to_string(m) + " covers no bin)");
  }
  return w;
}

Matrix apply_filterbank(const Matrix& spectra, const Matrix& weights) {
  if (spectra.cols != weights.cols) throw ConfigError("features", "filterbank width does not match spectrum");
  Matrix out(spectra.rows, weights.rows);
  for (std::size_t t = 0; t < spectra.rows; ++t)
    for (std::size_t m = 0; m < weights.rows; ++m) {
      double acc = 0.0;
      for (std::size_t k = 0; k < spectra.cols; ++k) acc += spectra(t, k) * weights(m, k);
      out(t, m) = acc;
    }
  return out;
}

Matrix dct_matrix(std::size_t n_in, std::size_t n_out) {
  Matrix d(n_out, n_in);
  for (std::size_t k = 0; k < n_out; ++k) {
    const double scale = std::sqrt((k == 0 ? 1.0 : 2.0) / static_cast<double>(n_in));
    for (std::size_t n = 0; n < n_in; ++n)
      d(k, n) = scale * std::cos(std::numbers::pi * static_cast<double>(k) * (2.0 * static_cast<double>(n) + 1.0) /
                                 (2.0 * static_cast<double>(n_in)));
  }
  return d;
}

Matrix cepstra(const Matrix& energies, std::size_t n_ceps) {
  if (n_ceps > energies.cols)
    throw ConfigError("features", "n_ceps " + std::to_string(n_ceps) + " exceeds " +
                                      std::to_string(energies.cols) + " filters");
  const Matrix d = dct_matrix(energies.cols, n_ceps);
  Matrix out(n_ceps, energies.rows);
  std::vector<double> logs(energies.cols);
  for (std::size_t t = 0; t < energies.rows; ++t) {
    for (std::size_t m = 0; m < energies.cols; ++m) {
      const double e = energies(t, m);
      if (!(e >= 0.0)) throw NumericError("features", "negative or non-finite filter energy");
      logs[m] = std::log(std::max(e, kLogFloor));
    }
    for (std::size_t k = 0; k < n_ceps; ++k) {
      double acc = 0.0;
      for (std::size_t m = 0; m < energies.cols; ++m) acc += d(k, m) * logs[m];
      out(k, t) = acc;
    }
  }
  return out;
}

void normalize_rows(Matrix& m) {
  const double n = static_cast<double>(m.cols);
  for (std::size_t r = 0; r < m.rows; ++r) {
    double mean = 0.0;
    for (std::size_t c = 0; c < m.cols; ++c) mean += m(r, c);
    mean /= n;
    double var = 0.0;
    for (std::size_t c = 0; c < m.cols; ++c) var += (m(r, c) - mean) * (m(r, c) - mean);
    var /= n;
    const bool flat = var < 1e-12;
    const double inv = flat ? 0.0 : 1.0 / std::sqrt(var);
    for (std::size_t c = 0; c < m.cols; ++c) m(r, c) = flat ? 0.0 : (m(r, c) - mean) * inv;
  }
}

Matrix featurize_samples(std::span<const double> samples, FeatureKind kind) {
  static const Matrix banks[] = {
      filterbank_matrix(FilterScale::kMel, kFilters),
      filterbank_matrix(FilterScale::kLinear, kFilters),
      filterbank_matrix(FilterScale::kGeometric, kFilters),
  };
  const Matrix& bank = banks[static_cast<int>(scale_for(kind))];
  Matrix ceps = cepstra(apply_filterbank(power_spectrum(frame_and_window(samples)), bank));
  normalize_rows(ceps);
  return ceps;
}

FeatureMap featurize(const AudioClip& clip, FeatureKind kind) {
  clip.validate();
  Matrix ceps = featurize_samples(clip.samples, kind);
  const std::size_t t = expected_frames(clip.duration_s);
  if (ceps.rows != kCeps || ceps.cols != t)
    throw ConfigError("features", "feature geometry " + std::to_string(ceps.rows) + "x" +
                                      std::to_string(ceps.cols) + " differs from 60x" + std::to_string(t));
  return FeatureMap{Tensor({1, 1, ceps.rows, ceps.cols}, std::move(ceps.data)), kind};
}

}  // namespace smgaa::features
