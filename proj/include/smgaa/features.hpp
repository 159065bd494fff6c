#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "smgaa/audio.hpp"
#include "smgaa/tensor.hpp"

namespace smgaa::features {

inline constexpr std::size_t kWin = 1024;
inline constexpr std::size_t kHop = 512;
inline constexpr std::size_t kNfft = 1024;
inline constexpr std::size_t kFilters = 70;
inline constexpr std::size_t kCeps = 60;
inline constexpr double kLogFloor = 1e-10;
// Lowest edge of the geometric (constant-Q spaced) filterbank.
inline constexpr double kGeometricFmin = 200.0;

enum class FeatureKind { kMfcc, kLfcc, kCqcc };
enum class FilterScale { kMel, kLinear, kGeometric };

std::string kind_name(FeatureKind k);
FeatureKind parse_kind(const std::string& s);
FilterScale scale_for(FeatureKind k);

// Row-major dense matrix.
struct Matrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
};

// Number of frames produced for `len` samples: ceil(len / hop).
std::size_t frame_count(std::size_t len, std::size_t hop = kHop);
std::size_t expected_frames(double duration_s);

// Centred framing with reflect padding of win/2 on each side, Hann window
// applied. Returns frame_count(len) rows of `win` samples.
Matrix frame_and_window(std::span<const double> samples, std::size_t win = kWin, std::size_t hop = kHop);

// |DFT|^2 of each row, zero-padded to `nfft`; nfft/2+1 columns.
Matrix power_spectrum(const Matrix& frames, std::size_t nfft = kNfft);

// Edge frequencies (n_filters + 2 points, Hz) of the triangular filterbank.
std::vector<double> filter_edges(FilterScale scale, std::size_t n_filters, int sample_rate = kSampleRate);
// Triangular filter weights, one row per filter over nfft/2+1 bins, peak 1.
Matrix filterbank_matrix(FilterScale scale, std::size_t n_filters, std::size_t nfft = kNfft,
                         int sample_rate = kSampleRate);
// spectra [T, bins] x weights^T -> [T, n_filters].
Matrix apply_filterbank(const Matrix& spectra, const Matrix& weights);

// Orthonormal DCT-II basis, `n_out` rows over `n_in` inputs.
Matrix dct_matrix(std::size_t n_in, std::size_t n_out);
// log(max(E, floor)) then orthonormal DCT-II; returns [n_ceps, T].
Matrix cepstra(const Matrix& energies, std::size_t n_ceps = kCeps);

// Per-row (frequency bin) mean/variance normalisation across columns (time).
// Rows with variance below 1e-12 become zero.
void normalize_rows(Matrix& m);

struct FeatureMap {
  Tensor tensor;  // [1, 1, 60, T]
  FeatureKind kind = FeatureKind::kMfcc;
};

FeatureMap featurize(const AudioClip& clip, FeatureKind kind);
// Same pipeline on raw samples of any length >= 2.
Matrix featurize_samples(std::span<const double> samples, FeatureKind kind);

}  // namespace smgaa::features
