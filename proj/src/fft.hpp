#pragma once

// FFTW wrappers shared by the feature and synthesis code. Planning is
// serialised through one mutex; plans are cached per size for the process
// lifetime and may be executed concurrently on distinct buffers.

#include <fftw3.h>

#include <complex>
#include <span>
#include <vector>

namespace smgaa::fft {

fftw_plan r2c_plan(std::size_t n);
fftw_plan c2r_plan(std::size_t n);

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

// n/2+1 bins of the unnormalised forward transform.
std::vector<std::complex<double>> rfft(std::span<const double> x);
// Inverse of rfft for a length-n signal, scaled by 1/n.
std::vector<double> irfft(std::span<const std::complex<double>> bins, std::size_t n);

}  // namespace smgaa::fft
