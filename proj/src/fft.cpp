#include "fft.hpp"

#include <algorithm>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "smgaa/error.hpp"

namespace smgaa::fft {

namespace {

std::mutex& planner_mutex() {
  static std::mutex mu;
  return mu;
}

fftw_plan cached(std::map<std::size_t, fftw_plan>& plans, std::size_t n, bool forward) {
  std::lock_guard lock(planner_mutex());
  auto it = plans.find(n);
  if (it != plans.end()) return it->second;
  double* real = fftw_alloc_real(n);
  fftw_complex* cplx = fftw_alloc_complex(n / 2 + 1);
  fftw_plan p = forward ? fftw_plan_dft_r2c_1d(static_cast<int>(n), real, cplx, FFTW_ESTIMATE)
                        : fftw_plan_dft_c2r_1d(static_cast<int>(n), cplx, real, FFTW_ESTIMATE);
  fftw_free(real);
  fftw_free(cplx);
  if (!p) throw ConfigError("fft", "FFTW could not plan size " + std::to_string(n));
  plans.emplace(n, p);
  return p;
}

}  // namespace

fftw_plan r2c_plan(std::size_t n) {
  static std::map<std::size_t, fftw_plan> plans;
  return cached(plans, n, true);
}

fftw_plan c2r_plan(std::size_t n) {
  static std::map<std::size_t, fftw_plan> plans;
  return cached(plans, n, false);
}

std::vector<std::complex<double>> rfft(std::span<const double> x) {
  const std::size_t n = x.size(), bins = n / 2 + 1;
  std::unique_ptr<double, FftwFree> in(fftw_alloc_real(n));
  std::unique_ptr<fftw_complex, FftwFree> out(fftw_alloc_complex(bins));
  std::copy(x.begin(), x.end(), in.get());
  fftw_execute_dft_r2c(r2c_plan(n), in.get(), out.get());
  std::vector<std::complex<double>> res(bins);
  for (std::size_t k = 0; k < bins; ++k) res[k] = {out.get()[k][0], out.get()[k][1]};
  return res;
}

std::vector<double> irfft(std::span<const std::complex<double>> bins, std::size_t n) {
  if (bins.size() != n / 2 + 1) throw ConfigError("fft", "irfft: bin count does not match length");
  std::unique_ptr<fftw_complex, FftwFree> in(fftw_alloc_complex(bins.size()));
  std::unique_ptr<double, FftwFree> out(fftw_alloc_real(n));
  for (std::size_t k = 0; k < bins.size(); ++k) {
    in.get()[k][0] = bins[k].real();
    in.get()[k][1] = bins[k].imag();
  }
  // c2r overwrites its input, which is our private copy.
  fftw_execute_dft_c2r(c2r_plan(n), in.get(), out.get());
  std::vector<double> res(out.get(), out.get() + n);
  for (double& v : res) v /= static_cast<double>(n);
  return res;
}

}  // namespace smgaa::fft
