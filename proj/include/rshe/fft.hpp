#pragma once

#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <vector>

#include <fftw3.h>

namespace rshe {

using Spectrum = std::vector<std::complex<double>>;

// Real-to-complex transform pair of fixed length. Plans are created once per
// length under a lock and executed through the new-array interface, which
// FFTW allows from several threads at once.
class RealFft {
public:
  explicit RealFft(std::size_t n) : n_(n) {
    std::vector<double> r(n);
    Spectrum c(n / 2 + 1);
    std::lock_guard<std::mutex> lock(planner_mutex());
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    forward_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), r.data(),
                                    reinterpret_cast<fftw_complex*>(c.data()), flags);
    backward_ = fftw_plan_dft_c2r_1d(static_cast<int>(n),
                                     reinterpret_cast<fftw_complex*>(c.data()), r.data(),
                                     flags | FFTW_PRESERVE_INPUT);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;
  ~RealFft() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(backward_);
  }

  std::size_t size() const { return n_; }

  // Unnormalized: out_m = sum_j in_j exp(-2 pi i m j / n), m = 0..n/2.
  void forward(const double* in, std::complex<double>* out) const {
    fftw_execute_dft_r2c(forward_, const_cast<double*>(in),
                         reinterpret_cast<fftw_complex*>(out));
  }
  Spectrum forward(const std::vector<double>& in) const {
    Spectrum out(n_ / 2 + 1);
    forward(in.data(), out.data());
    return out;
  }

  // Unnormalized Hermitian synthesis: out_j = sum over the full lattice of
  // c_m exp(2 pi i m j / n). The imaginary parts of c_0 and c_{n/2} are ignored.
  void backward(const std::complex<double>* in, double* out) const {
    fftw_execute_dft_c2r(backward_,
                         reinterpret_cast<fftw_complex*>(const_cast<std::complex<double>*>(in)),
                         out);
  }
  std::vector<double> backward(const Spectrum& in) const {
    std::vector<double> out(n_);
    backward(in.data(), out.data());
    return out;
  }

private:
  static std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
  }

  std::size_t n_;
  fftw_plan forward_{};
  fftw_plan backward_{};
};

inline std::shared_ptr<const RealFft> fft_for(std::size_t n) {
  static std::mutex mutex;
  static std::map<std::size_t, std::shared_ptr<const RealFft>> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto& slot = cache[n];
  if (!slot) slot = std::make_shared<const RealFft>(n);
  return slot;
}

}  // namespace rshe
