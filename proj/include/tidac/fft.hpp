#pragma once

#include <complex>
#include <vector>

#include <unsupported/Eigen/FFT>

namespace tidac {

/// Complex FFT engine. Caches plans per size, so keep one per thread.
class Fft {
 public:
  using Complex = std::complex<double>;

  /// X[k] = Σ x[n] e^{-j2πkn/N}.
  void forward(std::vector<Complex>& out, const std::vector<Complex>& in) { engine_.fwd(out, in); }

  /// x[n] = (1/N) Σ X[k] e^{j2πkn/N}.
  void inverse(std::vector<Complex>& out, const std::vector<Complex>& in) { engine_.inv(out, in); }

  std::vector<Complex> forward(const std::vector<double>& in) {
    std::vector<Complex> tmp(in.begin(), in.end());
    std::vector<Complex> out;
    engine_.fwd(out, tmp);
    return out;
  }

 private:
  Eigen::FFT<double> engine_;
};

}  // namespace tidac
