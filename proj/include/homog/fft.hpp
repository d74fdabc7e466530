#ifndef HOMOG_FFT_HPP
#define HOMOG_FFT_HPP

#include <complex>
#include <vector>

#include "homog/lattice.hpp"

namespace homog {

using cplx = std::complex<double>;

/// Complex-to-complex FFT on a periodic lattice, backed by FFTW. One
/// instance owns its plans and scratch buffer; instances must not be
/// shared across threads (plan creation is serialized internally, use
/// fft_for() for a per-thread cached instance).
class Fft {
 public:
  explicit Fft(const Grid& grid);
  ~Fft();
  Fft(const Fft&) = delete;
  Fft& operator=(const Fft&) = delete;

  const Grid& grid() const { return grid_; }

  /// In-place unnormalized DFT, sign -1 (forward: sum f(x) e^{-2pi i x.xi/N}).
  void forward(std::vector<cplx>& data);
  /// In-place unnormalized inverse DFT, sign +1 (no 1/N^d factor applied).
  void backward(std::vector<cplx>& data);

 private:
  Grid grid_;
  void* plan_fwd_;
  void* plan_bwd_;
  std::vector<cplx> buffer_;
};

/// Thread-local FFT instance for the given grid shape.
Fft& fft_for(const Grid& grid);

/// Symbol of the (negative) discrete Laplacian for forward/backward
/// differences: lambda(xi) = sum_k 4 sin^2(pi xi_k / N). Entry 0 is 0.
std::vector<double> laplace_symbol(const Grid& grid);

/// Mean-zero solution of -Delta u = rhs on the torus (spectral, exact up
/// to round-off). The rhs mean is projected out.
void solve_poisson_spectral(const Grid& grid, const std::vector<double>& rhs,
                            std::vector<double>& out);

}  // namespace homog

#endif
