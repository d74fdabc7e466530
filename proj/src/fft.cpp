#include "homog/fft.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>

namespace homog {

namespace {
// FFTW plan creation/destruction is not thread-safe; execution of distinct
// plans on distinct buffers is. Plans are created FFTW_UNALIGNED so they can
// run on any caller buffer via the new-array interface.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

Fft::Fft(const Grid& grid) : grid_(grid), buffer_(grid.sites()) {
  int n[kMaxDim];
  for (int k = 0; k < grid_.dim; ++k) n[k] = grid_.side;
  auto* data = reinterpret_cast<fftw_complex*>(buffer_.data());
  std::lock_guard<std::mutex> lock(planner_mutex());
  const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
  plan_fwd_ = fftw_plan_dft(grid_.dim, n, data, data, FFTW_FORWARD, flags);
  plan_bwd_ = fftw_plan_dft(grid_.dim, n, data, data, FFTW_BACKWARD, flags);
  if (plan_fwd_ == nullptr || plan_bwd_ == nullptr)
    throw std::runtime_error("Fft: fftw_plan_dft failed");
}

Fft::~Fft() {
  std::lock_guard<std::mutex> lock(planner_mutex());
  fftw_destroy_plan(static_cast<fftw_plan>(plan_fwd_));
  fftw_destroy_plan(static_cast<fftw_plan>(plan_bwd_));
}

void Fft::forward(std::vector<cplx>& data) {
  if (data.size() != grid_.sites()) throw std::invalid_argument("Fft: size mismatch");
  auto* p = reinterpret_cast<fftw_complex*>(data.data());
  fftw_execute_dft(static_cast<fftw_plan>(plan_fwd_), p, p);
}

void Fft::backward(std::vector<cplx>& data) {
  if (data.size() != grid_.sites()) throw std::invalid_argument("Fft: size mismatch");
  auto* p = reinterpret_cast<fftw_complex*>(data.data());
  fftw_execute_dft(static_cast<fftw_plan>(plan_bwd_), p, p);
}

Fft& fft_for(const Grid& grid) {
  thread_local std::map<std::pair<int, int>, std::unique_ptr<Fft>> cache;
  auto key = std::make_pair(grid.dim, grid.side);
  auto it = cache.find(key);
  if (it == cache.end()) it = cache.emplace(key, std::make_unique<Fft>(grid)).first;
  return *it->second;
}

std::vector<double> laplace_symbol(const Grid& grid) {
  std::vector<double> sym(grid.sites(), 0.0);
  const double pi = 3.14159265358979323846264338327950288;
  std::vector<double> axis_term(static_cast<std::size_t>(grid.side));
  for (int f = 0; f < grid.side; ++f) {
    const double s = std::sin(pi * f / grid.side);
    axis_term[static_cast<std::size_t>(f)] = 4.0 * s * s;
  }
  for (std::size_t idx = 0; idx < sym.size(); ++idx) {
    auto x = grid.coords(idx);
    double t = 0.0;
    for (int k = 0; k < grid.dim; ++k) t += axis_term[static_cast<std::size_t>(x[k])];
    sym[idx] = t;
  }
  return sym;
}

void solve_poisson_spectral(const Grid& grid, const std::vector<double>& rhs,
                            std::vector<double>& out) {
  const std::size_t n = grid.sites();
  std::vector<cplx> work(n);
  for (std::size_t i = 0; i < n; ++i) work[i] = rhs[i];
  Fft& fft = fft_for(grid);
  fft.forward(work);
  const std::vector<double> sym = laplace_symbol(grid);
  work[0] = 0.0;  // zero-mean gauge
  for (std::size_t i = 1; i < n; ++i) work[i] /= sym[i];
  fft.backward(work);
  out.resize(n);
  const double scale = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = work[i].real() * scale;
}

}  // namespace homog
