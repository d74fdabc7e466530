#include "homog/covariance.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "homog/fft.hpp"
#include "homog/rng.hpp"

namespace homog {

namespace {

constexpr double kPsdRelTol = 1e-12;

double torus_radius(const Grid& g, std::size_t idx) {
  auto x = g.coords(idx);
  double r2 = 0.0;
  for (int k = 0; k < g.dim; ++k) {
    const double s = static_cast<double>(g.signed_wrap(x[k]));
    r2 += s * s;
  }
  return std::sqrt(r2);
}

/// Nonnegativity clamp for a spectral table: entries in (-tol, 0) are
/// round-off from the transforms and snap to 0; anything below -tol is a
/// genuine positive-definiteness violation.
void clamp_psd(std::vector<double>& table, const std::string& what) {
  double mx = 0.0;
  for (double v : table) mx = std::max(mx, v);
  const double tol = kPsdRelTol * std::max(mx, 1.0);
  for (double& v : table) {
    if (v < 0.0) {
      if (v < -tol)
        throw std::runtime_error("CovarianceModel: spectral table of " + what +
                                 " fails positive-definiteness (entry " +
                                 std::to_string(v) + ", tol " + std::to_string(tol) + ")");
      v = 0.0;
    }
  }
}

std::size_t conjugate_index(const Grid& g, std::size_t idx) {
  auto x = g.coords(idx);
  std::array<int, kMaxDim> y{};
  for (int k = 0; k < g.dim; ++k) y[k] = g.wrap(-x[k]);
  return g.index(y);
}

/// Lags used for the decay-envelope construction check: dyadic distances
/// along the first axis plus diagonals, up to N/4.
std::vector<std::array<int, kMaxDim>> envelope_lags(const Grid& g) {
  std::vector<std::array<int, kMaxDim>> lags;
  for (int r = 1; r <= g.side / 4; r = (r < 4 ? r + 1 : r * 2)) {
    std::array<int, kMaxDim> axis{};
    axis[0] = r;
    lags.push_back(axis);
    if (g.dim >= 2 && r * r * 2 <= (g.side / 4) * (g.side / 4)) {
      std::array<int, kMaxDim> diag{};
      diag[0] = r;
      diag[1] = r;
      lags.push_back(diag);
    }
  }
  return lags;
}

/// Restriction of an embedding-torus table to the window, stored in
/// sampling-grid layout: out[x] = table at the signed representative of x.
std::vector<double> restrict_to_window(const Grid& grid, const Grid& emb,
                                       const std::vector<double>& table) {
  const std::size_t n = grid.sites();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto x = grid.coords(i);
    std::array<int, kMaxDim> y{};
    for (int k = 0; k < grid.dim; ++k) y[k] = emb.wrap(grid.signed_wrap(x[k]));
    out[i] = table[emb.index(y)];
  }
  return out;
}

}  // namespace

std::string regime_name(Regime r) {
  switch (r) {
    case Regime::integrable: return "integrable";
    case Regime::critical: return "critical";
    default: return "nonintegrable";
  }
}

RadialProfile canonical_profile(double beta, int dim, double scale) {
  if (!(scale > 0.0)) throw std::invalid_argument("canonical_profile: scale must be positive");
  const double expo = -(static_cast<double>(dim) + beta) / 4.0;
  const bool critical = (beta == static_cast<double>(dim));
  RadialProfile p;
  p.name = critical ? "canonical-critical" : "canonical";
  if (scale != 1.0) p.name += "-scale" + std::to_string(scale);
  p.value = [expo, critical, scale](double r) {
    const double t = r / scale;
    double v = std::pow(1.0 + t * t, expo);
    if (critical) v /= std::sqrt(std::log(std::exp(1.0) + t));
    return v;
  };
  return p;
}

const std::vector<double>& CovarianceModel::spectral(int l, int m) const {
  if (l < 0 || l >= kappa_ || m < 0 || m >= kappa_)
    throw std::out_of_range("CovarianceModel::spectral: component out of range");
  if (diagonal_) {
    if (l != m)
      throw std::invalid_argument(
          "CovarianceModel::spectral: off-diagonal pair of a diagonal model");
    return spectral_[static_cast<std::size_t>(l)];
  }
  return spectral_[static_cast<std::size_t>(l * kappa_ + m)];
}

double CovarianceModel::cov(int l, int m, const std::array<int, kMaxDim>& lag) const {
  std::array<int, kMaxDim> w{};
  for (int k = 0; k < grid_.dim; ++k) w[k] = grid_.wrap(lag[k]);
  const std::size_t idx = grid_.index(w);
  if (diagonal_) {
    if (l != m) return 0.0;
    return cov_[static_cast<std::size_t>(l)][idx];
  }
  return cov_[static_cast<std::size_t>(l * kappa_ + m)][idx];
}

const double* CovarianceModel::spectral_sqrt(std::size_t freq_index) const {
  if (diagonal_) throw std::logic_error("spectral_sqrt: diagonal model");
  return &sqrt_table_[freq_index * static_cast<std::size_t>(kappa_ * kappa_)];
}

void CovarianceModel::compute_mean_variance() {
  // Var[window mean] = N^{-2d} sum_{x,y in window} c(x-y)
  //                  = N^{-2d} (2N)^{-d} sum_xi S(xi) |window_hat(xi)|^2.
  const std::size_t ne = emb_.sites();
  const double pi = 3.14159265358979323846264338327950288;
  // |window_hat|^2 factorizes over axes (squared Dirichlet kernels).
  std::vector<double> axis_k(static_cast<std::size_t>(emb_.side));
  const int N = grid_.side;
  for (int f = 0; f < emb_.side; ++f) {
    if (f == 0) {
      axis_k[0] = static_cast<double>(N) * N;
      continue;
    }
    const double s = std::sin(pi * f / emb_.side);
    const double sN = std::sin(pi * f * N / emb_.side);
    axis_k[static_cast<std::size_t>(f)] = (sN * sN) / (s * s);
  }
  mean_var_.assign(static_cast<std::size_t>(kappa_), 0.0);
  const double scale =
      1.0 / (std::pow(static_cast<double>(grid_.sites()), 2.0) * static_cast<double>(ne));
  for (int l = 0; l < kappa_; ++l) {
    const auto& spec = spectral(l, l);
    double acc = 0.0;
    for (std::size_t i = 0; i < ne; ++i) {
      auto x = emb_.coords(i);
      double w = 1.0;
      for (int k = 0; k < emb_.dim; ++k) w *= axis_k[static_cast<std::size_t>(x[k])];
      acc += spec[i] * w;
    }
    mean_var_[static_cast<std::size_t>(l)] = std::max(0.0, acc * scale);
  }
}

void CovarianceModel::finalize_from_spectral() {
  const std::size_t ne = emb_.sites();
  // Spectral tables of a real covariance must be even under xi -> -xi.
  for (auto& table : spectral_) {
    for (std::size_t i = 0; i < ne; ++i) {
      const std::size_t ci = conjugate_index(emb_, i);
      const double avg = 0.5 * (table[i] + table[ci]);
      const double diff = std::abs(table[i] - table[ci]);
      if (diff > 1e-9 * std::max(1.0, std::abs(avg)))
        throw std::runtime_error("CovarianceModel: spectral table is not even in frequency");
      table[i] = table[ci] = avg;
    }
    clamp_psd(table, "model");
  }
  // Realized covariance per stored pair: inverse transform on the embedding
  // torus, restricted to the window.
  cov_.resize(spectral_.size());
  Fft& fft = fft_for(emb_);
  for (std::size_t p = 0; p < spectral_.size(); ++p) {
    std::vector<cplx> work(ne);
    for (std::size_t i = 0; i < ne; ++i) work[i] = spectral_[p][i];
    fft.backward(work);
    std::vector<double> emb_cov(ne);
    const double scale = 1.0 / static_cast<double>(ne);
    for (std::size_t i = 0; i < ne; ++i) emb_cov[i] = work[i].real() * scale;
    cov_[p] = restrict_to_window(grid_, emb_, emb_cov);
  }
  compute_mean_variance();
  if (check_decay_) check_envelope();
}

void CovarianceModel::check_envelope() {
  const auto lags = envelope_lags(grid_);
  env_lo_ = 1e300;
  env_hi_ = 0.0;
  for (int l = 0; l < kappa_; ++l) {
    for (const auto& lag : lags) {
      double r2 = 0.0;
      for (int k = 0; k < grid_.dim; ++k) r2 += static_cast<double>(lag[k]) * lag[k];
      const double r = std::sqrt(r2);
      const double ratio = std::abs(cov(l, l, lag)) * std::pow(1.0 + r, beta_);
      env_lo_ = std::min(env_lo_, ratio);
      env_hi_ = std::max(env_hi_, ratio);
    }
  }
  if (env_hi_ > C0_ || env_lo_ < 1.0 / C0_)
    throw std::runtime_error(
        "CovarianceModel: realized decay envelope [" + std::to_string(env_lo_) + ", " +
        std::to_string(env_hi_) + "] escapes [1/C0, C0] with C0 = " + std::to_string(C0_) +
        " (grid too small for the requested beta?)");
  if (regime_ == Regime::nonintegrable) {
    // Finite-difference gradient envelope |grad c| <= C0 (1+|x|)^{-beta-1}.
    grad_const_ = 0.0;
    for (const auto& lag : lags) {
      double r2 = 0.0;
      for (int k = 0; k < grid_.dim; ++k) r2 += static_cast<double>(lag[k]) * lag[k];
      const double r = std::sqrt(r2);
      if (r > grid_.side / 4 - 1) continue;
      for (int l = 0; l < kappa_; ++l) {
        double g2 = 0.0;
        for (int k = 0; k < grid_.dim; ++k) {
          auto up = lag, dn = lag;
          up[k] += 1;
          dn[k] -= 1;
          const double dc = 0.5 * (cov(l, l, up) - cov(l, l, dn));
          g2 += dc * dc;
        }
        grad_const_ = std::max(grad_const_, std::sqrt(g2) * std::pow(1.0 + r, beta_ + 1.0));
      }
    }
    if (grad_const_ > C0_)
      throw std::runtime_error("CovarianceModel: gradient envelope constant " +
                               std::to_string(grad_const_) + " exceeds C0");
  }
}

CovarianceModel CovarianceModel::build(double beta, int kappa, double C0, const Grid& grid) {
  return build(beta, kappa, C0, grid, canonical_profile(beta, grid.dim));
}

CovarianceModel CovarianceModel::build(double beta, int kappa, double C0, const Grid& grid,
                                       const RadialProfile& c0) {
  if (beta <= 0.0) throw std::invalid_argument("CovarianceModel: beta must be positive");
  if (kappa < 1) throw std::invalid_argument("CovarianceModel: kappa must be >= 1");
  if (C0 <= 0.0) throw std::invalid_argument("CovarianceModel: C0 must be positive");
  grid.validate();

  CovarianceModel m;
  m.grid_ = grid;
  m.emb_ = Grid(grid.dim, 2 * grid.side);
  m.kappa_ = kappa;
  m.beta_ = beta;
  m.C0_ = C0;
  m.regime_ = regime_for(beta, grid.dim);
  m.profile_name_ = c0.name;
  m.diagonal_ = true;
  m.check_decay_ = true;

  // c0 periodized on the doubled torus, transformed and squared there: the
  // embedding covariance c = c0 (x) c0 is positive-definite by construction.
  const std::size_t ne = m.emb_.sites();
  std::vector<cplx> work(ne);
  for (std::size_t i = 0; i < ne; ++i) work[i] = c0.value(torus_radius(m.emb_, i));
  fft_for(m.emb_).forward(work);
  std::vector<double> spec(ne);
  for (std::size_t i = 0; i < ne; ++i) {
    const double re = work[i].real();
    spec[i] = re * re;
  }
  // Calibrate amplitude so the realized c(0) is exactly 1 per component.
  double c_at_zero = 0.0;
  for (double v : spec) c_at_zero += v;
  c_at_zero /= static_cast<double>(ne);
  if (!(c_at_zero > 0.0)) throw std::runtime_error("CovarianceModel: degenerate profile");
  for (double& v : spec) v /= c_at_zero;

  m.spectral_.assign(static_cast<std::size_t>(kappa), spec);
  m.finalize_from_spectral();
  return m;
}

CovarianceModel CovarianceModel::build_matrix(double beta, double C0, const Grid& grid,
                                              const std::vector<RadialProfile>& profiles) {
  const int kappa = static_cast<int>(std::lround(std::sqrt(static_cast<double>(profiles.size()))));
  if (static_cast<std::size_t>(kappa) * static_cast<std::size_t>(kappa) != profiles.size() ||
      kappa < 1)
    throw std::invalid_argument("build_matrix: profiles must form a kappa x kappa matrix");
  grid.validate();

  CovarianceModel m;
  m.grid_ = grid;
  m.emb_ = Grid(grid.dim, 2 * grid.side);
  m.kappa_ = kappa;
  m.beta_ = beta;
  m.C0_ = C0;
  m.regime_ = regime_for(beta, grid.dim);
  m.profile_name_ = "matrix";
  m.diagonal_ = false;
  m.check_decay_ = true;

  const std::size_t ne = m.emb_.sites();
  const int kk = kappa * kappa;

  // Transform each (symmetrized) profile entry on the embedding torus.
  std::vector<std::vector<double>> hat0(static_cast<std::size_t>(kk));
  for (int l = 0; l < kappa; ++l)
    for (int mm = l; mm < kappa; ++mm) {
      const auto& plm = profiles[static_cast<std::size_t>(l * kappa + mm)];
      const auto& pml = profiles[static_cast<std::size_t>(mm * kappa + l)];
      std::vector<cplx> work(ne);
      for (std::size_t i = 0; i < ne; ++i) {
        const double r = torus_radius(m.emb_, i);
        work[i] = 0.5 * (plm.value(r) + pml.value(r));
      }
      fft_for(m.emb_).forward(work);
      std::vector<double> h(ne);
      for (std::size_t i = 0; i < ne; ++i) h[i] = work[i].real();
      hat0[static_cast<std::size_t>(l * kappa + mm)] = h;
      if (l != mm) hat0[static_cast<std::size_t>(mm * kappa + l)] = std::move(h);
    }

  // Spectral matrix S = hat(c0)^2 per embedding frequency.
  m.spectral_.assign(static_cast<std::size_t>(kk), std::vector<double>(ne, 0.0));
  for (std::size_t i = 0; i < ne; ++i)
    for (int l = 0; l < kappa; ++l)
      for (int mm = 0; mm < kappa; ++mm) {
        double s = 0.0;
        for (int q = 0; q < kappa; ++q)
          s += hat0[static_cast<std::size_t>(l * kappa + q)][i] *
               hat0[static_cast<std::size_t>(q * kappa + mm)][i];
        m.spectral_[static_cast<std::size_t>(l * kappa + mm)][i] = s;
      }

  // Per-component calibration to c_ll(0) = 1.
  std::vector<double> scale(static_cast<std::size_t>(kappa));
  for (int l = 0; l < kappa; ++l) {
    double c0v = 0.0;
    for (double v : m.spectral_[static_cast<std::size_t>(l * kappa + l)]) c0v += v;
    c0v /= static_cast<double>(ne);
    if (!(c0v > 0.0)) throw std::runtime_error("build_matrix: degenerate component");
    scale[static_cast<std::size_t>(l)] = 1.0 / std::sqrt(c0v);
  }
  for (int l = 0; l < kappa; ++l)
    for (int mm = 0; mm < kappa; ++mm) {
      const double s = scale[static_cast<std::size_t>(l)] * scale[static_cast<std::size_t>(mm)];
      for (double& v : m.spectral_[static_cast<std::size_t>(l * kappa + mm)]) v *= s;
    }

  // Symmetric PSD square root per embedding frequency for sampling.
  m.sqrt_table_.assign(ne * static_cast<std::size_t>(kk), 0.0);
  Eigen::MatrixXd S(kappa, kappa);
  for (std::size_t i = 0; i < ne; ++i) {
    for (int l = 0; l < kappa; ++l)
      for (int mm = 0; mm < kappa; ++mm)
        S(l, mm) = m.spectral_[static_cast<std::size_t>(l * kappa + mm)][i];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
    const double emax = std::max(1.0, es.eigenvalues().maxCoeff());
    Eigen::VectorXd ev = es.eigenvalues();
    for (int q = 0; q < kappa; ++q) {
      if (ev(q) < -kPsdRelTol * emax)
        throw std::runtime_error("build_matrix: spectral matrix not PSD at a frequency");
      ev(q) = std::sqrt(std::max(0.0, ev(q)));
    }
    Eigen::MatrixXd L = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
    for (int l = 0; l < kappa; ++l)
      for (int mm = 0; mm < kappa; ++mm)
        m.sqrt_table_[i * static_cast<std::size_t>(kk) + static_cast<std::size_t>(l * kappa + mm)] =
            L(l, mm);
  }
  m.finalize_from_spectral();
  return m;
}

CovarianceModel CovarianceModel::white_noise(const Grid& grid, int kappa) {
  CovarianceModel m;
  m.grid_ = grid;
  m.emb_ = grid;
  m.kappa_ = kappa;
  m.profile_name_ = "white-noise";
  m.diagonal_ = true;
  m.spectral_.assign(static_cast<std::size_t>(kappa), std::vector<double>(grid.sites(), 1.0));
  m.finalize_from_spectral();
  return m;
}

CovarianceModel CovarianceModel::zero(const Grid& grid, int kappa) {
  CovarianceModel m;
  m.grid_ = grid;
  m.emb_ = grid;
  m.kappa_ = kappa;
  m.profile_name_ = "zero";
  m.diagonal_ = true;
  m.spectral_.assign(static_cast<std::size_t>(kappa), std::vector<double>(grid.sites(), 0.0));
  m.finalize_from_spectral();
  return m;
}

CovarianceModel CovarianceModel::from_spectral_table(const Grid& grid,
                                                     std::vector<std::vector<double>> tables) {
  if (tables.empty()) throw std::invalid_argument("from_spectral_table: no tables");
  for (const auto& t : tables)
    if (t.size() != grid.sites())
      throw std::invalid_argument("from_spectral_table: table size mismatch");
  CovarianceModel m;
  m.grid_ = grid;
  m.emb_ = grid;
  m.kappa_ = static_cast<int>(tables.size());
  m.profile_name_ = "spectral-override";
  m.diagonal_ = true;
  m.spectral_ = std::move(tables);
  m.finalize_from_spectral();
  return m;
}

FieldSample sample_field(const CovarianceModel& model, const Grid& grid,
                         std::uint64_t seed, long sample_index) {
  if (!(grid == model.grid()))
    throw std::invalid_argument("sample_field: grid does not match the model");
  const Grid& emb = model.embedding_grid();
  const std::size_t ne = emb.sites();
  const std::size_t n = grid.sites();
  const int kappa = model.kappa();
  const double amp = std::sqrt(static_cast<double>(ne));
  const double inv_ne = 1.0 / static_cast<double>(ne);
  const double inv_sqrt2 = 0.70710678118654752440084436210485;
  const bool windowed = !(emb == grid);

  FieldSample out;
  out.grid = grid;
  out.kappa = kappa;
  out.seed = seed;
  out.sample_index = sample_index;
  out.values.assign(static_cast<std::size_t>(kappa), std::vector<double>(n, 0.0));

  // Window site -> embedding site (identity layout when not embedded).
  std::vector<std::size_t> window;
  if (windowed) {
    window.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      auto x = grid.coords(i);
      std::array<int, kMaxDim> y{};
      for (int k = 0; k < grid.dim; ++k) y[k] = x[k];
      window[i] = emb.index(y);
    }
  }

  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(sample_index)));
  Fft& fft = fft_for(emb);

  if (model.diagonal()) {
    std::vector<cplx> amps(ne);
    for (int c = 0; c < kappa; ++c) {
      const std::vector<double>& spec = model.spectral(c, c);
      // Hermitian white noise per frequency, row-major draw order.
      for (std::size_t i = 0; i < ne; ++i) {
        const std::size_t ci = conjugate_index(emb, i);
        if (i < ci) {
          const double u = rng.next_gaussian();
          const double v = rng.next_gaussian();
          amps[i] = cplx(u * inv_sqrt2, v * inv_sqrt2);
          amps[ci] = std::conj(amps[i]);
        } else if (i == ci) {
          amps[i] = rng.next_gaussian();
        }
      }
      for (std::size_t i = 0; i < ne; ++i) amps[i] *= std::sqrt(spec[i]) * amp;
      fft.backward(amps);
      std::vector<double>& vals = out.values[static_cast<std::size_t>(c)];
      if (windowed)
        for (std::size_t i = 0; i < n; ++i) vals[i] = amps[window[i]].real() * inv_ne;
      else
        for (std::size_t i = 0; i < n; ++i) vals[i] = amps[i].real() * inv_ne;
    }
  } else {
    // Correlated components: scale the Hermitian noise vector by the
    // symmetric square root of the spectral matrix at each frequency.
    std::vector<std::vector<cplx>> noise(static_cast<std::size_t>(kappa),
                                         std::vector<cplx>(ne));
    for (std::size_t i = 0; i < ne; ++i) {
      const std::size_t ci = conjugate_index(emb, i);
      if (i < ci) {
        for (int c = 0; c < kappa; ++c) {
          const double u = rng.next_gaussian();
          const double v = rng.next_gaussian();
          noise[static_cast<std::size_t>(c)][i] = cplx(u * inv_sqrt2, v * inv_sqrt2);
          noise[static_cast<std::size_t>(c)][ci] =
              std::conj(noise[static_cast<std::size_t>(c)][i]);
        }
      } else if (i == ci) {
        for (int c = 0; c < kappa; ++c)
          noise[static_cast<std::size_t>(c)][i] = rng.next_gaussian();
      }
    }
    std::vector<cplx> amps(ne);
    for (int c = 0; c < kappa; ++c) {
      for (std::size_t i = 0; i < ne; ++i) {
        const double* L = model.spectral_sqrt(i);
        cplx s = 0.0;
        for (int q = 0; q < kappa; ++q)
          s += L[c * kappa + q] * noise[static_cast<std::size_t>(q)][i];
        amps[i] = s * amp;
      }
      fft.backward(amps);
      std::vector<double>& vals = out.values[static_cast<std::size_t>(c)];
      if (windowed)
        for (std::size_t i = 0; i < n; ++i) vals[i] = amps[window[i]].real() * inv_ne;
      else
        for (std::size_t i = 0; i < n; ++i) vals[i] = amps[i].real() * inv_ne;
    }
  }

  // Stationary centered field: finiteness is hard, the mean is a 5-sigma
  // statistical check against the exact model variance of the window mean.
  for (int c = 0; c < kappa; ++c) {
    const auto& vals = out.values[static_cast<std::size_t>(c)];
    double mean = 0.0;
    for (double v : vals) {
      if (!std::isfinite(v)) throw std::runtime_error("sample_field: non-finite value");
      mean += v;
    }
    mean /= static_cast<double>(n);
    const double mean_std = std::sqrt(model.mean_variance(c));
    if (std::abs(mean) > 5.0 * mean_std + 1e-14)
      throw std::runtime_error("sample_field: window mean escapes the 5-sigma band");
  }
  return out;
}

std::vector<LagCovariance> empirical_covariance(
    const std::vector<FieldSample>& samples,
    const std::vector<std::array<int, kMaxDim>>& lags) {
  if (samples.size() < 2)
    throw std::invalid_argument("empirical_covariance: need at least 2 samples");
  const Grid grid = samples.front().grid;
  const int kappa = samples.front().kappa;
  for (const auto& s : samples)
    if (!(s.grid == grid) || s.kappa != kappa)
      throw std::invalid_argument("empirical_covariance: mismatched grids");

  const std::size_t M = samples.size();
  std::vector<LagCovariance> out;
  out.reserve(lags.size());
  for (const auto& lag : lags) {
    // Non-wrapping pair list: base x with x + lag inside the window, so the
    // estimator is exact for the restricted covariance.
    std::array<int, kMaxDim> tau{};
    for (int k = 0; k < grid.dim; ++k) {
      tau[k] = grid.signed_wrap(lag[k]);
      if (std::abs(tau[k]) >= grid.side)
        throw std::invalid_argument("empirical_covariance: lag too large");
    }
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    const std::size_t n = grid.sites();
    for (std::size_t i = 0; i < n; ++i) {
      auto x = grid.coords(i);
      std::array<int, kMaxDim> y{};
      bool ok = true;
      for (int k = 0; k < grid.dim; ++k) {
        y[k] = x[k] + tau[k];
        if (y[k] < 0 || y[k] >= grid.side) {
          ok = false;
          break;
        }
      }
      if (ok) pairs.emplace_back(grid.index(y), i);
    }
    LagCovariance row;
    row.lag = tau;
    row.mean.assign(static_cast<std::size_t>(kappa * kappa), 0.0);
    row.se.assign(static_cast<std::size_t>(kappa * kappa), 0.0);
    for (int l = 0; l < kappa; ++l)
      for (int m = 0; m < kappa; ++m) {
        std::vector<double> per_sample(M);
        for (std::size_t s = 0; s < M; ++s) {
          const auto& gl = samples[s].values[static_cast<std::size_t>(l)];
          const auto& gm = samples[s].values[static_cast<std::size_t>(m)];
          double acc = 0.0;
          for (const auto& [ia, ib] : pairs) acc += gl[ia] * gm[ib];
          per_sample[s] = acc / static_cast<double>(pairs.size());
        }
        double mean = 0.0;
        for (double v : per_sample) mean += v;
        mean /= static_cast<double>(M);
        double var = 0.0;
        for (double v : per_sample) var += (v - mean) * (v - mean);
        var /= static_cast<double>(M - 1);
        row.mean[static_cast<std::size_t>(l * kappa + m)] = mean;
        row.se[static_cast<std::size_t>(l * kappa + m)] =
            std::sqrt(var / static_cast<double>(M));
      }
    out.push_back(std::move(row));
  }
  return out;
}

double h_norm_squared(const CovarianceModel& model,
                      const std::vector<std::vector<double>>& h) {
  const Grid& grid = model.grid();
  const Grid& emb = model.embedding_grid();
  const std::size_t n = grid.sites();
  const std::size_t ne = emb.sites();
  if (static_cast<int>(h.size()) != model.kappa())
    throw std::invalid_argument("h_norm: component count mismatch");
  for (const auto& hc : h)
    if (hc.size() != n) throw std::invalid_argument("h_norm: field size mismatch");

  // Periodization guard: support inside the central quarter of the torus.
  const int lo = 3 * grid.side / 8, hi = 5 * grid.side / 8;
  for (const auto& hc : h)
    for (std::size_t i = 0; i < n; ++i) {
      if (hc[i] == 0.0) continue;
      auto x = grid.coords(i);
      for (int k = 0; k < grid.dim; ++k)
        if (x[k] < lo || x[k] >= hi)
          throw std::invalid_argument("h_norm: support escapes the central quarter");
    }

  // Zero-pad into the embedding torus; pair differences never wrap there,
  // so the quadrature uses the restricted covariance exactly.
  Fft& fft = fft_for(emb);
  std::vector<std::vector<cplx>> hat(h.size(), std::vector<cplx>(ne, cplx(0.0)));
  for (std::size_t c = 0; c < h.size(); ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      if (h[c][i] == 0.0) continue;
      auto x = grid.coords(i);
      std::array<int, kMaxDim> y{};
      for (int k = 0; k < grid.dim; ++k) y[k] = x[k];
      hat[c][emb.index(y)] = h[c][i];
    }
    fft.forward(hat[c]);
  }
  double acc = 0.0;
  const int kappa = model.kappa();
  if (model.diagonal()) {
    for (int c = 0; c < kappa; ++c) {
      const auto& spec = model.spectral(c, c);
      const auto& hc = hat[static_cast<std::size_t>(c)];
      for (std::size_t i = 0; i < ne; ++i) acc += spec[i] * std::norm(hc[i]);
    }
  } else {
    for (std::size_t i = 0; i < ne; ++i)
      for (int l = 0; l < kappa; ++l)
        for (int m = 0; m < kappa; ++m)
          acc += (std::conj(hat[static_cast<std::size_t>(l)][i]) *
                  model.spectral(l, m)[i] * hat[static_cast<std::size_t>(m)][i])
                     .real();
  }
  return std::max(0.0, acc / static_cast<double>(ne));
}

double h_norm(const CovarianceModel& model, const std::vector<std::vector<double>>& h) {
  return std::sqrt(h_norm_squared(model, h));
}

}  // namespace homog
