#ifndef HOMOG_COVARIANCE_HPP
#define HOMOG_COVARIANCE_HPP

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "homog/lattice.hpp"

namespace homog {

/// Correlation regime of a beta-algebraic covariance in dimension d.
enum class Regime { integrable, critical, nonintegrable };

inline Regime regime_for(double beta, int dim) {
  if (beta > dim) return Regime::integrable;
  if (beta == dim) return Regime::critical;
  return Regime::nonintegrable;
}

std::string regime_name(Regime r);

/// Radial factor profile for the convolution-square construction c = c0 * c0.
struct RadialProfile {
  std::string name;
  std::function<double(double)> value;
};

/// (1+(r/scale)^2)^{-(d+beta)/4}, with the extra log^{-1/2}(e+r/scale)
/// factor in the critical case beta = d that keeps c = c0 * c0 inside the
/// (1+|x|)^{-beta} envelope. scale sets the correlation length in lattice
/// units; 1 is the canonical choice.
RadialProfile canonical_profile(double beta, int dim, double scale = 1.0);

/// Stationary lattice covariance model, sampled by circulant embedding.
///
/// The profile c0 is periodized on the doubled torus (side 2N) and squared
/// spectrally there, so the embedding covariance c = c0 * c0 is
/// positive-definite by construction. Fields are synthesized on the
/// embedding torus and restricted to the N-window; the realized covariance
/// of a sample is therefore exactly the embedding covariance at the
/// difference vector. Wrap-around bias enters only through the embedding
/// periodization, and statistics are trusted for |x| <= N/4.
class CovarianceModel {
 public:
  /// Canonical-profile model, c(0) calibrated to 1 per component.
  static CovarianceModel build(double beta, int kappa, double C0, const Grid& grid);
  /// Same with a caller-supplied radial factor (one profile, all components
  /// independent and identically distributed).
  static CovarianceModel build(double beta, int kappa, double C0, const Grid& grid,
                               const RadialProfile& c0);
  /// Full kappa x kappa symmetric profile matrix (cross-correlated
  /// components); profiles indexed [l*kappa+m] with profiles[lm]=profiles[ml].
  static CovarianceModel build_matrix(double beta, double C0, const Grid& grid,
                                      const std::vector<RadialProfile>& profiles);
  /// c = unit point mass at lag 0 (spectral table identically 1, no
  /// embedding).
  static CovarianceModel white_noise(const Grid& grid, int kappa);
  /// Zero-variance model (spectral table identically 0).
  static CovarianceModel zero(const Grid& grid, int kappa);
  /// Explicit per-component spectral tables on the sampling grid itself
  /// (exactly periodic model, no embedding). Entries must be even under
  /// frequency negation and nonnegative up to the PSD clamp tolerance.
  /// Supports sign-changing covariances.
  static CovarianceModel from_spectral_table(const Grid& grid,
                                             std::vector<std::vector<double>> tables);

  const Grid& grid() const { return grid_; }
  /// Torus the synthesis runs on (doubled side for embedded models).
  const Grid& embedding_grid() const { return emb_; }
  int kappa() const { return kappa_; }
  double beta() const { return beta_; }
  double C0() const { return C0_; }
  Regime regime() const { return regime_; }
  const std::string& profile_name() const { return profile_name_; }
  bool diagonal() const { return diagonal_; }

  /// Spectral table of component pair (l,m) over the embedding frequencies.
  const std::vector<double>& spectral(int l, int m) const;

  /// Realized covariance c_lm at a lag (the signed representative in
  /// [-N/2, N/2)^d is looked up in the restricted window).
  double cov(int l, int m, const std::array<int, kMaxDim>& lag) const;
  double cov0(int l) const { return cov(l, l, {0, 0, 0}); }

  /// Exact variance of the torus mean of component l over the window.
  double mean_variance(int l) const { return mean_var_[static_cast<std::size_t>(l)]; }

  /// Realized decay-envelope ratios |c|(1+|x|)^beta over the checked lags.
  double envelope_lo() const { return env_lo_; }
  double envelope_hi() const { return env_hi_; }
  /// Realized gradient-envelope constant (nonintegrable regime only).
  double gradient_const() const { return grad_const_; }

  /// Matrix-model symmetric PSD square root of the spectral table at an
  /// embedding frequency (kappa x kappa, row-major).
  const double* spectral_sqrt(std::size_t freq_index) const;

 private:
  CovarianceModel() = default;
  void finalize_from_spectral();  // clamp, realized covariance, checks
  void check_envelope();
  void compute_mean_variance();

  Grid grid_;
  Grid emb_;
  int kappa_ = 1;
  double beta_ = 0.0;  // 0 marks synthetic models (white noise, overrides)
  double C0_ = 0.0;
  Regime regime_ = Regime::integrable;
  std::string profile_name_;
  bool diagonal_ = true;
  bool check_decay_ = false;
  // Pair tables indexed [l*kappa+m]; diagonal models store only l==m.
  // spectral_ lives on the embedding grid, cov_ on the sampling window.
  std::vector<std::vector<double>> spectral_;
  std::vector<std::vector<double>> cov_;
  std::vector<double> sqrt_table_;  // matrix models: [emb site][kappa*kappa]
  std::vector<double> mean_var_;    // per component
  double env_lo_ = 0.0, env_hi_ = 0.0, grad_const_ = 0.0;
};

/// One realization of the stationary centered Gaussian field.
struct FieldSample {
  Grid grid;
  int kappa = 1;
  std::uint64_t seed = 0;
  long sample_index = 0;
  /// values[component][site]
  std::vector<std::vector<double>> values;

  double value(int comp, std::size_t site) const {
    return values[static_cast<std::size_t>(comp)][site];
  }
};

/// Circulant-embedding synthesis: Hermitian complex Gaussians per embedding
/// frequency scaled by the square root of the spectral table, inverse
/// transform, restriction to the window. The Gaussian stream is a pure
/// function of (seed, sample_index); identical inputs give bit-identical
/// fields regardless of thread count.
FieldSample sample_field(const CovarianceModel& model, const Grid& grid,
                         std::uint64_t seed, long sample_index);

struct LagCovariance {
  std::array<int, kMaxDim> lag{};
  std::vector<double> mean;  // kappa x kappa, row-major
  std::vector<double> se;    // matching standard errors
};

/// Unbiased cross-sample estimator of c at the given lags, exploiting
/// stationarity: spatial average over all non-wrapping pairs per sample,
/// then mean/stderr across samples.
std::vector<LagCovariance> empirical_covariance(
    const std::vector<FieldSample>& samples,
    const std::vector<std::array<int, kMaxDim>>& lags);

/// Lattice quadrature of <h, c * h> computed spectrally on the embedding
/// torus. h[component][site] must vanish outside the central quarter of the
/// torus (periodization guard).
double h_norm_squared(const CovarianceModel& model,
                      const std::vector<std::vector<double>>& h);
double h_norm(const CovarianceModel& model, const std::vector<std::vector<double>>& h);

}  // namespace homog

#endif
