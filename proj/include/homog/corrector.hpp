#ifndef HOMOG_CORRECTOR_HPP
#define HOMOG_CORRECTOR_HPP

#include <cstdint>
#include <vector>

#include "homog/coefficient.hpp"
#include "homog/lattice.hpp"

namespace homog {

/// Discrete divergence-form operator u -> -div(a grad u) with forward
/// differences for the gradient and its exact negative adjoint for the
/// divergence; summation by parts holds to machine precision on the torus.
/// Holds scratch buffers, so one instance belongs to one solve/thread.
class EllipticOperator {
 public:
  explicit EllipticOperator(const CoefficientField& coeff);

  const Grid& grid() const { return coeff_->grid; }

  /// out = -div(a grad u)
  void apply(const std::vector<double>& u, std::vector<double>& out);
  /// out = div(a e_i), the corrector right-hand side for direction i.
  void corrector_rhs(int direction, std::vector<double>& out) const;
  /// flux[k] = (a (grad u + e_dir))_k
  void flux(const std::vector<double>& u, int direction,
            std::vector<std::vector<double>>& out) const;

  double mean_coefficient() const { return mean_coeff_; }

 private:
  const CoefficientField* coeff_;
  double mean_coeff_;  // mean of tr(a)/d, used by the spectral preconditioner
  std::vector<std::vector<double>> grad_scratch_;
  std::vector<std::vector<double>> flux_scratch_;
};

struct CorrectorSolution {
  Grid grid;
  int dim = 2;
  /// phi[i][site]: corrector in lattice direction i, torus mean zero.
  std::vector<std::vector<double>> phi;
  /// grad[i][k][site]: forward-difference gradient of phi_i.
  std::vector<std::vector<std::vector<double>>> grad;
  /// flux[i][k][site]: centered flux q_i = a(grad phi_i + e_i) - abar e_i.
  std::vector<std::vector<std::vector<double>>> flux;
  /// sigma[i][p][site]: flux corrector, p enumerating pairs (j,k) with j<k.
  std::vector<std::vector<std::vector<double>>> sigma;
  bool sigma_filled = false;

  /// Cell average abar_per: column i is the average of a(grad phi_i + e_i).
  Matd abar;
  /// Final relative residuals and iteration counts per direction.
  std::vector<double> residual;
  std::vector<int> iterations;
  /// max |div sigma_i - q_i| / max |q| after the flux-corrector solve.
  double sigma_residual = 0.0;

  int pair_index(int j, int k) const;  // j < k
  /// sigma_{ijk} with skew-symmetry resolved by sign.
  double sigma_entry(int i, int j, int k, std::size_t site) const;
};

struct SolverOptions {
  double tol = 1e-10;   // relative residual target
  int max_iter = 4000;  // hard iteration cap per direction
  bool throw_on_stall = true;
};

/// Solves the periodic corrector system -div(a (grad phi_i + e_i)) = 0 for
/// every direction by conjugate gradients preconditioned with the
/// constant-coefficient inverse Laplacian applied spectrally. phi_i is
/// anchored to torus mean zero. Throws on non-convergence (the final
/// residual is included in the message) unless options say otherwise.
CorrectorSolution solve_corrector(const CoefficientField& coeff,
                                  const SolverOptions& options = {});

/// Fills sigma by solving -Delta sigma_ijk = D_j q_ik - D_k q_ij spectrally
/// in the zero-mean gauge (only pairs j<k are solved; skew-symmetry is by
/// construction). Checks div sigma_i = q_i and records the residual.
void solve_flux_corrector(CorrectorSolution& sol);

/// abar of a solved cell (the single-cell RVE estimate of the homogenized
/// coefficient).
Matd homogenized_estimate(const CorrectorSolution& sol);

struct GrowthRow {
  int side = 0;
  double mean_phi_l2 = 0.0;  // E[ mean_x |phi|^2 ]^{1/2}
  double se = 0.0;           // standard error of mean_phi_l2
  double mu_reference = 0.0; // mu_{d,beta}(N)
};

struct GrowthTable {
  double beta = 0.0;
  int dim = 0;
  std::vector<GrowthRow> rows;
  /// Least-squares exponent of log(mean_phi_l2) against log(1+N), with the
  /// fit residual (rms over rows).
  double fit_exponent = 0.0;
  double fit_residual = 0.0;
  /// Spread of mean_phi_l2 / mu_reference across rows: max/min - 1.
  double ratio_spread = 0.0;
};

/// Ensemble growth scan of E[|phi|^2]^{1/2} at the torus scale over a family
/// of grids; needs at least 3 sides to fit.
GrowthTable corrector_growth_scan(const CoefficientMap& map, double beta, double C0,
                                  const std::vector<int>& sides, int samples,
                                  std::uint64_t seed, int workers,
                                  const SolverOptions& options = {},
                                  double profile_scale = 1.0);

}  // namespace homog

#endif
