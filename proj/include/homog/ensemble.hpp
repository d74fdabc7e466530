#ifndef HOMOG_ENSEMBLE_HPP
#define HOMOG_ENSEMBLE_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "homog/coefficient.hpp"
#include "homog/commutator.hpp"
#include "homog/covariance.hpp"
#include "homog/lattice.hpp"

namespace homog {

struct FunctionalSpec {
  std::string id;
  std::array<double, kMaxDim> center{};  // macroscopic units
  double radius = 0.3125;
  int slot_i = 0;
  int slot_j = 0;
};

struct EnsembleConfig {
  int dim = 2;
  double beta = 1.0;
  int kappa = 1;
  std::string family = "sigmoid";  // sigmoid | bump | diagonal-sigmoid | constant
  double lambda = 0.25;
  double constant_value = 0.7;  // family == constant
  double C0 = 30.0;
  double profile_scale = 1.0;  // correlation length of the canonical profile
  int side = 128;
  std::vector<double> epsilons;
  std::vector<FunctionalSpec> functionals;
  long samples = 200;
  std::uint64_t base_seed = 1;
  std::vector<double> shift;  // z in R^kappa; empty = no shift
  double solver_tol = 1e-10;
  /// Subtract the ensemble-mean abar inside Xi instead of the per-sample
  /// cell average (sensitivity option; the default kills the CLT bias term).
  bool use_ensemble_abar = false;

  CoefficientMap build_map() const;
  Grid grid() const { return Grid(dim, side); }
  /// Throws on invalid combinations (resolution guards, sample floor, ...).
  void validate() const;
};

/// Per-sample outcome; I values are flattened as [eps_index * nF + f_index].
struct SampleRecord {
  bool failed = false;
  std::string error;
  Matd abar;
  std::vector<double> I;
  /// k_values[l * d * d + i * d + j] =
  ///   site average of (grad phi_j + e_j) . d_l a0(G + z) (grad phi_i + e_i).
  std::vector<double> k_values;
  /// Functional-weighted affine gradients, layout [flat(e,f)*d*d + i*d + k]:
  ///   pi^{1/2} eps^d sum_x prof_F(eps x) (grad phi_i + e_i)_k(x).
  /// Lets any abar convention be applied to I after the run:
  ///   I(abar') = I(abar) + sum_jk (abar - abar')_{jk} W_{ij} T_{ik}.
  std::vector<double> grad_moments;
};

struct EnsembleReport {
  EnsembleConfig config;
  std::vector<SampleRecord> samples;
  long failures = 0;
  /// Lattice quadrature sum_x prof_F(eps x) eps^d per (eps, F); used to
  /// re-center I values when switching the abar convention.
  std::vector<double> profile_mass;

  std::size_t flat(std::size_t eps_index, std::size_t f_index) const {
    return eps_index * config.functionals.size() + f_index;
  }
  /// I samples for one (eps, F), with the configured abar convention applied.
  std::vector<double> functional_samples(std::size_t eps_index, std::size_t f_index) const;
  /// Ensemble mean of abar with standard errors (RVE estimate).
  void abar_statistics(Matd& mean, Matd& se) const;
};

/// Runs the full pipeline per sample (field -> coefficient -> correctors ->
/// commutator -> functionals) on `workers` threads. Output is bit-identical
/// for any worker count: every sample derives its randomness from
/// (base_seed, sample_index) and lands in its own slot. Aborts if more than
/// 1% of samples fail.
EnsembleReport run_ensemble(const EnsembleConfig& config, int workers);

struct VarianceScalingRow {
  double epsilon = 0.0;
  double var_normalized = 0.0;  // Var[I_eps(F)]
  double se_normalized = 0.0;
  double var_raw = 0.0;  // Var of the unnormalized integral
  double se_raw = 0.0;
};

struct VarianceScalingFit {
  std::string functional_id;
  std::vector<VarianceScalingRow> rows;
  double slope = 0.0;     // d log Var_raw / d log(1/eps), log-corrected at beta=d
  double slope_se = 0.0;
  double expected = 0.0;  // -min(beta, d)
  std::string verdict;    // "ok" | "degenerate/zero"
};

/// Least-squares scaling fit per functional; needs >= 3 distinct epsilons.
std::vector<VarianceScalingFit> variance_scaling_fit(const EnsembleReport& report);

struct KTensor {
  int kappa = 0;
  int dim = 0;
  std::vector<double> values;  // [l*d*d + i*d + j]
  std::vector<double> se;

  double at(int l, int i, int j) const {
    return values[static_cast<std::size_t>((l * dim + i) * dim + j)];
  }
  double se_at(int l, int i, int j) const {
    return se[static_cast<std::size_t>((l * dim + i) * dim + j)];
  }
};

/// Monte Carlo + spatial average of the K tensor from a finished report.
KTensor estimate_k_tensor(const EnsembleReport& report);

struct CovarianceCheckRow {
  std::string f_id, fprime_id;
  double epsilon = 0.0;
  double empirical = 0.0;
  double empirical_se = 0.0;
  double predicted = 0.0;
  double predicted_se = 0.0;
  double combined_se = 0.0;
  bool within_3sigma = false;
};

struct CovarianceCheck {
  Regime regime = Regime::integrable;
  std::vector<CovarianceCheckRow> rows;
  /// Integrable mode: plateau comparison of Var[I] across the last two
  /// epsilons and the implied Q contraction per functional.
  std::vector<VarianceScalingRow> plateau;
  double plateau_gap = 0.0;
  double plateau_gap_se = 0.0;
  bool plateau_ok = false;
  std::vector<double> q_contraction;  // per functional at the smallest eps
  bool low_power = false;             // critical-regime flag
};

/// Regime-dispatched covariance-structure verdicts (Theorem-1(i) shape).
/// Non-integrable and critical regimes need the model's realized covariance
/// and an estimated K tensor (relative error <= 30%).
CovarianceCheck covariance_structure_check(const EnsembleReport& report,
                                           const CovarianceModel& model);

struct NormalityRow {
  std::string f_id;
  double epsilon = 0.0;
  double w1 = 0.0;
  double ks = 0.0;
  long samples = 0;
  std::string tv_note = "not computed";  // TV has no consistent plug-in estimator
};

/// Standardized distances to N(0,1) per (eps, F); requires >= 500 samples
/// and positive sample variance.
std::vector<NormalityRow> normality_distances(const EnsembleReport& report);

struct DegeneracyRow {
  double z = 0.0;
  double abar = 0.0;  // (abar^z)_{11} ensemble mean (scalar isotropic media)
  double abar_se = 0.0;
  double k = 0.0;  // K^1_{11}(z)
  double k_se = 0.0;
};

struct IdentityRow {
  double z = 0.0;
  double k = 0.0;
  double dabar_dz = 0.0;       // paired central difference
  double gap = 0.0;            // k - dabar_dz (paired per sample)
  double gap_se = 0.0;         // SE of the paired gap
  double truncation = 0.0;     // h^2/6 |f'''| estimate
  bool within_errors = false;  // |gap| <= 3 gap_se + truncation
};

struct DegeneracyScan {
  std::vector<DegeneracyRow> rows;
  std::vector<IdentityRow> identity;
  double z_at_max_abar = 0.0;
  double k_at_max = 0.0;
  double k_at_max_se = 0.0;
  bool harmonic_bound_ok = false;  // lambda < abar_ii <= 1 for all z
};

/// Shifted-field scan over a z grid (>= 5 points, scalar kappa = 1 family).
/// All z values reuse the same base seed, so the finite differences of
/// abar^z are paired per sample (common random numbers).
DegeneracyScan degeneracy_scan(const EnsembleConfig& base, const std::vector<double>& z_grid,
                               int workers);

}  // namespace homog

#endif
