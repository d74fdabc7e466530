#ifndef HOMOG_CHAOS_HPP
#define HOMOG_CHAOS_HPP

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace homog {

constexpr int kMaxChaosVars = 8;

/// Finite-dimensional isonormal model: n Gaussian slots with Gram matrix
/// cov (symmetric PSD), whitened as cov = A A^T with A of size n x rank.
/// Everything downstream works in the whitened coordinates Y ~ N(0, Id).
struct FiniteGaussianModel {
  int n = 1;
  int rank = 1;
  std::vector<double> cov;        // n x n, row-major
  std::vector<double> whitening;  // n x rank, row-major

  double cov_at(int i, int j) const { return cov[static_cast<std::size_t>(i * n + j)]; }
  double whiten_at(int i, int k) const {
    return whitening[static_cast<std::size_t>(i * rank + k)];
  }
};

/// Builds the model; eigenvalues below -1e-12 * max fail, small negatives
/// clamp to zero, and the factor must reproduce cov to 1e-12.
FiniteGaussianModel make_finite_model(int n, const std::vector<double>& cov);

using MultiIndex = std::array<int, kMaxChaosVars>;

inline int multi_degree(const MultiIndex& a) {
  int s = 0;
  for (int v : a) s += v;
  return s;
}
double multi_factorial(const MultiIndex& a);

/// Probabilists' Hermite expansion X = sum_alpha coeff_alpha He_alpha(Y)
/// over the whitened coordinates, with E[He_alpha He_beta] =
/// alpha! delta_{alpha beta}. Coefficient arithmetic (products, derivatives,
/// OU grading) is exact on polynomials.
class ChaosExpansion {
 public:
  ChaosExpansion() = default;
  explicit ChaosExpansion(int vars) : vars_(vars) {}

  int vars() const { return vars_; }
  const std::map<MultiIndex, double>& coeffs() const { return coeffs_; }
  double coeff(const MultiIndex& a) const;
  void set_coeff(const MultiIndex& a, double v);
  void add_coeff(const MultiIndex& a, double v);
  int max_degree() const;

  /// E[X]: the degree-zero coefficient.
  double mean() const;
  /// E[X Y] = sum_alpha alpha! x_alpha y_alpha (chaos orthogonality).
  double inner(const ChaosExpansion& other) const;
  /// Var[X] = sum_{alpha != 0} alpha! x_alpha^2.
  double variance() const;
  double l2_norm_squared() const { return inner(*this); }

  ChaosExpansion scaled(double s) const;
  ChaosExpansion plus(const ChaosExpansion& other, double weight = 1.0) const;
  /// Exact pointwise product via the Hermite linearization formula.
  ChaosExpansion product(const ChaosExpansion& other) const;
  /// d/dy_k via He_m' = m He_{m-1}.
  ChaosExpansion derivative(int k) const;
  /// Ornstein-Uhlenbeck number operator: multiplies degree-m terms by m.
  ChaosExpansion ou_apply() const;
  /// (shift + L)^{-1}: multiplies degree-m terms by 1/(shift + m); the
  /// degree-zero term is untouched by (1 + L)^{-1}.
  ChaosExpansion ou_resolvent(int shift) const;

  /// Polynomial evaluation at a whitened point.
  double evaluate(const double* y) const;

  double max_abs_coeff_diff(const ChaosExpansion& other) const;

 private:
  int vars_ = 0;
  std::map<MultiIndex, double> coeffs_;
};

/// He_k(x), probabilists' convention.
double hermite_value(int k, double x);

/// Gauss-Hermite rule for the standard normal weight (total mass 1).
struct GaussHermiteRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};
GaussHermiteRule gauss_hermite(int points);

struct ExpandResult {
  ChaosExpansion expansion;
  double quadrature_l2 = 0.0;  // quadrature of E[g^2]
  double parseval_l2 = 0.0;    // sum alpha! coeff^2 over the truncation
  double truncation_l2 = 0.0;  // sqrt(max(0, quadrature - parseval))
};

/// Tensorized Gauss-Hermite projection of g(G(zeta_1), ..., G(zeta_n)) onto
/// total degree <= p_max. nodes_per_axis = 0 picks p_max + 2; fewer than
/// p_max + 1 nodes per axis is an error.
ExpandResult hermite_expand(const std::function<double(const double*)>& g,
                            const FiniteGaussianModel& model, int p_max,
                            int nodes_per_axis = 0);

/// Expansions of d/dy_k g per whitened slot (defined for any model).
std::vector<ChaosExpansion> whitened_gradient(const ChaosExpansion& x);

/// Expansions of the per-zeta-slot components of DX = sum_i zeta_i
/// (d_i g)(G(zeta)); requires an invertible Gram matrix.
std::vector<ChaosExpansion> malliavin_derivative(const ChaosExpansion& x,
                                                 const FiniteGaussianModel& model);

/// E[<DX, (1+L)^{-1} DY>_H] on coefficients, plus the direct covariance
/// sum_{alpha != 0} alpha! x_alpha y_alpha for comparison; the two agree by
/// the Helffer-Sjostrand identity.
struct HsResult {
  double hs_value = 0.0;
  double direct_cov = 0.0;
};
HsResult hs_covariance(const ChaosExpansion& x, const ChaosExpansion& y,
                       const FiniteGaussianModel& model);

struct PoincareFirst {
  double variance = 0.0;
  double dirichlet = 0.0;  // E ||DX||_H^2
  bool holds = false;
};
PoincareFirst poincare_order1(const ChaosExpansion& x);

struct PoincareSecond {
  double middle = 0.0;  // 2 Var[<DX,(1+L)^{-1}DX>]^{1/2}
  double outer = 0.0;   // 3 E[||D^2X||_op^4]^{1/4} E[||DX||^4]^{1/4}
  bool chain_holds = false;
};
/// X is standardized internally (E = 0, Var = 1); zero variance is an error.
/// The operator norm is evaluated in the whitened Gram geometry by
/// quadrature.
PoincareSecond poincare_order2(const ChaosExpansion& x, int quad_points = 0);

/// One verified identity instance from the randomized oracle suite.
struct OracleCheck {
  std::string identity;  // "helffer-sjostrand", "commutation-DL", ...
  std::uint64_t trial_seed = 0;
  double lhs = 0.0;
  double rhs = 0.0;
  double abs_gap = 0.0;
  double rel_gap = 0.0;  // abs_gap / (1 + max(|lhs|, |rhs|))
};

struct OracleSuiteResult {
  std::vector<OracleCheck> checks;
  double max_rel_gap = 0.0;
  long poincare1_failures = 0;
  long poincare2_failures = 0;
  bool pass = false;
};

/// Randomized polynomial functionals (n <= 4 slots, total degree <= 6,
/// random PSD Gram matrices): verifies the Helffer-Sjostrand identity
/// against the direct and quadrature covariances, the commutation
/// D L = (1 + L) D coefficientwise, mean preservation of (1+L)^{-1}, and
/// both Poincare inequalities. Passes when every relative gap is below
/// `tolerance` and no inequality is violated.
OracleSuiteResult run_malliavin_suite(std::uint64_t seed, int trials = 100,
                                      double tolerance = 1e-8);

}  // namespace homog

#endif
