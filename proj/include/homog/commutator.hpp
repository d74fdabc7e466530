#ifndef HOMOG_COMMUTATOR_HPP
#define HOMOG_COMMUTATOR_HPP

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "homog/coefficient.hpp"
#include "homog/corrector.hpp"
#include "homog/lattice.hpp"

namespace homog {

/// Fluctuation rescaling pi_{d,beta}(r): (1+r)^d above the critical decay,
/// (1+r)^d / log(2+r) at it, (1+r)^beta below.
double pi_scaling(int dim, double beta, double r);

/// Corrector growth / convergence-rate function mu_{d,beta}(r); defined for
/// d >= 2 (the d = 1 problem integrates explicitly and is out of scope).
double mu_scaling(int dim, double beta, double r);

/// Standard homogenization commutator Xi_ij = e_j . (a - abar)(grad phi_i + e_i).
struct CommutatorField {
  Grid grid;
  int dim = 2;
  Matd abar_used;
  /// xi[site * d * d + i * d + j]
  std::vector<double> xi;

  double at(std::size_t site, int i, int j) const {
    return xi[site * static_cast<std::size_t>(dim * dim) + static_cast<std::size_t>(i * dim + j)];
  }
  /// Torus average of entry (i,j); exactly 0 when abar_used is the same
  /// cell's average.
  double mean_entry(int i, int j) const;
};

CommutatorField compute_commutator(const CoefficientField& coeff,
                                   const CorrectorSolution& sol, const Matd& abar);

/// Smooth compactly supported macroscopic test function
/// F(x) = amp * exp(-1/(1-t^2)), t = |x-center|/radius, with the matrix
/// slot weight carried separately. Normalized so the continuum integral of
/// the profile is 1 per active slot.
struct TestFunction {
  std::string id;
  std::array<double, kMaxDim> center{};  // macroscopic units
  double radius = 0.25;
  Matd weight;  // slot weights, usually a single unit entry
  double norm_constant = 0.0;

  double profile(double t) const {
    if (t >= 1.0) return 0.0;
    return norm_constant * std::exp(-1.0 / (1.0 - t * t));
  }
};

/// Bump with unit continuum mass in the (i,j) slot.
TestFunction make_test_function(int dim, const std::array<double, kMaxDim>& center,
                                double radius, int slot_i, int slot_j,
                                const std::string& id);
/// Bump with a full d x d weight matrix.
TestFunction make_test_function(int dim, const std::array<double, kMaxDim>& center,
                                double radius, const Matd& weight, const std::string& id);

/// Midpoint quadrature of the unnormalized integral
///   sum_x F(eps x) : Xi(x) eps^d
/// over the torus (x = eps * lattice site).
double integrate_functional_raw(const CommutatorField& xi, const TestFunction& f,
                                double epsilon);

/// I_eps(F) = pi_{d,beta}(1/eps)^{1/2} * integrate_functional_raw.
/// Guards: support must resolve at least 10 lattice cells in radius and fit
/// strictly inside the torus.
double integrate_functional(const CommutatorField& xi, const TestFunction& f,
                            double epsilon, double beta);

/// The guard alone (used by config validation): throws on violation.
void check_functional_resolution(const Grid& grid, const TestFunction& f, double epsilon);

}  // namespace homog

#endif
