#ifndef HOMOG_COEFFICIENT_HPP
#define HOMOG_COEFFICIENT_HPP

#include <functional>
#include <string>
#include <vector>

#include "homog/covariance.hpp"
#include "homog/lattice.hpp"

namespace homog {

/// a0 : R^kappa -> d x d matrices, C^2_b, with boundedness |a0(y) xi| <= |xi|
/// and ellipticity xi . a0(y) xi >= lambda |xi|^2. Derivatives are analytic
/// and certified against finite differences at construction.
struct CoefficientMap {
  std::string name;
  int kappa = 1;
  int dim = 2;
  double lambda = 0.0;
  bool symmetric = true;
  std::vector<std::string> flags;  // e.g. constancy warnings

  /// a0(y); y has kappa entries.
  std::function<Matd(const double* y)> eval;
  /// d/dy_l a0(y); empty function means "no derivative data".
  std::function<Matd(const double* y, int l)> d1;
  /// d^2/dy_l dy_m a0(y).
  std::function<Matd(const double* y, int l, int m)> d2;

  bool has_derivatives() const { return static_cast<bool>(d1); }
};

/// Randomized certificate: boundedness/ellipticity at `probes` points and
/// directions, analytic derivatives vs central finite differences (relative
/// tolerance 1e-6), exact symmetry when claimed. Throws on failure.
void certify_map(const CoefficientMap& map, int probes = 1000,
                 std::uint64_t seed = 0x5eedc0efULL);

/// Scalar sigmoid family a0(g) = lambda + (1-lambda)/(1+e^{-g}) times Id;
/// its derivative is strictly positive for every g.
CoefficientMap family_sigmoid(double lambda, int dim = 2);

/// Scalar even bump family a0(g) = lambda + (1-lambda) e^{-g^2} times Id;
/// sup a0 = 1 attained at g = 0 and a0 -> lambda at infinity.
CoefficientMap family_bump(double lambda, int dim = 2);

/// One scalar map per axis acting on the matching field component
/// (kappa = d). Scalar maps with range in [lambda, 1]; maps that are
/// numerically constant are accepted but flagged.
struct ScalarMap {
  std::string name;
  std::function<double(double)> f;
  std::function<double(double)> df;
  std::function<double(double)> ddf;
};
ScalarMap scalar_sigmoid(double lambda);
ScalarMap scalar_constant(double value);
CoefficientMap family_diagonal(const std::vector<ScalarMap>& maps, double lambda);

/// Constant matrix map (kappa = 1, ignores the field).
CoefficientMap constant_map(const Matd& value, double lambda);

/// Lattice coefficient field a(x) = a0(G(x) + z).
struct CoefficientField {
  Grid grid;
  int dim = 2;
  bool symmetric = true;
  double lambda = 0.0;
  std::string provenance;
  /// Row-major d x d block per site: a[site * d * d + i * d + j].
  std::vector<double> a;

  const double* at(std::size_t site) const {
    return &a[site * static_cast<std::size_t>(dim * dim)];
  }
  double* at(std::size_t site) {
    return &a[site * static_cast<std::size_t>(dim * dim)];
  }
  CoefficientField transposed() const;
};

/// Sitewise application a0(G(x) + z) with a randomized ellipticity spot
/// check (1000 sites). shift has map.kappa entries (nullptr = zero shift).
CoefficientField evaluate_coefficient(const CoefficientMap& map, const FieldSample& field,
                                      const double* shift = nullptr);

/// Deterministic test media.
CoefficientField make_constant_field(const Grid& grid, const Matd& value);
/// Scalar laminate along `axis`: value_hi on the first half of each stripe
/// period, value_lo on the second half. stripe_period must divide the side
/// and be even; the default one-period laminate uses stripe_period = side.
CoefficientField make_laminate_field(const Grid& grid, int axis, double value_hi,
                                     double value_lo, int stripe_period = 0);
/// Two-phase checkerboard: scalar value_even on sites of even cell parity.
/// cell sites of side `cell` (default 1 lattice cell per tile).
CoefficientField make_checkerboard_field(const Grid& grid, double value_even,
                                         double value_odd, int cell = 1);

}  // namespace homog

#endif
