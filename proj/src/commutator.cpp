#include "homog/commutator.hpp"

#include <cmath>
#include <stdexcept>

namespace homog {

double pi_scaling(int dim, double beta, double r) {
  if (beta <= 0.0) throw std::invalid_argument("pi_scaling: beta must be positive");
  if (dim < 1) throw std::invalid_argument("pi_scaling: dim must be >= 1");
  if (r < 0.0) throw std::invalid_argument("pi_scaling: r must be >= 0");
  const double d = static_cast<double>(dim);
  if (beta > d) return std::pow(1.0 + r, d);
  if (beta == d) return std::pow(1.0 + r, d) / std::log(2.0 + r);
  return std::pow(1.0 + r, beta);
}

double mu_scaling(int dim, double beta, double r) {
  if (beta <= 0.0) throw std::invalid_argument("mu_scaling: beta must be positive");
  if (dim < 2) throw std::invalid_argument("mu_scaling: defined for d >= 2");
  if (r < 0.0) throw std::invalid_argument("mu_scaling: r must be >= 0");
  if (beta > 2.0 && dim > 2) return 1.0;
  if ((beta > 2.0 && dim == 2) || (beta == 2.0 && dim > 2))
    return std::sqrt(std::log(2.0 + r));
  if (beta == 2.0 && dim == 2) return std::log(2.0 + r);
  return std::pow(1.0 + r, 1.0 - beta / 2.0);
}

double CommutatorField::mean_entry(int i, int j) const {
  const std::size_t n = grid.sites();
  const std::size_t dd = static_cast<std::size_t>(dim * dim);
  const std::size_t off = static_cast<std::size_t>(i * dim + j);
  double acc = 0.0;
  for (std::size_t s = 0; s < n; ++s) acc += xi[s * dd + off];
  return acc / static_cast<double>(n);
}

CommutatorField compute_commutator(const CoefficientField& coeff,
                                   const CorrectorSolution& sol, const Matd& abar) {
  if (!(coeff.grid == sol.grid) || coeff.dim != sol.dim)
    throw std::invalid_argument("compute_commutator: coefficient/solution mismatch");
  if (abar.d != sol.dim)
    throw std::invalid_argument("compute_commutator: abar dimension mismatch");
  const Grid& g = sol.grid;
  const int d = sol.dim;
  const std::size_t n = g.sites();

  CommutatorField out;
  out.grid = g;
  out.dim = d;
  out.abar_used = abar;
  out.xi.resize(n * static_cast<std::size_t>(d * d));

  // Xi_ij = e_j . (a - abar)(grad phi_i + e_i), evaluated sitewise. The
  // torus mean is abar_per e_i - abar (mean grad phi_i + e_i) entrywise, so
  // it vanishes identically when abar is the same cell's average.
  const std::size_t dd = static_cast<std::size_t>(d * d);
  for (std::size_t s = 0; s < n; ++s) {
    const double* a = coeff.at(s);
    double* block = &out.xi[s * dd];
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) {
        double acc = 0.0;
        for (int k = 0; k < d; ++k) {
          const double gk =
              sol.grad[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)][s] +
              (k == i ? 1.0 : 0.0);
          acc += (a[j * d + k] - abar(j, k)) * gk;
        }
        block[static_cast<std::size_t>(i * d + j)] = acc;
      }
    }
  }
  return out;
}

namespace {

/// Radial mass of the mollifier profile: int_0^1 exp(-1/(1-t^2)) t^{d-1} dt,
/// by composite Simpson (the integrand is smooth and flat at both ends).
double bump_radial_mass(int dim) {
  const int n = 4096;
  const double h = 1.0 / n;
  auto f = [dim](double t) {
    if (t <= 0.0 || t >= 1.0) return t == 0.0 && dim == 1 ? std::exp(-1.0) : 0.0;
    return std::exp(-1.0 / (1.0 - t * t)) * std::pow(t, dim - 1);
  };
  double acc = f(0.0) + f(1.0);
  for (int i = 1; i < n; ++i) acc += f(i * h) * (i % 2 == 1 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

double sphere_surface(int dim) {
  switch (dim) {
    case 1: return 2.0;
    case 2: return 2.0 * 3.14159265358979323846264338327950288;
    case 3: return 4.0 * 3.14159265358979323846264338327950288;
    default: throw std::invalid_argument("sphere_surface: dim out of range");
  }
}

}  // namespace

TestFunction make_test_function(int dim, const std::array<double, kMaxDim>& center,
                                double radius, const Matd& weight, const std::string& id) {
  if (radius <= 0.0) throw std::invalid_argument("TestFunction: radius must be positive");
  if (weight.d != dim) throw std::invalid_argument("TestFunction: weight dimension mismatch");
  TestFunction f;
  f.id = id;
  f.center = center;
  f.radius = radius;
  f.weight = weight;
  const double mass = sphere_surface(dim) * bump_radial_mass(dim) * std::pow(radius, dim);
  f.norm_constant = 1.0 / mass;
  return f;
}

TestFunction make_test_function(int dim, const std::array<double, kMaxDim>& center,
                                double radius, int slot_i, int slot_j,
                                const std::string& id) {
  Matd w(dim);
  w(slot_i, slot_j) = 1.0;
  return make_test_function(dim, center, radius, w, id);
}

void check_functional_resolution(const Grid& grid, const TestFunction& f, double epsilon) {
  if (!(epsilon > 0.0))
    throw std::invalid_argument("integrate_functional: epsilon must be positive");
  if (f.radius / epsilon < 10.0)
    throw std::invalid_argument("integrate_functional: support resolves fewer than 10 lattice cells (radius/epsilon = " +
                                std::to_string(f.radius / epsilon) + ")");
  const double torus_extent = epsilon * static_cast<double>(grid.side);
  if (2.0 * f.radius >= torus_extent)
    throw std::invalid_argument("integrate_functional: support does not fit strictly inside the torus");
}

double integrate_functional_raw(const CommutatorField& xi, const TestFunction& f,
                                double epsilon) {
  check_functional_resolution(xi.grid, f, epsilon);
  const Grid& g = xi.grid;
  const int d = xi.dim;
  const std::size_t dd = static_cast<std::size_t>(d * d);
  const double r_micro = f.radius / epsilon;

  // Enumerate the integer bounding box of the support; the guard ensures it
  // wraps at most once around the torus.
  std::array<long, kMaxDim> lo{}, hi{};
  std::array<double, kMaxDim> center_micro{};
  for (int k = 0; k < d; ++k) {
    center_micro[k] = f.center[k] / epsilon;
    lo[k] = static_cast<long>(std::ceil(center_micro[k] - r_micro));
    hi[k] = static_cast<long>(std::floor(center_micro[k] + r_micro));
  }
  double acc = 0.0;
  std::array<long, kMaxDim> o = lo;
  const double inv_r2 = 1.0 / (r_micro * r_micro);
  for (;;) {
    double t2 = 0.0;
    for (int k = 0; k < d; ++k) {
      const double delta = static_cast<double>(o[k]) - center_micro[k];
      t2 += delta * delta;
    }
    t2 *= inv_r2;
    if (t2 < 1.0) {
      const double prof = f.norm_constant * std::exp(-1.0 / (1.0 - t2));
      std::array<int, kMaxDim> x{};
      for (int k = 0; k < d; ++k) x[k] = g.wrap(static_cast<int>(o[k] % g.side));
      const double* block = &xi.xi[g.index(x) * dd];
      double contracted = 0.0;
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) contracted += f.weight(i, j) * block[i * d + j];
      acc += prof * contracted;
    }
    int k = d - 1;
    for (; k >= 0; --k) {
      if (++o[k] <= hi[k]) break;
      o[k] = lo[k];
    }
    if (k < 0) break;
  }
  return acc * std::pow(epsilon, d);
}

double integrate_functional(const CommutatorField& xi, const TestFunction& f,
                            double epsilon, double beta) {
  const double raw = integrate_functional_raw(xi, f, epsilon);
  return std::sqrt(pi_scaling(xi.dim, beta, 1.0 / epsilon)) * raw;
}

}  // namespace homog
