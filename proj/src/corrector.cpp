#include "homog/corrector.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "homog/commutator.hpp"
#include "homog/covariance.hpp"
#include "homog/fft.hpp"
#include "homog/parallel.hpp"
#include "homog/rng.hpp"

namespace homog {

EllipticOperator::EllipticOperator(const CoefficientField& coeff) : coeff_(&coeff) {
  const std::size_t n = coeff.grid.sites();
  const int d = coeff.dim;
  double acc = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    const double* block = coeff.at(s);
    for (int i = 0; i < d; ++i) acc += block[i * d + i];
  }
  mean_coeff_ = acc / (static_cast<double>(n) * d);
  if (!(mean_coeff_ > 0.0))
    throw std::invalid_argument("EllipticOperator: coefficient has nonpositive mean trace");
}

void EllipticOperator::apply(const std::vector<double>& u, std::vector<double>& out) {
  const Grid& g = coeff_->grid;
  const int d = coeff_->dim;
  const std::size_t n = g.sites();
  grad_scratch_.resize(static_cast<std::size_t>(d));
  flux_scratch_.resize(static_cast<std::size_t>(d));
  for (int k = 0; k < d; ++k)
    forward_gradient(g, u, k, grad_scratch_[static_cast<std::size_t>(k)]);
  for (int k = 0; k < d; ++k) flux_scratch_[static_cast<std::size_t>(k)].resize(n);
  for (std::size_t s = 0; s < n; ++s) {
    const double* block = coeff_->at(s);
    for (int i = 0; i < d; ++i) {
      double acc = 0.0;
      for (int j = 0; j < d; ++j)
        acc += block[i * d + j] * grad_scratch_[static_cast<std::size_t>(j)][s];
      flux_scratch_[static_cast<std::size_t>(i)][s] = acc;
    }
  }
  backward_divergence(g, flux_scratch_, out);
  for (double& x : out) x = -x;
}

void EllipticOperator::corrector_rhs(int direction, std::vector<double>& out) const {
  const Grid& g = coeff_->grid;
  const int d = coeff_->dim;
  const std::size_t n = g.sites();
  std::vector<std::vector<double>> v(static_cast<std::size_t>(d),
                                     std::vector<double>(n, 0.0));
  for (std::size_t s = 0; s < n; ++s) {
    const double* block = coeff_->at(s);
    for (int i = 0; i < d; ++i) v[static_cast<std::size_t>(i)][s] = block[i * d + direction];
  }
  backward_divergence(g, v, out);
}

void EllipticOperator::flux(const std::vector<double>& u, int direction,
                            std::vector<std::vector<double>>& out) const {
  const Grid& g = coeff_->grid;
  const int d = coeff_->dim;
  const std::size_t n = g.sites();
  std::vector<std::vector<double>> grad(static_cast<std::size_t>(d));
  for (int k = 0; k < d; ++k) forward_gradient(g, u, k, grad[static_cast<std::size_t>(k)]);
  out.assign(static_cast<std::size_t>(d), std::vector<double>(n, 0.0));
  for (std::size_t s = 0; s < n; ++s) {
    const double* block = coeff_->at(s);
    for (int i = 0; i < d; ++i) {
      double acc = 0.0;
      for (int j = 0; j < d; ++j) {
        const double gj = grad[static_cast<std::size_t>(j)][s] +
                          (direction == j ? 1.0 : 0.0);
        acc += block[i * d + j] * gj;
      }
      out[static_cast<std::size_t>(i)][s] = acc;
    }
  }
}

namespace {

/// Spectral application of (-mean_a Delta)^{-1} restricted to mean-zero
/// fields: the standard constant-coefficient preconditioner for
/// contrast-bounded media.
class SpectralPreconditioner {
 public:
  SpectralPreconditioner(const Grid& grid, double mean_coeff)
      : grid_(grid), symbol_(laplace_symbol(grid)), scale_(1.0 / mean_coeff) {}

  void apply(const std::vector<double>& r, std::vector<double>& z) const {
    const std::size_t n = grid_.sites();
    std::vector<cplx> work(n);
    for (std::size_t i = 0; i < n; ++i) work[i] = r[i];
    Fft& fft = fft_for(grid_);
    fft.forward(work);
    work[0] = 0.0;
    for (std::size_t i = 1; i < n; ++i) work[i] *= scale_ / symbol_[i];
    fft.backward(work);
    z.resize(n);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) z[i] = work[i].real() * inv_n;
  }

 private:
  Grid grid_;
  std::vector<double> symbol_;
  double scale_;
};

struct CgResult {
  double rel_residual = 0.0;
  int iterations = 0;
};

CgResult preconditioned_cg(EllipticOperator& op, const SpectralPreconditioner& prec,
                           const std::vector<double>& b, std::vector<double>& x,
                           const SolverOptions& opt) {
  const std::size_t n = b.size();
  x.assign(n, 0.0);
  const double bnorm = norm2(b);
  CgResult res;
  if (bnorm == 0.0) return res;  // phi = 0 is the exact solution

  std::vector<double> r = b, z, p, ap;
  prec.apply(r, z);
  p = z;
  double rz = dot(r, z);
  const double target = opt.tol * bnorm;
  for (int it = 0; it < opt.max_iter; ++it) {
    op.apply(p, ap);
    const double pap = dot(p, ap);
    if (!(pap > 0.0))
      throw std::runtime_error("corrector CG: operator lost coercivity (pAp = " +
                               std::to_string(pap) + ")");
    const double alpha = rz / pap;
    for (std::size_t i = 0; i < n; ++i) x[i] += alpha * p[i];
    for (std::size_t i = 0; i < n; ++i) r[i] -= alpha * ap[i];
    res.iterations = it + 1;
    if (norm2(r) <= target) break;
    prec.apply(r, z);
    const double rz_new = dot(r, z);
    const double beta = rz_new / rz;
    rz = rz_new;
    for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
  }
  res.rel_residual = norm2(r) / bnorm;
  return res;
}

}  // namespace

int CorrectorSolution::pair_index(int j, int k) const {
  // pairs (0,1), (0,2), (1,2) for d = 3; single pair (0,1) for d = 2.
  if (j == 0 && k == 1) return 0;
  if (j == 0 && k == 2) return 1;
  if (j == 1 && k == 2) return 2;
  throw std::invalid_argument("pair_index: need j < k");
}

double CorrectorSolution::sigma_entry(int i, int j, int k, std::size_t site) const {
  if (j == k) return 0.0;
  const double sign = j < k ? 1.0 : -1.0;
  const int p = j < k ? pair_index(j, k) : pair_index(k, j);
  return sign * sigma[static_cast<std::size_t>(i)][static_cast<std::size_t>(p)][site];
}

CorrectorSolution solve_corrector(const CoefficientField& coeff, const SolverOptions& opt) {
  if (!(opt.tol > 0.0 && opt.tol <= 1e-6))
    throw std::invalid_argument("solve_corrector: tol must lie in (0, 1e-6]");
  const Grid& g = coeff.grid;
  const int d = coeff.dim;
  const std::size_t n = g.sites();

  EllipticOperator op(coeff);
  SpectralPreconditioner prec(g, op.mean_coefficient());

  CorrectorSolution sol;
  sol.grid = g;
  sol.dim = d;
  sol.phi.resize(static_cast<std::size_t>(d));
  sol.grad.resize(static_cast<std::size_t>(d));
  sol.flux.resize(static_cast<std::size_t>(d));
  sol.residual.resize(static_cast<std::size_t>(d));
  sol.iterations.resize(static_cast<std::size_t>(d));
  sol.abar = Matd(d);

  std::vector<double> b;
  for (int dir = 0; dir < d; ++dir) {
    op.corrector_rhs(dir, b);
    auto& phi = sol.phi[static_cast<std::size_t>(dir)];
    const CgResult cg = preconditioned_cg(op, prec, b, phi, opt);
    sol.iterations[static_cast<std::size_t>(dir)] = cg.iterations;
    subtract_mean(phi);

    // Independent residual recomputation of -div(a(grad phi + e_dir)).
    std::vector<std::vector<double>> q;
    op.flux(phi, dir, q);
    std::vector<double> div_q;
    backward_divergence(g, q, div_q);
    const double bnorm = norm2(b);
    const double rel = bnorm > 0.0 ? norm2(div_q) / bnorm : 0.0;
    sol.residual[static_cast<std::size_t>(dir)] = rel;
    if (rel > 10.0 * opt.tol && opt.throw_on_stall)
      throw std::runtime_error("solve_corrector: direction " + std::to_string(dir) +
                               " did not converge (relative residual " +
                               std::to_string(rel) + " after " +
                               std::to_string(cg.iterations) + " iterations)");

    // Cell average and centered flux.
    for (int i = 0; i < d; ++i) {
      sol.abar(i, dir) = field_mean(q[static_cast<std::size_t>(i)]);
    }
    for (int i = 0; i < d; ++i) {
      auto& qi = q[static_cast<std::size_t>(i)];
      const double mean = sol.abar(i, dir);
      for (std::size_t s = 0; s < n; ++s) qi[s] -= mean;
    }
    sol.flux[static_cast<std::size_t>(dir)] = std::move(q);

    auto& grad = sol.grad[static_cast<std::size_t>(dir)];
    grad.resize(static_cast<std::size_t>(d));
    for (int k = 0; k < d; ++k) forward_gradient(g, phi, k, grad[static_cast<std::size_t>(k)]);
  }
  return sol;
}

void solve_flux_corrector(CorrectorSolution& sol) {
  const Grid& g = sol.grid;
  const int d = sol.dim;
  const std::size_t n = g.sites();
  if (d < 2) throw std::invalid_argument("solve_flux_corrector: needs d >= 2");

  // The flux must be mean-zero per component (exact since abar is the cell
  // average).
  for (int i = 0; i < d; ++i)
    for (int k = 0; k < d; ++k) {
      const double m = field_mean(sol.flux[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)]);
      if (std::abs(m) > 1e-12)
        throw std::runtime_error("solve_flux_corrector: flux component not mean-zero");
    }

  const int npairs = d * (d - 1) / 2;
  sol.sigma.assign(static_cast<std::size_t>(d),
                   std::vector<std::vector<double>>(static_cast<std::size_t>(npairs)));
  std::vector<double> rhs(n), gj(n), gk(n), sjk;
  double max_q = 0.0, max_dev = 0.0;
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j)
      for (int k = j + 1; k < d; ++k) {
        // -Delta sigma_ijk = D_j q_ik - D_k q_ij with forward differences;
        // paired with the backward divergence this closes div sigma_i = q_i
        // exactly in the discrete calculus.
        forward_gradient(g, sol.flux[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)], j, gj);
        forward_gradient(g, sol.flux[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)], k, gk);
        for (std::size_t s = 0; s < n; ++s) rhs[s] = gj[s] - gk[s];
        solve_poisson_spectral(g, rhs, sjk);
        sol.sigma[static_cast<std::size_t>(i)][static_cast<std::size_t>(sol.pair_index(j, k))] = sjk;
      }
    // Verify div sigma_i = q_i (up to the corrector solve residual).
    for (int j = 0; j < d; ++j) {
      std::vector<std::vector<double>> comps(static_cast<std::size_t>(d),
                                             std::vector<double>(n, 0.0));
      for (int k = 0; k < d; ++k)
        if (k != j)
          for (std::size_t s = 0; s < n; ++s)
            comps[static_cast<std::size_t>(k)][s] = sol.sigma_entry(i, j, k, s);
      std::vector<double> div;
      backward_divergence(g, comps, div);
      const auto& q = sol.flux[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      for (std::size_t s = 0; s < n; ++s) {
        max_q = std::max(max_q, std::abs(q[s]));
        max_dev = std::max(max_dev, std::abs(div[s] - q[s]));
      }
    }
  }
  sol.sigma_residual = max_q > 0.0 ? max_dev / max_q : max_dev;
  sol.sigma_filled = true;
}

Matd homogenized_estimate(const CorrectorSolution& sol) { return sol.abar; }

GrowthTable corrector_growth_scan(const CoefficientMap& map, double beta, double C0,
                                  const std::vector<int>& sides, int samples,
                                  std::uint64_t seed, int workers,
                                  const SolverOptions& options, double profile_scale) {
  if (sides.size() < 3)
    throw std::invalid_argument("corrector_growth_scan: need at least 3 sides to fit");
  GrowthTable table;
  table.beta = beta;
  table.dim = map.dim;

  for (std::size_t ni = 0; ni < sides.size(); ++ni) {
    const Grid grid(map.dim, sides[ni]);
    const CovarianceModel model = CovarianceModel::build(
        beta, map.kappa, C0, grid, canonical_profile(beta, map.dim, profile_scale));
    std::vector<double> per_sample(static_cast<std::size_t>(samples), 0.0);
    parallel_for(samples, workers, [&](long s) {
      const FieldSample field = sample_field(model, grid, derive_seed(seed, ni), s);
      const CoefficientField coeff = evaluate_coefficient(map, field);
      const CorrectorSolution sol = solve_corrector(coeff, options);
      double acc = 0.0;
      for (int i = 0; i < map.dim; ++i)
        for (double v : sol.phi[static_cast<std::size_t>(i)]) acc += v * v;
      per_sample[static_cast<std::size_t>(s)] = acc / static_cast<double>(grid.sites());
    });
    double mean = 0.0;
    for (double v : per_sample) mean += v;
    mean /= static_cast<double>(samples);
    double var = 0.0;
    for (double v : per_sample) var += (v - mean) * (v - mean);
    var /= std::max(1.0, static_cast<double>(samples - 1));
    const double se_mean = std::sqrt(var / static_cast<double>(samples));

    GrowthRow row;
    row.side = sides[ni];
    row.mean_phi_l2 = std::sqrt(mean);
    // Delta method for the standard error of the square root.
    row.se = mean > 0.0 ? se_mean / (2.0 * std::sqrt(mean)) : 0.0;
    row.mu_reference = mu_scaling(map.dim, beta, static_cast<double>(sides[ni]));
    table.rows.push_back(row);
  }

  // Log-log fit of the growth exponent and the mu-normalized spread.
  const bool all_zero =
      std::all_of(table.rows.begin(), table.rows.end(),
                  [](const GrowthRow& r) { return r.mean_phi_l2 == 0.0; });
  if (!all_zero) {
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    const double m = static_cast<double>(table.rows.size());
    for (const auto& r : table.rows) {
      const double x = std::log(1.0 + r.side);
      const double y = std::log(r.mean_phi_l2);
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
    table.fit_exponent = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    const double intercept = (sy - table.fit_exponent * sx) / m;
    double rss = 0.0;
    double lo = 1e300, hi = 0.0;
    for (const auto& r : table.rows) {
      const double fit = intercept + table.fit_exponent * std::log(1.0 + r.side);
      const double resid = std::log(r.mean_phi_l2) - fit;
      rss += resid * resid;
      const double ratio = r.mean_phi_l2 / r.mu_reference;
      lo = std::min(lo, ratio);
      hi = std::max(hi, ratio);
    }
    table.fit_residual = std::sqrt(rss / m);
    table.ratio_spread = hi / lo - 1.0;
  }
  return table;
}

}  // namespace homog
