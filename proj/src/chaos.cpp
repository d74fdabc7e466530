#include "homog/chaos.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace homog {

double multi_factorial(const MultiIndex& a) {
  double f = 1.0;
  for (int v : a)
    for (int k = 2; k <= v; ++k) f *= k;
  return f;
}

FiniteGaussianModel make_finite_model(int n, const std::vector<double>& cov) {
  if (n < 1 || n > kMaxChaosVars)
    throw std::invalid_argument("make_finite_model: n must lie in [1,8]");
  if (cov.size() != static_cast<std::size_t>(n) * static_cast<std::size_t>(n))
    throw std::invalid_argument("make_finite_model: cov must be n x n");
  Eigen::MatrixXd C(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) C(i, j) = cov[static_cast<std::size_t>(i * n + j)];
  if ((C - C.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, C.cwiseAbs().maxCoeff()))
    throw std::invalid_argument("make_finite_model: cov must be symmetric");
  C = 0.5 * (C + C.transpose());

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C);
  const double emax = std::max(1.0, es.eigenvalues().maxCoeff());
  std::vector<int> keep;
  for (int k = 0; k < n; ++k) {
    const double ev = es.eigenvalues()(k);
    if (ev < -1e-12 * emax)
      throw std::invalid_argument("make_finite_model: cov is not positive semidefinite");
    if (ev > 1e-12 * emax) keep.push_back(k);
  }
  if (keep.empty()) throw std::invalid_argument("make_finite_model: cov is identically zero");

  FiniteGaussianModel m;
  m.n = n;
  m.rank = static_cast<int>(keep.size());
  m.cov = cov;
  m.whitening.assign(static_cast<std::size_t>(n) * static_cast<std::size_t>(m.rank), 0.0);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < m.rank; ++k)
      m.whitening[static_cast<std::size_t>(i * m.rank + k)] =
          es.eigenvectors()(i, keep[static_cast<std::size_t>(k)]) *
          std::sqrt(es.eigenvalues()(keep[static_cast<std::size_t>(k)]));

  // The factor must reproduce cov to 1e-12.
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int k = 0; k < m.rank; ++k) s += m.whiten_at(i, k) * m.whiten_at(j, k);
      if (std::abs(s - m.cov_at(i, j)) > 1e-12 * emax)
        throw std::runtime_error("make_finite_model: whitening does not reproduce cov");
    }
  return m;
}

double ChaosExpansion::coeff(const MultiIndex& a) const {
  auto it = coeffs_.find(a);
  return it == coeffs_.end() ? 0.0 : it->second;
}

void ChaosExpansion::set_coeff(const MultiIndex& a, double v) {
  if (v == 0.0)
    coeffs_.erase(a);
  else
    coeffs_[a] = v;
}

void ChaosExpansion::add_coeff(const MultiIndex& a, double v) {
  auto it = coeffs_.find(a);
  if (it == coeffs_.end()) {
    if (v != 0.0) coeffs_[a] = v;
  } else {
    it->second += v;
    if (it->second == 0.0) coeffs_.erase(it);
  }
}

int ChaosExpansion::max_degree() const {
  int d = 0;
  for (const auto& [a, c] : coeffs_) d = std::max(d, multi_degree(a));
  return d;
}

double ChaosExpansion::mean() const { return coeff(MultiIndex{}); }

double ChaosExpansion::inner(const ChaosExpansion& other) const {
  const auto& small = coeffs_.size() <= other.coeffs_.size() ? *this : other;
  const auto& big = coeffs_.size() <= other.coeffs_.size() ? other : *this;
  double acc = 0.0;
  for (const auto& [a, c] : small.coeffs_) {
    const double oc = big.coeff(a);
    if (oc != 0.0) acc += multi_factorial(a) * c * oc;
  }
  return acc;
}

double ChaosExpansion::variance() const {
  double acc = 0.0;
  for (const auto& [a, c] : coeffs_) {
    if (multi_degree(a) == 0) continue;
    acc += multi_factorial(a) * c * c;
  }
  return acc;
}

ChaosExpansion ChaosExpansion::scaled(double s) const {
  ChaosExpansion out(vars_);
  if (s == 0.0) return out;
  for (const auto& [a, c] : coeffs_) out.coeffs_[a] = s * c;
  return out;
}

ChaosExpansion ChaosExpansion::plus(const ChaosExpansion& other, double weight) const {
  ChaosExpansion out = *this;
  out.vars_ = std::max(vars_, other.vars_);
  for (const auto& [a, c] : other.coeffs_) out.add_coeff(a, weight * c);
  return out;
}

namespace {
double binomial(int n, int k) {
  double b = 1.0;
  for (int i = 1; i <= k; ++i) b = b * (n - k + i) / i;
  return b;
}

/// He_a He_b = sum_s C(a,s) C(b,s) s! He_{a+b-2s}.
double linearization(int a, int b, int s) {
  double f = 1.0;
  for (int i = 2; i <= s; ++i) f *= i;
  return binomial(a, s) * binomial(b, s) * f;
}
}  // namespace

ChaosExpansion ChaosExpansion::product(const ChaosExpansion& other) const {
  if (vars_ != other.vars_)
    throw std::invalid_argument("ChaosExpansion::product: variable count mismatch");
  ChaosExpansion out(vars_);
  for (const auto& [a, ca] : coeffs_) {
    for (const auto& [b, cb] : other.coeffs_) {
      // Tensorized linearization over the axes.
      MultiIndex s{};
      for (;;) {
        double w = ca * cb;
        MultiIndex g{};
        for (int k = 0; k < vars_; ++k) {
          w *= linearization(a[k], b[k], s[k]);
          g[k] = a[k] + b[k] - 2 * s[k];
        }
        out.add_coeff(g, w);
        int k = vars_ - 1;
        for (; k >= 0; --k) {
          if (++s[k] <= std::min(a[k], b[k])) break;
          s[k] = 0;
        }
        if (k < 0) break;
      }
    }
  }
  return out;
}

ChaosExpansion ChaosExpansion::derivative(int k) const {
  ChaosExpansion out(vars_);
  for (const auto& [a, c] : coeffs_) {
    if (a[k] == 0) continue;
    MultiIndex b = a;
    b[k] -= 1;
    out.add_coeff(b, c * a[k]);
  }
  return out;
}

ChaosExpansion ChaosExpansion::ou_apply() const {
  ChaosExpansion out(vars_);
  for (const auto& [a, c] : coeffs_) {
    const int deg = multi_degree(a);
    if (deg != 0) out.coeffs_[a] = c * deg;
  }
  return out;
}

ChaosExpansion ChaosExpansion::ou_resolvent(int shift) const {
  if (shift != 1 && shift != 2)
    throw std::invalid_argument("ou_resolvent: shift must be 1 or 2");
  ChaosExpansion out(vars_);
  for (const auto& [a, c] : coeffs_)
    out.coeffs_[a] = c / static_cast<double>(shift + multi_degree(a));
  return out;
}

double ChaosExpansion::evaluate(const double* y) const {
  double acc = 0.0;
  for (const auto& [a, c] : coeffs_) {
    double term = c;
    for (int k = 0; k < vars_; ++k)
      if (a[k] > 0) term *= hermite_value(a[k], y[k]);
    acc += term;
  }
  return acc;
}

double ChaosExpansion::max_abs_coeff_diff(const ChaosExpansion& other) const {
  double m = 0.0;
  for (const auto& [a, c] : coeffs_) m = std::max(m, std::abs(c - other.coeff(a)));
  for (const auto& [a, c] : other.coeffs_) m = std::max(m, std::abs(c - coeff(a)));
  return m;
}

double hermite_value(int k, double x) {
  if (k == 0) return 1.0;
  double prev = 1.0, cur = x;
  for (int m = 1; m < k; ++m) {
    const double next = x * cur - m * prev;
    prev = cur;
    cur = next;
  }
  return cur;
}

GaussHermiteRule gauss_hermite(int points) {
  if (points < 1) throw std::invalid_argument("gauss_hermite: need at least one point");
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(points, points);
  for (int i = 0; i + 1 < points; ++i) {
    const double b = std::sqrt(static_cast<double>(i + 1));
    J(i, i + 1) = b;
    J(i + 1, i) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  GaussHermiteRule rule;
  rule.nodes.resize(static_cast<std::size_t>(points));
  rule.weights.resize(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i) {
    rule.nodes[static_cast<std::size_t>(i)] = es.eigenvalues()(i);
    const double v0 = es.eigenvectors()(0, i);
    rule.weights[static_cast<std::size_t>(i)] = v0 * v0;
  }
  return rule;
}

namespace {
void enumerate_multi_indices(int vars, int max_total, std::vector<MultiIndex>& out) {
  MultiIndex a{};
  out.clear();
  for (;;) {
    out.push_back(a);
    int k = vars - 1;
    for (; k >= 0; --k) {
      a[k] += 1;
      if (multi_degree(a) <= max_total) break;
      a[k] = 0;
    }
    if (k < 0) break;
  }
}
}  // namespace

ExpandResult hermite_expand(const std::function<double(const double*)>& g,
                            const FiniteGaussianModel& model, int p_max,
                            int nodes_per_axis) {
  if (p_max < 0 || p_max > 20)
    throw std::invalid_argument("hermite_expand: p_max must lie in [0, 20]");
  if (nodes_per_axis == 0) nodes_per_axis = p_max + 2;
  if (nodes_per_axis < p_max + 1)
    throw std::invalid_argument(
        "hermite_expand: quadrature needs at least p_max + 1 nodes per axis");
  const int r = model.rank;
  double total_nodes = 1.0;
  for (int k = 0; k < r; ++k) total_nodes *= nodes_per_axis;
  if (total_nodes > 5e7)
    throw std::invalid_argument("hermite_expand: tensor quadrature too large");

  const GaussHermiteRule rule = gauss_hermite(nodes_per_axis);
  // Hermite values per (node, degree).
  std::vector<std::vector<double>> he(static_cast<std::size_t>(nodes_per_axis),
                                      std::vector<double>(static_cast<std::size_t>(p_max + 1)));
  for (int i = 0; i < nodes_per_axis; ++i)
    for (int k = 0; k <= p_max; ++k)
      he[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] =
          hermite_value(k, rule.nodes[static_cast<std::size_t>(i)]);

  std::vector<MultiIndex> alphas;
  enumerate_multi_indices(r, p_max, alphas);
  std::vector<double> acc(alphas.size(), 0.0);
  double quad_l2 = 0.0;

  std::array<int, kMaxChaosVars> node{};
  std::array<double, kMaxChaosVars> y{};
  std::array<double, kMaxChaosVars> u{};
  for (;;) {
    double w = 1.0;
    for (int k = 0; k < r; ++k) {
      w *= rule.weights[static_cast<std::size_t>(node[k])];
      y[static_cast<std::size_t>(k)] = rule.nodes[static_cast<std::size_t>(node[k])];
    }
    // Original coordinates u = A y.
    for (int i = 0; i < model.n; ++i) {
      double s = 0.0;
      for (int k = 0; k < r; ++k) s += model.whiten_at(i, k) * y[static_cast<std::size_t>(k)];
      u[static_cast<std::size_t>(i)] = s;
    }
    const double val = g(u.data());
    quad_l2 += w * val * val;
    const double wval = w * val;
    for (std::size_t ai = 0; ai < alphas.size(); ++ai) {
      double prod = wval;
      const MultiIndex& a = alphas[ai];
      for (int k = 0; k < r; ++k)
        if (a[k] > 0) prod *= he[static_cast<std::size_t>(node[k])][static_cast<std::size_t>(a[k])];
      acc[ai] += prod;
    }
    int k = r - 1;
    for (; k >= 0; --k) {
      if (++node[k] < nodes_per_axis) break;
      node[k] = 0;
    }
    if (k < 0) break;
  }

  ExpandResult res;
  res.expansion = ChaosExpansion(r);
  for (std::size_t ai = 0; ai < alphas.size(); ++ai) {
    const double c = acc[ai] / multi_factorial(alphas[ai]);
    if (std::abs(c) > 1e-14) res.expansion.set_coeff(alphas[ai], c);
  }
  res.quadrature_l2 = quad_l2;
  res.parseval_l2 = res.expansion.l2_norm_squared();
  res.truncation_l2 = std::sqrt(std::max(0.0, res.quadrature_l2 - res.parseval_l2));
  return res;
}

std::vector<ChaosExpansion> whitened_gradient(const ChaosExpansion& x) {
  std::vector<ChaosExpansion> out;
  out.reserve(static_cast<std::size_t>(x.vars()));
  for (int k = 0; k < x.vars(); ++k) out.push_back(x.derivative(k));
  return out;
}

std::vector<ChaosExpansion> malliavin_derivative(const ChaosExpansion& x,
                                                 const FiniteGaussianModel& model) {
  if (model.rank != model.n)
    throw std::invalid_argument(
        "malliavin_derivative: per-slot components need an invertible Gram matrix");
  if (x.vars() != model.rank)
    throw std::invalid_argument("malliavin_derivative: expansion/model mismatch");
  const std::vector<ChaosExpansion> grad = whitened_gradient(x);
  // DX = sum_i zeta_i w_i with A^T w = grad_y f.
  Eigen::MatrixXd A(model.n, model.n);
  for (int i = 0; i < model.n; ++i)
    for (int k = 0; k < model.n; ++k) A(i, k) = model.whiten_at(i, k);
  Eigen::MatrixXd Minv = A.transpose().inverse();
  std::vector<ChaosExpansion> out(static_cast<std::size_t>(model.n), ChaosExpansion(x.vars()));
  for (int i = 0; i < model.n; ++i) {
    ChaosExpansion acc(x.vars());
    for (int k = 0; k < model.n; ++k)
      acc = acc.plus(grad[static_cast<std::size_t>(k)], Minv(k, i));
    out[static_cast<std::size_t>(i)] = acc;
  }
  return out;
}

HsResult hs_covariance(const ChaosExpansion& x, const ChaosExpansion& y,
                       const FiniteGaussianModel& model) {
  if (x.vars() != model.rank || y.vars() != model.rank)
    throw std::invalid_argument("hs_covariance: expansion/model mismatch");
  HsResult res;
  // <DX, (1+L)^{-1} DY>_H in whitened coordinates is a plain dot product
  // over the slots (the Gram pairing is baked into the whitening).
  for (int k = 0; k < model.rank; ++k) {
    const ChaosExpansion dx = x.derivative(k);
    const ChaosExpansion dy = y.derivative(k).ou_resolvent(1);
    res.hs_value += dx.inner(dy);
  }
  res.direct_cov = x.inner(y) - x.mean() * y.mean();
  return res;
}

PoincareFirst poincare_order1(const ChaosExpansion& x) {
  PoincareFirst res;
  res.variance = x.variance();
  for (int k = 0; k < x.vars(); ++k) {
    const ChaosExpansion dx = x.derivative(k);
    res.dirichlet += dx.l2_norm_squared();
  }
  res.holds = res.variance <= res.dirichlet + 1e-10;
  return res;
}

PoincareSecond poincare_order2(const ChaosExpansion& x, int quad_points) {
  const double var = x.variance();
  if (!(var > 0.0))
    throw std::invalid_argument("poincare_order2: degenerate functional (zero variance)");
  ChaosExpansion z = x;
  z.add_coeff(MultiIndex{}, -x.mean());
  z = z.scaled(1.0 / std::sqrt(var));
  const int r = z.vars();

  // Middle bound: 2 Var[<DZ, (1+L)^{-1} DZ>]^{1/2}, exact on coefficients.
  ChaosExpansion v(r);
  for (int k = 0; k < r; ++k) {
    const ChaosExpansion dz = z.derivative(k);
    v = v.plus(dz.product(dz.ou_resolvent(1)));
  }
  PoincareSecond res;
  res.middle = 2.0 * std::sqrt(std::max(0.0, v.variance()));

  // Outer bound by tensor quadrature; ||D^2 Z||_op is the spectral norm of
  // the whitened Hessian, which is exactly the Gram-geometry operator norm
  // because D^2 Z lives in the span of the slots.
  const int p = z.max_degree();
  if (quad_points == 0) quad_points = std::max(2 * p + 2, 8);
  double total = 1.0;
  for (int k = 0; k < r; ++k) total *= quad_points;
  if (total > 5e7) throw std::invalid_argument("poincare_order2: quadrature too large");
  const GaussHermiteRule rule = gauss_hermite(quad_points);

  std::vector<std::vector<ChaosExpansion>> hess(static_cast<std::size_t>(r));
  std::vector<ChaosExpansion> grad = whitened_gradient(z);
  for (int k = 0; k < r; ++k) {
    hess[static_cast<std::size_t>(k)].resize(static_cast<std::size_t>(r));
    for (int l = 0; l < r; ++l)
      hess[static_cast<std::size_t>(k)][static_cast<std::size_t>(l)] =
          grad[static_cast<std::size_t>(k)].derivative(l);
  }

  Eigen::MatrixXd H(r, r);
  std::array<int, kMaxChaosVars> node{};
  std::array<double, kMaxChaosVars> y{};
  double e_op4 = 0.0, e_d4 = 0.0;
  for (;;) {
    double w = 1.0;
    for (int k = 0; k < r; ++k) {
      w *= rule.weights[static_cast<std::size_t>(node[k])];
      y[static_cast<std::size_t>(k)] = rule.nodes[static_cast<std::size_t>(node[k])];
    }
    double g2 = 0.0;
    for (int k = 0; k < r; ++k) {
      const double gk = grad[static_cast<std::size_t>(k)].evaluate(y.data());
      g2 += gk * gk;
    }
    e_d4 += w * g2 * g2;
    for (int k = 0; k < r; ++k)
      for (int l = 0; l < r; ++l)
        H(k, l) = hess[static_cast<std::size_t>(k)][static_cast<std::size_t>(l)].evaluate(y.data());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (H + H.transpose()));
    const double op = es.eigenvalues().cwiseAbs().maxCoeff();
    e_op4 += w * op * op * op * op;

    int k = r - 1;
    for (; k >= 0; --k) {
      if (++node[k] < quad_points) break;
      node[k] = 0;
    }
    if (k < 0) break;
  }
  res.outer = 3.0 * std::pow(e_op4, 0.25) * std::pow(e_d4, 0.25);
  res.chain_holds = res.middle <= res.outer * (1.0 + 1e-8);
  return res;
}

namespace {

struct Monomial {
  std::array<int, kMaxChaosVars> powers{};
  double coeff = 0.0;
};

double eval_monomials(const std::vector<Monomial>& terms, const double* u, int n) {
  double acc = 0.0;
  for (const auto& t : terms) {
    double v = t.coeff;
    for (int i = 0; i < n; ++i)
      for (int p = 0; p < t.powers[static_cast<std::size_t>(i)]; ++p) v *= u[i];
    acc += v;
  }
  return acc;
}

}  // namespace

OracleSuiteResult run_malliavin_suite(std::uint64_t seed, int trials, double tolerance) {
  OracleSuiteResult out;
  std::uint64_t state = seed ^ 0x9e3779b97f4a7c15ULL;
  auto next = [&state]() {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  auto uniform = [&next]() { return (static_cast<double>(next() >> 11) + 0.5) * 0x1p-53; };
  auto gauss = [&uniform]() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(6.283185307179586476925286766559 * u2);
  };

  auto record = [&](const std::string& name, std::uint64_t trial, double lhs, double rhs) {
    OracleCheck c;
    c.identity = name;
    c.trial_seed = trial;
    c.lhs = lhs;
    c.rhs = rhs;
    c.abs_gap = std::abs(lhs - rhs);
    c.rel_gap = c.abs_gap / (1.0 + std::max(std::abs(lhs), std::abs(rhs)));
    out.max_rel_gap = std::max(out.max_rel_gap, c.rel_gap);
    out.checks.push_back(std::move(c));
  };

  for (int trial = 0; trial < trials; ++trial) {
    const std::uint64_t trial_seed = seed + static_cast<std::uint64_t>(trial);
    const int n = 1 + static_cast<int>(next() % 4);
    const int degree = 1 + static_cast<int>(next() % 6);

    // Random PSD Gram matrix cov = B B^T with a variance floor.
    std::vector<double> B(static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
    for (auto& v : B) v = gauss();
    std::vector<double> cov(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double s = (i == j) ? 0.05 : 0.0;
        for (int k = 0; k < n; ++k)
          s += B[static_cast<std::size_t>(i * n + k)] * B[static_cast<std::size_t>(j * n + k)];
        cov[static_cast<std::size_t>(i * n + j)] = s;
      }
    const FiniteGaussianModel model = make_finite_model(n, cov);

    // Two random sparse polynomials over the original slots.
    auto random_poly = [&](int max_degree) {
      std::vector<Monomial> terms;
      const int count = 2 + static_cast<int>(next() % 6);
      for (int t = 0; t < count; ++t) {
        Monomial m;
        int budget = max_degree;
        for (int i = 0; i < n; ++i) {
          const int p = static_cast<int>(next() % static_cast<std::uint64_t>(budget + 1));
          m.powers[static_cast<std::size_t>(i)] = p;
          budget -= p;
        }
        m.coeff = gauss();
        terms.push_back(m);
      }
      return terms;
    };
    const std::vector<Monomial> gx = random_poly(degree);
    const std::vector<Monomial> gy = random_poly(degree);

    const int p_max = degree;
    const int nodes = 2 * degree + 2;  // exact through degree 2p for products
    const ExpandResult ex = hermite_expand(
        [&](const double* u) { return eval_monomials(gx, u, n); }, model, p_max, nodes);
    const ExpandResult ey = hermite_expand(
        [&](const double* u) { return eval_monomials(gy, u, n); }, model, p_max, nodes);

    // Helffer-Sjostrand against the coefficient covariance and against an
    // independent quadrature of E[XY] - E[X]E[Y].
    const HsResult hs = hs_covariance(ex.expansion, ey.expansion, model);
    record("helffer-sjostrand", trial_seed, hs.hs_value, hs.direct_cov);
    {
      const GaussHermiteRule rule = gauss_hermite(nodes);
      std::array<int, kMaxChaosVars> node{};
      std::array<double, kMaxChaosVars> y{}, u{};
      double exy = 0.0, exm = 0.0, eym = 0.0;
      const int r = model.rank;
      for (;;) {
        double w = 1.0;
        for (int k = 0; k < r; ++k) {
          w *= rule.weights[static_cast<std::size_t>(node[k])];
          y[static_cast<std::size_t>(k)] = rule.nodes[static_cast<std::size_t>(node[k])];
        }
        for (int i = 0; i < n; ++i) {
          double s = 0.0;
          for (int k = 0; k < r; ++k) s += model.whiten_at(i, k) * y[static_cast<std::size_t>(k)];
          u[static_cast<std::size_t>(i)] = s;
        }
        const double vx = eval_monomials(gx, u.data(), n);
        const double vy = eval_monomials(gy, u.data(), n);
        exy += w * vx * vy;
        exm += w * vx;
        eym += w * vy;
        int k = r - 1;
        for (; k >= 0; --k) {
          if (++node[k] < nodes) break;
          node[k] = 0;
        }
        if (k < 0) break;
      }
      record("hs-vs-quadrature", trial_seed, hs.hs_value, exy - exm * eym);
    }

    // Commutation D L = (1 + L) D, coefficientwise per whitened slot.
    {
      const ChaosExpansion lx = ex.expansion.ou_apply();
      double max_diff = 0.0, scale = 1.0;
      for (int k = 0; k < model.rank; ++k) {
        const ChaosExpansion lhs = lx.derivative(k);
        const ChaosExpansion dx = ex.expansion.derivative(k);
        const ChaosExpansion rhs = dx.ou_apply().plus(dx);
        max_diff = std::max(max_diff, lhs.max_abs_coeff_diff(rhs));
        for (const auto& [a, c] : rhs.coeffs()) scale = std::max(scale, std::abs(c));
      }
      record("commutation-DL", trial_seed, max_diff / scale, 0.0);
    }

    // Mean preservation of (1+L)^{-1}.
    record("resolvent-mean", trial_seed, ex.expansion.ou_resolvent(1).mean(),
           ex.expansion.mean());

    // Poincare inequalities.
    const PoincareFirst p1 = poincare_order1(ex.expansion);
    if (!p1.holds) ++out.poincare1_failures;
    record("poincare-1-slack", trial_seed,
           std::max(0.0, p1.variance - p1.dirichlet) / (1.0 + p1.dirichlet), 0.0);
    if (ex.expansion.variance() > 1e-10) {
      const PoincareSecond p2 = poincare_order2(ex.expansion);
      if (!p2.chain_holds) ++out.poincare2_failures;
      record("poincare-2-slack", trial_seed,
             std::max(0.0, p2.middle - p2.outer) / (1.0 + p2.outer), 0.0);
    }
  }
  out.pass = out.max_rel_gap < tolerance && out.poincare1_failures == 0 &&
             out.poincare2_failures == 0;
  return out;
}

}  // namespace homog
