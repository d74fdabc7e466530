#include "homog/coefficient.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

#include "homog/rng.hpp"

namespace homog {

namespace {

double sigmoid(double g) { return 1.0 / (1.0 + std::exp(-g)); }

void check_lambda(double lambda) {
  if (!(lambda > 0.0 && lambda < 1.0))
    throw std::invalid_argument("coefficient family: lambda must lie in (0,1)");
}

}  // namespace

void certify_map(const CoefficientMap& map, int probes, std::uint64_t seed) {
  Rng rng(seed);
  const int d = map.dim;
  std::vector<double> y(static_cast<std::size_t>(map.kappa));
  std::vector<double> xi(static_cast<std::size_t>(d));
  const double fd_step = 6e-6;
  for (int p = 0; p < probes; ++p) {
    for (auto& v : y) v = 3.0 * rng.next_gaussian();
    for (auto& v : xi) v = rng.next_gaussian();
    double xi2 = 0.0;
    for (double v : xi) xi2 += v * v;
    if (xi2 < 1e-12) continue;

    const Matd a = map.eval(y.data());
    double axi[kMaxDim];
    a.apply(xi.data(), axi);
    double axi2 = 0.0, quad = 0.0;
    for (int i = 0; i < d; ++i) {
      axi2 += axi[i] * axi[i];
      quad += xi[static_cast<std::size_t>(i)] * axi[i];
    }
    if (axi2 > xi2 * (1.0 + 1e-12))
      throw std::runtime_error(map.name + ": boundedness |a0 xi| <= |xi| fails");
    if (quad < map.lambda * xi2 * (1.0 - 1e-12))
      throw std::runtime_error(map.name + ": ellipticity xi.a0 xi >= lambda|xi|^2 fails");
    if (map.symmetric && a.max_abs_diff(a.transposed()) != 0.0)
      throw std::runtime_error(map.name + ": claimed symmetric but a0 != a0^T");

    if (!map.has_derivatives()) continue;
    // d1 against central differences of eval, d2 against differences of d1.
    for (int l = 0; l < map.kappa; ++l) {
      std::vector<double> yp = y, ym = y;
      yp[static_cast<std::size_t>(l)] += fd_step;
      ym[static_cast<std::size_t>(l)] -= fd_step;
      const Matd fd = (map.eval(yp.data()) - map.eval(ym.data())) * (0.5 / fd_step);
      const Matd an = map.d1(y.data(), l);
      double scale = 1e-3;
      for (double v : an.v) scale = std::max(scale, std::abs(v));
      if (fd.max_abs_diff(an) > 1e-6 * scale)
        throw std::runtime_error(map.name + ": d1 disagrees with finite differences");
      if (map.d2) {
        for (int mm = 0; mm < map.kappa; ++mm) {
          std::vector<double> zp = y, zm = y;
          zp[static_cast<std::size_t>(mm)] += fd_step;
          zm[static_cast<std::size_t>(mm)] -= fd_step;
          const Matd fd2 =
              (map.d1(zp.data(), l) - map.d1(zm.data(), l)) * (0.5 / fd_step);
          const Matd an2 = map.d2(y.data(), l, mm);
          double s2 = 1e-3;
          for (double v : an2.v) s2 = std::max(s2, std::abs(v));
          if (fd2.max_abs_diff(an2) > 1e-6 * s2)
            throw std::runtime_error(map.name + ": d2 disagrees with finite differences");
        }
      }
    }
  }
}

CoefficientMap family_sigmoid(double lambda, int dim) {
  check_lambda(lambda);
  CoefficientMap m;
  m.name = "sigmoid";
  m.kappa = 1;
  m.dim = dim;
  m.lambda = lambda;
  m.symmetric = true;
  const double span = 1.0 - lambda;
  m.eval = [dim, lambda, span](const double* y) {
    return Matd::identity(dim, lambda + span * sigmoid(y[0]));
  };
  m.d1 = [dim, span](const double* y, int) {
    const double s = sigmoid(y[0]);
    return Matd::identity(dim, span * s * (1.0 - s));
  };
  m.d2 = [dim, span](const double* y, int, int) {
    const double s = sigmoid(y[0]);
    return Matd::identity(dim, span * s * (1.0 - s) * (1.0 - 2.0 * s));
  };
  certify_map(m);
  return m;
}

CoefficientMap family_bump(double lambda, int dim) {
  check_lambda(lambda);
  CoefficientMap m;
  m.name = "bump";
  m.kappa = 1;
  m.dim = dim;
  m.lambda = lambda;
  m.symmetric = true;
  const double span = 1.0 - lambda;
  m.eval = [dim, lambda, span](const double* y) {
    return Matd::identity(dim, lambda + span * std::exp(-y[0] * y[0]));
  };
  m.d1 = [dim, span](const double* y, int) {
    return Matd::identity(dim, -2.0 * y[0] * span * std::exp(-y[0] * y[0]));
  };
  m.d2 = [dim, span](const double* y, int, int) {
    const double g = y[0];
    return Matd::identity(dim, span * std::exp(-g * g) * (4.0 * g * g - 2.0));
  };
  certify_map(m);
  return m;
}

ScalarMap scalar_sigmoid(double lambda) {
  check_lambda(lambda);
  const double span = 1.0 - lambda;
  ScalarMap s;
  s.name = "sigmoid";
  s.f = [lambda, span](double g) { return lambda + span * sigmoid(g); };
  s.df = [span](double g) {
    const double v = sigmoid(g);
    return span * v * (1.0 - v);
  };
  s.ddf = [span](double g) {
    const double v = sigmoid(g);
    return span * v * (1.0 - v) * (1.0 - 2.0 * v);
  };
  return s;
}

ScalarMap scalar_constant(double value) {
  ScalarMap s;
  s.name = "constant";
  s.f = [value](double) { return value; };
  s.df = [](double) { return 0.0; };
  s.ddf = [](double) { return 0.0; };
  return s;
}

CoefficientMap family_diagonal(const std::vector<ScalarMap>& maps, double lambda) {
  check_lambda(lambda);
  const int dim = static_cast<int>(maps.size());
  if (dim < 1 || dim > kMaxDim)
    throw std::invalid_argument("family_diagonal: one scalar map per axis required");
  CoefficientMap m;
  m.name = "diagonal";
  m.kappa = dim;
  m.dim = dim;
  m.lambda = lambda;
  m.symmetric = true;
  auto shared = std::make_shared<std::vector<ScalarMap>>(maps);
  m.eval = [dim, shared](const double* y) {
    Matd a(dim);
    for (int i = 0; i < dim; ++i) a(i, i) = (*shared)[static_cast<std::size_t>(i)].f(y[i]);
    return a;
  };
  m.d1 = [dim, shared](const double* y, int l) {
    Matd a(dim);
    a(l, l) = (*shared)[static_cast<std::size_t>(l)].df(y[l]);
    return a;
  };
  m.d2 = [dim, shared](const double* y, int l, int mm) {
    Matd a(dim);
    if (l == mm) a(l, l) = (*shared)[static_cast<std::size_t>(l)].ddf(y[l]);
    return a;
  };
  // Corollary-diag hypothesis wants every axis map non-constant; a constant
  // axis is legal input but gets flagged.
  Rng rng(0xd1a60000ULL);
  for (int i = 0; i < dim; ++i) {
    const auto& s = maps[static_cast<std::size_t>(i)];
    double lo = 1e300, hi = -1e300;
    for (int p = 0; p < 64; ++p) {
      const double v = s.f(4.0 * rng.next_gaussian());
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (hi - lo < 1e-12)
      m.flags.push_back("axis " + std::to_string(i + 1) + " map '" + s.name +
                        "' is uniformly constant");
  }
  certify_map(m);
  return m;
}

CoefficientMap constant_map(const Matd& value, double lambda) {
  CoefficientMap m;
  m.name = "constant";
  m.kappa = 1;
  m.dim = value.d;
  m.lambda = lambda;
  m.symmetric = value.max_abs_diff(value.transposed()) == 0.0;
  m.eval = [value](const double*) { return value; };
  m.d1 = [value](const double*, int) { return Matd(value.d); };
  m.d2 = [value](const double*, int, int) { return Matd(value.d); };
  certify_map(m);
  return m;
}

CoefficientField CoefficientField::transposed() const {
  CoefficientField t = *this;
  const std::size_t n = grid.sites();
  for (std::size_t s = 0; s < n; ++s) {
    double* b = t.at(s);
    const double* src = at(s);
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j) b[i * dim + j] = src[j * dim + i];
  }
  return t;
}

CoefficientField evaluate_coefficient(const CoefficientMap& map, const FieldSample& field,
                                      const double* shift) {
  if (map.kappa != field.kappa)
    throw std::invalid_argument("evaluate_coefficient: kappa mismatch");
  const Grid& grid = field.grid;
  const std::size_t n = grid.sites();
  const int d = map.dim;

  CoefficientField out;
  out.grid = grid;
  out.dim = d;
  out.symmetric = map.symmetric;
  out.lambda = map.lambda;
  out.provenance = map.name;
  out.a.resize(n * static_cast<std::size_t>(d * d));

  std::vector<double> y(static_cast<std::size_t>(map.kappa));
  for (std::size_t s = 0; s < n; ++s) {
    for (int c = 0; c < map.kappa; ++c)
      y[static_cast<std::size_t>(c)] =
          field.value(c, s) + (shift != nullptr ? shift[c] : 0.0);
    const Matd a = map.eval(y.data());
    double* block = out.at(s);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) block[i * d + j] = a(i, j);
  }

  // Sitewise ellipticity spot check on 1000 random sites and directions.
  Rng rng(derive_seed(field.seed, static_cast<std::uint64_t>(field.sample_index), 0xe11Eu));
  for (int p = 0; p < 1000; ++p) {
    const std::size_t s = rng.next_u64() % n;
    double xi[kMaxDim], axi[kMaxDim];
    double xi2 = 0.0;
    for (int i = 0; i < d; ++i) {
      xi[i] = rng.next_gaussian();
      xi2 += xi[i] * xi[i];
    }
    if (xi2 < 1e-12) continue;
    const double* block = out.at(s);
    double quad = 0.0, axi2 = 0.0;
    for (int i = 0; i < d; ++i) {
      double acc = 0.0;
      for (int j = 0; j < d; ++j) acc += block[i * d + j] * xi[j];
      axi[i] = acc;
      axi2 += acc * acc;
      quad += xi[i] * acc;
    }
    if (axi2 > xi2 * (1.0 + 1e-12) || quad < map.lambda * xi2 * (1.0 - 1e-12))
      throw std::runtime_error(
          "evaluate_coefficient: ellipticity violated at a realized field value");
  }
  return out;
}

CoefficientField make_constant_field(const Grid& grid, const Matd& value) {
  CoefficientField out;
  out.grid = grid;
  out.dim = value.d;
  out.symmetric = value.max_abs_diff(value.transposed()) == 0.0;
  double lam = 1e300;
  for (int i = 0; i < value.d; ++i) lam = std::min(lam, value(i, i));
  out.lambda = lam;
  out.provenance = "constant";
  const std::size_t n = grid.sites();
  const int dd = value.d * value.d;
  out.a.resize(n * static_cast<std::size_t>(dd));
  for (std::size_t s = 0; s < n; ++s)
    for (int k = 0; k < dd; ++k) out.a[s * static_cast<std::size_t>(dd) + static_cast<std::size_t>(k)] = value.v[static_cast<std::size_t>(k)];
  return out;
}

CoefficientField make_laminate_field(const Grid& grid, int axis, double value_hi,
                                     double value_lo, int stripe_period) {
  if (stripe_period == 0) stripe_period = grid.side;
  if (stripe_period < 2 || stripe_period % 2 != 0 || grid.side % stripe_period != 0)
    throw std::invalid_argument("make_laminate_field: stripe period must be even and divide N");
  CoefficientField out;
  out.grid = grid;
  out.dim = grid.dim;
  out.symmetric = true;
  out.lambda = std::min(value_hi, value_lo);
  out.provenance = "laminate";
  const std::size_t n = grid.sites();
  const int d = grid.dim;
  out.a.assign(n * static_cast<std::size_t>(d * d), 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    const auto x = grid.coords(s);
    const bool hi = (x[axis] % stripe_period) < stripe_period / 2;
    const double v = hi ? value_hi : value_lo;
    double* block = out.at(s);
    for (int i = 0; i < d; ++i) block[i * d + i] = v;
  }
  return out;
}

CoefficientField make_checkerboard_field(const Grid& grid, double value_even,
                                         double value_odd, int cell) {
  if (cell < 1 || grid.side % (2 * cell) != 0)
    throw std::invalid_argument("make_checkerboard_field: 2*cell must divide N");
  CoefficientField out;
  out.grid = grid;
  out.dim = grid.dim;
  out.symmetric = true;
  out.lambda = std::min(value_even, value_odd);
  out.provenance = "checkerboard";
  const std::size_t n = grid.sites();
  const int d = grid.dim;
  out.a.assign(n * static_cast<std::size_t>(d * d), 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    const auto x = grid.coords(s);
    int parity = 0;
    for (int k = 0; k < d; ++k) parity += x[k] / cell;
    const double v = (parity % 2 == 0) ? value_even : value_odd;
    double* block = out.at(s);
    for (int i = 0; i < d; ++i) block[i * d + i] = v;
  }
  return out;
}

}  // namespace homog
