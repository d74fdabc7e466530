#ifndef HOMOG_LATTICE_HPP
#define HOMOG_LATTICE_HPP

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace homog {

constexpr int kMaxDim = 3;

/// Periodic lattice of side N in d dimensions, unit spacing.
/// Sites are indexed row-major: index = ((x0*N + x1)*N + x2)... with axis 0
/// slowest. N must be even and >= 4 (the spectral construction pairs each
/// frequency with its negative, which needs the half-frequency N/2 on-grid).
struct Grid {
  int dim = 2;
  int side = 64;

  Grid() = default;
  Grid(int d, int n) : dim(d), side(n) { validate(); }

  void validate() const {
    if (dim < 1 || dim > kMaxDim)
      throw std::invalid_argument("Grid: dim must be in [1," +
                                  std::to_string(kMaxDim) + "]");
    if (side < 4 || side % 2 != 0)
      throw std::invalid_argument("Grid: side must be even and >= 4");
    // N^d sites of 8 bytes must stay well inside addressable memory.
    double total = 1.0;
    for (int k = 0; k < dim; ++k) total *= side;
    if (total > 1.5e9) throw std::invalid_argument("Grid: N^d too large");
  }

  std::size_t sites() const {
    std::size_t n = 1;
    for (int k = 0; k < dim; ++k) n *= static_cast<std::size_t>(side);
    return n;
  }

  bool operator==(const Grid& o) const {
    return dim == o.dim && side == o.side;
  }

  std::array<int, kMaxDim> coords(std::size_t index) const {
    std::array<int, kMaxDim> x{};
    for (int k = dim - 1; k >= 0; --k) {
      x[k] = static_cast<int>(index % side);
      index /= side;
    }
    return x;
  }

  std::size_t index(const std::array<int, kMaxDim>& x) const {
    std::size_t idx = 0;
    for (int k = 0; k < dim; ++k) idx = idx * side + static_cast<std::size_t>(x[k]);
    return idx;
  }

  int wrap(int c) const {
    c %= side;
    return c < 0 ? c + side : c;
  }

  /// Signed representative of a lag in [-N/2, N/2).
  int signed_wrap(int c) const {
    c = wrap(c);
    return c >= side / 2 ? c - side : c;
  }

  std::size_t shifted_index(std::size_t index, int axis, int step) const {
    auto x = coords(index);
    x[axis] = wrap(x[axis] + step);
    return this->index(x);
  }
};

/// d x d matrix with runtime dimension (d <= kMaxDim), value semantics.
struct Matd {
  int d = 0;
  std::array<double, kMaxDim * kMaxDim> v{};

  Matd() = default;
  explicit Matd(int dim) : d(dim) {}

  static Matd identity(int dim, double scale = 1.0) {
    Matd m(dim);
    for (int i = 0; i < dim; ++i) m(i, i) = scale;
    return m;
  }
  static Matd diag(int dim, const double* entries) {
    Matd m(dim);
    for (int i = 0; i < dim; ++i) m(i, i) = entries[i];
    return m;
  }

  double& operator()(int i, int j) { return v[static_cast<std::size_t>(i * d + j)]; }
  double operator()(int i, int j) const { return v[static_cast<std::size_t>(i * d + j)]; }

  Matd transposed() const {
    Matd m(d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) m(i, j) = (*this)(j, i);
    return m;
  }

  Matd& operator+=(const Matd& o) {
    for (std::size_t k = 0; k < v.size(); ++k) v[k] += o.v[k];
    return *this;
  }
  Matd& operator-=(const Matd& o) {
    for (std::size_t k = 0; k < v.size(); ++k) v[k] -= o.v[k];
    return *this;
  }
  Matd& operator*=(double s) {
    for (double& x : v) x *= s;
    return *this;
  }
  friend Matd operator+(Matd a, const Matd& b) { return a += b; }
  friend Matd operator-(Matd a, const Matd& b) { return a -= b; }
  friend Matd operator*(Matd a, double s) { return a *= s; }

  void apply(const double* x, double* out) const {
    for (int i = 0; i < d; ++i) {
      double s = 0.0;
      for (int j = 0; j < d; ++j) s += (*this)(i, j) * x[j];
      out[i] = s;
    }
  }

  double max_abs_diff(const Matd& o) const {
    double m = 0.0;
    for (std::size_t k = 0; k < v.size(); ++k) {
      double dv = v[k] - o.v[k];
      if (dv < 0) dv = -dv;
      if (dv > m) m = dv;
    }
    return m;
  }
};

/// Forward-difference gradient component k of a scalar lattice field:
/// (D_k u)(x) = u(x + e_k) - u(x).
void forward_gradient(const Grid& g, const std::vector<double>& u, int axis,
                      std::vector<double>& out);

/// Divergence as the negative adjoint of the forward gradient:
/// (div v)(x) = sum_k v_k(x) - v_k(x - e_k). Exact summation by parts:
/// <D_k u, v> = -<u, div restricted to axis k>.
void backward_divergence(const Grid& g, const std::vector<std::vector<double>>& v,
                         std::vector<double>& out);

double field_mean(const std::vector<double>& u);
void subtract_mean(std::vector<double>& u);
double dot(const std::vector<double>& a, const std::vector<double>& b);
double norm2(const std::vector<double>& a);

}  // namespace homog

#endif
