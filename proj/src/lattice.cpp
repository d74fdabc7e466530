#include "homog/lattice.hpp"

#include <cmath>

namespace homog {

namespace {
std::size_t axis_stride(const Grid& g, int axis) {
  std::size_t s = 1;
  for (int k = g.dim - 1; k > axis; --k) s *= static_cast<std::size_t>(g.side);
  return s;
}
}  // namespace

void forward_gradient(const Grid& g, const std::vector<double>& u, int axis,
                      std::vector<double>& out) {
  const std::size_t n = g.sites();
  out.resize(n);
  const std::size_t stride = axis_stride(g, axis);
  const std::size_t line = stride * static_cast<std::size_t>(g.side);
  for (std::size_t base = 0; base < n; base += line) {
    for (std::size_t off = 0; off < stride; ++off) {
      const std::size_t first = base + off;
      const std::size_t last = first + line - stride;
      for (std::size_t i = first; i < last; i += stride) out[i] = u[i + stride] - u[i];
      out[last] = u[first] - u[last];
    }
  }
}

void backward_divergence(const Grid& g, const std::vector<std::vector<double>>& v,
                         std::vector<double>& out) {
  const std::size_t n = g.sites();
  out.assign(n, 0.0);
  for (int axis = 0; axis < g.dim; ++axis) {
    const std::vector<double>& vk = v[static_cast<std::size_t>(axis)];
    const std::size_t stride = axis_stride(g, axis);
    const std::size_t line = stride * static_cast<std::size_t>(g.side);
    for (std::size_t base = 0; base < n; base += line) {
      for (std::size_t off = 0; off < stride; ++off) {
        const std::size_t first = base + off;
        const std::size_t last = first + line - stride;
        out[first] += vk[first] - vk[last];
        for (std::size_t i = first + stride; i <= last; i += stride)
          out[i] += vk[i] - vk[i - stride];
      }
    }
  }
}

double field_mean(const std::vector<double>& u) {
  double s = 0.0;
  for (double x : u) s += x;
  return s / static_cast<double>(u.size());
}

void subtract_mean(std::vector<double>& u) {
  const double m = field_mean(u);
  for (double& x : u) x -= m;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

}  // namespace homog
