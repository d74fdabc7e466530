#include "homog/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace homog {

double mean_of(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

double variance_of(const std::vector<double>& x) {
  if (x.size() < 2) throw std::invalid_argument("variance_of: need at least 2 samples");
  const double m = mean_of(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

double covariance_of(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("covariance_of: need two equal-length samples");
  const double mx = mean_of(x), my = mean_of(y);
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - mx) * (y[i] - my);
  return s / static_cast<double>(x.size() - 1);
}

double se_of_mean(const std::vector<double>& x) {
  return std::sqrt(variance_of(x) / static_cast<double>(x.size()));
}

namespace {
double jackknife_se(const std::vector<double>& leave_one_out) {
  const std::size_t m = leave_one_out.size();
  const double mean = mean_of(leave_one_out);
  double s = 0.0;
  for (double v : leave_one_out) s += (v - mean) * (v - mean);
  return std::sqrt(s * static_cast<double>(m - 1) / static_cast<double>(m));
}
}  // namespace

double jackknife_se_variance(const std::vector<double>& x) {
  const std::size_t m = x.size();
  if (m < 3) throw std::invalid_argument("jackknife_se_variance: need at least 3 samples");
  double s1 = 0.0, s2 = 0.0;
  for (double v : x) {
    s1 += v;
    s2 += v * v;
  }
  std::vector<double> loo(m);
  const double mm1 = static_cast<double>(m - 1);
  for (std::size_t k = 0; k < m; ++k) {
    const double t1 = s1 - x[k];
    const double t2 = s2 - x[k] * x[k];
    const double mu = t1 / mm1;
    loo[k] = (t2 - mm1 * mu * mu) / (mm1 - 1.0);
  }
  return jackknife_se(loo);
}

double jackknife_se_covariance(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t m = x.size();
  if (m < 3 || y.size() != m)
    throw std::invalid_argument("jackknife_se_covariance: need two equal samples, size >= 3");
  double sx = 0.0, sy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    sx += x[i];
    sy += y[i];
    sxy += x[i] * y[i];
  }
  std::vector<double> loo(m);
  const double mm1 = static_cast<double>(m - 1);
  for (std::size_t k = 0; k < m; ++k) {
    const double tx = sx - x[k];
    const double ty = sy - y[k];
    const double txy = sxy - x[k] * y[k];
    loo[k] = (txy - tx * ty / mm1) / (mm1 - 1.0);
  }
  return jackknife_se(loo);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x * 0.70710678118654752440); }

double normal_quantile(double p) {
  // Wichura, Algorithm AS241 (PPND16).
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("normal_quantile: p in (0,1)");
  const double q = p - 0.5;
  double r;
  if (std::abs(q) <= 0.425) {
    r = 0.180625 - q * q;
    return q *
           (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r +
               1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
             1.3314166789178437745e2) * r + 3.3871328727963666080e0) /
           (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r +
               5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
             4.2313330701600911252e1) * r + 1.0);
  }
  r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double v;
  if (r <= 5.0) {
    r -= 1.6;
    v = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
              2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
            3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
          4.63033784615654529590e0) * r + 1.42343711074968357734e0) /
        (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
              1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
            6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
          2.05319162663775882187e0) * r + 1.0);
  } else {
    r -= 5.0;
    v = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
              1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
            2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
          5.46378491116411436990e0) * r + 6.65790464350110377720e0) /
        (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
              1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
            1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
          5.99832206555887937690e-1) * r + 1.0);
  }
  return q < 0.0 ? -v : v;
}

double w1_to_standard_normal(std::vector<double> samples) {
  if (samples.size() < 2) throw std::invalid_argument("w1: need samples");
  std::sort(samples.begin(), samples.end());
  const double m = static_cast<double>(samples.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double p = (static_cast<double>(i) + 0.5) / m;
    acc += std::abs(samples[i] - normal_quantile(p));
  }
  return acc / m;
}

double ks_to_standard_normal(std::vector<double> samples) {
  if (samples.size() < 2) throw std::invalid_argument("ks: need samples");
  std::sort(samples.begin(), samples.end());
  const double m = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double cdf = normal_cdf(samples[i]);
    d = std::max(d, std::abs(cdf - static_cast<double>(i) / m));
    d = std::max(d, std::abs(static_cast<double>(i + 1) / m - cdf));
  }
  return d;
}

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y,
                 const std::vector<double>& sigma) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("fit_line: need two equal-length vectors, size >= 2");
  std::vector<double> w(x.size(), 1.0);
  if (!sigma.empty()) {
    if (sigma.size() != x.size()) throw std::invalid_argument("fit_line: sigma size mismatch");
    for (std::size_t i = 0; i < x.size(); ++i)
      w[i] = sigma[i] > 0.0 ? 1.0 / (sigma[i] * sigma[i]) : 1.0;
  }
  double sw = 0.0, swx = 0.0, swy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sw += w[i];
    swx += w[i] * x[i];
    swy += w[i] * y[i];
  }
  const double xbar = swx / sw, ybar = swy / sw;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += w[i] * (x[i] - xbar) * (x[i] - xbar);
    sxy += w[i] * (x[i] - xbar) * (y[i] - ybar);
  }
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = ybar - f.slope * xbar;
  f.slope_se = std::sqrt(1.0 / sxx);
  double rss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (f.intercept + f.slope * x[i]);
    rss += r * r;
  }
  f.rms_residual = std::sqrt(rss / static_cast<double>(x.size()));
  return f;
}

RichardsonFit richardson_extrapolate(double a_n, double a_2n, double a_4n) {
  RichardsonFit fit;
  const double d1 = a_n - a_2n;
  const double d2 = a_2n - a_4n;
  if (d1 == 0.0 || d2 == 0.0 || d1 * d2 <= 0.0) {
    // No resolvable monotone convergence; fall back to the finest value.
    fit.limit = a_4n;
    return fit;
  }
  const double ratio = d1 / d2;  // = 2^p
  fit.rate = std::log2(ratio);
  fit.limit = a_4n - d2 / (ratio - 1.0);
  fit.valid = fit.rate > 0.0;
  return fit;
}

}  // namespace homog
