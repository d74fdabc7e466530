#ifndef HOMOG_STATS_HPP
#define HOMOG_STATS_HPP

#include <cstddef>
#include <vector>

namespace homog {

double mean_of(const std::vector<double>& x);
/// Unbiased sample variance (M-1 denominator).
double variance_of(const std::vector<double>& x);
/// Unbiased sample covariance.
double covariance_of(const std::vector<double>& x, const std::vector<double>& y);
/// Standard error of the mean.
double se_of_mean(const std::vector<double>& x);

/// Leave-one-out jackknife standard error of the sample variance.
double jackknife_se_variance(const std::vector<double>& x);
/// Leave-one-out jackknife standard error of the sample covariance.
double jackknife_se_covariance(const std::vector<double>& x, const std::vector<double>& y);

/// Standard normal CDF and quantile (Wichura's AS241, double precision).
double normal_cdf(double x);
double normal_quantile(double p);

/// 1-Wasserstein distance from the sample law to N(0,1) via quantile
/// coupling; the samples are used as given (standardize first if needed).
double w1_to_standard_normal(std::vector<double> samples);
/// Kolmogorov-Smirnov statistic against N(0,1).
double ks_to_standard_normal(std::vector<double> samples);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
  double rms_residual = 0.0;
};
/// Weighted least squares y ~ intercept + slope x with per-point standard
/// deviations sigma (empty sigma = unweighted).
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y,
                 const std::vector<double>& sigma = {});

struct RichardsonFit {
  double limit = 0.0;
  double rate = 0.0;  // fitted order p in  a_N = limit + C N^{-p}
  bool valid = false;
};
/// Three-point Richardson extrapolation from values at N, 2N, 4N.
RichardsonFit richardson_extrapolate(double a_n, double a_2n, double a_4n);

}  // namespace homog

#endif
