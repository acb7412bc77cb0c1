#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace sbm::stats {

struct MeanSE {
  double mean = 0.0;
  double se = 0.0;
  double sd = 0.0;
  std::size_t n = 0;
};

/// Sample mean, standard deviation (n - 1) and standard error; compensated summation.
MeanSE mean_se(std::span<const double> v);

double pearson(std::span<const double> a, std::span<const double> b);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
};
/// Ordinary least squares y = intercept + slope * x.
LineFit fit_line(std::span<const double> x, std::span<const double> y);

/// Asymptotic Kolmogorov tail P(K > lambda) = 2 sum (-1)^{k-1} exp(-2 k^2 lambda^2).
double kolmogorov_tail(double lambda);

struct KSResult {
  double statistic = 0.0;
  double p_value = 1.0;
};
/// Two-sample Kolmogorov-Smirnov test; ties handled by advancing through equal values together.
/// p-value from the asymptotic law with the Stephens correction (sqrt(ne) + 0.12 + 0.11/sqrt(ne)).
KSResult ks_two_sample(std::vector<double> a, std::vector<double> b);
/// One-sample test against the standard normal cdf.
KSResult ks_normal(std::vector<double> a);

/// Deterministic resampling indices for bootstrap replicate b over n items.
std::vector<std::size_t> bootstrap_indices(std::uint64_t seed, std::size_t b, std::size_t n);

/// Empirical quantile with linear interpolation, q in [0, 1]. Sorts a copy.
double quantile(std::vector<double> v, double q);

}  // namespace sbm::stats
