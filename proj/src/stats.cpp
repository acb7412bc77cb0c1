#include "sbm/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "sbm/common.hpp"
#include "sbm/noise.hpp"

namespace sbm::stats {

MeanSE mean_se(std::span<const double> v) {
  MeanSE r;
  r.n = v.size();
  if (r.n == 0) return r;
  CompensatedSum s;
  for (double x : v) s.add(x);
  r.mean = s.value() / static_cast<double>(r.n);
  if (r.n < 2) return r;
  CompensatedSum q;
  for (double x : v) q.add((x - r.mean) * (x - r.mean));
  r.sd = std::sqrt(q.value() / static_cast<double>(r.n - 1));
  r.se = r.sd / std::sqrt(static_cast<double>(r.n));
  return r;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = std::min(a.size(), b.size());
  if (n < 2) return 0.0;
  const double ma = mean_se(a.first(n)).mean;
  const double mb = mean_se(b.first(n)).mean;
  CompensatedSum sab, saa, sbb;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab.add(da * db);
    saa.add(da * da);
    sbb.add(db * db);
  }
  const double den = std::sqrt(saa.value() * sbb.value());
  return den > 0.0 ? sab.value() / den : 0.0;
}

LineFit fit_line(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = std::min(x.size(), y.size());
  if (n < 2) throw DomainError("fit_line: needs at least two points");
  const double mx = mean_se(x.first(n)).mean;
  const double my = mean_se(y.first(n)).mean;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (!(sxx > 0.0)) throw DomainError("fit_line: abscissae are all equal");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  return f;
}

double kolmogorov_tail(double lambda) {
  if (lambda <= 0.0) return 1.0;
  // Small lambda: use the Jacobi-transformed series, which converges fast there.
  if (lambda < 1.18) {
    const double y = std::exp(-std::numbers::pi * std::numbers::pi / (8.0 * lambda * lambda));
    double s = 0.0;
    for (int k = 1; k <= 7; k += 2) s += std::pow(y, k * k);
    return std::clamp(1.0 - std::sqrt(2.0 * std::numbers::pi) / lambda * s, 0.0, 1.0);
  }
  double s = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    s += (k % 2 == 1 ? 2.0 : -2.0) * term;
    if (term < 1e-18) break;
  }
  return std::clamp(s, 0.0, 1.0);
}

namespace {

double stephens_p(double d, double ne) {
  const double r = std::sqrt(ne);
  return kolmogorov_tail((r + 0.12 + 0.11 / r) * d);
}

}  // namespace

KSResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw DomainError("ks_two_sample: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == v) ++i;
    while (j < b.size() && b[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return {d, stephens_p(d, na * nb / (na + nb))};
}

KSResult ks_normal(std::vector<double> a) {
  if (a.empty()) throw DomainError("ks_normal: empty sample");
  std::sort(a.begin(), a.end());
  const double n = static_cast<double>(a.size());
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double F = 0.5 * std::erfc(-a[i] / std::numbers::sqrt2);
    d = std::max({d, static_cast<double>(i + 1) / n - F, F - static_cast<double>(i) / n});
  }
  return {d, stephens_p(d, n)};
}

std::vector<std::size_t> bootstrap_indices(std::uint64_t seed, std::size_t b, std::size_t n) {
  std::vector<std::size_t> idx(n);
  const noise::Key key{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  for (std::size_t i = 0; i < n; i += 2) {
    const auto r = noise::philox4x32({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(b),
                                      static_cast<std::uint32_t>(b >> 32), 0xB0075u},
                                     key);
    const std::uint64_t w0 = (static_cast<std::uint64_t>(r[1]) << 32) | r[0];
    const std::uint64_t w1 = (static_cast<std::uint64_t>(r[3]) << 32) | r[2];
    idx[i] = static_cast<std::size_t>(w0 % n);
    if (i + 1 < n) idx[i + 1] = static_cast<std::size_t>(w1 % n);
  }
  return idx;
}

double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw DomainError("quantile: empty sample");
  std::sort(v.begin(), v.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double w = pos - static_cast<double>(lo);
  return (1.0 - w) * v[lo] + w * v[hi];
}

}  // namespace sbm::stats
