#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>

namespace sqreg {

namespace detail {

// Standard-normal quantile: Acklam's rational approximation polished with one
// Halley step against erfc, which brings it to full double precision.
inline double normal_quantile_std(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("normal_quantile: p must be in (0,1)");

  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;

  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }

  const double err = 0.5 * std::erfc(-x / M_SQRT2) - p;
  const double u = err * std::sqrt(2.0 * M_PI) * std::exp(x * x / 2.0);
  return x - u / (1.0 + x * u / 2.0);
}

// Regularized incomplete beta I_x(a,b) by the Lentz continued fraction.
inline double beta_cf(double a, double b, double x) {
  constexpr double tiny = 1e-300;
  constexpr double eps = std::numeric_limits<double>::epsilon();
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 300; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 10.0 * eps) break;
  }
  return h;
}

inline double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_bt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                       a * std::log(x) + b * std::log1p(-x);
  const double bt = std::exp(ln_bt);
  if (x < (a + 1.0) / (a + b + 2.0)) return bt * beta_cf(a, b, x) / a;
  return 1.0 - bt * beta_cf(b, a, 1.0 - x) / b;
}

}  // namespace detail

inline double normal_quantile(double p) { return detail::normal_quantile_std(p); }

inline double student_t_cdf(double x, double nu) {
  if (!(nu > 0.0)) throw std::domain_error("student_t_cdf: nu must be > 0");
  if (x == 0.0) return 0.5;
  const double z = nu / (nu + x * x);
  const double half_tail = 0.5 * detail::incomplete_beta(nu / 2.0, 0.5, z);
  return x > 0.0 ? 1.0 - half_tail : half_tail;
}

inline double student_t_pdf(double x, double nu) {
  const double ln_f = std::lgamma((nu + 1.0) / 2.0) - std::lgamma(nu / 2.0) -
                      0.5 * std::log(nu * M_PI) -
                      (nu + 1.0) / 2.0 * std::log1p(x * x / nu);
  return std::exp(ln_f);
}

// Quantile of the Student-t law: bracket by doubling, then safeguarded
// Newton on the CDF (bisection whenever a Newton step leaves the bracket).
inline double student_t_quantile(double p, double nu) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("student_t_quantile: p must be in (0,1)");
  if (!(nu > 0.0)) throw std::domain_error("student_t_quantile: nu must be > 0");
  if (p == 0.5) return 0.0;
  const bool upper = p > 0.5;
  const double target = upper ? p : 1.0 - p;

  double lo = 0.0, hi = 1.0;
  while (student_t_cdf(hi, nu) < target && hi < 1e154) hi *= 2.0;
  double x = 0.5 * (lo + hi);
  for (int iter = 0; iter < 80; ++iter) {
    const double f = student_t_cdf(x, nu) - target;
    if (f > 0.0)
      hi = x;
    else
      lo = x;
    if (std::abs(f) < 1e-15 || hi - lo < 1e-15 * (1.0 + hi)) break;
    const double df = student_t_pdf(x, nu);
    double next = df > 0.0 ? x - f / df : x;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    x = next;
  }
  return upper ? x : -x;
}

enum class NoiseKind { Gaussian, StudentT, Uniform };

// Additive noise law with a known inverse CDF; sampling is inverse-CDF on a
// uniform draw so that quantiles and samples always agree.
struct NoiseLaw {
  NoiseKind kind = NoiseKind::Gaussian;
  double p1 = 1.0;  // Gaussian: sigma, StudentT: nu, Uniform: a
  double p2 = 0.0;  // Uniform: b

  static NoiseLaw gaussian(double sigma) {
    if (!(sigma >= 0.0)) throw std::invalid_argument("gaussian noise: sigma must be >= 0");
    return NoiseLaw{NoiseKind::Gaussian, sigma, 0.0};
  }
  static NoiseLaw student_t(double nu) {
    if (!(nu > 0.0)) throw std::invalid_argument("student_t noise: nu must be > 0");
    return NoiseLaw{NoiseKind::StudentT, nu, 0.0};
  }
  static NoiseLaw uniform(double a, double b) {
    if (!(a <= b)) throw std::invalid_argument("uniform noise: need a <= b");
    return NoiseLaw{NoiseKind::Uniform, a, b};
  }

  double quantile(double tau) const {
    switch (kind) {
      case NoiseKind::Gaussian:
        return p1 == 0.0 ? 0.0 : p1 * normal_quantile(tau);
      case NoiseKind::StudentT:
        return student_t_quantile(tau, p1);
      case NoiseKind::Uniform:
        return p1 + tau * (p2 - p1);
    }
    throw std::logic_error("noise: unknown kind");
  }

  template <typename Rng>
  double sample(Rng& rng) const {
    // open-interval uniform so the inverse CDF is always finite
    const double u = (static_cast<double>(rng() >> 12) + 0.5) * 0x1.0p-52;
    return quantile(u);
  }
};

}  // namespace sqreg
