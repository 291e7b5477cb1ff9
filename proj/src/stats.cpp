#include "tte/stats.hpp"

#include <boost/math/special_functions/beta.hpp>
#include <cmath>

#include "tte/errors.hpp"

namespace tte {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * 3.14159265358979323846);
}

double inv_normal_cdf(double p) {
  if (!(p > 0.0 && p < 1.0)) throw NumericalError("inv_normal_cdf: p must be in (0,1)");
  // mirror the upper tail; cdf(x) - p is only well conditioned for p <= 0.5
  if (p > 0.5) return -inv_normal_cdf(1.0 - p);
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double p_low = 0.02425;
  double x;
  if (p < p_low) {
    double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else {
    double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  }
  double dens = normal_pdf(x);
  if (dens > 1e-300) x -= (normal_cdf(x) - p) / dens;
  return x;
}

double clopper_pearson_lower(int k, int n, double alpha) {
  if (n < 1) throw ConfigError("clopper_pearson_lower: n must be >= 1");
  if (k < 0 || k > n) throw ConfigError("clopper_pearson_lower: k must be in [0,n]");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw ConfigError("clopper_pearson_lower: alpha must be in (0,1)");
  if (k == 0) return 0.0;
  if (k == n) return std::pow(alpha, 1.0 / n);
  // P[Bin(n,p) >= k] = I_p(k, n-k+1) is increasing in p; find tail == alpha
  double lo = 0.0, hi = 1.0;
  while (hi - lo > 1e-12) {
    double mid = 0.5 * (lo + hi);
    if (boost::math::ibeta(static_cast<double>(k), static_cast<double>(n - k + 1), mid) < alpha)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace tte
