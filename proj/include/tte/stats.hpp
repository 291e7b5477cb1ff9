#pragma once

namespace tte {

double normal_cdf(double x);
double normal_pdf(double x);

// Phi^{-1}(p) for p in (0,1): Acklam's rational approximation refined by one
// Newton step; absolute error well under 1e-9 over the tested range
double inv_normal_cdf(double p);

// exact one-sided lower confidence bound for a binomial proportion:
// the p with P[Bin(n,p) >= k] = alpha, found by bisection to 1e-12.
// k=0 -> 0; k=n -> alpha^(1/n).
double clopper_pearson_lower(int k, int n, double alpha);

}  // namespace tte
