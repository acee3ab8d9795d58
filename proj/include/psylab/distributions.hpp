#pragma once

namespace psylab::dist {

// Standard normal CDF / survival / quantile. The quantile uses the Wichura
// AS 241 (PPND16) rational approximation, accurate to about 1e-15.
double normal_cdf(double x);
double normal_sf(double x);
double normal_quantile(double p);

// Regularized incomplete beta I_x(a, b) via the Lentz continued fraction.
double incomplete_beta(double a, double b, double x);

// Regularized upper incomplete gamma Q(a, x) (series / continued fraction).
double upper_gamma(double a, double x);

// Survival functions used by the omnibus tests.
double chi_squared_sf(double x, double df);
double f_sf(double x, double df1, double df2);

// Studentized range distribution with k groups and df error degrees of
// freedom, evaluated by nested 64-node Gauss-Legendre quadrature of the
// classical double-integral representation.
double studentized_range_cdf(double q, int k, double df);
double studentized_range_sf(double q, int k, double df);

// Upper critical value: smallest q with sf(q) <= alpha, found by bisection.
double studentized_range_critical(double alpha, int k, double df);

}  // namespace psylab::dist
