#pragma once

namespace rbfpca {

double normal_pdf(double x);
double normal_cdf(double x);
double normal_cdf_upper(double x);  // P(X > x), accurate in the right tail
double normal_quantile(double p);   // inverse of normal_cdf on (0,1)
// Inverse of the upper tail: x with P(X > x) = p, accurate for tiny p.
double normal_quantile_upper(double p);

// Regularized incomplete gamma functions P(a,x) and Q(a,x) = 1 - P(a,x).
double gamma_p(double a, double x);
double gamma_q(double a, double x);

double chi2_cdf(double df, double x);
// Bracketed root-find on the regularized incomplete gamma, |error| <= 1e-10.
double chi2_quantile(double df, double p);

// Nodes/weights of n-point Gauss-Legendre quadrature on [a,b].
void gauss_legendre(int n, double a, double b, double* nodes, double* weights);

}  // namespace rbfpca
