#pragma once

#include <vector>

namespace pecg {

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

// Gauss-Legendre on [-1, 1]
QuadratureRule gauss_legendre(int n);
// Gauss-Hermite for weight exp(-x^2) on the real line
QuadratureRule gauss_hermite(int n);
// cached versions, safe to call concurrently
const QuadratureRule& gauss_legendre_cached(int n);
const QuadratureRule& gauss_hermite_cached(int n);

// erf(R/sigma)/R with the small-R series; sigma2 = sigma^2
double erf_over_r(double r, double sigma2);

// value plus partial derivatives: d/dR divided by R, and d/d(sigma^2)
struct ErfKernel {
  double value;
  double dr_over_r;
  double dsigma2;
};
ErfKernel erf_over_r_with_derivatives(double r, double sigma2);

// F0(x) = sqrt(pi)/2 erf(sqrt x)/sqrt x
double boys_f0(double x);

// erf(R/sigma)/R through the Boys function: 2/(sigma sqrt(pi)) F0(R^2/sigma^2)
double erf_over_r_boys(double r, double sigma2);

// (2/sqrt(pi)) int_kappa^inf exp(-t^2 R^2/(1+t^2 sigma^2)) (1+t^2 sigma^2)^{-3/2} dt
// evaluated with composite Gauss-Legendre panels (nodes per panel)
double ewald_real_kernel(double r, double sigma2, double kappa, int nodes_per_panel);
// same integral in closed form, used as a check
double ewald_real_kernel_closed(double r, double sigma2, double kappa);

// (pi sigma^2)^{-3/2} int exp(-|u - R|^2/sigma^2) / |u| d^3u by radial Gauss-Legendre panels
double radial_convolution_kernel(double r, double sigma2, int nodes_per_panel);

} // namespace pecg
