#include "pecg/special.hpp"

#include "pecg/core.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <map>
#include <mutex>

namespace pecg {

namespace {

constexpr double kSqrtPi = 1.7724538509055160273;

// Golub-Welsch start, then Newton polish on the orthonormal recurrence.
// alpha_k = 0; off-diagonal b_k; p_{k+1} = (x p_k - b_k p_{k-1}) / b_{k+1}
template <class OffDiag>
QuadratureRule golub_welsch(int n, double mu0, OffDiag b) {
  if (n < 1) throw Error(ErrorKind::ParameterDomain, "quadrature order must be >= 1");
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd sub(std::max(n - 1, 1));
  for (int k = 1; k < n; ++k) sub(k - 1) = b(k);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, sub.head(n - 1), Eigen::ComputeEigenvectors);
  QuadratureRule r;
  r.nodes.resize(n);
  r.weights.resize(n);
  const double p0 = 1.0 / std::sqrt(mu0);
  for (int i = 0; i < n; ++i) {
    double x = es.eigenvalues()(i);
    double sum = 0.0;
    for (int it = 0; it < 3; ++it) {
      // evaluate p_n and p_n' by the orthonormal recurrence
      double pm = 0.0, p = p0, dpm = 0.0, dp = 0.0;
      sum = p * p;
      for (int k = 0; k < n; ++k) {
        const double bk = k > 0 ? b(k) : 0.0;
        const double bk1 = b(k + 1);
        const double pn = (x * p - bk * pm) / bk1;
        const double dpn = (p + x * dp - bk * dpm) / bk1;
        pm = p;
        p = pn;
        dpm = dp;
        dp = dpn;
        if (k + 1 < n) sum += p * p;
      }
      if (dp != 0.0) x -= p / dp;
    }
    // Christoffel weight from the polished node
    double pm = 0.0, p = p0;
    sum = p * p;
    for (int k = 0; k + 1 < n; ++k) {
      const double bk = k > 0 ? b(k) : 0.0;
      const double pn = (x * p - bk * pm) / b(k + 1);
      pm = p;
      p = pn;
      sum += p * p;
    }
    r.nodes[i] = x;
    r.weights[i] = 1.0 / sum;
  }
  return r;
}

} // namespace

QuadratureRule gauss_legendre(int n) {
  return golub_welsch(n, 2.0, [](int k) { return k / std::sqrt(4.0 * k * k - 1.0); });
}

QuadratureRule gauss_hermite(int n) {
  return golub_welsch(n, kSqrtPi, [](int k) { return std::sqrt(0.5 * k); });
}

const QuadratureRule& gauss_legendre_cached(int n) {
  static std::mutex mu;
  static std::map<int, QuadratureRule> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, gauss_legendre(n)).first;
  return it->second;
}

const QuadratureRule& gauss_hermite_cached(int n) {
  static std::mutex mu;
  static std::map<int, QuadratureRule> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, gauss_hermite(n)).first;
  return it->second;
}

double erf_over_r(double r, double sigma2) {
  const double sigma = std::sqrt(sigma2);
  const double rho = r / sigma;
  if (rho < 1e-6) {
    const double r2 = rho * rho;
    return 2.0 / (sigma * kSqrtPi) * (1.0 - r2 / 3.0 + r2 * r2 / 10.0);
  }
  return std::erf(rho) / r;
}

ErfKernel erf_over_r_with_derivatives(double r, double sigma2) {
  const double sigma = std::sqrt(sigma2);
  const double rho = r / sigma;
  const double rho2 = rho * rho;
  const double e = std::exp(-rho2);
  ErfKernel k;
  k.value = erf_over_r(r, sigma2);
  if (rho < 0.1) {
    // d/dR (erf(R/s)/R) / R = 2/(s^3 sqrt(pi)) sum_{k>=1} (-1)^k 2k rho^{2k-2} / (k! (2k+1))
    double sum = 0.0, pw = 1.0, fact = 1.0;
    for (int kk = 1; kk <= 9; ++kk) {
      fact *= kk;
      const double term = 2.0 * kk * pw / (fact * (2.0 * kk + 1.0));
      sum += (kk % 2 ? -term : term);
      pw *= rho2;
    }
    k.dr_over_r = 2.0 / (sigma * sigma2 * kSqrtPi) * sum;
  } else {
    k.dr_over_r = (2.0 / (sigma * kSqrtPi) * e - std::erf(rho) / r) / (r * r);
  }
  k.dsigma2 = -e / (sigma * sigma2 * kSqrtPi);
  return k;
}

double boys_f0(double x) {
  if (x < 1e-8) return 1.0 - x / 3.0 + x * x / 10.0;
  const double sx = std::sqrt(x);
  return 0.5 * kSqrtPi * std::erf(sx) / sx;
}

double erf_over_r_boys(double r, double sigma2) {
  const double sigma = std::sqrt(sigma2);
  return 2.0 / (sigma * kSqrtPi) * boys_f0(r * r / sigma2);
}

double ewald_real_kernel(double r, double sigma2, double kappa, int nodes_per_panel) {
  const QuadratureRule& q = gauss_legendre_cached(nodes_per_panel);
  const double sigma = std::sqrt(sigma2);
  const double x = r / sigma;
  const double s_kappa = kappa * sigma / std::sqrt(1.0 + kappa * kappa * sigma2);
  auto panel = [&](double a, double b, auto&& f) {
    const double h = 0.5 * (b - a), c = 0.5 * (a + b);
    double s = 0.0;
    for (std::size_t i = 0; i < q.nodes.size(); ++i) s += q.weights[i] * f(c + h * q.nodes[i]);
    return h * s;
  };
  if (x <= 1.0) {
    // (2/(sqrt(pi) sigma)) int_{s_kappa}^1 exp(-s^2 x^2) ds
    const double x2 = x * x;
    const double v = panel(s_kappa, 1.0, [&](double s) { return std::exp(-s * s * x2); });
    return 2.0 / (kSqrtPi * sigma) * v;
  }
  // (2/(sqrt(pi) R)) int_{s_kappa x}^{x} exp(-y^2) dy
  const double y0 = s_kappa * x;
  if (y0 * y0 > 45.0) return 0.0;
  const double y_end = std::min(x, std::sqrt(y0 * y0 + 45.0));
  double sum = 0.0;
  double y = y0;
  while (y < y_end) {
    const double h = 2.0 / std::max(1.0, y);
    const double b = std::min(y + h, y_end);
    sum += panel(y, b, [](double t) { return std::exp(-t * t); });
    y = b;
  }
  return 2.0 / (kSqrtPi * r) * sum;
}

double ewald_real_kernel_closed(double r, double sigma2, double kappa) {
  const double sigma_eff2 = sigma2 + 1.0 / (kappa * kappa);
  return erf_over_r(r, sigma2) - erf_over_r(r, sigma_eff2);
}

double radial_convolution_kernel(double r, double sigma2, int nodes_per_panel) {
  const QuadratureRule& q = gauss_legendre_cached(nodes_per_panel);
  const double sigma = std::sqrt(sigma2);
  const double rho = r / sigma;
  auto g = [rho](double v) {
    const double t = 2.0 * v * rho;
    if (rho == 0.0) return 4.0 * v * std::exp(-v * v);
    if (t < 1.0) return std::exp(-v * v - rho * rho) * 2.0 * std::sinh(t) / rho;
    return std::exp(-(v - rho) * (v - rho)) * (-std::expm1(-2.0 * t)) / rho;
  };
  const double lo = std::max(0.0, rho - 6.5);
  const double hi = rho + 6.5;
  const int panels = static_cast<int>(std::ceil(hi - lo));
  const double width = (hi - lo) / panels;
  double sum = 0.0;
  for (int p = 0; p < panels; ++p) {
    const double a = lo + p * width;
    const double h = 0.5 * width, c = a + h;
    double s = 0.0;
    for (std::size_t i = 0; i < q.nodes.size(); ++i) s += q.weights[i] * g(c + h * q.nodes[i]);
    sum += h * s;
  }
  return sum / (sigma * kSqrtPi);
}

} // namespace pecg
