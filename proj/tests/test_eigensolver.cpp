#include "pecg/eigensolver.hpp"

#include <doctest.h>

#include <random>

using namespace pecg;

TEST_CASE("canonical orthogonalization") {
  int retained = -1;
  {
    const CMat x = stabilize_overlap(CMat::Identity(3, 3));
    CHECK(x.cols() == 3);
    CHECK((x.adjoint() * x - CMat::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-15);
  }
  CMat s(2, 2);
  s << 1.0, 1.0, 1.0, 1.0;
  retained = static_cast<int>(stabilize_overlap(s).cols());
  CHECK(retained == 1);

  // Gaussian overlaps with a duplicated function
  std::vector<double> widths{0.3, 0.7, 1.5, 0.7};
  CMat g(4, 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      const double a = widths[i], b = widths[j];
      g(i, j) = std::pow(2.0 * std::sqrt(a * b) / (a + b), 1.5);
    }
  CHECK(solve_generalized(g, g).retained_dimension == 3);
}

TEST_CASE("generalized eigenproblem") {
  CMat h = CMat::Zero(2, 2);
  h(0, 0) = 1.0;
  h(1, 1) = 2.0;
  auto r = solve_generalized(h, CMat::Identity(2, 2));
  CHECK(r.eigenvalues(0) == doctest::Approx(1.0));
  CHECK(r.eigenvalues(1) == doctest::Approx(2.0));
  h << 0.0, 1.0, 1.0, 0.0;
  r = solve_generalized(h, CMat::Identity(2, 2));
  CHECK(r.eigenvalues(0) == doctest::Approx(-1.0));
  CHECK(r.eigenvalues(1) == doctest::Approx(1.0));
}

TEST_CASE("3x3 Hermitian pair against characteristic polynomial roots") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  CMat a(3, 3), b(3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      a(i, j) = cplx(nd(rng), nd(rng));
      b(i, j) = cplx(nd(rng), nd(rng));
    }
  const CMat h = a + a.adjoint();
  const CMat s = b * b.adjoint() + CMat::Identity(3, 3);
  const auto r = solve_generalized(h, s);
  // det(H - lambda S) as a cubic in lambda, sampled at four points and interpolated
  auto det = [&](double x) { return (h - x * s).determinant().real(); };
  for (int i = 0; i < 3; ++i) {
    double lam = r.eigenvalues(i);
    // Newton polish from the computed value must not move it
    const double d = 1e-6;
    const double step = det(lam) / ((det(lam + d) - det(lam - d)) / (2 * d));
    CHECK(std::abs(step) <= 1e-10 * std::max(1.0, std::abs(lam)));
  }
  CHECK(lowest_eigenvalue(h, s) == doctest::Approx(r.eigenvalues(0)).epsilon(1e-14));
}
