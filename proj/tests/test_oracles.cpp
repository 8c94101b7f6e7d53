#include "pecg/oracles.hpp"

#include <doctest.h>

using namespace pecg;

namespace {

BasisFunction unit_gaussian(int n) { return BasisFunction(Mat::Identity(n, n), Vec::Zero(3 * n)); }

} // namespace

TEST_CASE("grid oracle") {
  const LatticeSpec open = LatticeSpec::open();
  const BasisFunction g = unit_gaussian(1);
  const std::vector<std::vector<int>> zero{{0, 0, 0}};
  auto r = quadrature_oracle(OracleOperatorSpec::overlap(), g, g, open, zero, Vec3::Zero());
  CHECK(r.oracle.real() == doctest::Approx(1.968701).epsilon(1e-6));
  CHECK(r.rel_error <= 1e-10);
  r = quadrature_oracle(OracleOperatorSpec::kinetic(), g, g, open, zero, Vec3::Zero());
  CHECK(r.oracle.real() == doctest::Approx(2.953052).epsilon(1e-6));
  CHECK(r.agrees(1e-9));
}

TEST_CASE("Monte Carlo oracle") {
  const LatticeSpec open = LatticeSpec::open();
  const BasisFunction g = unit_gaussian(2);
  const std::vector<std::vector<int>> zero{{0, 0, 0, 0, 0, 0}};
  OracleOptions small, large;
  small.mc_samples = 40000;
  large.mc_samples = 640000;
  const auto a = quadrature_oracle(OracleOperatorSpec::coulomb(electron_pair_terms(2)), g, g, open, zero, Vec3::Zero(), small);
  const auto b = quadrature_oracle(OracleOperatorSpec::coulomb(electron_pair_terms(2)), g, g, open, zero, Vec3::Zero(), large);
  CHECK(b.analytic.real() == doctest::Approx(4.373354).epsilon(1e-6));
  CHECK(b.oracle.real() == doctest::Approx(4.3734).epsilon(5e-3));
  CHECK(b.agrees(0.0, 3.0));
  // standard error falls as 1/sqrt(N)
  CHECK(a.oracle_uncertainty / b.oracle_uncertainty == doctest::Approx(4.0).epsilon(0.15));

  OracleOptions threaded = large;
  threaded.threads = 3;
  const auto c = quadrature_oracle(OracleOperatorSpec::coulomb(electron_pair_terms(2)), g, g, open, zero, Vec3::Zero(), threaded);
  CHECK(c.oracle == b.oracle);
}

TEST_CASE("oracle scope") {
  const BasisFunction g = unit_gaussian(3);
  const std::vector<std::vector<int>> zero{std::vector<int>(9, 0)};
  CHECK_THROWS_AS(quadrature_oracle(OracleOperatorSpec::overlap(), g, g, LatticeSpec::open(), zero, Vec3::Zero()), Error);
}

TEST_CASE("unfolding check") {
  const BasisFunction c(Mat::Constant(1, 1, std::sqrt(0.5)), Vec::Zero(3));
  const LatticeSpec chain = LatticeSpec::chain(1.0);
  for (double k : {0.0, M_PI}) {
    const auto r = unfolding_check(c, c, OracleOperatorSpec::overlap(), chain, 12, Vec3(k, 0, 0));
    CHECK(r.rel_error <= 1e-10);
    CHECK_FALSE(r.precision_warning);
  }
  SUBCASE("wide cell reduces to the free-space element") {
    const BasisFunction t(Mat::Constant(1, 1, 2.0), Vec::Zero(3));
    const auto r = unfolding_check(t, t, OracleOperatorSpec::overlap(), LatticeSpec::chain(50.0), 1, Vec3::Zero());
    const double free = std::pow(M_PI / 8.0, 1.5);
    CHECK(r.analytic.real() == doctest::Approx(free).epsilon(1e-12));
    CHECK(r.oracle.real() == doctest::Approx(free).epsilon(1e-10));
  }
}
