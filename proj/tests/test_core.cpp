#include "pecg/elements.hpp"

#include <doctest.h>

#include <random>
#include <sstream>

using namespace pecg;

namespace {

BasisFunction unit_gaussian(int n) { return BasisFunction(Mat::Identity(n, n), Vec::Zero(3 * n)); }

} // namespace

TEST_CASE("pair composites, single particle") {
  const BasisFunction g = unit_gaussian(1);
  const PairComposite p = pair_composites(g, g);
  CHECK(p.a_kl(0, 0) == doctest::Approx(2.0));
  CHECK(p.c_kl(0, 0) == doctest::Approx(0.5));
  CHECK(p.prefactor == doctest::Approx(1.968701).epsilon(1e-6));
  CHECK(p.sigma_single(0) == doctest::Approx(0.5));
}

TEST_CASE("pair composites, identity pair") {
  const BasisFunction g = unit_gaussian(2);
  const PairComposite p = pair_composites(g, g);
  CHECK(p.prefactor == doctest::Approx(std::pow(M_PI, 3) / 8.0).epsilon(1e-12));
  CHECK(p.prefactor == doctest::Approx(3.875785).epsilon(1e-6));
  CHECK(p.sigma_pair(0, 1) == doctest::Approx(1.0));
}

TEST_CASE("pair composites, correlated bra") {
  Mat ak(2, 2);
  ak << 2, -1, -1, 2;
  const BasisFunction bra = BasisFunction::from_correlation(ak, MatX3::Zero(2, 3));
  const BasisFunction ket = unit_gaussian(2);
  const PairComposite p = pair_composites(bra, ket);
  CHECK(p.det_a_kl == doctest::Approx(8.0));
  Mat c(2, 2);
  c << 5, -1, -1, 5;
  CHECK((p.c_kl - c / 8.0).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(p.sigma_pair(0, 1) == doctest::Approx(0.5));
}

TEST_CASE("image geometry weights") {
  const BasisFunction g = unit_gaussian(1);
  const PairComposite p = pair_composites(g, g);
  const LatticeSpec chain = LatticeSpec::chain(1.0);
  const ImageGeometry g0 = image_geometry(p, {0, 0, 0}, chain);
  CHECK(g0.weight == 1.0);
  CHECK(g0.combined_center.norm() == 0.0);
  const ImageGeometry g1 = image_geometry(p, {1, 0, 0}, chain);
  CHECK(std::abs(g1.shift_diff(0, 0)) == doctest::Approx(1.0));
  CHECK(g1.weight == doctest::Approx(std::exp(-0.5)).epsilon(1e-14));
  CHECK(g1.weight == doctest::Approx(0.606531).epsilon(1e-6));
}

TEST_CASE("image weight matches the residual of the explicit Gaussian product") {
  // exp(-(r-s_k)^T A_k (r-s_k)) exp(-(r-s_l-T)^T A_l (r-s_l-T)) at its maximum equals omega_M
  Mat ak(2, 2), al(2, 2);
  ak << 1.3, 0.2, 0.2, 0.9;
  al << 0.8, -0.1, -0.1, 1.1;
  MatX3 sk(2, 3), sl(2, 3);
  sk << 0.1, 0.2, -0.3, 0.4, 0.0, 0.1;
  sl << -0.2, 0.1, 0.0, 0.3, -0.4, 0.2;
  const BasisFunction bra = BasisFunction::from_correlation(ak, sk), ket = BasisFunction::from_correlation(al, sl);
  const PairComposite p = pair_composites(bra, ket);
  const LatticeSpec chain = LatticeSpec::chain(2.0);
  const ImageGeometry g = image_geometry(p, {1, 0, 0, 0, 0, 0}, chain);
  MatX3 sl_t = sl;
  sl_t.row(0) += g.translation.row(0);
  const MatX3& r = g.combined_center;
  const double log_product = scg_log_value(ak, sk, 0.0, r) + scg_log_value(al, sl_t, 0.0, r);
  CHECK(log_product == doctest::Approx(std::log(g.weight)).epsilon(1e-12));
}

TEST_CASE("parameterization conversion") {
  SUBCASE("uncoupled pair gives independent Gaussians") {
    MatX3 c(2, 3);
    c << 1, 2, 3, -1, 0, 0.5;
    const auto out = convert_parameterization(ConversionDirection::PcToScg, Mat::Zero(2, 2), Vec::Ones(2), c);
    CHECK((out.matrix - Mat::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((out.centers - c).cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("pointwise exponent equality") {
    Mat apc(2, 2);
    apc << 0, -0.5, -0.5, 0;
    Vec beta(2);
    beta << 1, 2;
    MatX3 s(2, 3);
    s << 1, 0, 0, -1, 0, 0;
    const auto scg = convert_parameterization(ConversionDirection::PcToScg, apc, beta, s);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    double worst = 0.0;
    for (int t = 0; t < 20; ++t) {
      MatX3 r(2, 3);
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 3; ++j) r(i, j) = u(rng);
      worst = std::max(worst, std::abs(pair_coupling_log_value(apc, beta, s, r) -
                                       scg_log_value(scg.matrix, scg.centers, scg.absorbed, r)));
    }
    CHECK(worst <= 1e-12);
  }
  SUBCASE("round trip") {
    Mat apc(2, 2);
    apc << 0, 0.3, 0.3, 0;
    Vec beta(2);
    beta << 0.7, 1.4;
    MatX3 s(2, 3);
    s << 0.2, -0.1, 0.4, 0.0, 0.5, -0.3;
    const auto scg = convert_parameterization(ConversionDirection::PcToScg, apc, beta, s);
    const Vec d = scg.matrix.diagonal();
    const auto back = convert_parameterization(ConversionDirection::ScgToPc, scg.matrix, d, scg.centers);
    CHECK((back.matrix - apc).cwiseAbs().maxCoeff() <= 1e-14);
  }
}

TEST_CASE("basis validation and persistence") {
  Mat bad(2, 2);
  bad << 1, 0, 0, -1;
  CHECK_THROWS_AS(BasisFunction(bad, Vec::Zero(6)).validate(), Error);
  std::vector<BasisFunction> basis{unit_gaussian(2), BasisFunction::from_correlation(Mat::Identity(2, 2) * 2.0, MatX3::Ones(2, 3), 0.25)};
  std::stringstream ss;
  write_basis(ss, basis, "test");
  const auto back = read_basis(ss);
  REQUIRE(back.size() == 2);
  CHECK((back[1].a() - basis[1].a()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(back[1].absorbed_log_constant == basis[1].absorbed_log_constant);
}

TEST_CASE("spin permutations") {
  SUBCASE("singlet pair has the identity only") {
    const auto perms = spin_permutations({1, 1});
    REQUIRE(perms.size() == 1);
    CHECK(perms[0].sign == 1);
  }
  SUBCASE("permuted correlation matrix") {
    Mat a(2, 2);
    a << 2, -1, -1, 3;
    const BasisFunction f = BasisFunction::from_correlation(a, MatX3::Zero(2, 3));
    Mat expect(2, 2);
    expect << 3, -1, -1, 2;
    CHECK((permute(f, {1, 0}).a() - expect).cwiseAbs().maxCoeff() < 1e-14);
  }
  SUBCASE("symmetric ket vanishes for parallel spins") {
    const BasisFunction f = BasisFunction::from_correlation(Mat::Identity(2, 2), MatX3::Zero(2, 3));
    const LatticeSpec open = LatticeSpec::open();
    const cplx s = antisymmetrized_element(
        f, f,
        [&](const BasisFunction& a, const BasisFunction& b) {
          return overlap_element(pair_composites(a, b), a, b, open, Vec3::Zero());
        },
        {2, 0});
    CHECK(std::abs(s) < 1e-14);
  }
}
