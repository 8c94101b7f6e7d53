#include "pecg/lattice.hpp"

#include <doctest.h>

using namespace pecg;

namespace {

// n = 1 bra = ket with exponent a gives C = a/2
BasisFunction gaussian_with_c(double c, double shift = 0.0) {
  Vec s = Vec::Zero(3);
  s(0) = shift;
  return BasisFunction(Mat::Constant(1, 1, std::sqrt(2.0 * c)), s);
}

cplx unit_kernel(const ImageGeometry&) { return 1.0; }

} // namespace

TEST_CASE("image enumeration counts") {
  const LatticeSpec chain = LatticeSpec::chain(1.0);
  const BasisFunction g = gaussian_with_c(0.5);
  const PairComposite p = pair_composites(g, g);
  const ImageSet one = enumerate_images(p, chain);
  CHECK(one.size() == 15);
  CHECK(one.truncation_bound == 30.0);
  // lexicographic order
  CHECK(one.indices.front()[0] == -7);
  CHECK(one.indices.back()[0] == 7);

  const BasisFunction g2(Mat::Constant(2, 2, 0.0) + Mat::Identity(2, 2), Vec::Zero(6));
  const PairComposite p2 = pair_composites(g2, g2);
  // chi2 = 0.5 (m1^2 + m2^2) <= 30
  std::size_t disc = 0;
  for (int a = -8; a <= 8; ++a)
    for (int b = -8; b <= 8; ++b) disc += 0.5 * (a * a + b * b) <= 30.0;
  CHECK(enumerate_images(p2, chain).size() == disc);
  CHECK(disc == 185);

  const BasisFunction tight = gaussian_with_c(50.0);
  CHECK(enumerate_images(pair_composites(tight, tight), chain).size() == 1);
}

TEST_CASE("direct image sums") {
  const LatticeSpec chain = LatticeSpec::chain(1.0);
  const BasisFunction g = gaussian_with_c(0.5);
  const PairComposite p = pair_composites(g, g);
  const ImageSet images = enumerate_images(p, chain, 60.0);
  CHECK(image_sum_direct(images, unit_kernel, Vec3::Zero(), chain.cell_lengths).real() ==
        doctest::Approx(2.506628288042906).epsilon(1e-12));
  const cplx alt = image_sum_direct(images, unit_kernel, Vec3(M_PI, 0, 0), chain.cell_lengths);
  CHECK(std::abs(alt.real() - 0.0360547563) < 1e-9);
  CHECK(std::abs(alt.imag()) < 1e-15);

  ImageSet single;
  single.indices.push_back({0, 0, 0});
  single.geometries.push_back(image_geometry(p, {0, 0, 0}, chain));
  CHECK(image_sum_direct(single, unit_kernel, Vec3::Zero(), chain.cell_lengths).real() == 1.0);
}

TEST_CASE("dual image sums") {
  const LatticeSpec chain = LatticeSpec::chain(1.0);
  {
    const BasisFunction g = gaussian_with_c(0.01);
    CHECK(image_sum_dual(pair_composites(g, g), chain) == doctest::Approx(17.724539).epsilon(1e-7));
  }
  for (double c : {0.01, 0.1, 1.0, 10.0}) {
    const BasisFunction g = gaussian_with_c(c);
    const PairComposite p = pair_composites(g, g);
    const double direct = image_sum_direct(enumerate_images(p, chain, 80.0), unit_kernel, Vec3::Zero(),
                                           chain.cell_lengths).real();
    CHECK(std::abs(image_sum_dual(p, chain) - direct) / direct <= 1e-10);
  }
  SUBCASE("half-cell offset") {
    const BasisFunction a = gaussian_with_c(0.01), b = gaussian_with_c(0.01, 0.5);
    const PairComposite p = pair_composites(a, b);
    const cplx direct = image_sum_direct(enumerate_images(p, chain, 80.0), unit_kernel, Vec3::Zero(),
                                         chain.cell_lengths);
    CHECK(std::abs(image_sum_dual(p, chain, Vec3::Zero()) - direct) / std::abs(direct) <= 1e-10);
  }
}

TEST_CASE("representation choice") {
  const LatticeSpec chain = LatticeSpec::chain(1.0);
  auto pick = [&](double c) {
    const BasisFunction g = gaussian_with_c(c);
    return select_representation(pair_composites(g, g), chain);
  };
  CHECK(pick(10.0) == Representation::Direct);
  CHECK(pick(0.001) == Representation::Dual);
  // threshold sits at c L^2 = pi
  CHECK(pick(M_PI * (1.0 + 1e-9)) == Representation::Direct);
  CHECK(pick(M_PI * (1.0 - 1e-9)) == Representation::Dual);
}

TEST_CASE("theta sums") {
  CHECK(theta_sum_1d(0.5, 0.0, 1.0) == doctest::Approx(2.506628288042906).epsilon(1e-12));
  CHECK(theta_sum_1d(0.01, 0.0, 1.0) == doctest::Approx(17.724539).epsilon(1e-7));
  LatticeSpec plane;
  plane.cell_lengths = Vec3(1.0, 1.5, 1.0);
  plane.periodic = {true, true, false};
  Vec c(1);
  c << 0.3;
  const MatX3 shifts = MatX3::Constant(1, 3, 0.2);
  const double joint = theta_factorized_sum(c, shifts, plane);
  // open axis keeps its Gaussian factor
  const double z = std::exp(-0.3 * 0.2 * 0.2);
  CHECK(joint == doctest::Approx(theta_sum_1d(0.3, 0.2, 1.0) * theta_sum_1d(0.3, 0.2, 1.5) * z).epsilon(1e-14));
}
