#include "pecg/elements.hpp"
#include "pecg/eigensolver.hpp"
#include "pecg/special.hpp"

#include <doctest.h>

#include <random>

using namespace pecg;

namespace {

const Vec3 kZero = Vec3::Zero();

BasisFunction unit_gaussian(int n) { return BasisFunction(Mat::Identity(n, n), Vec::Zero(3 * n)); }

BasisFunction random_pair(std::mt19937_64& rng, double spread) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Mat l(2, 2);
  l << 1.0 + 0.4 * u(rng), 0.0, 0.3 * u(rng), 1.0 + 0.4 * u(rng);
  Vec s(6);
  for (int i = 0; i < 6; ++i) s(i) = spread * u(rng);
  return BasisFunction(l, s);
}

NuclearFrame h2_frame() {
  NuclearFrame f;
  f.positions = {Vec3(-0.7, 0.1, 0.0), Vec3(0.7, -0.1, 0.2)};
  f.charges = {1.0, 1.0};
  return f;
}

} // namespace

TEST_CASE("overlap elements") {
  const BasisFunction g = unit_gaussian(1);
  const PairComposite p = pair_composites(g, g);
  CHECK(overlap_element(p, g, g, LatticeSpec::open(), kZero).real() == doctest::Approx(1.968701).epsilon(1e-6));
  const LatticeSpec chain = LatticeSpec::chain(1.0);
  CHECK(overlap_element(p, g, g, chain, kZero).real() == doctest::Approx(4.934802226948714).epsilon(1e-12));
  const cplx alt = overlap_element(p, g, g, chain, Vec3(M_PI, 0, 0));
  CHECK(std::abs(alt.real() - 0.0709810436) < 1e-9);
  CHECK(std::abs(alt.imag()) < 1e-15);
}

TEST_CASE("kinetic elements") {
  const BasisFunction g = unit_gaussian(1);
  const PairComposite p = pair_composites(g, g);
  const LatticeSpec open = LatticeSpec::open();
  const double s = overlap_element(p, g, g, open, kZero).real();
  CHECK(kinetic_element(p, g, g, open, Vec(), kZero).real() / s == doctest::Approx(1.5).epsilon(1e-14));
  Vec shifted = Vec::Zero(3);
  shifted(0) = std::sqrt(3.0);
  const BasisFunction h(Mat::Identity(1, 1), shifted);
  CHECK(std::abs(kinetic_element(pair_composites(g, h), g, h, open, Vec(), kZero)) < 1e-15);
}

TEST_CASE("contact elements") {
  const LatticeSpec open = LatticeSpec::open();
  const BasisFunction g = unit_gaussian(1);
  CHECK(delta_element(pair_composites(g, g), g, g, open, DeltaTarget::point(0, kZero), kZero).real() ==
        doctest::Approx(1.0).epsilon(1e-14));
  CHECK_THROWS(delta_element(pair_composites(g, g), g, g, open, DeltaTarget::electron_pair(0, 1), kZero));
  const BasisFunction g2 = unit_gaussian(2);
  CHECK(delta_element(pair_composites(g2, g2), g2, g2, open, DeltaTarget::electron_pair(0, 1), kZero).real() ==
        doctest::Approx(std::pow(M_PI / 4.0, 1.5)).epsilon(1e-14));
}

TEST_CASE("bare Coulomb elements") {
  const LatticeSpec open = LatticeSpec::open();
  const BasisFunction g = unit_gaussian(1);
  const std::vector<CoulombTerm> nucleus{CoulombTerm::nucleus(0, kZero, 1.0)};
  CHECK(coulomb_bare_element(pair_composites(g, g), g, g, open, nucleus, kZero).real() ==
        doctest::Approx(-M_PI).epsilon(1e-14));
  const BasisFunction g2 = unit_gaussian(2);
  const PairComposite p2 = pair_composites(g2, g2);
  const double v = coulomb_bare_element(p2, g2, g2, open, electron_pair_terms(2), kZero).real();
  CHECK(v == doctest::Approx(4.373354).epsilon(1e-6));
  CHECK(v / p2.prefactor == doctest::Approx(2.0 / std::sqrt(M_PI)).epsilon(1e-14));
}

TEST_CASE("special functions") {
  CHECK(erf_over_r(0.0, 1.0) == doctest::Approx(1.128379).epsilon(1e-6));
  for (double r : {1e-7, 0.3, 2.0, 8.0})
    for (double s2 : {0.1, 1.0, 3.0}) {
      CHECK(std::abs(erf_over_r(r, s2) - erf_over_r_boys(r, s2)) <= 1e-14);
      CHECK(std::abs(radial_convolution_kernel(r, s2, 12) - erf_over_r(r, s2)) <= 1e-8);
      CHECK(std::abs(ewald_real_kernel(r, s2, 0.4, 10) - ewald_real_kernel_closed(r, s2, 0.4)) <= 1e-12);
    }
  const QuadratureRule gl = gauss_legendre(10);
  double x4 = 0.0;
  for (std::size_t i = 0; i < gl.nodes.size(); ++i) x4 += gl.weights[i] * std::pow(gl.nodes[i], 4);
  CHECK(x4 == doctest::Approx(0.4).epsilon(1e-14));
}

TEST_CASE("Ewald pieces") {
  CHECK(ewald_self_correction(0, 1.0, 1000.0) == 0.0);
  CHECK(ewald_self_correction(2, 1.0, 1000.0) == doctest::Approx(-1.131521).epsilon(1e-6));
  CHECK(ewald_self_correction(1, 0.7, 50.0) == doctest::Approx(-0.7 / std::sqrt(M_PI)).epsilon(1e-15));
  CHECK(madelung_energy(NuclearFrame{}, LatticeSpec::cubic(5.0), 0.5).energy == 0.0);

  SUBCASE("rocksalt") {
    NuclearFrame salt;
    for (int x = 0; x < 2; ++x)
      for (int y = 0; y < 2; ++y)
        for (int z = 0; z < 2; ++z) {
          salt.positions.emplace_back(x, y, z);
          salt.charges.push_back((x + y + z) % 2 == 0 ? 1.0 : -1.0);
        }
    const LatticeSpec cell = LatticeSpec::cubic(2.0);
    const double e1 = madelung_energy(salt, cell, 1.0).energy, e2 = madelung_energy(salt, cell, 2.0).energy;
    CHECK(std::abs(e1 - e2) <= 1e-9 * std::abs(e1));
    CHECK(-e1 / 4.0 == doctest::Approx(1.747565).epsilon(1e-6));
  }
  SUBCASE("chain frame in a 3D cell, two kappa values") {
    NuclearFrame f;
    f.positions = {Vec3(-1.0, 0, 0), Vec3(1.0, 0, 0)};
    f.charges = {1.0, 1.0};
    const LatticeSpec cell = LatticeSpec::cubic(4.0);
    const double a = madelung_energy(f, cell, 0.8).energy, b = madelung_energy(f, cell, 1.6).energy;
    CHECK(std::abs(a - b) <= 1e-9 * std::abs(a));
  }
  SUBCASE("reciprocal cutoff against extended shells") {
    const BasisFunction g = unit_gaussian(2);
    const PairComposite p = pair_composites(g, g);
    const LatticeSpec cell = LatticeSpec::cubic(4.0);
    const double kappa = std::sqrt(M_PI) / 4.0;
    const auto terms = all_coulomb_terms(2, h2_frame());
    const cplx base = coulomb_recip_element(p, g, g, cell, kappa, terms, kZero);
    const cplx ext = coulomb_recip_element_extended(p, g, g, cell, kappa, terms, kZero, 1e-14, 3);
    CHECK(std::abs(base - ext) <= 1e-12 * std::abs(ext));
  }
  SUBCASE("real-space kernel at vanishing kappa is the bare kernel") {
    for (double r : {0.0, 0.3, 1.7, 6.0})
      for (double s2 : {0.05, 0.5, 2.0}) {
        const double bare = erf_over_r(r, s2);
        CHECK(std::abs(ewald_real_kernel(r, s2, 1e-8, 20) - bare) <= 1e-6 * bare);
      }
  }
}

TEST_CASE("Hamiltonian elements") {
  std::mt19937_64 rng(17);
  const LatticeSpec chain = LatticeSpec::chain(3.0);
  const PeriodicEngine e(chain, h2_frame(), CoulombMode::neutral_shell(), Vec::Ones(2));
  std::vector<BasisFunction> basis;
  for (int i = 0; i < 3; ++i) basis.push_back(random_pair(rng, 1.0));
  const Vec3 k(0.37 * 2.0 * M_PI / 3.0, 0, 0);
  const auto m = assemble(e, basis, k);
  CHECK((m.hamiltonian - m.hamiltonian.adjoint()).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((m.overlap - m.overlap.adjoint()).cwiseAbs().maxCoeff() <= 1e-12);

  SUBCASE("kernel cache reproduces direct assembly") {
    const KernelCache cache(e, basis);
    const auto c = OperatorMatrixSet::from_cache(cache, k);
    CHECK((c.hamiltonian - m.hamiltonian).cwiseAbs().maxCoeff() <= 1e-13);
  }
  SUBCASE("Ewald and neutral shell agree on the chain embedded in a cube") {
    const LatticeSpec cube = LatticeSpec::cubic(6.0);
    const PeriodicEngine ns(cube, h2_frame(), CoulombMode::neutral_shell(), Vec::Ones(2));
    const PeriodicEngine ew(cube, h2_frame(), CoulombMode::ewald(), Vec::Ones(2));
    double worst = 0.0;
    for (int i = 0; i < 6; ++i) {
      const BasisFunction a = random_pair(rng, 1.0);
      const cplx x = ns.pair_kernels(a, a).hamiltonian(kZero), y = ew.pair_kernels(a, a).hamiltonian(kZero);
      worst = std::max(worst, std::abs(x - y) / std::abs(x));
    }
    CHECK(worst <= 1e-8);
  }
}

TEST_CASE("hydrogen in a large cell obeys the variational bound") {
  NuclearFrame h;
  h.positions = {kZero};
  h.charges = {1.0};
  const PeriodicEngine e(LatticeSpec::chain(100.0), h, CoulombMode::neutral_shell(), Vec::Ones(1));
  const double alpha = 8.0 / (9.0 * M_PI);
  const BasisFunction g(Mat::Constant(1, 1, std::sqrt(alpha)), Vec::Zero(3));
  const PairKernels pk = e.pair_kernels(g, g);
  const double rq = (pk.hamiltonian(kZero) / pk.overlap(kZero)).real();
  CHECK(rq >= -0.5);
  CHECK(rq == doctest::Approx(-4.0 / (3.0 * M_PI)).epsilon(1e-4));
}

TEST_CASE("shell weights") {
  for (int span : {-1, 8}) {
    const auto w = richardson_shell_weights(16, 4, 2, span);
    CHECK(w.size() == 17);
    CHECK(w[0] == doctest::Approx(1.0).epsilon(1e-12));
  }
  const auto plain = richardson_shell_weights(10, 0);
  for (double x : plain) CHECK(x == 1.0);
  CHECK_THROWS_AS(richardson_shell_weights(4, 4, 2, 8), Error);
}

TEST_CASE("engine contracts") {
  NuclearFrame charged;
  charged.positions = {kZero};
  charged.charges = {2.0};
  CHECK_THROWS_AS(PeriodicEngine(LatticeSpec::chain(3.0), charged, CoulombMode::neutral_shell(), Vec::Ones(1)), Error);
  LatticeSpec box = LatticeSpec::cubic(3.0);
  box.cell_lengths(2) = 4.0;
  CHECK_THROWS_AS(PeriodicEngine(box, h2_frame(), CoulombMode::neutral_shell(), Vec::Ones(2)), Error);
}

TEST_CASE("electron centred on a nucleus gives a finite shell energy") {
  NuclearFrame h;
  h.positions = {kZero};
  h.charges = {1.0};
  for (double len : {4.0, 10.0}) {
    const PeriodicEngine e(LatticeSpec::chain(len), h, CoulombMode::neutral_shell(), Vec::Ones(1));
    const BasisFunction g(Mat::Identity(1, 1), Vec::Zero(3));
    const cplx v = e.pair_kernels(g, g).hamiltonian(kZero);
    CHECK(std::isfinite(v.real()));
  }
}
