#include "pecg/oracles.hpp"
#include "pecg/pipeline.hpp"
#include "pecg/special.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace pecg {

namespace {

std::string le(double tol) {
  std::ostringstream os;
  os << "<= " << tol;
  return os.str();
}

CheckResult bound(std::string name, double measured, double tol) {
  return {std::move(name), le(tol), measured, measured <= tol};
}

double rel(cplx a, cplx b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

struct Fixtures {
  std::mt19937_64 rng{20240611};
  std::uniform_real_distribution<double> u{-1.0, 1.0};

  BasisFunction pair_function(double spread, double width = 1.0) {
    Mat l(2, 2);
    l << width * (1.0 + 0.4 * u(rng)), 0.0, 0.3 * width * u(rng), width * (1.0 + 0.4 * u(rng));
    Vec s(6);
    for (int i = 0; i < 6; ++i) s(i) = spread * u(rng);
    return BasisFunction(l, s);
  }
  NuclearFrame protons(double spread) {
    NuclearFrame f;
    f.positions = {Vec3(spread * u(rng), spread * u(rng), spread * u(rng)),
                   Vec3(spread * u(rng), spread * u(rng), spread * u(rng))};
    f.charges = {1.0, 1.0};
    return f;
  }
};

std::vector<CheckResult> quick_checks() {
  std::vector<CheckResult> out;
  Fixtures fx;
  const LatticeSpec open = LatticeSpec::open();

  {
    const BasisFunction g(Mat::Identity(1, 1), Vec::Zero(3));
    const PairComposite p = pair_composites(g, g);
    const double s = overlap_element(p, g, g, open, Vec3::Zero()).real();
    const double t = kinetic_element(p, g, g, open, Vec(), Vec3::Zero()).real();
    out.push_back(bound("overlap n=1 A=1 vs (pi/2)^1.5", std::abs(s - std::pow(M_PI / 2.0, 1.5)), 1e-12));
    out.push_back(bound("kinetic n=1 A=1 vs 1.5 S", std::abs(t - 1.5 * s), 1e-12));
  }
  {
    double worst = 0.0;
    for (double r : {1e-6, 0.1, 0.7, 2.0, 9.0})
      for (double s2 : {0.05, 1.0, 4.0}) worst = std::max(worst, std::abs(erf_over_r(r, s2) - erf_over_r_boys(r, s2)));
    out.push_back(bound("erf kernel vs Boys form", worst, 1e-14));
  }
  {
    const auto q = chain_shell_charges();
    out.push_back({"chain shell charge sum", "== 0", double(q[0] + q[1] + q[2] + q[3]), q[0] + q[1] + q[2] + q[3] == 0});
    const auto w = richardson_shell_weights(16, 4, 2);
    out.push_back(bound("richardson weight of shell 0 is 1", std::abs(w[0] - 1.0), 1e-12));
  }
  {
    ChainConfig cc;
    cc.cell_length = 3.0;
    cc.k_mesh = 7;
    std::vector<BasisFunction> basis;
    for (int i = 0; i < 4; ++i) basis.push_back(fx.pair_function(1.0));
    const auto m = chain_hamiltonian(basis, cc, 0.3 * M_PI / cc.cell_length);
    out.push_back(bound("chain H hermitian at 0.3 pi/L", (m.hamiltonian - m.hamiltonian.adjoint()).cwiseAbs().maxCoeff(), 1e-12));
    const BandStructure b = band_structure(basis, cc);
    double asym = 0.0;
    for (std::size_t i = 0; i < b.energies.size(); ++i)
      asym = std::max(asym, std::abs(b.energies[i] - b.energies[b.energies.size() - 1 - i]));
    out.push_back(bound("band E(k) = E(-k)", asym, 1e-10));
  }
  {
    BandStructure b;
    b.cell_length = 2.0;
    for (int i = 0; i < 9; ++i) {
      const double k = -M_PI / 2.0 + M_PI * i / 8.0;
      b.k_values.push_back(k);
      b.energies.push_back(-1.0 + 2.0 * -0.1 * std::cos(2.0 * k));
    }
    const auto f = tight_binding_fit(b, 2.0);
    out.push_back(bound("tight-binding synthetic recovery", std::max({std::abs(f.epsilon0 + 1.0), std::abs(f.t + 0.1), f.rms_error}), 1e-12));
  }
  {
    std::vector<BasisFunction> basis{fx.pair_function(1.0), fx.pair_function(1.0)};
    basis[1].absorbed_log_constant = 0.37;
    std::stringstream ss;
    write_basis(ss, basis, "check");
    const auto back = read_basis(ss);
    const NuclearFrame fr = fx.protons(0.5);
    const PeriodicEngine e(LatticeSpec::chain(3.0), fr, CoulombMode::neutral_shell(), Vec::Ones(2));
    const Vec3 k(0.4, 0, 0);
    const auto a = assemble(e, basis, k), b = assemble(e, back, k);
    out.push_back(bound("basis file round trip", (a.hamiltonian - b.hamiltonian).cwiseAbs().maxCoeff(), 1e-12));
  }
  {
    const BasisFunction a = fx.pair_function(1.0), b = fx.pair_function(1.0);
    const LatticeSpec cub = LatticeSpec::cubic(6.0);
    const PairComposite p = pair_composites(a, b);
    const auto terms = all_coulomb_terms(2, fx.protons(1.0));
    const double kappa = std::sqrt(M_PI) / 6.0;
    const cplx v10 = coulomb_real_element(p, a, b, cub, kappa, terms, 10, Vec3::Zero());
    const cplx v40 = coulomb_real_element(p, a, b, cub, kappa, terms, 40, Vec3::Zero());
    out.push_back(bound("real-space quadrature 10 vs 40 nodes", rel(v10, v40), 1e-12));
  }
  {
    const BasisFunction g(Mat::Constant(1, 1, std::sqrt(0.5)), Vec::Zero(3));
    const PairComposite p = pair_composites(g, g);
    const LatticeSpec chain = LatticeSpec::chain(1.0);
    const cplx dual = image_sum_dual(p, chain, Vec3::Zero());
    const cplx direct = image_sum_direct(enumerate_images(p, chain, 60.0), [](const ImageGeometry&) { return cplx(1.0); },
                                         Vec3::Zero(), chain.cell_lengths);
    out.push_back(bound("direct vs dual image sum", rel(dual, direct), 1e-10));
  }
  return out;
}

std::vector<CheckResult> full_checks(int threads) {
  std::vector<CheckResult> out;
  Fixtures fx;
  const LatticeSpec cub = LatticeSpec::cubic(6.0);
  {
    double e_worst = 0.0, d_worst = 0.0, k_worst = 0.0;
    for (int c = 0; c < 5; ++c) {
      const NuclearFrame fr = fx.protons(1.5);
      const BasisFunction a = fx.pair_function(1.0), b = fx.pair_function(1.0);
      const PeriodicEngine ns(cub, fr, CoulombMode::neutral_shell(), Vec::Ones(2));
      const PeriodicEngine ew(cub, fr, CoulombMode::ewald(), Vec::Ones(2));
      const PeriodicEngine dc(cub, fr, CoulombMode::delta_convolution(), Vec::Ones(2));
      const cplx h_ns = ns.pair_kernels(a, b).hamiltonian(Vec3::Zero());
      const cplx h_ew = ew.pair_kernels(a, b).hamiltonian(Vec3::Zero());
      e_worst = std::max(e_worst, std::abs(h_ew - h_ns) / std::abs(h_ns));
      d_worst = std::max(d_worst, std::abs(dc.pair_kernels(a, b).hamiltonian(Vec3::Zero()) - h_ns) / std::abs(h_ns));
      for (double f : {0.5, 2.0}) {
        const PeriodicEngine ek(cub, fr, CoulombMode::ewald(f * std::sqrt(M_PI) / 6.0), Vec::Ones(2));
        k_worst = std::max(k_worst, rel(ek.pair_kernels(a, b).hamiltonian(Vec3::Zero()), h_ew));
      }
    }
    out.push_back(bound("Ewald vs neutral shell", e_worst, 1e-8));
    out.push_back(bound("delta convolution vs neutral shell", d_worst, 1e-8));
    out.push_back(bound("Ewald kappa invariance", k_worst, 1e-9));
  }
  {
    ChainConfig cc;
    cc.cell_length = 3.0;
    const ChainEngine ch(cc);
    const PeriodicEngine pe(cc.lattice(), cc.frame(), CoulombMode::neutral_shell(), Vec::Ones(2));
    double worst = 0.0;
    for (int i = 0; i < 5; ++i) {
      const BasisFunction a = fx.pair_function(1.2), b = fx.pair_function(1.2);
      const Vec3 k(0.3 * M_PI / 3.0, 0, 0);
      worst = std::max(worst, rel(ch.pair_kernels(a, b).hamiltonian(k), pe.pair_kernels(a, b).hamiltonian(k)));
    }
    out.push_back(bound("chain engine vs generic shell route", worst, 1e-10));
  }
  {
    ChainConfig cc;
    cc.cell_length = 3.0;
    LatticeSpec lat = cc.lattice();
    lat.chi2_cut = 60.0; // keeps image-set jumps out of the finite differences
    const PeriodicEngine e(lat, cc.frame(), CoulombMode::neutral_shell(), Vec::Ones(2));
    EnergyModel model(e, {Vec3::Zero(), Vec3(0.5, 0, 0)}, 1e-12, threads);
    std::vector<BasisFunction> basis;
    for (int i = 0; i < 4; ++i) basis.push_back(normalize_candidate(fx.pair_function(1.0)));
    model.reset(basis);
    double worst = 0.0;
    for (const auto& r : gradient_check(model, 1)) worst = std::max(worst, r.rel_error);
    out.push_back(bound("analytic vs finite-difference gradient", worst, 1e-6));
  }
  {
    const LatticeSpec chain = LatticeSpec::chain(3.0);
    const BasisFunction a = fx.pair_function(1.0), b = fx.pair_function(1.0);
    double worst = 0.0;
    for (double k : {0.0, M_PI / 3.0})
      for (const auto& op : {OracleOperatorSpec::overlap(), OracleOperatorSpec::kinetic(),
                             OracleOperatorSpec::contact(DeltaTarget::electron_pair(0, 1, Vec3(0.2, 0.1, 0.0)))})
        worst = std::max(worst, unfolding_check(a, b, op, chain, 6, Vec3(k, 0, 0)).rel_error);
    out.push_back(bound("unfolding cell integral vs single sum", worst, 1e-10));
  }
  {
    const BasisFunction a = fx.pair_function(0.8), b = fx.pair_function(0.8);
    const std::vector<std::vector<int>> im{{0, 0, 0, 0, 0, 0}};
    const LatticeSpec open = LatticeSpec::open();
    double worst = 0.0;
    for (const auto& op : {OracleOperatorSpec::overlap(), OracleOperatorSpec::kinetic(),
                           OracleOperatorSpec::contact(DeltaTarget::electron_pair(0, 1))})
      worst = std::max(worst, quadrature_oracle(op, a, b, open, im, Vec3::Zero()).rel_error);
    out.push_back(bound("grid oracle overlap/kinetic/delta", worst, 1e-9));
    OracleOptions opt;
    opt.threads = threads;
    const auto r = quadrature_oracle(OracleOperatorSpec::coulomb(all_coulomb_terms(2, fx.protons(0.5))), a, b, open,
                                     im, Vec3::Zero(), opt);
    out.push_back({"Monte Carlo Coulomb oracle (standard errors)", "<= 3", r.abs_error / r.oracle_uncertainty,
                   r.agrees(0.0, 3.0)});
  }
  return out;
}

} // namespace

std::vector<CheckResult> run_validation(bool full, int threads) {
  auto out = quick_checks();
  if (full) {
    auto more = full_checks(threads);
    out.insert(out.end(), more.begin(), more.end());
  }
  return out;
}

} // namespace pecg
