#include "pecg/hchain.hpp"

#include "pecg/parallel.hpp"
#include "pecg/special.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>

namespace pecg {

namespace {

// erf(R/s)/R is treated as 1/R beyond this many widths (erfc(sqrt 45) ~ 1e-21)
constexpr double kNear2 = 45.0;

struct ChainTerm {
  double sigma2;
  Vec3 disp;
  double coefficient;
};

// ee pair and the four electron-nucleus terms, from recentred electron positions
std::vector<ChainTerm> chain_terms(const PairComposite& pair, const MatX3& r, double a) {
  const Vec3 r1 = r.row(0).transpose(), r2 = r.row(1).transpose();
  const Vec3 na(a, 0, 0);
  std::vector<ChainTerm> out;
  out.push_back({pair.sigma_pair(0, 1), r1 - r2, 1.0});
  for (int i = 0; i < 2; ++i) {
    const Vec3 ri = i == 0 ? r1 : r2;
    out.push_back({pair.sigma_single(i), ri - na, -1.0});
    out.push_back({pair.sigma_single(i), ri + na, -1.0});
  }
  return out;
}

MatX3 recentred(const ImageGeometry& g, double length) {
  MatX3 r = g.combined_center;
  for (int i = 0; i < r.rows(); ++i) r(i, 0) -= length * std::round(r(i, 0) / length);
  return r;
}

double image_scale(const PairComposite& pair, const ImageGeometry& g) {
  return pair.prefactor * g.weight * std::exp(-pair.absorbed);
}

double kinetic(const PairComposite& pair, const MatX3& d) {
  const Mat& c = pair.c_kl;
  double q = 0.0;
  for (int mu = 0; mu < 3; ++mu) q += (c * d.col(mu)).squaredNorm();
  return 0.5 * (6.0 * c.trace() - 4.0 * q);
}

// wrapper that exposes one shell operator through the cache machinery
class ShellOnlyEngine : public ElementEngine {
public:
  ShellOnlyEngine(const ChainEngine& chain, int p) : chain_(chain), p_(p) {}
  int particle_count() const override { return 2; }
  Vec3 cell_lengths() const override { return chain_.cell_lengths(); }
  PairKernels pair_kernels(const BasisFunction& bra, const BasisFunction& ket) const override {
    return chain_.shell_kernels(bra, ket, p_);
  }

private:
  const ChainEngine& chain_;
  int p_;
};

} // namespace

NuclearFrame ChainConfig::frame() const {
  const double a = offset();
  NuclearFrame f;
  f.positions = {Vec3(-a, 0, 0), Vec3(a, 0, 0)};
  f.charges = {1.0, 1.0};
  return f;
}

LatticeSpec ChainConfig::lattice() const { return LatticeSpec::chain(cell_length); }

std::vector<double> ChainConfig::k_values() const {
  std::vector<double> ks;
  if (k_mesh == 1) return {0.0};
  for (int j = 0; j < k_mesh; ++j) ks.push_back(-M_PI / cell_length + 2.0 * M_PI * j / ((k_mesh - 1) * cell_length));
  return ks;
}

void ChainConfig::validate() const {
  if (!(cell_length > 0.0)) throw Error(ErrorKind::ParameterDomain, "cell length must be positive");
  const double a = offset();
  if (!(a > 0.0) || !(2.0 * a < cell_length))
    throw Error(ErrorKind::ParameterDomain, "nuclear offset must satisfy 0 < 2a < L");
  if (shell_cut < 1) throw Error(ErrorKind::ParameterDomain, "shell cut must be >= 1");
  if (richardson_terms < 0 || richardson_terms > shell_cut)
    throw Error(ErrorKind::ParameterDomain, "richardson terms must lie in [0, shell_cut]");
  if (k_mesh < 1) throw Error(ErrorKind::ParameterDomain, "k mesh needs at least one point");
}

double chain_shell_constant(const ChainConfig& config, int p) {
  const double a = config.offset(), l = config.cell_length;
  if (p == 0) return 1.0 / (2.0 * a);
  const double pl = p * l;
  return 2.0 / pl + 1.0 / (pl - 2.0 * a) + 1.0 / (pl + 2.0 * a) + 2.0 / pl;
}

std::array<int, 4> chain_shell_charges() { return {2, -8, 2, 4}; }

ChainEngine::ChainEngine(ChainConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto q = chain_shell_charges();
  if (q[0] + q[1] + q[2] + q[3] != 0) throw Error(ErrorKind::Contract, "chain shell is not neutral");
  lattice_ = config_.lattice();
  weights_ = richardson_shell_weights(config_.shell_cut, config_.richardson_terms, 2);
}

double ChainEngine::shell_potential(const PairComposite& pair, const ImageGeometry& g, int p) const {
  const double l = config_.cell_length;
  const MatX3 r = recentred(g, l);
  double v = chain_shell_constant(config_, p);
  for (const auto& t : chain_terms(pair, r, config_.offset())) {
    for (int sign : {-1, 1}) {
      if (p == 0 && sign == 1) break;
      const Vec3 d = t.disp - Vec3(sign * p * l, 0, 0);
      v += t.coefficient * erf_over_r_boys(d.norm(), t.sigma2);
    }
  }
  return v;
}

double ChainEngine::potential(const PairComposite& pair, const ImageGeometry& g) const {
  const double l = config_.cell_length;
  const int pc = config_.shell_cut;
  const MatX3 r = recentred(g, l);
  double v = 0.0;
  for (int p = 0; p <= pc; ++p) v += weights_[p] * chain_shell_constant(config_, p);
  for (const auto& t : chain_terms(pair, r, config_.offset())) {
    const double near2 = kNear2 * t.sigma2;
    double tv = 0.0;
    for (int n = -pc; n <= pc; ++n) {
      const double w = weights_[std::abs(n)];
      const Vec3 d = t.disp - Vec3(n * l, 0, 0);
      const double r2 = d.squaredNorm(), rr = std::sqrt(r2);
      if (r2 <= near2) {
        tv += erf_over_r_boys(rr, t.sigma2);
        if (w != 1.0) tv += (w - 1.0) / rr;
      } else if (w != 0.0) {
        tv += w / rr;
      }
    }
    // smeared remainder of the shells beyond the cut
    const double rc = std::sqrt(near2);
    const int lo = static_cast<int>(std::ceil((t.disp(0) - rc) / l));
    const int hi = static_cast<int>(std::floor((t.disp(0) + rc) / l));
    for (int n = lo; n <= hi; ++n) {
      if (std::abs(n) <= pc) continue;
      const Vec3 d = t.disp - Vec3(n * l, 0, 0);
      const double r2 = d.squaredNorm();
      if (r2 > near2) continue;
      const double rr = std::sqrt(r2);
      tv += erf_over_r_boys(rr, t.sigma2) - 1.0 / rr;
    }
    v += t.coefficient * tv;
  }
  return v;
}

PairKernels ChainEngine::pair_kernels(const BasisFunction& bra, const BasisFunction& ket) const {
  const PairComposite pair = pair_composites(bra, ket);
  if (pair.n() != 2) throw Error(ErrorKind::ParameterDomain, "chain basis functions carry two electrons");
  const ImageSet images = enumerate_images(pair, lattice_);
  PairKernels out;
  out.cell_lengths = lattice_.cell_lengths;
  for (const auto& g : images.geometries) {
    const double s = image_scale(pair, g);
    out.add({g.tau, s, s * kinetic(pair, g.shift_diff), s * potential(pair, g)});
  }
  return out;
}

PairKernels ChainEngine::shell_kernels(const BasisFunction& bra, const BasisFunction& ket, int p) const {
  if (p < 0) throw Error(ErrorKind::ParameterDomain, "shell index must be >= 0");
  const PairComposite pair = pair_composites(bra, ket);
  if (pair.n() != 2) throw Error(ErrorKind::ParameterDomain, "chain basis functions carry two electrons");
  const ImageSet images = enumerate_images(pair, lattice_);
  PairKernels out;
  out.cell_lengths = lattice_.cell_lengths;
  for (const auto& g : images.geometries) {
    const double s = image_scale(pair, g);
    out.add({g.tau, 0.0, 0.0, s * shell_potential(pair, g, p)});
  }
  return out;
}

double shell_operator_element(const BasisFunction& bra, const BasisFunction& ket, const ChainConfig& config,
                              int p) {
  const ChainEngine engine(config);
  return engine.shell_kernels(bra, ket, p).potential(Vec3::Zero()).real();
}

ChainMatrices chain_hamiltonian(const std::vector<BasisFunction>& basis, const ChainConfig& config, double k) {
  const ChainEngine engine(config);
  const KernelCache cache(engine, basis, config.threads);
  const auto m = OperatorMatrixSet::from_cache(cache, Vec3(k, 0, 0));
  return {m.hamiltonian, m.overlap};
}

BandStructure band_structure(const KernelCache& cache, const ChainConfig& config) {
  BandStructure band;
  band.cell_length = config.cell_length;
  band.k_values = config.k_values();
  band.energies.assign(band.k_values.size(), 0.0);
  parallel_for(static_cast<int>(band.k_values.size()), config.threads, [&](int i) {
    const auto m = OperatorMatrixSet::from_cache(cache, Vec3(band.k_values[i], 0, 0));
    band.energies[i] = lowest_eigenvalue(m.hamiltonian, m.overlap);
  });
  return band;
}

BandStructure band_structure(const std::vector<BasisFunction>& basis, const ChainConfig& config) {
  const ChainEngine engine(config);
  const KernelCache cache(engine, basis, config.threads);
  const ShellOnlyEngine last(engine, config.shell_cut);
  const KernelCache tail(last, basis, config.threads);
  BandStructure band;
  band.cell_length = config.cell_length;
  band.k_values = config.k_values();
  const std::size_t nk = band.k_values.size();
  band.energies.assign(nk, 0.0);
  band.tail_errors.assign(nk, 0.0);
  const double pc = config.shell_cut;
  parallel_for(static_cast<int>(nk), config.threads, [&](int i) {
    const Vec3 k(band.k_values[i], 0, 0);
    const auto m = OperatorMatrixSet::from_cache(cache, k);
    const SpectrumResult sp = solve_generalized(m.hamiltonian, m.overlap);
    band.energies[i] = sp.eigenvalues(0);
    const CVec c = sp.eigenvectors.col(0);
    const CMat vp = OperatorMatrixSet::from_cache(tail, k).potential;
    band.tail_errors[i] = std::abs((c.adjoint() * vp * c)(0, 0)) * pc / 2.0;
  });
  band.fit = tight_binding_fit(band, config.cell_length);
  return band;
}

double shell_tail_estimate(const std::vector<BasisFunction>& basis, const ChainConfig& config, double k,
                           const CVec& state) {
  const ChainEngine engine(config);
  const ShellOnlyEngine last(engine, config.shell_cut);
  const KernelCache tail(last, basis, config.threads);
  const CMat vp = OperatorMatrixSet::from_cache(tail, Vec3(k, 0, 0)).potential;
  return std::abs((state.adjoint() * vp * state)(0, 0)) * config.shell_cut / 2.0;
}

TightBindingFit tight_binding_fit(const BandStructure& band, double cell_length) {
  const std::size_t n = band.k_values.size();
  if (band.energies.size() != n) throw Error(ErrorKind::ParameterDomain, "band has mismatched k and energy lists");
  // distinct values of cos(kL) decide whether the two-parameter fit is determined
  std::vector<double> cs;
  for (double k : band.k_values) {
    const double c = std::cos(k * cell_length);
    bool seen = false;
    for (double x : cs) seen = seen || std::abs(x - c) < 1e-12;
    if (!seen) cs.push_back(c);
  }
  if (n < 3 || cs.size() < 2) throw Error(ErrorKind::NumericDomain, "degenerate k mesh for the tight-binding fit");
  Mat a(n, 2);
  Vec y(n);
  for (std::size_t i = 0; i < n; ++i) {
    a(i, 0) = 1.0;
    a(i, 1) = 2.0 * std::cos(band.k_values[i] * cell_length);
    y(i) = band.energies[i];
  }
  const Vec x = a.colPivHouseholderQr().solve(y);
  const Vec res = a * x - y;
  TightBindingFit fit;
  fit.epsilon0 = x(0);
  fit.t = x(1);
  fit.bandwidth = 4.0 * std::abs(fit.t);
  fit.rms_error = std::sqrt(res.squaredNorm() / n);
  fit.max_error = res.cwiseAbs().maxCoeff();
  return fit;
}

void write_band_csv(std::ostream& os, const BandStructure& band, const std::string& provenance) {
  os << "# " << provenance << "\n";
  os << "k,kL,E_hartree,E_per_atom_hartree,tail_error_hartree\n";
  os << std::setprecision(15);
  for (std::size_t i = 0; i < band.k_values.size(); ++i) {
    const double k = band.k_values[i];
    os << k << "," << k * band.cell_length << "," << band.energies[i] << "," << band.energies[i] / band.atoms_per_cell << ",";
    if (i < band.tail_errors.size()) os << band.tail_errors[i];
    os << "\n";
  }
}

void write_fit_summary(std::ostream& os, const std::vector<BandStructure>& bands, const std::string& provenance) {
  os << "# " << provenance << "\n";
  os << std::left << std::setw(8) << "L" << std::setw(12) << "W" << std::setw(14) << "eps0" << std::setw(12) << "t"
     << std::setw(12) << "rms" << "max\n";
  os << std::fixed;
  for (const auto& b : bands) {
    if (!b.fit) continue;
    const auto& f = *b.fit;
    os << std::setw(8) << std::setprecision(2) << b.cell_length << std::setprecision(5) << std::setw(12)
       << f.bandwidth << std::setw(14) << f.epsilon0 << std::setw(12) << f.t << std::setw(12) << f.rms_error
       << f.max_error << "\n";
  }
  os.unsetf(std::ios::fixed);
}

} // namespace pecg
