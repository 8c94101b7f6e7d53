#include "pecg/elements.hpp"

#include "pecg/parallel.hpp"
#include "pecg/special.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

namespace pecg {

namespace {

constexpr double kSqrtPi = 1.7724538509055160273;

Vec default_masses(const Vec& masses, int n) {
  if (masses.size() == 0) return Vec::Ones(n);
  if (masses.size() != n) throw Error(ErrorKind::ParameterDomain, "mass vector length differs from n");
  for (int i = 0; i < n; ++i)
    if (!(masses(i) > 0.0)) throw Error(ErrorKind::ParameterDomain, "masses must be positive");
  return masses;
}

double image_scale(const PairComposite& pair, const ImageGeometry& g) {
  return pair.prefactor * g.weight * std::exp(-pair.absorbed);
}

// 1/2 [6 Tr(Lambda C) - 4 sum_c d_c^T C Lambda C d_c]
double kinetic_factor(const PairComposite& pair, const Vec& inv_mass, const MatX3& d) {
  const Mat& c = pair.c_kl;
  double tr = 0.0;
  for (int i = 0; i < c.rows(); ++i) tr += inv_mass(i) * c(i, i);
  double quad = 0.0;
  for (int mu = 0; mu < 3; ++mu) {
    const Vec cd = c * d.col(mu);
    quad += cd.dot(inv_mass.cwiseProduct(cd));
  }
  return 0.5 * (6.0 * tr - 4.0 * quad);
}

double term_sigma2(const PairComposite& pair, const CoulombTerm& t) {
  return t.is_pair() ? pair.sigma_pair(t.i, t.j) : pair.sigma_single(t.i);
}

Vec3 term_displacement(const MatX3& centers, const CoulombTerm& t) {
  const Vec3 ri = centers.row(t.i).transpose();
  if (t.is_pair()) return ri - centers.row(t.j).transpose();
  return ri - t.position;
}

std::vector<Vec3i> shell_indices(const LatticeSpec& lattice, int p) {
  std::vector<Vec3i> out;
  if (p == 0) {
    out.push_back(Vec3i::Zero());
    return out;
  }
  Vec3i lo, hi;
  for (int mu = 0; mu < 3; ++mu) {
    lo(mu) = lattice.periodic[mu] ? -p : 0;
    hi(mu) = lattice.periodic[mu] ? p : 0;
  }
  for (int a = lo(0); a <= hi(0); ++a)
    for (int b = lo(1); b <= hi(1); ++b)
      for (int c = lo(2); c <= hi(2); ++c)
        if (std::max({std::abs(a), std::abs(b), std::abs(c)}) == p) out.emplace_back(a, b, c);
  return out;
}

Vec3 lattice_vector(const Vec3i& n, const LatticeSpec& lattice) {
  return n.cast<double>().cwiseProduct(lattice.cell_lengths);
}

// reciprocal vectors with G^2 <= g2max, G != 0, sorted by |G|, each with (4pi/Omega) e^{-G^2/4k^2}/G^2
std::vector<std::pair<Vec3, double>> reciprocal_vectors(const LatticeSpec& lattice, double kappa,
                                                        double g2max) {
  std::vector<std::pair<Vec3, double>> out;
  const double omega = lattice.volume();
  Vec3i nmax;
  Vec3 b;
  for (int mu = 0; mu < 3; ++mu) {
    b(mu) = 2.0 * M_PI / lattice.cell_lengths(mu);
    nmax(mu) = lattice.periodic[mu] ? static_cast<int>(std::floor(std::sqrt(g2max) / b(mu))) : 0;
  }
  for (int i = -nmax(0); i <= nmax(0); ++i)
    for (int j = -nmax(1); j <= nmax(1); ++j)
      for (int l = -nmax(2); l <= nmax(2); ++l) {
        if (i == 0 && j == 0 && l == 0) continue;
        const Vec3 g(i * b(0), j * b(1), l * b(2));
        const double g2 = g.squaredNorm();
        if (g2 > g2max) continue;
        out.emplace_back(g, 4.0 * M_PI / omega * std::exp(-g2 / (4.0 * kappa * kappa)) / g2);
      }
  std::sort(out.begin(), out.end(),
            [](const auto& x, const auto& y) { return x.first.squaredNorm() < y.first.squaredNorm(); });
  return out;
}

double recip_term(const std::vector<std::pair<Vec3, double>>& gvecs, const Vec3& disp, double sigma2,
                  double g2cut) {
  double sum = 0.0;
  for (const auto& [g, c] : gvecs) {
    const double g2 = g.squaredNorm();
    if (g2 > g2cut) break;
    sum += c * std::cos(g.dot(disp)) * std::exp(-0.25 * sigma2 * g2);
  }
  return sum;
}

double recip_cutoff(double kappa, double sigma2, double epsilon) {
  return 4.0 * std::log(1.0 / epsilon) / (1.0 / (kappa * kappa) + sigma2);
}

double real_term(const LatticeSpec& lattice, const Vec3& disp, double sigma2, double kappa, int points) {
  const double sigma_eff2 = sigma2 + 1.0 / (kappa * kappa);
  const double rc = std::sqrt(sigma_eff2) * std::sqrt(45.5);
  Vec3i lo, hi;
  for (int mu = 0; mu < 3; ++mu) {
    if (!lattice.periodic[mu]) {
      lo(mu) = hi(mu) = 0;
      continue;
    }
    const double len = lattice.cell_lengths(mu);
    lo(mu) = static_cast<int>(std::ceil((-disp(mu) - rc) / len));
    hi(mu) = static_cast<int>(std::floor((-disp(mu) + rc) / len));
  }
  double sum = 0.0;
  for (int a = lo(0); a <= hi(0); ++a)
    for (int b = lo(1); b <= hi(1); ++b)
      for (int c = lo(2); c <= hi(2); ++c) {
        const Vec3 v = disp + lattice_vector(Vec3i(a, b, c), lattice);
        const double r = v.norm();
        if (r <= rc) sum += ewald_real_kernel(r, sigma2, kappa, points);
      }
  return sum;
}

template <class Fn>
cplx sum_over_images(const PairComposite& pair, const LatticeSpec& lattice, const Vec3& k, Fn&& fn) {
  const ImageSet images = enumerate_images(pair, lattice);
  cplx sum = 0.0;
  for (const auto& g : images.geometries)
    sum += bloch_phase(g.tau, lattice.cell_lengths, k) * image_scale(pair, g) * fn(g);
  if (k.isZero(0.0)) sum.imag(0.0);
  return sum;
}

void require_ewald_lattice(const LatticeSpec& lattice) {
  if (!lattice.fully_periodic())
    throw Error(ErrorKind::Mode, "the Ewald route needs three periodic axes");
}

template <class T>
T* find_tau(std::vector<T>& v, const Vec3i& tau) {
  for (auto& t : v)
    if (t.tau == tau) return &t;
  return nullptr;
}

PairKernels reversed(const PairKernels& p) {
  PairKernels r = p;
  for (auto& t : r.terms) t.tau = -t.tau;
  return r;
}

} // namespace

// ---------------------------------------------------------------- modes

CoulombMode CoulombMode::ewald(std::optional<double> kappa, int quadrature_points) {
  CoulombMode m;
  m.kind = Kind::Ewald;
  m.kappa = kappa;
  m.quadrature_points = quadrature_points;
  return m;
}

CoulombMode CoulombMode::neutral_shell(int p_cut, int richardson_terms) {
  CoulombMode m;
  m.kind = Kind::NeutralShell;
  m.p_cut = p_cut;
  m.richardson_terms = richardson_terms;
  return m;
}

CoulombMode CoulombMode::delta_convolution(int radial_points, int p_cut, int richardson_terms) {
  CoulombMode m;
  m.kind = Kind::DeltaConvolution;
  m.radial_quadrature_points = radial_points;
  m.p_cut = p_cut;
  m.richardson_terms = richardson_terms;
  return m;
}

int CoulombMode::effective_richardson(const LatticeSpec& lattice) const {
  if (richardson_terms >= 0) return richardson_terms;
  return lattice.periodic_count() > 0 ? 4 : 0;
}

double CoulombMode::effective_kappa(const LatticeSpec& lattice) const {
  if (kappa) return *kappa;
  if (lattice.ewald_kappa) return *lattice.ewald_kappa;
  const double len = lattice.mean_periodic_length();
  if (!(len > 0.0)) throw Error(ErrorKind::Mode, "no periodic axis to set the Ewald split");
  return kSqrtPi / len;
}

std::string CoulombMode::name() const {
  switch (kind) {
  case Kind::Ewald: return "ewald";
  case Kind::NeutralShell: return "neutral_shell";
  case Kind::DeltaConvolution: return "delta_convolution";
  }
  return "unknown";
}

std::vector<CoulombTerm> electron_pair_terms(int n) {
  std::vector<CoulombTerm> out;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) out.push_back(CoulombTerm::electron_pair(i, j));
  return out;
}

std::vector<CoulombTerm> all_coulomb_terms(int n, const NuclearFrame& frame) {
  std::vector<CoulombTerm> out = electron_pair_terms(n);
  for (int i = 0; i < n; ++i)
    for (std::size_t a = 0; a < frame.size(); ++a)
      out.push_back(CoulombTerm::nucleus(i, frame.positions[a], frame.charges[a]));
  return out;
}

// ---------------------------------------------------------------- single elements

cplx overlap_element(const PairComposite& pair, const BasisFunction&, const BasisFunction&,
                     const LatticeSpec& lattice, const Vec3& k) {
  if (select_representation(pair, lattice) == Representation::Dual)
    return pair.prefactor * std::exp(-pair.absorbed) * image_sum_dual(pair, lattice, k, nullptr);
  return sum_over_images(pair, lattice, k, [](const ImageGeometry&) { return 1.0; });
}

cplx kinetic_element(const PairComposite& pair, const BasisFunction&, const BasisFunction&,
                     const LatticeSpec& lattice, const Vec& masses, const Vec3& k) {
  const Vec inv = default_masses(masses, pair.n()).cwiseInverse();
  return sum_over_images(pair, lattice, k,
                         [&](const ImageGeometry& g) { return kinetic_factor(pair, inv, g.shift_diff); });
}

cplx delta_element(const PairComposite& pair, const BasisFunction&, const BasisFunction&,
                   const LatticeSpec& lattice, const DeltaTarget& target, const Vec3& k) {
  const int n = pair.n();
  if (target.i < 0 || target.i >= n) throw Error(ErrorKind::ParameterDomain, "delta particle index out of range");
  if (target.kind == DeltaTarget::Kind::ElectronPair && (target.j < 0 || target.j >= n || target.j == target.i))
    throw Error(ErrorKind::ParameterDomain, "delta pair indices invalid");
  const bool is_pair = target.kind == DeltaTarget::Kind::ElectronPair;
  const double s2 = is_pair ? pair.sigma_pair(target.i, target.j) : pair.sigma_single(target.i);
  const double norm = std::pow(M_PI * s2, -1.5);
  return sum_over_images(pair, lattice, k, [&](const ImageGeometry& g) {
    Vec3 r = g.combined_center.row(target.i).transpose();
    if (is_pair) r -= g.combined_center.row(target.j).transpose();
    return norm * std::exp(-(r - target.position).squaredNorm() / s2);
  });
}

cplx coulomb_bare_element(const PairComposite& pair, const BasisFunction&, const BasisFunction&,
                          const LatticeSpec& lattice, const std::vector<CoulombTerm>& terms, const Vec3& k) {
  return sum_over_images(pair, lattice, k, [&](const ImageGeometry& g) {
    double v = 0.0;
    for (const auto& t : terms)
      v += t.coefficient * erf_over_r(term_displacement(g.combined_center, t).norm(), term_sigma2(pair, t));
    return v;
  });
}

cplx coulomb_recip_element(const PairComposite& pair, const BasisFunction& bra, const BasisFunction& ket,
                           const LatticeSpec& lattice, double kappa, const std::vector<CoulombTerm>& terms,
                           const Vec3& k, double epsilon) {
  return coulomb_recip_element_extended(pair, bra, ket, lattice, kappa, terms, k, epsilon, 0);
}

cplx coulomb_recip_element_extended(const PairComposite& pair, const BasisFunction&, const BasisFunction&,
                                    const LatticeSpec& lattice, double kappa,
                                    const std::vector<CoulombTerm>& terms, const Vec3& k, double epsilon,
                                    int extra_shells) {
  require_ewald_lattice(lattice);
  if (!(kappa > 0.0)) throw Error(ErrorKind::ParameterDomain, "kappa must be positive");
  double smin = 1e300;
  for (const auto& t : terms) smin = std::min(smin, term_sigma2(pair, t));
  const double gstep = 2.0 * M_PI / lattice.cell_lengths.minCoeff();
  const double gmax = std::sqrt(recip_cutoff(kappa, terms.empty() ? 0.0 : smin, epsilon)) + extra_shells * gstep;
  const auto gvecs = reciprocal_vectors(lattice, kappa, gmax * gmax);
  return sum_over_images(pair, lattice, k, [&](const ImageGeometry& g) {
    double v = 0.0;
    for (const auto& t : terms) {
      const double s2 = term_sigma2(pair, t);
      const double cut = std::sqrt(recip_cutoff(kappa, s2, epsilon)) + extra_shells * gstep;
      v += t.coefficient * recip_term(gvecs, term_displacement(g.combined_center, t), s2, cut * cut);
    }
    return v;
  });
}

cplx coulomb_real_element(const PairComposite& pair, const BasisFunction&, const BasisFunction&,
                          const LatticeSpec& lattice, double kappa, const std::vector<CoulombTerm>& terms,
                          int quadrature_points, const Vec3& k, double) {
  require_ewald_lattice(lattice);
  if (!(kappa > 0.0)) throw Error(ErrorKind::ParameterDomain, "kappa must be positive");
  return sum_over_images(pair, lattice, k, [&](const ImageGeometry& g) {
    double v = 0.0;
    for (const auto& t : terms)
      v += t.coefficient *
           real_term(lattice, term_displacement(g.combined_center, t), term_sigma2(pair, t), kappa, quadrature_points);
    return v;
  });
}

// ---------------------------------------------------------------- Ewald constants

double ewald_self_correction(int n, double kappa, double volume) {
  return -kappa * n / kSqrtPi - M_PI * n * (n - 1) / (2.0 * kappa * kappa * volume);
}

double ewald_self_image_lattice_constant(const LatticeSpec& lattice, double kappa, double epsilon) {
  require_ewald_lattice(lattice);
  const double omega = lattice.volume();
  // erfc(x) < epsilon for x > xmax
  double xmax = 1.0;
  while (std::erfc(xmax) > epsilon) xmax += 0.25;
  const double rmax = xmax / kappa;
  double real = 0.0;
  Vec3i nmax;
  for (int mu = 0; mu < 3; ++mu) nmax(mu) = static_cast<int>(std::ceil(rmax / lattice.cell_lengths(mu)));
  for (int a = -nmax(0); a <= nmax(0); ++a)
    for (int b = -nmax(1); b <= nmax(1); ++b)
      for (int c = -nmax(2); c <= nmax(2); ++c) {
        if (a == 0 && b == 0 && c == 0) continue;
        const double r = lattice_vector(Vec3i(a, b, c), lattice).norm();
        if (r <= rmax) real += std::erfc(kappa * r) / r;
      }
  const auto gvecs = reciprocal_vectors(lattice, kappa, 4.0 * kappa * kappa * std::log(1.0 / epsilon));
  double recip = 0.0;
  for (const auto& gv : gvecs) recip += gv.second;
  return real + recip - M_PI / (kappa * kappa * omega);
}

MadelungResult madelung_energy(const NuclearFrame& frame, const LatticeSpec& lattice, double kappa,
                               double epsilon) {
  require_ewald_lattice(lattice);
  MadelungResult out;
  const double omega = lattice.volume();
  const double ztot = frame.total_charge();
  out.charged = std::abs(ztot) > 1e-12;
  double xmax = 1.0;
  while (std::erfc(xmax) > epsilon) xmax += 0.25;
  const double rmax = xmax / kappa;
  double real = 0.0;
  const std::size_t na = frame.size();
  for (std::size_t a = 0; a < na; ++a)
    for (std::size_t b = 0; b < na; ++b) {
      const Vec3 d = frame.positions[a] - frame.positions[b];
      Vec3i lo, hi;
      for (int mu = 0; mu < 3; ++mu) {
        const double len = lattice.cell_lengths(mu);
        lo(mu) = static_cast<int>(std::ceil((-d(mu) - rmax) / len));
        hi(mu) = static_cast<int>(std::floor((-d(mu) + rmax) / len));
      }
      for (int i = lo(0); i <= hi(0); ++i)
        for (int j = lo(1); j <= hi(1); ++j)
          for (int l = lo(2); l <= hi(2); ++l) {
            if (a == b && i == 0 && j == 0 && l == 0) continue;
            const double r = (d + lattice_vector(Vec3i(i, j, l), lattice)).norm();
            if (r <= rmax) real += 0.5 * frame.charges[a] * frame.charges[b] * std::erfc(kappa * r) / r;
          }
    }
  const auto gvecs = reciprocal_vectors(lattice, kappa, 4.0 * kappa * kappa * std::log(1.0 / epsilon));
  double recip = 0.0;
  for (const auto& [g, c] : gvecs) {
    cplx sg = 0.0;
    for (std::size_t a = 0; a < na; ++a) {
      const double ph = g.dot(frame.positions[a]);
      sg += frame.charges[a] * cplx(std::cos(ph), std::sin(ph));
    }
    recip += 0.5 * c * std::norm(sg);
  }
  double z2 = 0.0;
  for (double z : frame.charges) z2 += z * z;
  out.energy = real + recip - kappa / kSqrtPi * z2 - M_PI * ztot * ztot / (2.0 * kappa * kappa * omega);
  return out;
}

// ---------------------------------------------------------------- shell constants

namespace {

// nucleus-nucleus images at translation t plus the electron self-image pair (t != 0)
double classical_point_energy(const NuclearFrame& frame, int n_electrons, const Vec3& t, bool origin) {
  double s = 0.0;
  for (std::size_t a = 0; a < frame.size(); ++a)
    for (std::size_t b = 0; b < frame.size(); ++b) {
      if (origin && a == b) continue;
      s += 0.5 * frame.charges[a] * frame.charges[b] / (frame.positions[a] - frame.positions[b] - t).norm();
    }
  if (!origin) s += 0.5 * n_electrons / t.norm();
  return s;
}

} // namespace

std::vector<double> classical_shell_constants(const NuclearFrame& frame, int n_electrons,
                                              const LatticeSpec& lattice, int p_cut) {
  if (p_cut < 0) throw Error(ErrorKind::ParameterDomain, "p_cut must be >= 0");
  const int pmax = lattice.periodic_count() == 0 ? 0 : p_cut;
  std::vector<double> out(pmax + 1, 0.0);
  for (int p = 0; p <= pmax; ++p) {
    double s = 0.0;
    for (const auto& n : shell_indices(lattice, p)) s += classical_point_energy(frame, n_electrons, lattice_vector(n, lattice), p == 0);
    out[p] = s;
  }
  return out;
}

std::vector<double> richardson_shell_weights(int p_cut, int terms, int leading_power, int span) {
  if (p_cut < 0 || terms < 0) throw Error(ErrorKind::ParameterDomain, "shell cut and extrapolation order must be >= 0");
  std::vector<double> w(p_cut + 1, 1.0);
  if (terms == 0) return w;
  if (span < 0) span = terms;
  if (span < terms) throw Error(ErrorKind::ParameterDomain, "extrapolation span must be >= number of terms");
  if (p_cut - span < 1) throw Error(ErrorKind::ParameterDomain, "extrapolation needs p_cut > span");
  const int m = terms + 1;
  std::vector<int> nodes(m);
  for (int j = 0; j < m; ++j) nodes[j] = p_cut - span + static_cast<int>(std::lround(double(span) * j / terms));
  Mat a(m, m);
  for (int j = 0; j < m; ++j) {
    a(j, 0) = 1.0;
    for (int t = 1; t < m; ++t) a(j, t) = std::pow(double(nodes[j]), -static_cast<double>(t + leading_power - 1));
  }
  // S_inf = e_0^T a^{-1} S
  const Vec lambda = a.transpose().fullPivLu().solve(Vec::Unit(m, 0));
  for (int p = 0; p <= p_cut; ++p) {
    double s = 0.0;
    for (int j = 0; j < m; ++j)
      if (nodes[j] >= p) s += lambda(j);
    w[p] = p <= nodes[0] ? 1.0 : s;  // sum of lambda is one
  }
  return w;
}

// ---------------------------------------------------------------- kernel containers

cplx PairKernels::overlap(const Vec3& k) const {
  cplx s = 0.0;
  for (const auto& t : terms) s += bloch_phase(t.tau, cell_lengths, k) * t.overlap;
  return s;
}

cplx PairKernels::kinetic(const Vec3& k) const {
  cplx s = 0.0;
  for (const auto& t : terms) s += bloch_phase(t.tau, cell_lengths, k) * t.kinetic;
  return s;
}

cplx PairKernels::potential(const Vec3& k) const {
  cplx s = 0.0;
  for (const auto& t : terms) s += bloch_phase(t.tau, cell_lengths, k) * t.potential;
  return s;
}

cplx PairKernels::hamiltonian(const Vec3& k) const {
  cplx s = 0.0;
  for (const auto& t : terms) s += bloch_phase(t.tau, cell_lengths, k) * (t.kinetic + t.potential);
  return s;
}

void PairKernels::add(const ImageKernels& t, double sign) {
  ImageKernels* e = find_tau(terms, t.tau);
  if (!e) {
    terms.push_back({t.tau, 0.0, 0.0, 0.0});
    e = &terms.back();
  }
  e->overlap += sign * t.overlap;
  e->kinetic += sign * t.kinetic;
  e->potential += sign * t.potential;
}

void PairKernels::merge(const PairKernels& other, double sign) {
  for (const auto& t : other.terms) add(t, sign);
}

void PairGradient::merge(const PairGradient& other, double sign) {
  for (const auto& t : other.terms) {
    ImageGradient* e = find_tau(terms, t.tau);
    if (!e) {
      ImageGradient z;
      z.tau = t.tau;
      z.ga_s = Mat::Zero(t.ga_s.rows(), t.ga_s.cols());
      z.ga_h = z.ga_s;
      z.gs_s = MatX3::Zero(t.gs_s.rows(), 3);
      z.gs_h = z.gs_s;
      terms.push_back(std::move(z));
      e = &terms.back();
    }
    e->ga_s += sign * t.ga_s;
    e->ga_h += sign * t.ga_h;
    e->gs_s += sign * t.gs_s;
    e->gs_h += sign * t.gs_h;
  }
}

PairGradient ElementEngine::pair_gradient(const BasisFunction&, const BasisFunction&) const {
  throw Error(ErrorKind::Contract, "this element engine has no analytic parameter gradient");
}

// ---------------------------------------------------------------- periodic engine

struct PeriodicEngine::Adjoint {
  MatX3 center;      // d f / d r_bar
  Mat sigma_pair;    // d f / d sigma^2_ij, i<j
  Vec sigma_single;  // d f / d sigma^2_i
  double ones = 0.0; // d f / d (1^T X 1)
};

PeriodicEngine::PeriodicEngine(LatticeSpec lattice, NuclearFrame frame, CoulombMode mode, Vec masses)
    : lattice_(std::move(lattice)), frame_(std::move(frame)), mode_(mode), masses_(std::move(masses)) {
  lattice_.validate();
  const int n = static_cast<int>(masses_.size());
  if (n < 1) throw Error(ErrorKind::ParameterDomain, "at least one particle is needed");
  masses_ = default_masses(masses_, n);
  if (frame_.positions.size() != frame_.charges.size())
    throw Error(ErrorKind::ParameterDomain, "nuclear positions and charges differ in length");
  terms_ = all_coulomb_terms(n, frame_);
  const int dim = lattice_.periodic_count();
  const double ztot = frame_.total_charge();

  if (mode_.kind == CoulombMode::Kind::Ewald) {
    require_ewald_lattice(lattice_);
    kappa_ = mode_.effective_kappa(lattice_);
    if (!(kappa_ > 0.0)) throw Error(ErrorKind::ParameterDomain, "kappa must be positive");
    if (mode_.quadrature_points < 1) throw Error(ErrorKind::ParameterDomain, "quadrature points must be >= 1");
    gvecs_ = reciprocal_vectors(lattice_, kappa_, recip_cutoff(kappa_, 0.0, mode_.epsilon));
    const double omega = lattice_.volume();
    constant_ = ewald_self_correction(n, kappa_, omega) + M_PI * n * ztot / (kappa_ * kappa_ * omega) +
                0.5 * n * ewald_self_image_lattice_constant(lattice_, kappa_) +
                madelung_energy(frame_, lattice_, kappa_).energy;
    return;
  }

  if (dim > 0 && std::abs(ztot - n) > 1e-9)
    throw Error(ErrorKind::Mode, "shell summation needs a neutral cell (total nuclear charge equal to n)");
  if (dim == 3) {
    const Vec3& l = lattice_.cell_lengths;
    if (std::abs(l(0) - l(1)) > 1e-12 * l(0) || std::abs(l(0) - l(2)) > 1e-12 * l(0))
      throw Error(ErrorKind::Mode, "three-dimensional shell summation is implemented for cubic cells only");
    dipole_correction_ = true;
  }
  if (mode_.kind == CoulombMode::Kind::DeltaConvolution && mode_.radial_quadrature_points < 1)
    throw Error(ErrorKind::ParameterDomain, "radial quadrature points must be >= 1");
  const int pmax = dim == 0 ? 0 : mode_.p_cut;
  if (pmax < 0) throw Error(ErrorKind::ParameterDomain, "p_cut must be >= 0");
  for (int p = 0; p <= pmax; ++p) {
    std::vector<Vec3> shell;
    for (const auto& m : shell_indices(lattice_, p)) shell.push_back(lattice_vector(m, lattice_));
    shells_.push_back(std::move(shell));
  }
  const int lead = dim == 2 ? 1 : 2;
  const int terms = dim == 0 ? 0 : mode_.effective_richardson(lattice_);
  // in 2D/3D rounding in the partial sums dominates, so the nodes are spread over [P/2, P]
  const int span = dim >= 2 ? std::max(terms, pmax / 2) : terms;
  shell_weights_ = richardson_shell_weights(pmax, terms, lead, span);
  const auto c = classical_shell_constants(frame_, n, lattice_, pmax);
  for (int p = 0; p <= pmax; ++p) constant_ += shell_weights_[p] * c[p];
  for (int p = 0; p <= pmax; ++p) {
    std::vector<double> per_vector;
    for (const auto& m : shell_indices(lattice_, p))
      per_vector.push_back(classical_point_energy(frame_, n, lattice_vector(m, lattice_), p == 0));
    shell_classical_.push_back(std::move(per_vector));
  }
  for (std::size_t a = 0; a < frame_.size(); ++a) nuclear_dipole_ += frame_.charges[a] * frame_.positions[a];
  recenter_origin_ = frame_.size() > 0 ? frame_.centroid() : Vec3::Zero();
}

bool PeriodicEngine::has_analytic_gradient() const { return mode_.kind == CoulombMode::Kind::NeutralShell; }

double PeriodicEngine::coulomb_kernel(const PairComposite& pair, const ImageGeometry& g) const {
  if (mode_.kind == CoulombMode::Kind::Ewald) return ewald_kernel(pair, g);
  return shell_kernel(pair, g, nullptr);
}

double PeriodicEngine::shell_kernel(const PairComposite& pair, const ImageGeometry& g, Adjoint* adj) const {
  const int n = pair.n();
  // move each electron centre by whole cells next to the nuclear centroid
  MatX3 r = g.combined_center;
  for (int i = 0; i < n; ++i)
    for (int mu = 0; mu < 3; ++mu)
      if (lattice_.periodic[mu]) {
        const double len = lattice_.cell_lengths(mu);
        r(i, mu) -= len * std::round((r(i, mu) - recenter_origin_(mu)) / len);
      }
  if (adj) {
    adj->center = MatX3::Zero(n, 3);
    adj->sigma_pair = Mat::Zero(n, n);
    adj->sigma_single = Vec::Zero(n);
    adj->ones = 0.0;
  }
  // erf(R/s)/R = 1/R + [erf(R/s)/R - 1/R]: the point-charge part is summed over the weighted
  // shells, the short-range remainder over every lattice vector where it is not negligible.
  // Point charges at one lattice vector are totalled (with the classical charges) before they
  // enter a shell, so the large per-species shell sums never appear.
  const int pmax = static_cast<int>(shells_.size()) - 1;
  const int nt = static_cast<int>(terms_.size());
  std::vector<double> s2(nt), near2(nt), tds(nt, 0.0);
  std::vector<Vec3> disp(nt), tf(nt, Vec3::Zero());
  for (int ti = 0; ti < nt; ++ti) {
    s2[ti] = term_sigma2(pair, terms_[ti]);
    disp[ti] = term_displacement(r, terms_[ti]);
    near2[ti] = 45.0 * s2[ti];
  }
  const bool radial = mode_.kind == CoulombMode::Kind::DeltaConvolution;
  const int rpts = mode_.radial_quadrature_points;
  double short_range = 0.0, shells = 0.0;
  // smeared kernel plus (extra / R), extra = w - 1 inside the shells, -1 beyond them
  auto near = [&](int ti, const Vec3& v, double r2, double extra) {
    const double rr = std::sqrt(r2);
    double tv = 0.0;
    if (radial) {
      tv = radial_convolution_kernel(rr, s2[ti], rpts);
    } else if (adj) {
      const ErfKernel ek = erf_over_r_with_derivatives(rr, s2[ti]);
      tv = ek.value;
      tf[ti] += ek.dr_over_r * v;
      tds[ti] += ek.dsigma2;
    } else {
      tv = erf_over_r(rr, s2[ti]);
    }
    if (extra != 0.0) {
      const double inv = 1.0 / rr;
      tv += extra * inv;
      if (adj) tf[ti] -= extra * inv * inv * inv * v;
    }
    short_range += terms_[ti].coefficient * tv;
  };
  for (int p = 0; p <= pmax; ++p) {
    const double w = shell_weights_[p];
    double shell = 0.0;
    for (std::size_t vi = 0; vi < shells_[p].size(); ++vi) {
      const Vec3& tv3 = shells_[p][vi];
      double point = shell_classical_[p][vi];
      for (int ti = 0; ti < nt; ++ti) {
        const Vec3 v = disp[ti] - tv3;
        const double r2 = v.squaredNorm();
        if (r2 <= near2[ti]) {
          near(ti, v, r2, w - 1.0);
        } else {
          const double inv = 1.0 / std::sqrt(r2);
          point += terms_[ti].coefficient * inv;
          if (adj) tf[ti] -= w * inv * inv * inv * v;
        }
      }
      shell += point;
    }
    shells += w * shell;
  }
  if (pmax > 0) {
    for (int ti = 0; ti < nt; ++ti) {
      const double rc = std::sqrt(near2[ti]);
      Vec3i lo = Vec3i::Zero(), hi = Vec3i::Zero();
      bool beyond = false;
      for (int mu = 0; mu < 3; ++mu) {
        if (!lattice_.periodic[mu]) continue;
        const double len = lattice_.cell_lengths(mu);
        lo(mu) = static_cast<int>(std::ceil((disp[ti](mu) - rc) / len));
        hi(mu) = static_cast<int>(std::floor((disp[ti](mu) + rc) / len));
        if (lo(mu) < -pmax || hi(mu) > pmax) beyond = true;
      }
      if (beyond)
        for (int a = lo(0); a <= hi(0); ++a)
          for (int b = lo(1); b <= hi(1); ++b)
            for (int c = lo(2); c <= hi(2); ++c) {
              if (std::max({std::abs(a), std::abs(b), std::abs(c)}) <= pmax) continue;
              const Vec3 v = disp[ti] - lattice_vector(Vec3i(a, b, c), lattice_);
              const double r2 = v.squaredNorm();
              if (r2 <= near2[ti]) near(ti, v, r2, -1.0);
            }
    }
  }
  double value = shells + short_range;
  if (adj) {
    for (int ti = 0; ti < nt; ++ti) {
      const auto& t = terms_[ti];
      adj->center.row(t.i) += t.coefficient * tf[ti].transpose();
      if (t.is_pair()) {
        adj->center.row(t.j) -= t.coefficient * tf[ti].transpose();
        adj->sigma_pair(std::min(t.i, t.j), std::max(t.i, t.j)) += t.coefficient * tds[ti];
      } else {
        adj->sigma_single(t.i) += t.coefficient * tds[ti];
      }
    }
  }
  if (dipole_correction_) {
    const double f = 2.0 * M_PI / (3.0 * lattice_.volume());
    Vec3 d = nuclear_dipole_;
    for (int i = 0; i < n; ++i) d -= r.row(i).transpose();
    const double ones = pair.a_kl_inv.sum();
    value -= f * (d.squaredNorm() + 1.5 * ones);
    if (adj) {
      for (int i = 0; i < n; ++i) adj->center.row(i) += 2.0 * f * d.transpose();
      adj->ones -= 1.5 * f;
    }
  }
  return value;
}

double PeriodicEngine::ewald_kernel(const PairComposite& pair, const ImageGeometry& g) const {
  double value = constant_;
  for (const auto& t : terms_) {
    const double s2 = term_sigma2(pair, t);
    const Vec3 disp = term_displacement(g.combined_center, t);
    value += t.coefficient * (real_term(lattice_, disp, s2, kappa_, mode_.quadrature_points) +
                              recip_term(gvecs_, disp, s2, recip_cutoff(kappa_, s2, mode_.epsilon)));
  }
  return value;
}

PairKernels PeriodicEngine::pair_kernels(const BasisFunction& bra, const BasisFunction& ket) const {
  const PairComposite pair = pair_composites(bra, ket);
  if (pair.n() != particle_count()) throw Error(ErrorKind::ParameterDomain, "basis function particle count mismatch");
  const ImageSet images = enumerate_images(pair, lattice_);
  const Vec inv = masses_.cwiseInverse();
  PairKernels out;
  out.cell_lengths = lattice_.cell_lengths;
  for (const auto& g : images.geometries) {
    const double s = image_scale(pair, g);
    out.add({g.tau, s, s * kinetic_factor(pair, inv, g.shift_diff), s * coulomb_kernel(pair, g)});
  }
  return out;
}

PairGradient PeriodicEngine::pair_gradient(const BasisFunction& bra, const BasisFunction& ket) const {
  if (!has_analytic_gradient())
    throw Error(ErrorKind::Contract, "analytic gradients are available for the neutral shell route only");
  const PairComposite pair = pair_composites(bra, ket);
  const int n = pair.n();
  const ImageSet images = enumerate_images(pair, lattice_);
  const Vec inv = masses_.cwiseInverse();
  const Mat lam = inv.asDiagonal();
  const Mat& x = pair.a_kl_inv;
  const Mat& xal = pair.x_al;
  const Mat& c = pair.c_kl;
  const Mat b = c * lam * c;
  const Mat kin_trace = xal * lam * xal.transpose(); // X A_l Lambda A_l X
  const MatX3 sk = bra.centers();
  const Vec x1 = x * Vec::Ones(n);
  PairGradient out;
  out.cell_lengths = lattice_.cell_lengths;
  Adjoint adj;
  for (const auto& g : images.geometries) {
    const double s = image_scale(pair, g);
    const MatX3& d = g.shift_diff;
    const double ft = kinetic_factor(pair, inv, d);
    const double fv = shell_kernel(pair, g, &adj);
    const double h = s * (ft + fv);
    // overlap-type part
    Mat base_a = -1.5 * x;
    MatX3 base_s(n, 3);
    for (int mu = 0; mu < 3; ++mu) {
      const Vec y = xal * d.col(mu);
      base_a -= y * y.transpose();
      base_s.col(mu) = -2.0 * (c * d.col(mu));
    }
    ImageGradient ig;
    ig.tau = g.tau;
    ig.ga_s = s * base_a;
    ig.gs_s = s * base_s;
    ig.ga_h = h * base_a;
    ig.gs_h = h * base_s;
    // kinetic
    Mat ka = 3.0 * kin_trace;
    for (int mu = 0; mu < 3; ++mu) {
      const Vec v = lam * (c * d.col(mu));
      ka -= 4.0 * (xal * v) * (xal * d.col(mu)).transpose();
      ig.gs_h.col(mu) -= 4.0 * s * (b * d.col(mu));
    }
    ig.ga_h += s * ka;
    // Coulomb
    Mat ca = Mat::Zero(n, n);
    for (int mu = 0; mu < 3; ++mu) {
      const Vec xf = x * adj.center.col(mu);
      ca += (sk.col(mu) - g.combined_center.col(mu)) * xf.transpose();
      ig.gs_h.col(mu) += s * (pair.a_k * xf);
    }
    for (int i = 0; i < n; ++i) {
      if (adj.sigma_single(i) != 0.0) ca -= adj.sigma_single(i) * x.col(i) * x.col(i).transpose();
      for (int j = i + 1; j < n; ++j) {
        if (adj.sigma_pair(i, j) == 0.0) continue;
        const Vec xw = x.col(i) - x.col(j);
        ca -= adj.sigma_pair(i, j) * xw * xw.transpose();
      }
    }
    if (adj.ones != 0.0) ca -= adj.ones * x1 * x1.transpose();
    ig.ga_h += s * ca;
    PairGradient one;
    one.terms.push_back(std::move(ig));
    out.merge(one);
  }
  return out;
}

// ---------------------------------------------------------------- cache and assembly

KernelCache::KernelCache(const ElementEngine& engine, const std::vector<BasisFunction>& basis, int threads)
    : k_(static_cast<int>(basis.size())), cell_(engine.cell_lengths()) {
  upper_.resize(k_);
  std::vector<std::pair<int, int>> jobs;
  for (int a = 0; a < k_; ++a) {
    upper_[a].resize(k_ - a);
    for (int b = a; b < k_; ++b) jobs.emplace_back(a, b);
  }
  parallel_for(static_cast<int>(jobs.size()), threads, [&](int j) {
    const auto [a, b] = jobs[j];
    upper_[a][b - a] = engine.pair_kernels(basis[a], basis[b]);
  });
}

const PairKernels& KernelCache::pair(int k, int l) const {
  if (k > l || k < 0 || l >= k_) throw Error(ErrorKind::Contract, "kernel cache index out of range");
  return upper_[k][l - k];
}

void KernelCache::append(const ElementEngine& engine, const BasisFunction& f,
                         const std::vector<BasisFunction>& basis) {
  if (static_cast<int>(basis.size()) != k_)
    throw Error(ErrorKind::Contract, "append expects the basis without the new function");
  cell_ = engine.cell_lengths();
  for (int a = 0; a < k_; ++a) upper_[a].push_back(engine.pair_kernels(basis[a], f));
  upper_.push_back({engine.pair_kernels(f, f)});
  ++k_;
}

void KernelCache::append_column(std::vector<PairKernels> column) {
  if (static_cast<int>(column.size()) != k_ + 1) throw Error(ErrorKind::Contract, "column length must be K+1");
  for (int a = 0; a < k_; ++a) upper_[a].push_back(std::move(column[a]));
  upper_.push_back({std::move(column[k_])});
  ++k_;
}

void KernelCache::replace(const ElementEngine& engine, int index, const std::vector<BasisFunction>& basis) {
  if (static_cast<int>(basis.size()) != k_ || index < 0 || index >= k_)
    throw Error(ErrorKind::Contract, "replace index out of range");
  for (int a = 0; a <= index; ++a) upper_[a][index - a] = engine.pair_kernels(basis[a], basis[index]);
  for (int b = index + 1; b < k_; ++b) upper_[index][b - index] = engine.pair_kernels(basis[index], basis[b]);
}

void KernelCache::set_row(int index, std::vector<PairKernels> row) {
  if (static_cast<int>(row.size()) != k_ || index < 0 || index >= k_)
    throw Error(ErrorKind::Contract, "row length differs from the cache size");
  for (int l = 0; l < k_; ++l) {
    if (l < index)
      upper_[l][index - l] = reversed(row[l]);
    else
      upper_[index][l - index] = std::move(row[l]);
  }
}

OperatorMatrixSet OperatorMatrixSet::from_cache(const KernelCache& cache, const Vec3& k) {
  const int n = cache.size();
  OperatorMatrixSet m;
  m.overlap = CMat::Zero(n, n);
  m.kinetic = CMat::Zero(n, n);
  m.potential = CMat::Zero(n, n);
  m.per_image_cache = &cache;
  for (int a = 0; a < n; ++a)
    for (int b = a; b < n; ++b) {
      const PairKernels& p = cache.pair(a, b);
      cplx s = 0.0, t = 0.0, v = 0.0;
      for (const auto& term : p.terms) {
        const cplx ph = bloch_phase(term.tau, cache.cell_lengths(), k);
        s += ph * term.overlap;
        t += ph * term.kinetic;
        v += ph * term.potential;
      }
      if (a == b) {
        s.imag(0.0);
        t.imag(0.0);
        v.imag(0.0);
      }
      m.overlap(a, b) = s;
      m.kinetic(a, b) = t;
      m.potential(a, b) = v;
      m.overlap(b, a) = std::conj(s);
      m.kinetic(b, a) = std::conj(t);
      m.potential(b, a) = std::conj(v);
    }
  m.hamiltonian = m.kinetic + m.potential;
  return m;
}

OperatorMatrixSet assemble(const ElementEngine& engine, const std::vector<BasisFunction>& basis, const Vec3& k,
                           int threads) {
  const KernelCache cache(engine, basis, threads);
  OperatorMatrixSet m = OperatorMatrixSet::from_cache(cache, k);
  m.per_image_cache = nullptr;
  return m;
}

cplx hamiltonian_element(const BasisFunction& bra, const BasisFunction& ket, const LatticeSpec& lattice,
                         const NuclearFrame& frame, const CoulombMode& mode, const Vec3& k, const Vec& masses) {
  const Vec m = masses.size() == 0 ? Vec::Ones(bra.n()) : masses;
  const PeriodicEngine engine(lattice, frame, mode, m);
  return engine.pair_kernels(bra, ket).hamiltonian(k);
}

// ---------------------------------------------------------------- antisymmetrization

std::vector<Permutation> spin_permutations(const SpinPartition& spins, long long cap) {
  if (spins.n_up < 0 || spins.n_down < 0 || spins.n() < 1)
    throw Error(ErrorKind::ParameterDomain, "spin partition must hold at least one particle");
  auto fact = [](int m) {
    long double f = 1;
    for (int i = 2; i <= m; ++i) f *= i;
    return f;
  };
  if (fact(spins.n_up) * fact(spins.n_down) > static_cast<long double>(cap))
    throw Error(ErrorKind::Resource, "number of spin permutations exceeds the cap");
  auto parity = [](std::vector<int> p) {
    int sign = 1;
    for (std::size_t i = 0; i < p.size(); ++i)
      while (p[i] != static_cast<int>(i)) {
        std::swap(p[i], p[p[i]]);
        sign = -sign;
      }
    return sign;
  };
  std::vector<int> up(spins.n_up), down(spins.n_down);
  std::iota(up.begin(), up.end(), 0);
  std::iota(down.begin(), down.end(), 0);
  std::vector<Permutation> out;
  do {
    std::vector<int> d0(down.size());
    std::iota(d0.begin(), d0.end(), 0);
    std::vector<int> d = d0;
    do {
      Permutation p;
      p.map = up;
      for (int v : d) p.map.push_back(v + spins.n_up);
      p.sign = parity(up) * parity(d);
      out.push_back(std::move(p));
    } while (std::next_permutation(d.begin(), d.end()));
  } while (std::next_permutation(up.begin(), up.end()));
  return out;
}

BasisFunction permute(const BasisFunction& f, const std::vector<int>& map) {
  const int n = f.n();
  if (static_cast<int>(map.size()) != n) throw Error(ErrorKind::ParameterDomain, "permutation length differs from n");
  // (P f)(r_1..r_n) = f(r_map[0], ..., r_map[n-1]); A' = Q^T A Q with Q(i, map[i]) = 1
  Mat q = Mat::Zero(n, n);
  for (int i = 0; i < n; ++i) q(i, map[i]) = 1.0;
  const Mat a = q.transpose() * f.a() * q;
  Eigen::LLT<Mat> llt(a);
  if (llt.info() != Eigen::Success) throw Error(ErrorKind::NumericDomain, "permuted matrix lost definiteness");
  const MatX3 c = q.transpose() * f.centers();
  BasisFunction out = f;
  out.cholesky = llt.matrixL();
  out.set_centers(c);
  return out;
}

cplx antisymmetrized_element(const BasisFunction& bra, const BasisFunction& ket, const ElementEvaluator& op,
                             const SpinPartition& spins, long long cap) {
  if (spins.n() != ket.n()) throw Error(ErrorKind::ParameterDomain, "spin partition does not match n");
  cplx sum = 0.0;
  for (const auto& p : spin_permutations(spins, cap)) sum += static_cast<double>(p.sign) * op(bra, permute(ket, p.map));
  return sum;
}

AntisymmetrizedEngine::AntisymmetrizedEngine(std::shared_ptr<const ElementEngine> inner, SpinPartition spins,
                                             long long cap)
    : inner_(std::move(inner)), perms_(spin_permutations(spins, cap)) {
  if (!inner_) throw Error(ErrorKind::Contract, "inner engine is null");
  if (spins.n() != inner_->particle_count()) throw Error(ErrorKind::ParameterDomain, "spin partition does not match n");
}

PairKernels AntisymmetrizedEngine::pair_kernels(const BasisFunction& bra, const BasisFunction& ket) const {
  PairKernels out;
  out.cell_lengths = inner_->cell_lengths();
  for (const auto& p : perms_) out.merge(inner_->pair_kernels(bra, permute(ket, p.map)), p.sign);
  return out;
}

PairGradient AntisymmetrizedEngine::pair_gradient(const BasisFunction& bra, const BasisFunction& ket) const {
  PairGradient out;
  out.cell_lengths = inner_->cell_lengths();
  for (const auto& p : perms_) out.merge(inner_->pair_gradient(bra, permute(ket, p.map)), p.sign);
  return out;
}

// ---------------------------------------------------------------- dumps

void write_matrix_dump(std::ostream& os, const CMat& m, const Vec3& k, const std::string& provenance) {
  os << "# " << provenance << "\n";
  os << std::setprecision(17);
  os << "K " << m.rows() << " kB " << k(0) << ' ' << k(1) << ' ' << k(2) << "\n";
  for (int i = 0; i < m.rows(); ++i) {
    for (int j = 0; j < m.cols(); ++j) {
      if (j) os << ' ';
      os << m(i, j).real() << ' ' << m(i, j).imag();
    }
    os << "\n";
  }
}

CMat read_matrix_dump(std::istream& is, Vec3* k) {
  std::string line;
  while (std::getline(is, line))
    if (!line.empty() && line[0] != '#') break;
  std::istringstream hs(line);
  std::string tag, ktag;
  int n = 0;
  Vec3 kk;
  if (!(hs >> tag >> n >> ktag >> kk(0) >> kk(1) >> kk(2)) || tag != "K" || ktag != "kB" || n < 0)
    throw Error(ErrorKind::Config, "malformed matrix dump header");
  CMat m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double re, im;
      if (!(is >> re >> im)) throw Error(ErrorKind::Config, "matrix dump truncated");
      m(i, j) = cplx(re, im);
    }
  if (k) *k = kk;
  return m;
}

} // namespace pecg
