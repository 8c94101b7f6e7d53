#pragma once

#include "pecg/core.hpp"
#include "pecg/lattice.hpp"

#include <functional>
#include <iosfwd>
#include <memory>

namespace pecg {

struct CoulombMode {
  enum class Kind { Ewald, NeutralShell, DeltaConvolution };
  Kind kind = Kind::NeutralShell;
  // Ewald
  std::optional<double> kappa;  // default sqrt(pi)/L
  double epsilon = 1e-14;       // drives the real and reciprocal cutoffs
  int quadrature_points = 20;   // Gauss-Legendre nodes per panel of the real-space integral
  // NeutralShell and DeltaConvolution
  int p_cut = 16;
  int richardson_terms = -1;    // -1: 4 when any axis is periodic
  int radial_quadrature_points = 12;

  static CoulombMode ewald(std::optional<double> kappa = std::nullopt, int quadrature_points = 20);
  static CoulombMode neutral_shell(int p_cut = 16, int richardson_terms = -1);
  static CoulombMode delta_convolution(int radial_points = 12, int p_cut = 16, int richardson_terms = -1);

  int effective_richardson(const LatticeSpec& lattice) const;
  double effective_kappa(const LatticeSpec& lattice) const;
  std::string name() const;
};

struct SpinPartition {
  int n_up = 1;
  int n_down = 1;
  int n() const { return n_up + n_down; }
};

// One Coulomb interaction: electron pair (j >= 0) or electron-nucleus (j = -1).
struct CoulombTerm {
  int i = 0;
  int j = -1;
  Vec3 position = Vec3::Zero();
  double coefficient = 1.0;

  bool is_pair() const { return j >= 0; }
  static CoulombTerm electron_pair(int i, int j) { return {i, j, Vec3::Zero(), 1.0}; }
  static CoulombTerm nucleus(int i, const Vec3& r, double z) { return {i, -1, r, -z}; }
};
// all i<j electron pairs (+1) and all electron-nucleus terms (-Z)
std::vector<CoulombTerm> all_coulomb_terms(int n, const NuclearFrame& frame);
std::vector<CoulombTerm> electron_pair_terms(int n);

struct DeltaTarget {
  enum class Kind { ElectronPair, Point } kind = Kind::Point;
  int i = 0;
  int j = 1;
  Vec3 position = Vec3::Zero(); // offset u for pairs, S for points
  static DeltaTarget electron_pair(int i, int j, const Vec3& u = Vec3::Zero()) {
    return {Kind::ElectronPair, i, j, u};
  }
  static DeltaTarget point(int i, const Vec3& s) { return {Kind::Point, i, -1, s}; }
};

// Individual elements. All include the absorbed constants and the Bloch phase exp(i k.T_M).
cplx overlap_element(const PairComposite& pair, const BasisFunction& bra, const BasisFunction& ket,
                     const LatticeSpec& lattice, const Vec3& k);
cplx kinetic_element(const PairComposite& pair, const BasisFunction& bra, const BasisFunction& ket,
                     const LatticeSpec& lattice, const Vec& masses, const Vec3& k);
cplx delta_element(const PairComposite& pair, const BasisFunction& bra, const BasisFunction& ket,
                   const LatticeSpec& lattice, const DeltaTarget& target, const Vec3& k);
cplx coulomb_bare_element(const PairComposite& pair, const BasisFunction& bra, const BasisFunction& ket,
                          const LatticeSpec& lattice, const std::vector<CoulombTerm>& terms,
                          const Vec3& k);
cplx coulomb_recip_element(const PairComposite& pair, const BasisFunction& bra, const BasisFunction& ket,
                           const LatticeSpec& lattice, double kappa, const std::vector<CoulombTerm>& terms,
                           const Vec3& k, double epsilon = 1e-14);
cplx coulomb_real_element(const PairComposite& pair, const BasisFunction& bra, const BasisFunction& ket,
                          const LatticeSpec& lattice, double kappa, const std::vector<CoulombTerm>& terms,
                          int quadrature_points, const Vec3& k, double epsilon = 1e-14);
// reciprocal sum with every G shell carried `extra_shells` beyond the cutoff (check path)
cplx coulomb_recip_element_extended(const PairComposite& pair, const BasisFunction& bra,
                                    const BasisFunction& ket, const LatticeSpec& lattice, double kappa,
                                    const std::vector<CoulombTerm>& terms, const Vec3& k,
                                    double epsilon, int extra_shells);

// -kappa n / sqrt(pi) - pi n (n-1) / (2 kappa^2 Omega), multiplies S_kl
double ewald_self_correction(int n, double kappa, double volume);
// electron self-image constant xi without the -2 kappa/sqrt(pi) part:
// sum_{n!=0} erfc(kappa |nL|)/|nL| + (4 pi/Omega) sum_G exp(-G^2/4kappa^2)/G^2 - pi/(kappa^2 Omega)
double ewald_self_image_lattice_constant(const LatticeSpec& lattice, double kappa, double epsilon = 1e-16);

struct MadelungResult {
  double energy = 0.0;
  bool charged = false; // value is kappa-dependent when set
};
MadelungResult madelung_energy(const NuclearFrame& frame, const LatticeSpec& lattice, double kappa,
                               double epsilon = 1e-16);

// classical energy per cell of point charges by max-norm shells (no extrapolation)
std::vector<double> classical_shell_constants(const NuclearFrame& frame, int n_electrons,
                                              const LatticeSpec& lattice, int p_cut);
// extrapolation nodes are spread evenly over [p_cut - span, p_cut]; span -1 means consecutive shells
std::vector<double> richardson_shell_weights(int p_cut, int terms, int leading_power = 2, int span = -1);

// Per-image kernels, aggregated by the summed image cell index tau (the Bloch phase label).
struct ImageKernels {
  Vec3i tau = Vec3i::Zero();
  double overlap = 0.0;
  double kinetic = 0.0;
  double potential = 0.0;
};

struct PairKernels {
  std::vector<ImageKernels> terms;
  Vec3 cell_lengths = Vec3::Ones();

  cplx overlap(const Vec3& k) const;
  cplx kinetic(const Vec3& k) const;
  cplx potential(const Vec3& k) const;
  cplx hamiltonian(const Vec3& k) const;
  void add(const ImageKernels& t, double sign = 1.0);
  void merge(const PairKernels& other, double sign = 1.0);
};

// Bra-side parameter derivatives of per-image overlap and Hamiltonian kernels, in the form
// dO = Tr(ga dA_bra) + sum(gs .* ds_bra).
struct ImageGradient {
  Vec3i tau = Vec3i::Zero();
  Mat ga_s, ga_h;
  MatX3 gs_s, gs_h;
};

struct PairGradient {
  std::vector<ImageGradient> terms;
  Vec3 cell_lengths = Vec3::Ones();
  void merge(const PairGradient& other, double sign = 1.0);
};

class ElementEngine {
public:
  virtual ~ElementEngine() = default;
  virtual int particle_count() const = 0;
  virtual Vec3 cell_lengths() const = 0;
  virtual PairKernels pair_kernels(const BasisFunction& bra, const BasisFunction& ket) const = 0;
  virtual bool has_analytic_gradient() const { return false; }
  virtual PairGradient pair_gradient(const BasisFunction& bra, const BasisFunction& ket) const;
};

// General engine: any orthorhombic lattice, any nuclear frame, any Coulomb route.
class PeriodicEngine : public ElementEngine {
public:
  PeriodicEngine(LatticeSpec lattice, NuclearFrame frame, CoulombMode mode, Vec masses);
  int particle_count() const override { return static_cast<int>(masses_.size()); }
  Vec3 cell_lengths() const override { return lattice_.cell_lengths; }
  PairKernels pair_kernels(const BasisFunction& bra, const BasisFunction& ket) const override;
  bool has_analytic_gradient() const override;
  PairGradient pair_gradient(const BasisFunction& bra, const BasisFunction& ket) const override;

  const LatticeSpec& lattice() const { return lattice_; }
  const NuclearFrame& frame() const { return frame_; }
  const CoulombMode& mode() const { return mode_; }
  // constant added to every Coulomb kernel (times the overlap kernel)
  double constant_term() const { return constant_; }

  // Coulomb kernel of one image (without the S_M factor)
  double coulomb_kernel(const PairComposite& pair, const ImageGeometry& g) const;

private:
  struct Adjoint;
  double shell_kernel(const PairComposite& pair, const ImageGeometry& g, Adjoint* adj) const;
  double ewald_kernel(const PairComposite& pair, const ImageGeometry& g) const;

  LatticeSpec lattice_;
  NuclearFrame frame_;
  CoulombMode mode_;
  Vec masses_;
  std::vector<CoulombTerm> terms_;
  // shell data
  std::vector<std::vector<Vec3>> shells_;
  std::vector<double> shell_weights_;
  std::vector<std::vector<double>> shell_classical_; // classical charge energy per shell vector
  double constant_ = 0.0;
  bool dipole_correction_ = false;
  Vec3 nuclear_dipole_ = Vec3::Zero();
  Vec3 recenter_origin_ = Vec3::Zero();
  // ewald data
  double kappa_ = 0.0;
  std::vector<std::pair<Vec3, double>> gvecs_; // (G, (4pi/Omega) exp(-G^2/4k^2)/G^2), sorted by |G|
};

// Cached per-image kernels for a whole basis; matrices at any k without re-integration.
class KernelCache {
public:
  KernelCache() = default;
  KernelCache(const ElementEngine& engine, const std::vector<BasisFunction>& basis, int threads = 1);
  int size() const { return k_; }
  const PairKernels& pair(int k, int l) const; // k <= l
  void append(const ElementEngine& engine, const BasisFunction& f, const std::vector<BasisFunction>& basis);
  void replace(const ElementEngine& engine, int index, const std::vector<BasisFunction>& basis);
  void set_row(int index, std::vector<PairKernels> row); // row[l] = kernels(index, l) for l<=K-1
  // column[i] = kernels(basis[i], f) for i < K, column[K] = kernels(f, f)
  void append_column(std::vector<PairKernels> column);
  Vec3 cell_lengths() const { return cell_; }

private:
  int k_ = 0;
  Vec3 cell_ = Vec3::Ones();
  std::vector<std::vector<PairKernels>> upper_; // upper_[k][l-k]
  friend struct OperatorMatrixSet;
};

struct OperatorMatrixSet {
  CMat overlap;
  CMat hamiltonian;
  CMat kinetic;
  CMat potential;
  const KernelCache* per_image_cache = nullptr;
  static OperatorMatrixSet from_cache(const KernelCache& cache, const Vec3& k);
};

OperatorMatrixSet assemble(const ElementEngine& engine, const std::vector<BasisFunction>& basis,
                           const Vec3& k, int threads = 1);

cplx hamiltonian_element(const BasisFunction& bra, const BasisFunction& ket, const LatticeSpec& lattice,
                         const NuclearFrame& frame, const CoulombMode& mode, const Vec3& k,
                         const Vec& masses = Vec());

// permutations of S_{n_up} x S_{n_down} with signs
struct Permutation {
  std::vector<int> map;
  int sign = 1;
};
std::vector<Permutation> spin_permutations(const SpinPartition& spins, long long cap = 40320);
BasisFunction permute(const BasisFunction& f, const std::vector<int>& map);

using ElementEvaluator = std::function<cplx(const BasisFunction&, const BasisFunction&)>;
cplx antisymmetrized_element(const BasisFunction& bra, const BasisFunction& ket, const ElementEvaluator& op,
                             const SpinPartition& spins, long long cap = 40320);

class AntisymmetrizedEngine : public ElementEngine {
public:
  AntisymmetrizedEngine(std::shared_ptr<const ElementEngine> inner, SpinPartition spins, long long cap = 40320);
  int particle_count() const override { return inner_->particle_count(); }
  Vec3 cell_lengths() const override { return inner_->cell_lengths(); }
  PairKernels pair_kernels(const BasisFunction& bra, const BasisFunction& ket) const override;
  bool has_analytic_gradient() const override { return inner_->has_analytic_gradient(); }
  PairGradient pair_gradient(const BasisFunction& bra, const BasisFunction& ket) const override;

private:
  std::shared_ptr<const ElementEngine> inner_;
  std::vector<Permutation> perms_;
};

void write_matrix_dump(std::ostream& os, const CMat& m, const Vec3& k, const std::string& provenance);
CMat read_matrix_dump(std::istream& is, Vec3* k = nullptr);

} // namespace pecg
