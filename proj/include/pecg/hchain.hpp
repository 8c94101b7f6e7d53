#pragma once

#include "pecg/elements.hpp"
#include "pecg/eigensolver.hpp"

#include <iosfwd>
#include <optional>

namespace pecg {

// Two protons per cell at +-a on the x axis, two electrons, periodic along x only.
struct ChainConfig {
  double cell_length = 4.0;
  std::optional<double> nuclear_offset; // a, default L/4
  int shell_cut = 16;
  int richardson_terms = 4; // 0 gives the plain truncated shell sum
  int k_mesh = 33;
  int threads = 1;

  double offset() const { return nuclear_offset.value_or(0.25 * cell_length); }
  NuclearFrame frame() const;
  LatticeSpec lattice() const;
  // uniform mesh over [-pi/L, pi/L] including both endpoints
  std::vector<double> k_values() const;
  void validate() const;
};

// classical constant of shell p: 1/(2a) for p = 0, else 2/(pL) + 1/(pL-2a) + 1/(pL+2a) + 2/(pL)
// (the last term is the electron self-image pair, needed for a neutral shell)
double chain_shell_constant(const ChainConfig& config, int p);
// charge weights of a shell (ee, eN, e-self, NN); they sum to zero
std::array<int, 4> chain_shell_charges();

class ChainEngine : public ElementEngine {
public:
  explicit ChainEngine(ChainConfig config);
  int particle_count() const override { return 2; }
  Vec3 cell_lengths() const override { return lattice_.cell_lengths; }
  PairKernels pair_kernels(const BasisFunction& bra, const BasisFunction& ket) const override;

  // per-image kernels of the single shell operator V^(p) (potential field only)
  PairKernels shell_kernels(const BasisFunction& bra, const BasisFunction& ket, int p) const;
  const ChainConfig& config() const { return config_; }

private:
  double potential(const PairComposite& pair, const ImageGeometry& g) const;
  double shell_potential(const PairComposite& pair, const ImageGeometry& g, int p) const;

  ChainConfig config_;
  LatticeSpec lattice_;
  std::vector<double> weights_;
};

// Gamma-point element of V^(p), summed over images
double shell_operator_element(const BasisFunction& bra, const BasisFunction& ket, const ChainConfig& config, int p);

struct ChainMatrices {
  CMat hamiltonian;
  CMat overlap;
};
ChainMatrices chain_hamiltonian(const std::vector<BasisFunction>& basis, const ChainConfig& config, double k);

struct TightBindingFit {
  double epsilon0 = 0.0;
  double t = 0.0;
  double bandwidth = 0.0; // 4|t|
  double rms_error = 0.0;
  double max_error = 0.0;
};

struct BandStructure {
  double cell_length = 0.0;
  int atoms_per_cell = 2;
  std::vector<double> k_values;
  std::vector<double> energies;     // per cell
  std::vector<double> tail_errors;  // shell-truncation error bar per k
  std::optional<TightBindingFit> fit;
};

BandStructure band_structure(const std::vector<BasisFunction>& basis, const ChainConfig& config);
// same mesh from an existing per-image cache
BandStructure band_structure(const KernelCache& cache, const ChainConfig& config);

TightBindingFit tight_binding_fit(const BandStructure& band, double cell_length);

// tail bound |c^H V^(P) c| P/2 of the lowest state at k
double shell_tail_estimate(const std::vector<BasisFunction>& basis, const ChainConfig& config, double k,
                           const CVec& state);

void write_band_csv(std::ostream& os, const BandStructure& band, const std::string& provenance);
void write_fit_summary(std::ostream& os, const std::vector<BandStructure>& bands, const std::string& provenance);

} // namespace pecg
