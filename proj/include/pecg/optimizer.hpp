#pragma once

#include "pecg/elements.hpp"
#include "pecg/eigensolver.hpp"

#include <cstdint>
#include <iosfwd>

namespace pecg {

struct OptimizerConfig {
  int trials_per_step = 40;
  int growth_target = 40;
  std::uint64_t seed = 1;
  // Cholesky diagonals are drawn log-uniform in this range (bohr^-1)
  double width_min = 1e-2;
  double width_max = 1e2;
  double offdiag_scale = 0.5; // off-diagonal sd relative to the diagonal geometric mean
  Vec3 shift_min = Vec3::Zero();
  Vec3 shift_max = Vec3::Ones();
  int refine_steps = 0;       // sweeps over the basis
  double step_initial = 0.1;
  double step_shrink = 0.5;
  double step_min = 1e-7;
  double rel_threshold = 1e-12;
  double dependence_threshold = 1e-10;
  // candidates are normalized to a unit zero-image norm; a Bloch norm below this at any k
  // means the candidate nearly cancels there and its elements carry truncation noise
  double bloch_norm_floor = 1e-6;
  std::vector<Vec3> kpoints{Vec3::Zero()}; // objective is the mean lowest eigenvalue over these
  int threads = 1;
  bool finite_difference_gradient = false;
  double fd_step = 1e-5;

  void validate() const;
};

struct TraceRow {
  int step = 0;
  int basis_size = 0;
  double energy = 0.0;
};
void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& trace, const std::string& provenance);

// Lowest eigenvalue per k over a cached basis; kept in sync with the basis by the optimizer.
class EnergyModel {
public:
  EnergyModel(const ElementEngine& engine, std::vector<Vec3> kpoints, double rel_threshold = 1e-12,
              int threads = 1);
  void reset(const std::vector<BasisFunction>& basis);
  void append(const BasisFunction& f);
  void replace(int index, const BasisFunction& f);
  void replace(int index, const BasisFunction& f, std::vector<PairKernels> row);
  // column as produced for KernelCache::append_column
  void append_column(const BasisFunction& f, std::vector<PairKernels> column);
  const std::vector<BasisFunction>& basis() const { return basis_; }
  const KernelCache& cache() const { return cache_; }
  const std::vector<Vec3>& kpoints() const { return kpoints_; }
  const ElementEngine& engine() const { return engine_; }
  double rel_threshold() const { return rel_; }

  // mean over k of the lowest eigenvalue (and the per-k spectra)
  double energy(std::vector<SpectrumResult>* spectra = nullptr) const;
  // energy with function `index` replaced by f, using precomputed row kernels
  double energy_with_row(int index, const std::vector<PairKernels>& row) const;
  std::vector<PairKernels> row_kernels(const BasisFunction& f, int index) const;

private:
  const ElementEngine& engine_;
  std::vector<Vec3> kpoints_;
  double rel_;
  int threads_;
  std::vector<BasisFunction> basis_;
  KernelCache cache_;
};

// random candidate for (step, trial); reproducible for fixed seed
BasisFunction sample_candidate(const OptimizerConfig& cfg, int n, int step, int trial);
// scales the absorbed constant so that the zero-image self overlap is 1
BasisFunction normalize_candidate(BasisFunction f);

struct SvmResult {
  std::vector<BasisFunction> basis;
  std::vector<TraceRow> trace;
  double energy = 0.0;
};
SvmResult svm_grow(const ElementEngine& engine, std::vector<BasisFunction> basis, const OptimizerConfig& cfg);

// Parameters of one function: Cholesky lower triangle row-major (i >= j), then the shift.
Vec pack_parameters(const BasisFunction& f);
BasisFunction unpack_parameters(const BasisFunction& like, const Vec& theta);
std::string parameter_name(int function, int n, int index);

struct GradientReport {
  std::string parameter_id;
  double analytic = 0.0;
  double finite_difference = 0.0;
  double rel_error = 0.0;
};

// dE/dtheta for every parameter of function `index` (analytic when the engine has it)
Vec energy_gradient(const EnergyModel& model, int index);
Vec energy_gradient_fd(const EnergyModel& model, int index, double h);
std::vector<GradientReport> gradient_check(const EnergyModel& model, int index, double h = 1e-3);

struct RefineResult {
  std::vector<BasisFunction> basis;
  std::vector<TraceRow> trace;
  double energy = 0.0;
};
RefineResult refine_parameters(const ElementEngine& engine, std::vector<BasisFunction> basis,
                               const OptimizerConfig& cfg);

} // namespace pecg
