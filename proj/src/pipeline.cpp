#include "pecg/pipeline.hpp"

#include "pecg/parallel.hpp"

#include <fstream>
#include <iomanip>
#include <ostream>

namespace pecg {

namespace {

int band_axis(const LatticeSpec& lattice) {
  for (int mu = 0; mu < 3; ++mu)
    if (lattice.periodic[mu]) return mu;
  return 0;
}

std::ofstream open_artifact(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Resource, "cannot write " + path.string());
  return out;
}

} // namespace

std::shared_ptr<const ElementEngine> make_engine(const RunConfig& config) {
  auto inner = std::make_shared<PeriodicEngine>(config.lattice, config.frame, config.coulomb, config.masses);
  return std::make_shared<AntisymmetrizedEngine>(inner, config.spins);
}

BandStructure compute_bands(const RunConfig& config, const ElementEngine& engine,
                            const std::vector<BasisFunction>& basis) {
  const std::vector<Vec3> ks = config.band_kpoints();
  const int axis = band_axis(config.lattice);
  const KernelCache cache(engine, basis, config.threads);
  BandStructure band;
  band.cell_length = config.lattice.cell_lengths(axis);
  band.atoms_per_cell = std::max<int>(1, static_cast<int>(config.frame.size()));
  band.energies.assign(ks.size(), 0.0);
  for (const auto& k : ks) band.k_values.push_back(k(axis));
  parallel_for(static_cast<int>(ks.size()), config.threads, [&](int i) {
    const auto m = OperatorMatrixSet::from_cache(cache, ks[i]);
    band.energies[i] = lowest_eigenvalue(m.hamiltonian, m.overlap);
  });
  if (config.lattice.periodic_count() == 1) {
    try {
      band.fit = tight_binding_fit(band, band.cell_length);
    } catch (const Error&) {
      // too few distinct k points for a fit
    }
  }
  return band;
}

void write_band_artifacts(const RunConfig& config, const BandStructure& band, RunSummary* summary) {
  const std::filesystem::path dir(config.output_directory);
  std::filesystem::create_directories(dir);
  const std::string prov = config.provenance();
  if (config.writes("bands")) {
    const auto p = dir / "bands.csv";
    auto out = open_artifact(p);
    write_band_csv(out, band, prov);
    if (summary) summary->written.push_back(p);
  }
  if (config.writes("fit") && band.fit) {
    const auto p = dir / "fit.txt";
    auto out = open_artifact(p);
    write_fit_summary(out, {band}, prov);
    if (summary) summary->written.push_back(p);
  }
}

RunSummary run_pipeline(const RunConfig& config) {
  const auto engine = make_engine(config);
  std::vector<BasisFunction> basis;
  if (config.basis.input) basis = read_basis_file(*config.basis.input);
  for (const auto& f : basis)
    if (f.n() != config.electrons())
      throw Error(ErrorKind::ParameterDomain, "input basis particle count differs from system.electrons");

  RunSummary summary;
  const OptimizerConfig opt = config.optimizer();
  opt.validate();
  if (static_cast<int>(basis.size()) < config.basis.size) {
    SvmResult grown = svm_grow(*engine, basis, opt);
    basis = std::move(grown.basis);
    summary.trace = std::move(grown.trace);
  }
  if (config.basis.refine_sweeps > 0 && !basis.empty()) {
    RefineResult refined = refine_parameters(*engine, basis, opt);
    const int offset = summary.trace.empty() ? 0 : summary.trace.back().step;
    for (auto row : refined.trace) {
      if (row.step == 0 && !summary.trace.empty()) continue;
      row.step += offset;
      summary.trace.push_back(row);
    }
    basis = std::move(refined.basis);
  }
  if (basis.empty()) throw Error(ErrorKind::ParameterDomain, "empty basis: set basis.size or basis.input");

  const std::filesystem::path dir(config.output_directory);
  std::filesystem::create_directories(dir);
  const std::string prov = config.provenance();
  if (config.writes("basis")) {
    const auto p = dir / "basis.txt";
    write_basis_file(p.string(), basis, prov);
    summary.written.push_back(p);
  }
  if (config.writes("trace")) {
    const auto p = dir / "trace.csv";
    auto out = open_artifact(p);
    write_trace_csv(out, summary.trace, prov);
    summary.written.push_back(p);
  }
  summary.band = compute_bands(config, *engine, basis);
  write_band_artifacts(config, summary.band, &summary);
  summary.basis = std::move(basis);
  return summary;
}

void dump_pair(std::ostream& os, const RunConfig& config, const std::vector<BasisFunction>& basis, int k, int l) {
  const int size = static_cast<int>(basis.size());
  if (k < 0 || l < 0 || k >= size || l >= size)
    throw Error(ErrorKind::ParameterDomain, "pair index outside the basis (size " + std::to_string(size) + ")");
  const auto engine = make_engine(config);
  const PairKernels pk = engine->pair_kernels(basis[k], basis[l]);
  os << "# " << config.provenance() << "\n";
  os << "# pair " << k << "," << l << " coulomb " << config.coulomb.name() << "\n";
  os << "tau_x,tau_y,tau_z,overlap,kinetic,potential\n";
  os << std::setprecision(15);
  for (const auto& t : pk.terms)
    os << t.tau(0) << "," << t.tau(1) << "," << t.tau(2) << "," << t.overlap << "," << t.kinetic << ","
       << t.potential << "\n";
  os << "kx,ky,kz,S_re,S_im,T_re,T_im,V_re,V_im,H_re,H_im\n";
  for (const auto& q : config.band_kpoints()) {
    const cplx s = pk.overlap(q), t = pk.kinetic(q), v = pk.potential(q), h = pk.hamiltonian(q);
    os << q(0) << "," << q(1) << "," << q(2) << "," << s.real() << "," << s.imag() << "," << t.real() << ","
       << t.imag() << "," << v.real() << "," << v.imag() << "," << h.real() << "," << h.imag() << "\n";
  }
}

void print_checks(std::ostream& os, const std::vector<CheckResult>& checks) {
  std::size_t width = 10;
  for (const auto& c : checks) width = std::max(width, c.name.size());
  for (const auto& c : checks)
    os << (c.passed ? "PASS " : "FAIL ") << std::left << std::setw(static_cast<int>(width) + 2) << c.name
       << std::setw(24) << c.target << std::scientific << std::setprecision(3) << c.measured << std::defaultfloat
       << "\n";
}

} // namespace pecg
