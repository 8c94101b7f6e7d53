#pragma once

#include "pecg/config.hpp"
#include "pecg/hchain.hpp"

#include <filesystem>
#include <iosfwd>
#include <memory>

namespace pecg {

std::shared_ptr<const ElementEngine> make_engine(const RunConfig& config);

struct RunSummary {
  std::vector<BasisFunction> basis;
  std::vector<TraceRow> trace;
  BandStructure band;
  std::vector<std::filesystem::path> written;
};

// optimize -> bands -> fit; artifacts go under config.output_directory only
RunSummary run_pipeline(const RunConfig& config);

// band energies at config.band_kpoints() for a given basis
BandStructure compute_bands(const RunConfig& config, const ElementEngine& engine,
                            const std::vector<BasisFunction>& basis);
void write_band_artifacts(const RunConfig& config, const BandStructure& band, RunSummary* summary = nullptr);

// per-image kernels of one basis pair and its elements at each band k point
void dump_pair(std::ostream& os, const RunConfig& config, const std::vector<BasisFunction>& basis, int k, int l);

struct CheckResult {
  std::string name;
  std::string target;
  double measured = 0.0;
  bool passed = false;
};

// quick: closed-form and structural checks; full adds oracle and cross-route runs
std::vector<CheckResult> run_validation(bool full, int threads = 1);
void print_checks(std::ostream& os, const std::vector<CheckResult>& checks);

} // namespace pecg
