#include "pecg/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <sstream>

namespace {

constexpr int kExitCheckFailed = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitResource = 4;

int exit_code(const pecg::Error& e) {
  switch (e.kind()) {
    case pecg::ErrorKind::Config: return kExitConfig;
    case pecg::ErrorKind::Resource: return kExitResource;
    default: return kExitNumeric;
  }
}

struct Overrides {
  int threads = 0;
  std::string output;
  std::optional<std::uint64_t> seed;

  void apply(pecg::RunConfig& c) const {
    if (threads > 0) c.threads = threads;
    if (!output.empty()) c.output_directory = output;
    if (seed) c.basis.seed = *seed;
  }
};

std::pair<int, int> parse_pair(const std::string& s) {
  char comma = 0;
  int k = -1, l = -1;
  std::istringstream is(s);
  if (!(is >> k >> comma >> l) || comma != ',' || !is.eof())
    throw pecg::Error(pecg::ErrorKind::Config, "--pair: expected k,l");
  return {k, l};
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"periodic explicitly correlated Gaussian solver"};
  app.require_subcommand(1);
  Overrides ov;
  std::uint64_t seed = 0;
  app.add_option("--threads", ov.threads, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--output", ov.output, "output directory (overrides the config)");
  auto* seed_opt = app.add_option("--seed", seed, "random seed (overrides the config)");

  std::string config_path, basis_path, pair;
  bool full = false;

  auto* run = app.add_subcommand("run", "optimize a basis, then write bands and fit");
  run->add_option("config", config_path)->required();

  auto* validate = app.add_subcommand("validate", "run the self-check suite");
  validate->add_flag("--full", full, "include oracle and cross-route checks");

  auto* matelem = app.add_subcommand("matelem", "dump per-image kernels of one basis pair");
  matelem->add_option("config", config_path)->required();
  matelem->add_option("--pair", pair, "k,l")->required();
  matelem->add_option("--basis", basis_path, "basis file (defaults to basis.input)");

  auto* bands = app.add_subcommand("bands", "band energies and fit for an existing basis");
  bands->add_option("config", config_path)->required();
  bands->add_option("--basis", basis_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }
  if (*seed_opt) ov.seed = seed;

  try {
    if (*validate) {
      const auto checks = pecg::run_validation(full, ov.threads > 0 ? ov.threads : 1);
      pecg::print_checks(std::cout, checks);
      for (const auto& c : checks)
        if (!c.passed) return kExitCheckFailed;
      return 0;
    }
    pecg::RunConfig config = pecg::load_run_config(config_path);
    ov.apply(config);
    if (*run) {
      const auto summary = pecg::run_pipeline(config);
      for (const auto& p : summary.written) std::cout << "wrote " << p.string() << "\n";
      if (summary.band.fit) {
        const auto& f = *summary.band.fit;
        std::cout << "fit eps0=" << f.epsilon0 << " t=" << f.t << " W=" << f.bandwidth << " rms=" << f.rms_error << "\n";
      }
      return 0;
    }
    if (*matelem) {
      const std::string path = !basis_path.empty() ? basis_path : config.basis.input.value_or("");
      if (path.empty()) throw pecg::Error(pecg::ErrorKind::Config, "basis.input: required when --basis is absent");
      const auto [k, l] = parse_pair(pair);
      pecg::dump_pair(std::cout, config, pecg::read_basis_file(path), k, l);
      return 0;
    }
    if (*bands) {
      const auto basis = pecg::read_basis_file(basis_path);
      const auto engine = pecg::make_engine(config);
      pecg::RunSummary summary;
      summary.band = pecg::compute_bands(config, *engine, basis);
      pecg::write_band_artifacts(config, summary.band, &summary);
      for (const auto& p : summary.written) std::cout << "wrote " << p.string() << "\n";
      return 0;
    }
  } catch (const pecg::Error& e) {
    std::cerr << "error [" << pecg::error_kind_name(e.kind()) << "] " << e.what() << "\n";
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "error " << e.what() << "\n";
    return kExitNumeric;
  }
  return 0;
}
