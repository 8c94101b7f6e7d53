#pragma once

#include "pecg/elements.hpp"
#include "pecg/optimizer.hpp"

#include <cstdint>
#include <optional>
#include <string>

namespace pecg {

inline constexpr const char* kVersion = "0.4.1";

struct BasisSettings {
  int size = 20;
  std::uint64_t seed = 1;
  int trials_per_step = 40;
  double width_min = 0.1;
  double width_max = 3.0;
  double offdiag_scale = 0.5;
  Vec3 shift_min = Vec3::Zero();
  Vec3 shift_max = Vec3::Zero();
  int refine_sweeps = 0;
  int objective_mesh = 1; // k points in the optimization objective
  std::optional<std::string> input;
};

struct RunConfig {
  NuclearFrame frame;
  SpinPartition spins;
  Vec masses;
  LatticeSpec lattice;
  CoulombMode coulomb;
  BasisSettings basis;
  std::optional<int> k_mesh;
  std::vector<Vec3> k_list;
  std::string output_directory = "output";
  std::vector<std::string> outputs{"basis", "trace", "bands", "fit"};
  int threads = 1;
  std::string text; // canonical source document, hashed into provenance

  int electrons() const { return spins.n(); }
  bool writes(const std::string& artifact) const;
  // band k points: explicit list, or a uniform mesh along the first periodic axis
  std::vector<Vec3> band_kpoints() const;
  std::vector<Vec3> objective_kpoints() const;
  OptimizerConfig optimizer() const;
  std::string provenance() const;
};

// throws Error(Config) naming the offending key path
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

std::uint64_t fnv1a64(const std::string& data);

} // namespace pecg
