#pragma once

#include "pecg/elements.hpp"

#include <cstdint>
#include <string>

namespace pecg {

struct OracleReport {
  std::string label;
  cplx analytic = 0.0;
  cplx oracle = 0.0;
  double abs_error = 0.0;
  double rel_error = 0.0;          // against max(|analytic|, |oracle|)
  double oracle_uncertainty = 0.0; // standard error for stochastic oracles, 0 for grids
  bool precision_warning = false;
  std::string detail;              // images used, truncation notes

  // |diff| within `sigmas` standard errors (stochastic) or rel_error <= tol (deterministic)
  bool agrees(double tol, double sigmas = 3.0) const;
};

enum class OracleOperator { Overlap, Kinetic, Delta, Coulomb };

struct OracleOperatorSpec {
  OracleOperator kind = OracleOperator::Overlap;
  DeltaTarget delta;               // Delta
  std::vector<CoulombTerm> terms;  // Coulomb
  Vec masses;                      // Kinetic, empty means unit masses

  static OracleOperatorSpec overlap() { return {}; }
  static OracleOperatorSpec kinetic(Vec masses = Vec()) { return {OracleOperator::Kinetic, {}, {}, std::move(masses)}; }
  static OracleOperatorSpec contact(const DeltaTarget& t) { return {OracleOperator::Delta, t, {}, Vec()}; }
  static OracleOperatorSpec coulomb(std::vector<CoulombTerm> t) { return {OracleOperator::Coulomb, {}, std::move(t), Vec()}; }
};

struct OracleOptions {
  int hermite_nodes = 40;
  long long mc_samples = 1000000;
  std::uint64_t seed = 7;
  int streams = 16; // fixed stream split, so results do not depend on threads
  int threads = 1;
  int legendre_nodes = 20; // per panel, cell integrals of the unfolding check
};

// sum over the listed images M of exp(i k.T_M) <bra| O |ket(. - T_M)>, analytic vs numerical
OracleReport quadrature_oracle(const OracleOperatorSpec& op, const BasisFunction& bra, const BasisFunction& ket,
                               const LatticeSpec& lattice, const std::vector<std::vector<int>>& images,
                               const Vec3& k, const OracleOptions& options = {});

// Cell integral of the explicitly periodized Bloch sums (images |m| <= truncation per electron)
// against the single image sum. x-periodic lattices only; delta operators are periodized.
OracleReport unfolding_check(const BasisFunction& bra, const BasisFunction& ket, const OracleOperatorSpec& op,
                             const LatticeSpec& lattice, int truncation, const Vec3& k,
                             const OracleOptions& options = {});

} // namespace pecg
