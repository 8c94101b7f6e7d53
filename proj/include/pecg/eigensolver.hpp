#pragma once

#include "pecg/core.hpp"

namespace pecg {

struct SpectrumResult {
  Vec eigenvalues;       // ascending
  CMat eigenvectors;     // K x retained, S-orthonormal columns in the original basis
  int retained_dimension = 0;
  double overlap_condition = 0.0; // largest / smallest retained overlap eigenvalue
};

// Canonical orthogonalization: columns u_i / sqrt(s_i) for s_i >= rel_threshold * s_max.
CMat stabilize_overlap(const CMat& s, double rel_threshold = 1e-12, double* condition = nullptr);

SpectrumResult solve_generalized(const CMat& h, const CMat& s, double rel_threshold = 1e-12);

// lowest eigenvalue only, same projection
double lowest_eigenvalue(const CMat& h, const CMat& s, double rel_threshold = 1e-12);

} // namespace pecg
