#pragma once

#include "pecg/core.hpp"

#include <functional>

namespace pecg {

struct ImageSet {
  std::vector<std::vector<int>> indices;
  std::vector<ImageGeometry> geometries;
  double truncation_bound = 0.0;
  std::size_t size() const { return indices.size(); }
};

struct DualSumSpec {
  std::vector<std::vector<int>> reciprocal_indices; // per periodic (particle, axis) coordinate
  Mat c_inv;
  double volume_power = 1.0;
};

// all M with d_M^T C d_M <= lattice.chi2_cut, lexicographic in M
ImageSet enumerate_images(const PairComposite& pair, const LatticeSpec& lattice);
ImageSet enumerate_images(const PairComposite& pair, const LatticeSpec& lattice, double bound);

using ImageKernel = std::function<cplx(const ImageGeometry&)>;

// sum_M exp(i k.T_M) omega_M kernel(M)
cplx image_sum_direct(const ImageSet& images, const ImageKernel& kernel, const Vec3& k,
                      const Vec3& cell_lengths);

// Poisson-dual evaluation of sum_M exp(i k.T_M) omega_M. Non-periodic axes contribute their
// single m = 0 factor. Returns the complex sum; real at k = 0.
cplx image_sum_dual(const PairComposite& pair, const LatticeSpec& lattice, const Vec3& k,
                    DualSumSpec* spec_out = nullptr);
double image_sum_dual(const PairComposite& pair, const LatticeSpec& lattice);

enum class Representation { Direct, Dual };
Representation select_representation(const PairComposite& pair, const LatticeSpec& lattice);

// sum_m exp(-c (delta - m L)^2), branch chosen by c L^2 >= pi (direct) or < pi (dual)
double theta_sum_1d(double c, double delta, double length, double tol = 1e-17);
// diagonal C: product over particles and periodic axes of 1D theta sums
// shifts are the per-particle, per-axis offsets s_k - s_l (n x 3)
double theta_factorized_sum(const Vec& diagonal_c, const MatX3& shifts, const LatticeSpec& lattice);

} // namespace pecg
