#pragma once

#include <Eigen/Dense>

#include <array>
#include <complex>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace pecg {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using MatX3 = Eigen::Matrix<double, Eigen::Dynamic, 3>;
using Vec3 = Eigen::Vector3d;
using Vec3i = Eigen::Vector3i;
using cplx = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;

enum class ErrorKind { ParameterDomain, NumericDomain, Resource, Mode, Contract, Scope, Config };

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

private:
  ErrorKind kind_;
};

const char* error_kind_name(ErrorKind k);

// One shifted correlated Gaussian
//   exp(-absorbed) * exp(-(r - s)^T (A (x) I3) (r - s)),  A = L L^T.
// The shift is stored particle-major: (x1, y1, z1, x2, y2, z2, ...).
struct BasisFunction {
  Mat cholesky;
  Vec shift;
  double absorbed_log_constant = 0.0;

  BasisFunction() = default;
  BasisFunction(Mat chol, Vec s, double absorbed = 0.0);

  int n() const { return static_cast<int>(cholesky.rows()); }
  Mat a() const { return cholesky * cholesky.transpose(); }
  // n x 3 view of the shift
  MatX3 centers() const;
  void set_centers(const MatX3& c);

  // throws ParameterDomain when the invariants fail
  void validate() const;

  static BasisFunction from_correlation(const Mat& a, const MatX3& centers, double absorbed = 0.0);
};

struct NuclearFrame {
  std::vector<Vec3> positions;
  std::vector<double> charges;

  double total_charge() const;
  std::size_t size() const { return positions.size(); }
  Vec3 centroid() const;
};

struct LatticeSpec {
  Vec3 cell_lengths{1.0, 1.0, 1.0};
  std::array<bool, 3> periodic{false, false, false};
  double chi2_cut = 30.0;
  std::optional<double> ewald_kappa;
  long long image_cap = 10000000;

  int periodic_count() const;
  bool fully_periodic() const { return periodic_count() == 3; }
  double volume() const { return cell_lengths.prod(); }
  // geometric mean of the periodic cell lengths (0 when nothing is periodic)
  double mean_periodic_length() const;
  void validate() const;

  static LatticeSpec open();
  static LatticeSpec chain(double length);
  static LatticeSpec cubic(double length);
};

struct PairComposite {
  Mat a_k, a_l;
  Mat a_kl;
  Mat a_kl_inv;
  double det_a_kl = 0.0;
  Mat c_kl;
  double prefactor = 0.0;
  Mat sigma_pair;   // sigma^2_{ij}, zero diagonal
  Vec sigma_single; // sigma^2_i
  // helpers for image geometry
  Mat x_al;            // A_kl^{-1} A_l
  MatX3 center_base;   // A_kl^{-1}(A_k s_k + A_l s_l)
  MatX3 shift_diff0;   // s_k - s_l
  double absorbed = 0.0; // absorbed_k + absorbed_l

  int n() const { return static_cast<int>(a_kl.rows()); }
  double log_weight_scale() const { return -absorbed; }
};

PairComposite pair_composites(const BasisFunction& bra, const BasisFunction& ket);

struct ImageGeometry {
  std::vector<int> image_index; // length 3n, particle-major
  MatX3 translation;            // T_M per particle
  MatX3 shift_diff;             // d_M
  MatX3 combined_center;        // r_bar_M
  double weight = 1.0;          // omega_M
  Vec3i tau = Vec3i::Zero();    // summed cell index over particles, sets the Bloch phase
};

ImageGeometry image_geometry(const PairComposite& pair, const std::vector<int>& m,
                             const LatticeSpec& lattice);

// quadratic form sum_c d_c^T C d_c
double image_exponent(const Mat& c, const MatX3& d);

cplx bloch_phase(const Vec3i& tau, const Vec3& cell_lengths, const Vec3& k);

enum class ConversionDirection { PcToScg, ScgToPc };

struct ConvertedParameters {
  Mat matrix;            // A_k for pc->scg, A_pc for scg->pc
  MatX3 centers;         // s_k for pc->scg, pair-coupling centers for scg->pc
  double absorbed = 0.0; // kappa_k (pc->scg only)
};

// pc->scg: pair_coupling = A_pc, widths = beta, centers = s
// scg->pc: pair_coupling = A_k, widths = beta (chosen D_beta), centers = s_k
ConvertedParameters convert_parameterization(ConversionDirection dir, const Mat& pair_coupling,
                                             const Vec& widths, const MatX3& centers);

// log of the pair-coupling form exp(-1/2 sum A_ij r_i.r_j - sum beta_i |r_i - s_i|^2)
double pair_coupling_log_value(const Mat& a_pc, const Vec& beta, const MatX3& s, const MatX3& r);
// log of exp(-absorbed) exp(-(r-s)^T A (r-s))
double scg_log_value(const Mat& a, const MatX3& s, double absorbed, const MatX3& r);

// basis persistence
void write_basis(std::ostream& os, const std::vector<BasisFunction>& basis,
                 const std::string& provenance);
std::vector<BasisFunction> read_basis(std::istream& is);
void write_basis_file(const std::string& path, const std::vector<BasisFunction>& basis,
                      const std::string& provenance);
std::vector<BasisFunction> read_basis_file(const std::string& path);

} // namespace pecg
