#include "pecg/core.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace pecg {

const char* error_kind_name(ErrorKind k) {
  switch (k) {
  case ErrorKind::ParameterDomain: return "parameter-domain";
  case ErrorKind::NumericDomain: return "numeric-domain";
  case ErrorKind::Resource: return "resource";
  case ErrorKind::Mode: return "mode";
  case ErrorKind::Contract: return "contract";
  case ErrorKind::Scope: return "scope";
  case ErrorKind::Config: return "config";
  }
  return "unknown";
}

BasisFunction::BasisFunction(Mat chol, Vec s, double absorbed)
    : cholesky(std::move(chol)), shift(std::move(s)), absorbed_log_constant(absorbed) {
  validate();
}

MatX3 BasisFunction::centers() const {
  MatX3 c(n(), 3);
  for (int i = 0; i < n(); ++i)
    for (int mu = 0; mu < 3; ++mu) c(i, mu) = shift(3 * i + mu);
  return c;
}

void BasisFunction::set_centers(const MatX3& c) {
  shift.resize(3 * c.rows());
  for (int i = 0; i < c.rows(); ++i)
    for (int mu = 0; mu < 3; ++mu) shift(3 * i + mu) = c(i, mu);
}

void BasisFunction::validate() const {
  if (cholesky.rows() == 0 || cholesky.rows() != cholesky.cols())
    throw Error(ErrorKind::ParameterDomain, "cholesky factor must be square and non-empty");
  for (int i = 0; i < n(); ++i) {
    if (!(cholesky(i, i) > 0.0) || !std::isfinite(cholesky(i, i)))
      throw Error(ErrorKind::ParameterDomain, "cholesky diagonal must be strictly positive");
    for (int j = i + 1; j < n(); ++j)
      if (cholesky(i, j) != 0.0)
        throw Error(ErrorKind::ParameterDomain, "cholesky factor must be lower triangular");
  }
  if (shift.size() != 3 * n())
    throw Error(ErrorKind::ParameterDomain, "shift length must be 3n");
}

BasisFunction BasisFunction::from_correlation(const Mat& a, const MatX3& centers, double absorbed) {
  Eigen::LLT<Mat> llt(a);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorKind::ParameterDomain, "correlation matrix is not positive definite");
  BasisFunction f;
  f.cholesky = llt.matrixL();
  f.set_centers(centers);
  f.absorbed_log_constant = absorbed;
  f.validate();
  return f;
}

double NuclearFrame::total_charge() const {
  double z = 0.0;
  for (double c : charges) z += c;
  return z;
}

Vec3 NuclearFrame::centroid() const {
  Vec3 c = Vec3::Zero();
  if (positions.empty()) return c;
  for (const auto& p : positions) c += p;
  return c / static_cast<double>(positions.size());
}

int LatticeSpec::periodic_count() const {
  return static_cast<int>(periodic[0]) + static_cast<int>(periodic[1]) + static_cast<int>(periodic[2]);
}

double LatticeSpec::mean_periodic_length() const {
  double logsum = 0.0;
  int np = 0;
  for (int mu = 0; mu < 3; ++mu)
    if (periodic[mu]) {
      logsum += std::log(cell_lengths(mu));
      ++np;
    }
  return np == 0 ? 0.0 : std::exp(logsum / np);
}

void LatticeSpec::validate() const {
  for (int mu = 0; mu < 3; ++mu)
    if (!(cell_lengths(mu) > 0.0))
      throw Error(ErrorKind::ParameterDomain, "cell lengths must be positive");
  if (!(chi2_cut > 0.0)) throw Error(ErrorKind::ParameterDomain, "chi2_cut must be positive");
  if (ewald_kappa && !(*ewald_kappa > 0.0))
    throw Error(ErrorKind::ParameterDomain, "ewald kappa must be positive");
}

LatticeSpec LatticeSpec::open() { return LatticeSpec{}; }

LatticeSpec LatticeSpec::chain(double length) {
  LatticeSpec l;
  l.cell_lengths = Vec3(length, length, length);
  l.periodic = {true, false, false};
  return l;
}

LatticeSpec LatticeSpec::cubic(double length) {
  LatticeSpec l;
  l.cell_lengths = Vec3(length, length, length);
  l.periodic = {true, true, true};
  return l;
}

PairComposite pair_composites(const BasisFunction& bra, const BasisFunction& ket) {
  if (bra.n() != ket.n())
    throw Error(ErrorKind::ParameterDomain, "bra and ket particle counts differ");
  const int n = bra.n();
  PairComposite p;
  p.a_k = bra.a();
  p.a_l = ket.a();
  p.a_kl = p.a_k + p.a_l;
  Eigen::LLT<Mat> llt(p.a_kl);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorKind::ParameterDomain, "A_k + A_l is not positive definite");
  const Mat lkl = llt.matrixL();
  double logdet = 0.0;
  for (int i = 0; i < n; ++i) logdet += 2.0 * std::log(lkl(i, i));
  p.det_a_kl = std::exp(logdet);
  p.a_kl_inv = llt.solve(Mat::Identity(n, n));
  p.a_kl_inv = 0.5 * (p.a_kl_inv + p.a_kl_inv.transpose());
  p.x_al = llt.solve(p.a_l);
  p.c_kl = p.a_k * p.x_al;
  p.c_kl = 0.5 * (p.c_kl + p.c_kl.transpose());
  p.prefactor = std::exp(1.5 * n * std::log(M_PI) - 1.5 * logdet);
  p.sigma_pair = Mat::Zero(n, n);
  p.sigma_single.resize(n);
  for (int i = 0; i < n; ++i) {
    p.sigma_single(i) = p.a_kl_inv(i, i);
    for (int j = 0; j < n; ++j)
      if (i != j)
        p.sigma_pair(i, j) = p.a_kl_inv(i, i) + p.a_kl_inv(j, j) - 2.0 * p.a_kl_inv(i, j);
  }
  const MatX3 sk = bra.centers();
  const MatX3 sl = ket.centers();
  p.center_base = llt.solve(p.a_k * sk + p.a_l * sl);
  p.shift_diff0 = sk - sl;
  p.absorbed = bra.absorbed_log_constant + ket.absorbed_log_constant;
  return p;
}

double image_exponent(const Mat& c, const MatX3& d) {
  double q = 0.0;
  for (int mu = 0; mu < 3; ++mu) q += d.col(mu).dot(c * d.col(mu));
  return q;
}

ImageGeometry image_geometry(const PairComposite& pair, const std::vector<int>& m,
                             const LatticeSpec& lattice) {
  const int n = pair.n();
  if (static_cast<int>(m.size()) != 3 * n)
    throw Error(ErrorKind::ParameterDomain, "image index length must be 3n");
  ImageGeometry g;
  g.image_index = m;
  g.translation = MatX3::Zero(n, 3);
  for (int i = 0; i < n; ++i)
    for (int mu = 0; mu < 3; ++mu) {
      const int mi = m[3 * i + mu];
      if (mi != 0 && !lattice.periodic[mu])
        throw Error(ErrorKind::ParameterDomain, "image index nonzero on a non-periodic axis");
      g.translation(i, mu) = mi * lattice.cell_lengths(mu);
      g.tau(mu) += mi;
    }
  g.shift_diff = pair.shift_diff0 - g.translation;
  g.weight = std::exp(-image_exponent(pair.c_kl, g.shift_diff));
  g.combined_center = pair.center_base + pair.x_al * g.translation;
  return g;
}

cplx bloch_phase(const Vec3i& tau, const Vec3& cell_lengths, const Vec3& k) {
  double arg = 0.0;
  for (int mu = 0; mu < 3; ++mu)
    if (tau(mu) != 0) arg += k(mu) * tau(mu) * cell_lengths(mu);
  if (arg == 0.0) return {1.0, 0.0};
  return {std::cos(arg), std::sin(arg)};
}

ConvertedParameters convert_parameterization(ConversionDirection dir, const Mat& pair_coupling,
                                             const Vec& widths, const MatX3& centers) {
  const int n = static_cast<int>(pair_coupling.rows());
  if (pair_coupling.cols() != n || widths.size() != n || centers.rows() != n)
    throw Error(ErrorKind::ParameterDomain, "parameter dimensions are inconsistent");
  const Mat d = widths.asDiagonal();
  ConvertedParameters out;
  if (dir == ConversionDirection::PcToScg) {
    for (int i = 0; i < n; ++i)
      if (!(widths(i) > 0.0)) throw Error(ErrorKind::ParameterDomain, "widths must be positive");
    const Mat b = 0.5 * (pair_coupling + 2.0 * d);
    Eigen::SelfAdjointEigenSolver<Mat> es(pair_coupling + 2.0 * d);
    if (es.eigenvalues()(0) <= 0.0) {
      std::ostringstream os;
      os << "A + 2 diag(beta) is not positive definite: smallest eigenvalue "
         << es.eigenvalues()(0) << " must exceed 0 (eigenvalues of A must exceed -2 min(beta))";
      throw Error(ErrorKind::ParameterDomain, os.str());
    }
    out.matrix = 0.5 * (b + b.transpose());
    out.centers = out.matrix.llt().solve(d * centers);
    double k = 0.0;
    for (int mu = 0; mu < 3; ++mu)
      k += centers.col(mu).dot(d * centers.col(mu)) -
           out.centers.col(mu).dot(out.matrix * out.centers.col(mu));
    out.absorbed = k;
  } else {
    for (int i = 0; i < n; ++i)
      if (!(widths(i) > 0.0)) throw Error(ErrorKind::ParameterDomain, "widths must be positive");
    out.matrix = 2.0 * (pair_coupling - d);
    out.centers = d.inverse() * pair_coupling * centers;
    out.absorbed = 0.0;
  }
  return out;
}

double pair_coupling_log_value(const Mat& a_pc, const Vec& beta, const MatX3& s, const MatX3& r) {
  double v = 0.0;
  for (int mu = 0; mu < 3; ++mu) v -= 0.5 * r.col(mu).dot(a_pc * r.col(mu));
  for (int i = 0; i < beta.size(); ++i) v -= beta(i) * (r.row(i) - s.row(i)).squaredNorm();
  return v;
}

double scg_log_value(const Mat& a, const MatX3& s, double absorbed, const MatX3& r) {
  const MatX3 d = r - s;
  return -absorbed - image_exponent(a, d);
}

void write_basis(std::ostream& os, const std::vector<BasisFunction>& basis,
                 const std::string& provenance) {
  os << "# " << provenance << "\n";
  os << std::setprecision(17);
  for (const auto& f : basis) {
    os << "n " << f.n() << "\n";
    bool first = true;
    for (int i = 0; i < f.n(); ++i)
      for (int j = 0; j <= i; ++j) {
        os << (first ? "" : " ") << f.cholesky(i, j);
        first = false;
      }
    os << "\n";
    for (int i = 0; i < f.shift.size(); ++i) os << (i ? " " : "") << f.shift(i);
    os << "\n" << f.absorbed_log_constant << "\n";
  }
}

namespace {
bool next_data_line(std::istream& is, std::string& line) {
  while (std::getline(is, line)) {
    const auto pos = line.find_first_not_of(" \t\r");
    if (pos == std::string::npos || line[pos] == '#') continue;
    return true;
  }
  return false;
}
} // namespace

std::vector<BasisFunction> read_basis(std::istream& is) {
  std::vector<BasisFunction> out;
  std::string line;
  while (next_data_line(is, line)) {
    std::istringstream h(line);
    std::string tag;
    int n = 0;
    if (!(h >> tag >> n) || tag != "n" || n <= 0)
      throw Error(ErrorKind::Config, "basis file: expected 'n <int>' record header, got '" + line + "'");
    BasisFunction f;
    f.cholesky = Mat::Zero(n, n);
    if (!next_data_line(is, line)) throw Error(ErrorKind::Config, "basis file: truncated record");
    std::istringstream lc(line);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j <= i; ++j)
        if (!(lc >> f.cholesky(i, j))) throw Error(ErrorKind::Config, "basis file: bad cholesky line");
    if (!next_data_line(is, line)) throw Error(ErrorKind::Config, "basis file: truncated record");
    std::istringstream ls(line);
    f.shift.resize(3 * n);
    for (int i = 0; i < 3 * n; ++i)
      if (!(ls >> f.shift(i))) throw Error(ErrorKind::Config, "basis file: bad shift line");
    if (!next_data_line(is, line)) throw Error(ErrorKind::Config, "basis file: truncated record");
    std::istringstream la(line);
    if (!(la >> f.absorbed_log_constant)) throw Error(ErrorKind::Config, "basis file: bad constant line");
    f.validate();
    out.push_back(std::move(f));
  }
  return out;
}

void write_basis_file(const std::string& path, const std::vector<BasisFunction>& basis,
                      const std::string& provenance) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorKind::Resource, "cannot open " + path + " for writing");
  write_basis(os, basis, provenance);
}

std::vector<BasisFunction> read_basis_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::Config, "cannot open basis file " + path);
  return read_basis(is);
}

} // namespace pecg
