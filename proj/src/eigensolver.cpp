#include "pecg/eigensolver.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace pecg {

namespace {

void check_square(const CMat& m, const char* what) {
  if (m.rows() != m.cols()) throw Error(ErrorKind::ParameterDomain, std::string(what) + " is not square");
}

} // namespace

CMat stabilize_overlap(const CMat& s, double rel_threshold, double* condition) {
  check_square(s, "overlap matrix");
  if (s.rows() == 0) throw Error(ErrorKind::NumericDomain, "empty overlap matrix");
  const CMat sh = 0.5 * (s + s.adjoint());
  Eigen::SelfAdjointEigenSolver<CMat> es(sh);
  if (es.info() != Eigen::Success) throw Error(ErrorKind::NumericDomain, "overlap diagonalization failed");
  const Vec& ev = es.eigenvalues();
  const double smax = ev(ev.size() - 1);
  if (!(smax > 0.0)) throw Error(ErrorKind::NumericDomain, "overlap matrix has no positive eigenvalue");
  const double cut = rel_threshold * smax;
  int first = 0;
  while (first < ev.size() && ev(first) < cut) ++first;
  const int kept = static_cast<int>(ev.size()) - first;
  if (kept == 0) throw Error(ErrorKind::NumericDomain, "all overlap eigenvalues fall below the threshold");
  CMat x(s.rows(), kept);
  for (int j = 0; j < kept; ++j) x.col(j) = es.eigenvectors().col(first + j) / std::sqrt(ev(first + j));
  if (condition) *condition = smax / ev(first);
  return x;
}

SpectrumResult solve_generalized(const CMat& h, const CMat& s, double rel_threshold) {
  check_square(h, "hamiltonian matrix");
  if (h.rows() != s.rows() || h.cols() != s.cols())
    throw Error(ErrorKind::ParameterDomain, "hamiltonian and overlap dimensions differ");
  SpectrumResult r;
  const CMat x = stabilize_overlap(s, rel_threshold, &r.overlap_condition);
  CMat hp = x.adjoint() * h * x;
  hp = 0.5 * (hp + hp.adjoint());
  Eigen::SelfAdjointEigenSolver<CMat> es(hp);
  if (es.info() != Eigen::Success) throw Error(ErrorKind::NumericDomain, "projected eigenproblem failed");
  r.eigenvalues = es.eigenvalues();
  r.eigenvectors = x * es.eigenvectors();
  r.retained_dimension = static_cast<int>(x.cols());
  return r;
}

double lowest_eigenvalue(const CMat& h, const CMat& s, double rel_threshold) {
  return solve_generalized(h, s, rel_threshold).eigenvalues(0);
}

} // namespace pecg
