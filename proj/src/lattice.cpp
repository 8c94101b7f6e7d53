#include "pecg/lattice.hpp"

#include <cmath>
#include <sstream>

namespace pecg {

namespace {

struct Coord {
  int particle;
  int axis;
  int lo;
  int hi;
};

} // namespace

ImageSet enumerate_images(const PairComposite& pair, const LatticeSpec& lattice) {
  return enumerate_images(pair, lattice, lattice.chi2_cut);
}

ImageSet enumerate_images(const PairComposite& pair, const LatticeSpec& lattice, double bound) {
  const int n = pair.n();
  ImageSet set;
  set.truncation_bound = bound;
  const std::vector<int> zero(3 * n, 0);

  std::vector<Coord> coords;
  if (lattice.periodic_count() > 0) {
    Eigen::SelfAdjointEigenSolver<Mat> es(pair.c_kl, Eigen::EigenvaluesOnly);
    const double lmin = es.eigenvalues()(0);
    if (!(lmin > 0.0)) throw Error(ErrorKind::NumericDomain, "C_kl is not positive definite");
    const double radius = std::sqrt(bound / lmin);
    double predicted = 1.0;
    for (int i = 0; i < n; ++i)
      for (int mu = 0; mu < 3; ++mu) {
        if (!lattice.periodic[mu]) continue;
        const double len = lattice.cell_lengths(mu);
        const double delta = pair.shift_diff0(i, mu);
        Coord c{i, mu, static_cast<int>(std::ceil((delta - radius) / len)),
                static_cast<int>(std::floor((delta + radius) / len))};
        predicted *= std::max(0, c.hi - c.lo + 1);
        coords.push_back(c);
      }
    if (predicted > static_cast<double>(lattice.image_cap)) {
      std::ostringstream os;
      os << "image enumeration would scan " << predicted << " candidates (cap "
         << lattice.image_cap << "); use the dual (Poisson) representation or tighter functions";
      throw Error(ErrorKind::Resource, os.str());
    }
    bool empty_box = false;
    for (const auto& c : coords)
      if (c.hi < c.lo) empty_box = true;
    if (empty_box) coords.clear(); // only the forced zero image remains
  }

  bool zero_seen = false;
  if (coords.empty()) {
    set.indices.push_back(zero);
    set.geometries.push_back(image_geometry(pair, zero, lattice));
    return set;
  }
  std::vector<int> m(3 * n, 0);
  std::vector<int> cur(coords.size());
  for (std::size_t j = 0; j < coords.size(); ++j) cur[j] = coords[j].lo;
  MatX3 d(n, 3);
  // insert zero image in lexicographic position if it falls outside the ellipsoid
  auto lex_less = [](const std::vector<int>& a, const std::vector<int>& b) { return a < b; };
  while (true) {
    for (std::size_t j = 0; j < coords.size(); ++j) m[3 * coords[j].particle + coords[j].axis] = cur[j];
    d = pair.shift_diff0;
    for (std::size_t j = 0; j < coords.size(); ++j)
      d(coords[j].particle, coords[j].axis) -= cur[j] * lattice.cell_lengths(coords[j].axis);
    const double q = image_exponent(pair.c_kl, d);
    const bool is_zero = m == zero;
    if (!zero_seen && !is_zero && lex_less(zero, m)) {
      // zero image lies outside and precedes m lexicographically
      zero_seen = true;
      set.indices.push_back(zero);
      set.geometries.push_back(image_geometry(pair, zero, lattice));
    }
    if (q <= bound || is_zero) {
      if (is_zero) zero_seen = true;
      set.indices.push_back(m);
      set.geometries.push_back(image_geometry(pair, m, lattice));
    }
    // odometer, last coordinate fastest
    int j = static_cast<int>(coords.size()) - 1;
    while (j >= 0) {
      if (++cur[j] <= coords[j].hi) break;
      cur[j] = coords[j].lo;
      --j;
    }
    if (j < 0) break;
  }
  if (!zero_seen) {
    set.indices.push_back(zero);
    set.geometries.push_back(image_geometry(pair, zero, lattice));
  }
  return set;
}

cplx image_sum_direct(const ImageSet& images, const ImageKernel& kernel, const Vec3& k,
                      const Vec3& cell_lengths) {
  cplx sum = 0.0;
  for (const auto& g : images.geometries)
    sum += bloch_phase(g.tau, cell_lengths, k) * g.weight * kernel(g);
  if (k.isZero(0.0)) sum.imag(0.0);
  return sum;
}

cplx image_sum_dual(const PairComposite& pair, const LatticeSpec& lattice, const Vec3& k,
                    DualSumSpec* spec_out) {
  const int n = pair.n();
  const Mat& c = pair.c_kl;
  Eigen::LLT<Mat> llt(c);
  if (llt.info() != Eigen::Success) throw Error(ErrorKind::NumericDomain, "C_kl restriction is singular");
  const Mat cinv = llt.solve(Mat::Identity(n, n));
  double logdet = 0.0;
  {
    const Mat lc = llt.matrixL();
    for (int i = 0; i < n; ++i) logdet += 2.0 * std::log(lc(i, i));
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(c, Eigen::EigenvaluesOnly);
  const double lmax = es.eigenvalues()(n - 1);
  const double bound = lattice.chi2_cut;
  if (spec_out) {
    spec_out->c_inv = cinv;
    spec_out->volume_power = 1.0;
    spec_out->reciprocal_indices.clear();
  }
  cplx total = 1.0;
  for (int mu = 0; mu < 3; ++mu) {
    const Vec delta = pair.shift_diff0.col(mu);
    if (!lattice.periodic[mu]) {
      total *= std::exp(-delta.dot(c * delta));
      continue;
    }
    const double len = lattice.cell_lengths(mu);
    const double g = 2.0 * M_PI / len;
    if (spec_out) spec_out->volume_power *= std::pow(len, n);
    // q = k 1 - g K, q^T C^{-1} q / 4 <= bound  =>  |q_i| <= 2 sqrt(bound lmax)
    const double qmax = 2.0 * std::sqrt(bound * lmax);
    std::vector<int> lo(n), hi(n);
    for (int i = 0; i < n; ++i) {
      lo[i] = static_cast<int>(std::ceil((k(mu) - qmax) / g));
      hi[i] = static_cast<int>(std::floor((k(mu) + qmax) / g));
    }
    std::vector<int> kk(lo);
    cplx sum = 0.0;
    Vec q(n);
    bool empty = false;
    for (int i = 0; i < n; ++i)
      if (hi[i] < lo[i]) empty = true;
    while (!empty) {
      for (int i = 0; i < n; ++i) q(i) = k(mu) - g * kk[i];
      const double e = q.dot(cinv * q) / 4.0;
      if (e <= bound) {
        const double ph = q.dot(delta);
        sum += std::exp(-e) * cplx(std::cos(ph), std::sin(ph));
        if (spec_out) {
          std::vector<int> rec{mu};
          rec.insert(rec.end(), kk.begin(), kk.end());
          spec_out->reciprocal_indices.push_back(std::move(rec));
        }
      }
      int j = n - 1;
      while (j >= 0) {
        if (++kk[j] <= hi[j]) break;
        kk[j] = lo[j];
        --j;
      }
      if (j < 0) break;
    }
    const double pref = std::exp(0.5 * n * std::log(M_PI) - 0.5 * logdet - n * std::log(len));
    total *= pref * sum;
  }
  if (k.isZero(0.0)) total.imag(0.0);
  return total;
}

double image_sum_dual(const PairComposite& pair, const LatticeSpec& lattice) {
  return image_sum_dual(pair, lattice, Vec3::Zero(), nullptr).real();
}

Representation select_representation(const PairComposite& pair, const LatticeSpec& lattice) {
  if (lattice.periodic_count() == 0) return Representation::Direct;
  Eigen::SelfAdjointEigenSolver<Mat> es(pair.c_kl, Eigen::EigenvaluesOnly);
  const double cmin = es.eigenvalues()(0);
  const double len = lattice.mean_periodic_length();
  return cmin >= M_PI / (len * len) ? Representation::Direct : Representation::Dual;
}

double theta_sum_1d(double c, double delta, double length, double tol) {
  if (c * length * length >= M_PI) {
    const int m0 = static_cast<int>(std::lround(delta / length));
    double sum = std::exp(-c * (delta - m0 * length) * (delta - m0 * length));
    for (int j = 1;; ++j) {
      const double a = delta - (m0 + j) * length;
      const double b = delta - (m0 - j) * length;
      const double t = std::exp(-c * a * a) + std::exp(-c * b * b);
      sum += t;
      if (t <= tol * sum) break;
    }
    return sum;
  }
  const double ratio = M_PI * M_PI / (c * length * length);
  double sum = 1.0;
  for (int kk = 1;; ++kk) {
    const double t = 2.0 * std::exp(-ratio * kk * kk);
    sum += t * std::cos(2.0 * M_PI * kk * delta / length);
    if (t <= tol) break;
  }
  return std::sqrt(M_PI / c) / length * sum;
}

double theta_factorized_sum(const Vec& diagonal_c, const MatX3& shifts, const LatticeSpec& lattice) {
  double prod = 1.0;
  for (int i = 0; i < diagonal_c.size(); ++i)
    for (int mu = 0; mu < 3; ++mu) {
      const double delta = shifts(i, mu);
      if (lattice.periodic[mu])
        prod *= theta_sum_1d(diagonal_c(i), delta, lattice.cell_lengths(mu));
      else
        prod *= std::exp(-diagonal_c(i) * delta * delta);
    }
  return prod;
}

} // namespace pecg
