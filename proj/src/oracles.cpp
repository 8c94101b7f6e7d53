#include "pecg/oracles.hpp"

#include "pecg/parallel.hpp"
#include "pecg/special.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace pecg {

namespace {

BasisFunction translated(const BasisFunction& f, const MatX3& t) {
  BasisFunction g = f;
  g.set_centers(f.centers() + t);
  return g;
}

MatX3 image_translation(const std::vector<int>& m, const LatticeSpec& lattice, int n) {
  if (static_cast<int>(m.size()) != 3 * n) throw Error(ErrorKind::ParameterDomain, "image index length must be 3n");
  MatX3 t = MatX3::Zero(n, 3);
  for (int i = 0; i < n; ++i)
    for (int mu = 0; mu < 3; ++mu) {
      if (m[3 * i + mu] != 0 && !lattice.periodic[mu])
        throw Error(ErrorKind::ParameterDomain, "image index nonzero on a non-periodic axis");
      t(i, mu) = m[3 * i + mu] * lattice.cell_lengths(mu);
    }
  return t;
}

Vec3i image_tau(const std::vector<int>& m, int n) {
  Vec3i tau = Vec3i::Zero();
  for (int i = 0; i < n; ++i)
    for (int mu = 0; mu < 3; ++mu) tau(mu) += m[3 * i + mu];
  return tau;
}

// one Cartesian axis of a Gaussian: exp(-(x - s)^T A (x - s))
struct AxisGaussian {
  Mat a;
  Vec s;
  double log_value(const Vec& x) const {
    const Vec q = x - s;
    return -q.dot(a * q);
  }
  // (sum_i m_i^-1 d^2/dx_i^2 f) / f
  double laplacian_ratio(const Vec& x, const Vec& inv_mass) const {
    const Vec aq = a * (x - s);
    double v = 0.0;
    for (int i = 0; i < a.rows(); ++i) v += inv_mass(i) * (4.0 * aq(i) * aq(i) - 2.0 * a(i, i));
    return v;
  }
};

AxisGaussian axis_of(const BasisFunction& f, int mu) { return {f.a(), f.centers().col(mu)}; }

// int g(x) dx for g = poly(x) exp(-(x - c)^T A (x - c)), A the combined matrix: tensor Gauss-Hermite
template <class Fn>
double hermite_nd(const Mat& a, const Vec& center, int nodes, Fn&& log_and_mult) {
  const int n = static_cast<int>(a.rows());
  const Eigen::LLT<Mat> llt(a);
  if (llt.info() != Eigen::Success) throw Error(ErrorKind::NumericDomain, "combined matrix is not positive definite");
  const Mat lower = llt.matrixL();
  const Mat rinv_t = lower.transpose().inverse(); // x = c + L^{-T} y
  const double jac = 1.0 / lower.diagonal().prod();
  const QuadratureRule& q = gauss_hermite_cached(nodes);
  std::vector<int> idx(n, 0);
  double sum = 0.0;
  Vec y(n);
  while (true) {
    double w = 1.0;
    for (int d = 0; d < n; ++d) {
      y(d) = q.nodes[idx[d]];
      w *= q.weights[idx[d]];
    }
    const Vec x = center + rinv_t * y;
    const auto [lg, mult] = log_and_mult(x);
    sum += w * mult * std::exp(lg + y.squaredNorm());
    int d = 0;
    while (d < n && ++idx[d] == nodes) idx[d++] = 0;
    if (d == n) break;
  }
  return jac * sum;
}

// int exp(q(t)) dt, q exactly quadratic: the quadratic is read off three samples
template <class Fn>
double hermite_1d_logquadratic(int nodes, Fn&& q) {
  const double qm = q(-1.0), q0 = q(0.0), qp = q(1.0);
  const double gamma = 0.5 * (qp + qm - 2.0 * q0), beta = 0.5 * (qp - qm);
  if (!(gamma < 0.0)) throw Error(ErrorKind::NumericDomain, "delta-restricted integrand is not a decaying Gaussian");
  const double t0 = -beta / (2.0 * gamma), s = 1.0 / std::sqrt(-gamma);
  const QuadratureRule& r = gauss_hermite_cached(nodes);
  double sum = 0.0;
  for (std::size_t j = 0; j < r.nodes.size(); ++j) {
    const double y = r.nodes[j];
    sum += r.weights[j] * std::exp(q(t0 + s * y) + y * y);
  }
  return s * sum;
}

struct AxisPair {
  AxisGaussian bra, ket;
  Mat combined;
  Vec center;
};

AxisPair axis_pair(const BasisFunction& bra, const BasisFunction& ket, int mu) {
  AxisPair p{axis_of(bra, mu), axis_of(ket, mu), Mat(), Vec()};
  p.combined = p.bra.a + p.ket.a;
  p.center = p.combined.ldlt().solve(p.bra.a * p.bra.s + p.ket.a * p.ket.s);
  return p;
}

double axis_overlap(const AxisPair& p, int nodes) {
  return hermite_nd(p.combined, p.center, nodes, [&](const Vec& x) {
    return std::pair<double, double>(p.bra.log_value(x) + p.ket.log_value(x), 1.0);
  });
}

double axis_laplacian(const AxisPair& p, const Vec& inv_mass, int nodes) {
  return hermite_nd(p.combined, p.center, nodes, [&](const Vec& x) {
    return std::pair<double, double>(p.bra.log_value(x) + p.ket.log_value(x), p.ket.laplacian_ratio(x, inv_mass));
  });
}

// delta restricted along one axis: point x_i = c, or pair x_i - x_j = c
double axis_delta(const AxisPair& p, const DeltaTarget& t, double c, int nodes) {
  const int n = static_cast<int>(p.combined.rows());
  auto lg = [&](const Vec& x) { return p.bra.log_value(x) + p.ket.log_value(x); };
  if (t.kind == DeltaTarget::Kind::Point) {
    if (n == 1) return std::exp(lg(Vec::Constant(1, c)));
    const int other = 1 - t.i;
    return hermite_1d_logquadratic(nodes, [&](double s) {
      Vec x(2);
      x(t.i) = c;
      x(other) = s;
      return lg(x);
    });
  }
  return hermite_1d_logquadratic(nodes, [&](double s) {
    Vec x(2);
    x(t.j) = s;
    x(t.i) = s + c;
    return lg(x);
  });
}

void check_scope(const BasisFunction& bra, const BasisFunction& ket) {
  if (bra.n() != ket.n()) throw Error(ErrorKind::ParameterDomain, "bra and ket particle counts differ");
  if (bra.n() > 2) throw Error(ErrorKind::Scope, "oracles cover n <= 2 only");
}

Vec inverse_masses(const Vec& masses, int n) {
  if (masses.size() == 0) return Vec::Ones(n);
  if (masses.size() != n) throw Error(ErrorKind::ParameterDomain, "mass vector length differs from n");
  return masses.cwiseInverse();
}

void validate_delta(const DeltaTarget& t, int n) {
  if (t.i < 0 || t.i >= n) throw Error(ErrorKind::ParameterDomain, "delta particle index out of range");
  if (t.kind == DeltaTarget::Kind::ElectronPair && (t.j < 0 || t.j >= n || t.j == t.i))
    throw Error(ErrorKind::ParameterDomain, "delta pair indices invalid");
}

// grid value of <bra|O|ket> for overlap, kinetic, delta (open space)
double grid_element(const OracleOperatorSpec& op, const BasisFunction& bra, const BasisFunction& ket, int nodes) {
  const int n = bra.n();
  const double scale = std::exp(-bra.absorbed_log_constant - ket.absorbed_log_constant);
  std::array<AxisPair, 3> ax{axis_pair(bra, ket, 0), axis_pair(bra, ket, 1), axis_pair(bra, ket, 2)};
  std::array<double, 3> ov{};
  for (int mu = 0; mu < 3; ++mu) ov[mu] = axis_overlap(ax[mu], nodes);
  switch (op.kind) {
    case OracleOperator::Overlap:
      return scale * ov[0] * ov[1] * ov[2];
    case OracleOperator::Kinetic: {
      const Vec inv = inverse_masses(op.masses, n);
      double t = 0.0;
      for (int mu = 0; mu < 3; ++mu) t += axis_laplacian(ax[mu], inv, nodes) * ov[(mu + 1) % 3] * ov[(mu + 2) % 3];
      return -0.5 * scale * t;
    }
    case OracleOperator::Delta: {
      validate_delta(op.delta, n);
      double v = scale;
      for (int mu = 0; mu < 3; ++mu) v *= axis_delta(ax[mu], op.delta, op.delta.position(mu), nodes);
      return v;
    }
    case OracleOperator::Coulomb:
      break;
  }
  throw Error(ErrorKind::Contract, "grid oracle does not handle Coulomb operators");
}

cplx analytic_open(const OracleOperatorSpec& op, const BasisFunction& bra, const BasisFunction& ket) {
  const PairComposite pair = pair_composites(bra, ket);
  const LatticeSpec open = LatticeSpec::open();
  const Vec3 k0 = Vec3::Zero();
  switch (op.kind) {
    case OracleOperator::Overlap: return overlap_element(pair, bra, ket, open, k0);
    case OracleOperator::Kinetic: return kinetic_element(pair, bra, ket, open, op.masses, k0);
    case OracleOperator::Delta: return delta_element(pair, bra, ket, open, op.delta, k0);
    case OracleOperator::Coulomb: return coulomb_bare_element(pair, bra, ket, open, op.terms, k0);
  }
  return 0.0;
}

struct McEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;
};

// E[sum_t c_t / |disp_t|] under the normalized bra*ket density, antithetic pairs
McEstimate coulomb_mc(const BasisFunction& bra, const BasisFunction& ket, const std::vector<CoulombTerm>& terms,
                      const OracleOptions& opt, int image_id) {
  const int n = bra.n();
  const Mat a = bra.a() + ket.a();
  const MatX3 sb = bra.centers(), sk = ket.centers();
  const Mat ab = bra.a(), ak = ket.a();
  MatX3 mean(n, 3);
  for (int mu = 0; mu < 3; ++mu) mean.col(mu) = a.ldlt().solve(ab * sb.col(mu) + ak * sk.col(mu));
  const Eigen::LLT<Mat> llt(a);
  const Mat map = Mat(llt.matrixL()).transpose().inverse() / std::sqrt(2.0);
  const int streams = std::max(1, opt.streams);
  const long long pairs = std::max<long long>(1, opt.mc_samples / 2);
  std::vector<double> sums(streams, 0.0), sq(streams, 0.0);
  std::vector<long long> counts(streams, 0);
  auto value = [&](const MatX3& r) {
    double v = 0.0;
    for (const auto& t : terms) {
      const Vec3 ri = r.row(t.i).transpose();
      const Vec3 d = t.is_pair() ? Vec3(ri - r.row(t.j).transpose()) : Vec3(ri - t.position);
      v += t.coefficient / d.norm();
    }
    return v;
  };
  parallel_for(streams, opt.threads, [&](int s) {
    std::seed_seq seq{static_cast<std::uint32_t>(opt.seed), static_cast<std::uint32_t>(opt.seed >> 32),
                      static_cast<std::uint32_t>(image_id), static_cast<std::uint32_t>(s)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal;
    const long long count = pairs / streams + (s < pairs % streams ? 1 : 0);
    MatX3 z(n, 3), r(n, 3);
    for (long long c = 0; c < count; ++c) {
      for (int i = 0; i < n; ++i)
        for (int mu = 0; mu < 3; ++mu) z(i, mu) = normal(rng);
      const MatX3 dz = map * z;
      const double v = 0.5 * (value(mean + dz) + value(mean - dz));
      sums[s] += v;
      sq[s] += v * v;
    }
    counts[s] = count;
  });
  double total = 0.0, total_sq = 0.0;
  long long m = 0;
  for (int s = 0; s < streams; ++s) {
    total += sums[s];
    total_sq += sq[s];
    m += counts[s];
  }
  McEstimate e;
  e.mean = total / m;
  const double var = std::max(0.0, total_sq / m - e.mean * e.mean) * m / std::max<long long>(1, m - 1);
  e.stderr_ = std::sqrt(var / m);
  return e;
}

void finish(OracleReport& r) {
  r.abs_error = std::abs(r.analytic - r.oracle);
  const double scale = std::max({std::abs(r.analytic), std::abs(r.oracle), 1e-300});
  r.rel_error = r.abs_error / scale;
}

std::string image_list(const std::vector<std::vector<int>>& images) {
  std::ostringstream os;
  os << "images:";
  for (const auto& m : images) {
    os << " (";
    for (std::size_t i = 0; i < m.size(); ++i) os << (i ? "," : "") << m[i];
    os << ")";
  }
  return os.str();
}

const char* op_name(OracleOperator k) {
  switch (k) {
    case OracleOperator::Overlap: return "overlap";
    case OracleOperator::Kinetic: return "kinetic";
    case OracleOperator::Delta: return "delta";
    case OracleOperator::Coulomb: return "coulomb";
  }
  return "?";
}

// composite Gauss-Legendre over [-L/2, L/2]^d, d <= 2
template <class Fn>
cplx cell_integral(int d, double length, int panels, int nodes, Fn&& f) {
  const QuadratureRule& q = gauss_legendre_cached(nodes);
  std::vector<double> x, w;
  const double h = length / panels;
  for (int p = 0; p < panels; ++p) {
    const double c = -0.5 * length + (p + 0.5) * h;
    for (std::size_t j = 0; j < q.nodes.size(); ++j) {
      x.push_back(c + 0.5 * h * q.nodes[j]);
      w.push_back(0.5 * h * q.weights[j]);
    }
  }
  cplx sum = 0.0;
  if (d == 0) return f(Vec());
  if (d == 1) {
    Vec t(1);
    for (std::size_t i = 0; i < x.size(); ++i) {
      t(0) = x[i];
      sum += w[i] * f(t);
    }
    return sum;
  }
  Vec t(2);
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < x.size(); ++j) {
      t(0) = x[i];
      t(1) = x[j];
      sum += w[i] * w[j] * f(t);
    }
  return sum;
}

// Bloch sum along x: sum_m exp(i k L sum m) g(x - m L), optionally with the Laplacian ratio
struct BlochAxis {
  AxisGaussian g;
  double length;
  double k;
  int trunc;
  Vec inv_mass;

  cplx value(const Vec& x, bool laplacian) const {
    const int n = static_cast<int>(x.size());
    std::vector<int> m(n, -trunc);
    cplx sum = 0.0;
    Vec y(n);
    while (true) {
      int tot = 0;
      for (int i = 0; i < n; ++i) {
        y(i) = x(i) - m[i] * length;
        tot += m[i];
      }
      double v = std::exp(g.log_value(y));
      if (laplacian) v *= g.laplacian_ratio(y, inv_mass);
      sum += std::polar(v, k * length * tot);
      int d = 0;
      while (d < n && ++m[d] > trunc) m[d++] = -trunc;
      if (d == n) break;
    }
    return sum;
  }
};

} // namespace

bool OracleReport::agrees(double tol, double sigmas) const {
  if (oracle_uncertainty > 0.0) return abs_error <= sigmas * oracle_uncertainty;
  return rel_error <= tol;
}

OracleReport quadrature_oracle(const OracleOperatorSpec& op, const BasisFunction& bra, const BasisFunction& ket,
                               const LatticeSpec& lattice, const std::vector<std::vector<int>>& images,
                               const Vec3& k, const OracleOptions& options) {
  check_scope(bra, ket);
  bra.validate();
  ket.validate();
  if (images.empty()) throw Error(ErrorKind::ParameterDomain, "oracle needs at least one image");
  const int n = bra.n();
  OracleReport r;
  r.label = std::string(op_name(op.kind)) + " n=" + std::to_string(n);
  r.detail = image_list(images);
  double var = 0.0;
  for (std::size_t id = 0; id < images.size(); ++id) {
    const MatX3 t = image_translation(images[id], lattice, n);
    const BasisFunction kt = translated(ket, t);
    const cplx phase = bloch_phase(image_tau(images[id], n), lattice.cell_lengths, k);
    r.analytic += phase * analytic_open(op, bra, kt);
    if (op.kind == OracleOperator::Coulomb) {
      const double s = grid_element(OracleOperatorSpec::overlap(), bra, kt, options.hermite_nodes);
      const McEstimate e = coulomb_mc(bra, kt, op.terms, options, static_cast<int>(id));
      r.oracle += phase * (s * e.mean);
      var += (s * e.stderr_) * (s * e.stderr_);
    } else {
      r.oracle += phase * grid_element(op, bra, kt, options.hermite_nodes);
    }
  }
  r.oracle_uncertainty = std::sqrt(var);
  finish(r);
  return r;
}

OracleReport unfolding_check(const BasisFunction& bra, const BasisFunction& ket, const OracleOperatorSpec& op,
                             const LatticeSpec& lattice, int truncation, const Vec3& k,
                             const OracleOptions& options) {
  check_scope(bra, ket);
  if (!lattice.periodic[0] || lattice.periodic[1] || lattice.periodic[2])
    throw Error(ErrorKind::Scope, "unfolding check covers lattices periodic along x only");
  if (op.kind == OracleOperator::Coulomb) throw Error(ErrorKind::Scope, "unfolding check covers overlap, kinetic, delta");
  if (truncation < 0) throw Error(ErrorKind::ParameterDomain, "truncation must be >= 0");
  const int n = bra.n();
  const double length = lattice.cell_lengths(0);
  const double kx = k(0);
  const Vec inv = inverse_masses(op.masses, n);
  if (op.kind == OracleOperator::Delta) validate_delta(op.delta, n);
  const double scale = std::exp(-bra.absorbed_log_constant - ket.absorbed_log_constant);
  const int nodes = options.hermite_nodes;

  // transverse axes: plain Gaussian integrals
  std::array<double, 3> ov{}, lap{}, del{};
  for (int mu = 1; mu < 3; ++mu) {
    const AxisPair p = axis_pair(bra, ket, mu);
    ov[mu] = axis_overlap(p, nodes);
    lap[mu] = axis_laplacian(p, inv, nodes);
    if (op.kind == OracleOperator::Delta) del[mu] = axis_delta(p, op.delta, op.delta.position(mu), nodes);
  }
  double widest = std::max(bra.a().diagonal().maxCoeff(), ket.a().diagonal().maxCoeff());
  const int panels = std::max(4, static_cast<int>(std::ceil(2.0 * length * std::sqrt(widest))));

  auto left = [&](int trunc) {
    const BlochAxis bx{axis_of(bra, 0), length, kx, trunc, inv};
    const BlochAxis kxs{axis_of(ket, 0), length, kx, trunc, inv};
    auto x_part = [&](bool laplacian) {
      return cell_integral(n, length, panels, options.legendre_nodes,
                           [&](const Vec& x) { return std::conj(bx.value(x, false)) * kxs.value(x, laplacian); });
    };
    if (op.kind == OracleOperator::Overlap) return scale * x_part(false) * ov[1] * ov[2];
    if (op.kind == OracleOperator::Kinetic) {
      const cplx x0 = x_part(false), xl = x_part(true);
      return -0.5 * scale * (xl * ov[1] * ov[2] + x0 * lap[1] * ov[2] + x0 * ov[1] * lap[2]);
    }
    const DeltaTarget& t = op.delta;
    const double c = t.position(0);
    cplx xd;
    auto at = [&](const Vec& x) { return std::conj(bx.value(x, false)) * kxs.value(x, false); };
    if (t.kind == DeltaTarget::Kind::Point) {
      xd = cell_integral(n - 1, length, panels, options.legendre_nodes, [&](const Vec& s) {
        Vec x(n);
        x(t.i) = c;
        if (n == 2) x(1 - t.i) = s(0);
        return at(x);
      });
    } else {
      xd = cell_integral(1, length, panels, options.legendre_nodes, [&](const Vec& s) {
        Vec x(2);
        x(t.j) = s(0);
        x(t.i) = s(0) + c;
        return at(x);
      });
    }
    return scale * xd * del[1] * del[2];
  };

  OracleReport r;
  r.label = std::string("unfolding ") + op_name(op.kind) + " n=" + std::to_string(n);
  r.oracle = left(truncation);
  const cplx more = left(truncation + 1);
  if (std::abs(more - r.oracle) > 1e-12 * std::max(std::abs(more), 1e-300)) {
    r.precision_warning = true;
    r.detail = "truncation " + std::to_string(truncation) + " insufficient: one more image shell changes the cell integral";
  } else {
    r.detail = "truncation " + std::to_string(truncation);
  }

  const PairComposite pair = pair_composites(bra, ket);
  switch (op.kind) {
    case OracleOperator::Overlap: r.analytic = overlap_element(pair, bra, ket, lattice, k); break;
    case OracleOperator::Kinetic: r.analytic = kinetic_element(pair, bra, ket, lattice, op.masses, k); break;
    default: {
      // periodized operator: sum over offsets of the delta position
      const int reach = 2 * truncation + 4;
      for (int m = -reach; m <= reach; ++m) {
        DeltaTarget t = op.delta;
        t.position(0) += m * length;
        r.analytic += delta_element(pair, bra, ket, lattice, t, k);
      }
    }
  }
  finish(r);
  return r;
}

} // namespace pecg
