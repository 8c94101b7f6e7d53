#include "pecg/optimizer.hpp"

#include "pecg/parallel.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <random>

namespace pecg {

namespace {

// lowest root of lambda - h - sum |w_i|^2 / (lambda - e_i) below e_0
double bordered_lowest(const Vec& e, const Vec& w2, double h) {
  const double e0 = e(0);
  auto f = [&](double lam) {
    double s = lam - h;
    for (int i = 0; i < e.size(); ++i)
      if (w2(i) != 0.0) s -= w2(i) / (lam - e(i));
    return s;
  };
  const double wn = std::sqrt(w2.sum());
  double lo = std::min(e0, h) - wn - 1.0;
  double hi = e0;
  // decoupled from the lowest state: a root below e_0 exists only if f(e_0) > 0
  if (w2(0) <= 0.0 && !(f(e0) > 0.0)) return e0;
  while (f(lo) > 0.0) lo -= 2.0 * (hi - lo);
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (f(mid) > 0.0)
      hi = mid;
    else
      lo = mid;
  }
  return 0.5 * (lo + hi);
}

void fill_from_row(CMat& h, CMat& s, int index, const std::vector<PairKernels>& row, const Vec3& k) {
  for (int l = 0; l < static_cast<int>(row.size()); ++l) {
    cplx hv = row[l].hamiltonian(k), sv = row[l].overlap(k);
    if (l == index) {
      h(index, index) = hv.real();
      s(index, index) = sv.real();
      continue;
    }
    h(index, l) = hv;
    s(index, l) = sv;
    h(l, index) = std::conj(hv);
    s(l, index) = std::conj(sv);
  }
}

int parameter_count(int n) { return n * (n + 1) / 2 + 3 * n; }

Vec parameter_scales(const BasisFunction& f) {
  const int n = f.n();
  Vec sc(parameter_count(n));
  int p = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) sc(p++) = std::max(std::abs(f.cholesky(i, j)), 0.1 * std::abs(f.cholesky(i, i)));
  for (int c = 0; c < 3 * n; ++c) sc(p++) = 1.0;
  return sc;
}

bool admissible(const BasisFunction& f) {
  for (int i = 0; i < f.n(); ++i)
    if (!(f.cholesky(i, i) > 0.0) || !std::isfinite(f.cholesky(i, i))) return false;
  return f.shift.allFinite();
}

} // namespace

void OptimizerConfig::validate() const {
  if (trials_per_step < 1 || growth_target < 0 || refine_steps < 0)
    throw Error(ErrorKind::ParameterDomain, "optimizer counts must be positive");
  if (!(width_min > 0.0) || !(width_max >= width_min))
    throw Error(ErrorKind::ParameterDomain, "width range must be positive and ordered");
  for (int mu = 0; mu < 3; ++mu)
    if (shift_max(mu) < shift_min(mu)) throw Error(ErrorKind::ParameterDomain, "shift range must be ordered");
  if (!(step_shrink > 0.0 && step_shrink < 1.0)) throw Error(ErrorKind::ParameterDomain, "step shrink must lie in (0,1)");
  if (!(step_initial > 0.0)) throw Error(ErrorKind::ParameterDomain, "initial step must be positive");
  if (kpoints.empty()) throw Error(ErrorKind::ParameterDomain, "at least one k-point is needed");
}

void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& trace, const std::string& provenance) {
  os << "# " << provenance << "\n";
  os << "step,basis_size,energy_hartree\n";
  os << std::setprecision(15);
  for (const auto& r : trace) os << r.step << ',' << r.basis_size << ',' << r.energy << "\n";
}

// ---------------------------------------------------------------- energy model

EnergyModel::EnergyModel(const ElementEngine& engine, std::vector<Vec3> kpoints, double rel_threshold, int threads)
    : engine_(engine), kpoints_(std::move(kpoints)), rel_(rel_threshold), threads_(threads),
      cache_(engine, {}, threads) {
  if (kpoints_.empty()) throw Error(ErrorKind::ParameterDomain, "at least one k-point is needed");
}

void EnergyModel::reset(const std::vector<BasisFunction>& basis) {
  basis_ = basis;
  cache_ = KernelCache(engine_, basis_, threads_);
}

void EnergyModel::append(const BasisFunction& f) {
  std::vector<PairKernels> col(basis_.size() + 1);
  const int k = static_cast<int>(basis_.size());
  parallel_for(k + 1, threads_, [&](int i) {
    col[i] = i < k ? engine_.pair_kernels(basis_[i], f) : engine_.pair_kernels(f, f);
  });
  cache_.append_column(std::move(col));
  basis_.push_back(f);
}

void EnergyModel::append_column(const BasisFunction& f, std::vector<PairKernels> column) {
  cache_.append_column(std::move(column));
  basis_.push_back(f);
}

void EnergyModel::replace(int index, const BasisFunction& f) { replace(index, f, row_kernels(f, index)); }

void EnergyModel::replace(int index, const BasisFunction& f, std::vector<PairKernels> row) {
  basis_.at(index) = f;
  cache_.set_row(index, std::move(row));
}

std::vector<PairKernels> EnergyModel::row_kernels(const BasisFunction& f, int index) const {
  const int k = static_cast<int>(basis_.size());
  std::vector<PairKernels> row(k);
  parallel_for(k, threads_, [&](int l) {
    row[l] = l == index ? engine_.pair_kernels(f, f) : engine_.pair_kernels(f, basis_[l]);
  });
  return row;
}

double EnergyModel::energy(std::vector<SpectrumResult>* spectra) const {
  if (basis_.empty()) throw Error(ErrorKind::Contract, "energy of an empty basis");
  double sum = 0.0;
  if (spectra) spectra->clear();
  for (const auto& k : kpoints_) {
    const OperatorMatrixSet m = OperatorMatrixSet::from_cache(cache_, k);
    SpectrumResult r = solve_generalized(m.hamiltonian, m.overlap, rel_);
    sum += r.eigenvalues(0);
    if (spectra) spectra->push_back(std::move(r));
  }
  return sum / kpoints_.size();
}

double EnergyModel::energy_with_row(int index, const std::vector<PairKernels>& row) const {
  double sum = 0.0;
  for (const auto& k : kpoints_) {
    OperatorMatrixSet m = OperatorMatrixSet::from_cache(cache_, k);
    fill_from_row(m.hamiltonian, m.overlap, index, row, k);
    sum += lowest_eigenvalue(m.hamiltonian, m.overlap, rel_);
  }
  return sum / kpoints_.size();
}

// ---------------------------------------------------------------- sampling

BasisFunction sample_candidate(const OptimizerConfig& cfg, int n, int step, int trial) {
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed & 0xffffffffu), static_cast<std::uint32_t>(cfg.seed >> 32),
                    static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(trial)};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  Mat l = Mat::Zero(n, n);
  const double lmin = std::log(cfg.width_min), lmax = std::log(cfg.width_max);
  double logsum = 0.0;
  for (int i = 0; i < n; ++i) {
    l(i, i) = std::exp(lmin + (lmax - lmin) * u01(rng));
    logsum += std::log(l(i, i));
  }
  const double gm = std::exp(logsum / n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < i; ++j) l(i, j) = cfg.offdiag_scale * gm * normal(rng);
  Vec s(3 * n);
  for (int i = 0; i < n; ++i)
    for (int mu = 0; mu < 3; ++mu)
      s(3 * i + mu) = cfg.shift_min(mu) + (cfg.shift_max(mu) - cfg.shift_min(mu)) * u01(rng);
  return BasisFunction(l, s);
}

BasisFunction normalize_candidate(BasisFunction f) {
  const PairComposite p = pair_composites(BasisFunction(f.cholesky, f.shift), BasisFunction(f.cholesky, f.shift));
  f.absorbed_log_constant = 0.5 * std::log(p.prefactor);
  return f;
}

// ---------------------------------------------------------------- growth

SvmResult svm_grow(const ElementEngine& engine, std::vector<BasisFunction> basis, const OptimizerConfig& cfg) {
  cfg.validate();
  const int n = engine.particle_count();
  EnergyModel model(engine, cfg.kpoints, cfg.rel_threshold, cfg.threads);
  model.reset(basis);
  SvmResult out;
  double energy = basis.empty() ? std::numeric_limits<double>::infinity() : model.energy();
  if (!basis.empty()) out.trace.push_back({0, static_cast<int>(basis.size()), energy});
  const int nk = static_cast<int>(cfg.kpoints.size());
  int step = 0;
  int failures = 0;
  while (static_cast<int>(model.basis().size()) < cfg.growth_target) {
    ++step;
    const int kb = static_cast<int>(model.basis().size());
    // current spectra
    std::vector<SpectrumResult> spectra;
    std::vector<OperatorMatrixSet> mats;
    if (kb > 0) {
      model.energy(&spectra);
      for (const auto& k : cfg.kpoints) mats.push_back(OperatorMatrixSet::from_cache(model.cache(), k));
    }
    std::vector<double> score(cfg.trials_per_step, std::numeric_limits<double>::infinity());
    std::vector<BasisFunction> cand(cfg.trials_per_step);
    std::vector<std::vector<PairKernels>> cols(cfg.trials_per_step);
    parallel_for(cfg.trials_per_step, cfg.threads, [&](int t) {
      BasisFunction f = normalize_candidate(sample_candidate(cfg, n, step, t));
      std::vector<PairKernels> col(kb + 1);
      try {
        for (int i = 0; i < kb; ++i) col[i] = engine.pair_kernels(model.basis()[i], f);
        col[kb] = engine.pair_kernels(f, f);
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::Resource) return; // too diffuse for direct images
        throw;
      }
      double total = 0.0;
      for (int q = 0; q < nk; ++q) {
        const Vec3& k = cfg.kpoints[q];
        const double hnn = col[kb].hamiltonian(k).real();
        const double snn = col[kb].overlap(k).real();
        if (!(snn > cfg.bloch_norm_floor)) return;
        if (kb == 0) {
          total += hnn / snn;
          continue;
        }
        CVec hv(kb), sv(kb);
        for (int i = 0; i < kb; ++i) {
          hv(i) = col[i].hamiltonian(k);
          sv(i) = col[i].overlap(k);
        }
        const SpectrumResult& sp = spectra[q];
        const CVec a = sp.eigenvectors.adjoint() * hv;
        const CVec b = sp.eigenvectors.adjoint() * sv;
        const double q2 = snn - b.squaredNorm();
        if (!(q2 / snn > cfg.dependence_threshold)) return;
        const double qn = std::sqrt(q2);
        const Vec& e = sp.eigenvalues;
        Vec w2(e.size());
        double cross = 0.0, eb = 0.0;
        for (int i = 0; i < e.size(); ++i) {
          w2(i) = std::norm((a(i) - e(i) * b(i)) / qn);
          cross += (std::conj(b(i)) * a(i)).real();
          eb += std::norm(b(i)) * e(i);
        }
        const double ht = (hnn - 2.0 * cross + eb) / q2;
        total += bordered_lowest(e, w2, ht);
      }
      score[t] = total / nk;
      cand[t] = std::move(f);
      cols[t] = std::move(col);
    });
    int best = -1;
    for (int t = 0; t < cfg.trials_per_step; ++t)
      if (std::isfinite(score[t]) && (best < 0 || score[t] < score[best])) best = t;
    if (best < 0 || !(score[best] <= energy)) {
      if (++failures > 20) throw Error(ErrorKind::NumericDomain, "no admissible candidate in 20 consecutive steps");
      continue;
    }
    failures = 0;
    const BasisFunction keep = cand[best];
    model.append_column(keep, std::move(cols[best]));
    const double e_new = model.energy();
    // the bordered root and the full solve agree up to rounding; keep the trace monotone
    energy = std::min(e_new, energy);
    out.trace.push_back({step, static_cast<int>(model.basis().size()), energy});
  }
  out.basis = model.basis();
  out.energy = out.basis.empty() ? 0.0 : model.energy();
  return out;
}

// ---------------------------------------------------------------- parameters and gradients

Vec pack_parameters(const BasisFunction& f) {
  const int n = f.n();
  Vec t(parameter_count(n));
  int p = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) t(p++) = f.cholesky(i, j);
  for (int c = 0; c < 3 * n; ++c) t(p++) = f.shift(c);
  return t;
}

BasisFunction unpack_parameters(const BasisFunction& like, const Vec& theta) {
  const int n = like.n();
  if (theta.size() != parameter_count(n)) throw Error(ErrorKind::ParameterDomain, "parameter vector length mismatch");
  BasisFunction f = like;
  int p = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) f.cholesky(i, j) = theta(p++);
  for (int c = 0; c < 3 * n; ++c) f.shift(c) = theta(p++);
  return f;
}

std::string parameter_name(int function, int n, int index) {
  std::string base = "f" + std::to_string(function) + ".";
  int p = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j, ++p)
      if (p == index) return base + "L" + std::to_string(i) + std::to_string(j);
  const int c = index - p;
  static const char* ax = "xyz";
  return base + "s" + std::to_string(c / 3) + ax[c % 3];
}

Vec energy_gradient(const EnergyModel& model, int index) {
  const ElementEngine& engine = model.engine();
  if (!engine.has_analytic_gradient()) return energy_gradient_fd(model, index, 1e-5);
  const auto& basis = model.basis();
  const int kb = static_cast<int>(basis.size());
  const int n = engine.particle_count();
  const BasisFunction& f = basis.at(index);
  std::vector<PairGradient> grads(kb);
  for (int l = 0; l < kb; ++l) grads[l] = engine.pair_gradient(f, basis[l]);
  std::vector<SpectrumResult> spectra;
  model.energy(&spectra);
  Mat ga = Mat::Zero(n, n);
  MatX3 gs = MatX3::Zero(n, 3);
  const auto& kp = model.kpoints();
  for (std::size_t q = 0; q < kp.size(); ++q) {
    const double e = spectra[q].eigenvalues(0);
    const CVec c = spectra[q].eigenvectors.col(0);
    for (int l = 0; l < kb; ++l) {
      const cplx w = std::conj(c(index)) * c(l);
      for (const auto& t : grads[l].terms) {
        const cplx ph = w * bloch_phase(t.tau, grads[l].cell_lengths, kp[q]);
        ga += 2.0 * ph.real() * (t.ga_h - e * t.ga_s);
        gs += 2.0 * ph.real() * (t.gs_h - e * t.gs_s);
      }
    }
  }
  ga /= static_cast<double>(kp.size());
  gs /= static_cast<double>(kp.size());
  const Mat gl = (ga + ga.transpose()) * f.cholesky;
  Vec out(parameter_count(n));
  int p = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) out(p++) = gl(i, j);
  for (int i = 0; i < n; ++i)
    for (int mu = 0; mu < 3; ++mu) out(p++) = gs(i, mu);
  return out;
}

Vec energy_gradient_fd(const EnergyModel& model, int index, double h) {
  const BasisFunction& f = model.basis().at(index);
  const Vec theta = pack_parameters(f);
  const Vec sc = parameter_scales(f);
  Vec g(theta.size());
  for (int p = 0; p < theta.size(); ++p) {
    const double hp = h * sc(p);
    Vec tp = theta, tm = theta;
    tp(p) += hp;
    tm(p) -= hp;
    const BasisFunction fp = unpack_parameters(f, tp), fm = unpack_parameters(f, tm);
    g(p) = (model.energy_with_row(index, model.row_kernels(fp, index)) -
            model.energy_with_row(index, model.row_kernels(fm, index))) /
           (2.0 * hp);
  }
  return g;
}

std::vector<GradientReport> gradient_check(const EnergyModel& model, int index, double h) {
  const Vec an = energy_gradient(model, index);
  // central differences at h and h/2 combined to cancel the h^2 error
  const Vec d1 = energy_gradient_fd(model, index, h);
  const Vec d2 = energy_gradient_fd(model, index, 0.5 * h);
  const Vec fd = (4.0 * d2 - d1) / 3.0;
  std::vector<GradientReport> out;
  const int n = model.engine().particle_count();
  for (int p = 0; p < an.size(); ++p) {
    GradientReport r;
    r.parameter_id = parameter_name(index, n, p);
    r.analytic = an(p);
    r.finite_difference = fd(p);
    r.rel_error = std::abs(an(p) - fd(p)) / std::max({std::abs(an(p)), std::abs(fd(p)), 1e-12});
    out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------- refinement

RefineResult refine_parameters(const ElementEngine& engine, std::vector<BasisFunction> basis,
                               const OptimizerConfig& cfg) {
  cfg.validate();
  RefineResult out;
  if (basis.empty()) return out;
  EnergyModel model(engine, cfg.kpoints, cfg.rel_threshold, cfg.threads);
  model.reset(basis);
  double energy = model.energy();
  out.trace.push_back({0, static_cast<int>(basis.size()), energy});
  std::vector<double> alpha(basis.size(), cfg.step_initial);
  for (int sweep = 1; sweep <= cfg.refine_steps; ++sweep) {
    bool moved = false;
    for (int j = 0; j < static_cast<int>(model.basis().size()); ++j) {
      const BasisFunction f = model.basis()[j];
      const Vec g = cfg.finite_difference_gradient ? energy_gradient_fd(model, j, cfg.fd_step)
                                                   : energy_gradient(model, j);
      const Vec sc = parameter_scales(f);
      const Vec sg = sc.cwiseProduct(g);
      const double norm = sg.norm();
      if (!(norm > 0.0) || !std::isfinite(norm)) continue;
      const Vec dir = -sc.cwiseProduct(sg) / norm;
      const Vec theta = pack_parameters(f);
      double a = alpha[j];
      while (a >= cfg.step_min) {
        const BasisFunction trial = unpack_parameters(f, theta + a * dir);
        if (admissible(trial)) {
          try {
            auto row = model.row_kernels(trial, j);
            const double e = model.energy_with_row(j, row);
            if (e < energy) {
              model.replace(j, trial, std::move(row));
              energy = e;
              moved = true;
              alpha[j] = std::min(2.0 * a, cfg.step_initial);
              break;
            }
          } catch (const Error&) {
            // candidate outside the usable domain: shrink
          }
        }
        a *= cfg.step_shrink;
      }
      if (a < cfg.step_min) alpha[j] = cfg.step_initial * cfg.step_shrink;
    }
    out.trace.push_back({sweep, static_cast<int>(model.basis().size()), energy});
    if (!moved) break;
  }
  out.basis = model.basis();
  out.energy = energy;
  return out;
}

} // namespace pecg
