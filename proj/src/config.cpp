#include "pecg/config.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace pecg {

namespace {

using json = nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw Error(ErrorKind::Config, path + ": " + what);
}

std::string join(const std::string& base, const std::string& key) { return base.empty() ? key : base + "." + key; }

void allow_keys(const json& obj, const std::string& path, std::initializer_list<const char*> keys) {
  if (!obj.is_object()) fail(path, "expected an object");
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, v] : obj.items())
    if (!allowed.count(k)) fail(join(path, k), "unknown key");
}

const json& require(const json& obj, const std::string& path, const char* key) {
  if (!obj.contains(key)) fail(join(path, key), "required key missing");
  return obj.at(key);
}

double number(const json& v, const std::string& path) {
  if (!v.is_number()) fail(path, "expected a number");
  return v.get<double>();
}

int integer(const json& v, const std::string& path) {
  if (!v.is_number_integer()) fail(path, "expected an integer");
  return v.get<int>();
}

Vec3 vec3(const json& v, const std::string& path) {
  if (!v.is_array() || v.size() != 3) fail(path, "expected an array of three numbers");
  Vec3 out;
  for (int i = 0; i < 3; ++i) out(i) = number(v[i], path + "[" + std::to_string(i) + "]");
  return out;
}

template <class T, class Fn>
void optional_field(const json& obj, const std::string& path, const char* key, T& target, Fn&& conv) {
  if (obj.contains(key)) target = conv(obj.at(key), join(path, key));
}

void parse_system(const json& s, RunConfig& c) {
  const std::string p = "system";
  allow_keys(s, p, {"nuclei", "charges", "electrons", "spin", "masses"});
  const json& nuclei = require(s, p, "nuclei");
  const json& charges = require(s, p, "charges");
  if (!nuclei.is_array()) fail(p + ".nuclei", "expected an array");
  if (!charges.is_array() || charges.size() != nuclei.size())
    fail(p + ".charges", "expected an array matching system.nuclei");
  for (std::size_t i = 0; i < nuclei.size(); ++i) {
    c.frame.positions.push_back(vec3(nuclei[i], p + ".nuclei[" + std::to_string(i) + "]"));
    c.frame.charges.push_back(number(charges[i], p + ".charges[" + std::to_string(i) + "]"));
  }
  const int n = integer(require(s, p, "electrons"), p + ".electrons");
  if (n < 1) fail(p + ".electrons", "must be >= 1");
  c.spins.n_up = (n + 1) / 2;
  c.spins.n_down = n / 2;
  if (s.contains("spin")) {
    const json& sp = s.at("spin");
    allow_keys(sp, p + ".spin", {"up", "down"});
    c.spins.n_up = integer(require(sp, p + ".spin", "up"), p + ".spin.up");
    c.spins.n_down = integer(require(sp, p + ".spin", "down"), p + ".spin.down");
    if (c.spins.n_up < 0 || c.spins.n_down < 0 || c.spins.n() != n)
      fail(p + ".spin", "up + down must equal system.electrons");
  }
  if (s.contains("masses")) {
    const json& m = s.at("masses");
    if (!m.is_array() || static_cast<int>(m.size()) != n) fail(p + ".masses", "expected one mass per electron");
    c.masses.resize(n);
    for (int i = 0; i < n; ++i) {
      c.masses(i) = number(m[i], p + ".masses[" + std::to_string(i) + "]");
      if (!(c.masses(i) > 0.0)) fail(p + ".masses[" + std::to_string(i) + "]", "must be positive");
    }
  } else {
    c.masses = Vec::Ones(n);
  }
}

void parse_lattice(const json& l, RunConfig& c) {
  const std::string p = "lattice";
  allow_keys(l, p, {"cell_lengths", "periodic", "chi2_cut", "ewald_kappa"});
  c.lattice.cell_lengths = vec3(require(l, p, "cell_lengths"), p + ".cell_lengths");
  const json& per = require(l, p, "periodic");
  if (!per.is_array() || per.size() != 3) fail(p + ".periodic", "expected an array of three booleans");
  for (int i = 0; i < 3; ++i) {
    if (!per[i].is_boolean()) fail(p + ".periodic[" + std::to_string(i) + "]", "expected a boolean");
    c.lattice.periodic[i] = per[i].get<bool>();
  }
  optional_field(l, p, "chi2_cut", c.lattice.chi2_cut, number);
  if (l.contains("ewald_kappa")) c.lattice.ewald_kappa = number(l.at("ewald_kappa"), p + ".ewald_kappa");
  try {
    c.lattice.validate();
  } catch (const Error& e) {
    fail(p, e.what());
  }
}

void parse_coulomb(const json& m, RunConfig& c) {
  const std::string p = "coulomb";
  allow_keys(m, p, {"mode", "kappa", "epsilon", "quadrature_points", "p_cut", "richardson_terms",
                    "radial_quadrature_points"});
  const json& mode = require(m, p, "mode");
  if (!mode.is_string()) fail(p + ".mode", "expected a string");
  const std::string name = mode.get<std::string>();
  if (name == "ewald") c.coulomb.kind = CoulombMode::Kind::Ewald;
  else if (name == "neutral_shell") c.coulomb.kind = CoulombMode::Kind::NeutralShell;
  else if (name == "delta_convolution") c.coulomb.kind = CoulombMode::Kind::DeltaConvolution;
  else fail(p + ".mode", "expected ewald, neutral_shell or delta_convolution");
  if (m.contains("kappa")) c.coulomb.kappa = number(m.at("kappa"), p + ".kappa");
  optional_field(m, p, "epsilon", c.coulomb.epsilon, number);
  optional_field(m, p, "quadrature_points", c.coulomb.quadrature_points, integer);
  optional_field(m, p, "p_cut", c.coulomb.p_cut, integer);
  optional_field(m, p, "richardson_terms", c.coulomb.richardson_terms, integer);
  optional_field(m, p, "radial_quadrature_points", c.coulomb.radial_quadrature_points, integer);
  if (c.coulomb.kappa && !(*c.coulomb.kappa > 0.0)) fail(p + ".kappa", "must be positive");
  if (!(c.coulomb.epsilon > 0.0 && c.coulomb.epsilon < 1.0)) fail(p + ".epsilon", "must lie in (0,1)");
  if (c.coulomb.quadrature_points < 1) fail(p + ".quadrature_points", "must be >= 1");
  if (c.coulomb.radial_quadrature_points < 1) fail(p + ".radial_quadrature_points", "must be >= 1");
  if (c.coulomb.p_cut < 0) fail(p + ".p_cut", "must be >= 0");
  if (c.coulomb.richardson_terms < -1 || c.coulomb.richardson_terms > c.coulomb.p_cut)
    fail(p + ".richardson_terms", "must be -1 or lie in [0, p_cut]");
}

void parse_basis(const json& b, RunConfig& c) {
  const std::string p = "basis";
  allow_keys(b, p, {"size", "seed", "trials_per_step", "width_min", "width_max", "offdiag_scale", "shift_min",
                    "shift_max", "refine_sweeps", "objective_mesh", "input"});
  BasisSettings& s = c.basis;
  optional_field(b, p, "size", s.size, integer);
  if (b.contains("seed")) {
    const json& v = b.at("seed");
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
      fail(p + ".seed", "expected a non-negative integer");
    s.seed = v.get<std::uint64_t>();
  }
  optional_field(b, p, "trials_per_step", s.trials_per_step, integer);
  optional_field(b, p, "width_min", s.width_min, number);
  optional_field(b, p, "width_max", s.width_max, number);
  optional_field(b, p, "offdiag_scale", s.offdiag_scale, number);
  optional_field(b, p, "shift_min", s.shift_min, vec3);
  optional_field(b, p, "shift_max", s.shift_max, vec3);
  optional_field(b, p, "refine_sweeps", s.refine_sweeps, integer);
  optional_field(b, p, "objective_mesh", s.objective_mesh, integer);
  if (b.contains("input")) {
    if (!b.at("input").is_string()) fail(p + ".input", "expected a path string");
    s.input = b.at("input").get<std::string>();
  }
  if (s.size < 0) fail(p + ".size", "must be >= 0");
  if (s.trials_per_step < 1) fail(p + ".trials_per_step", "must be >= 1");
  if (!(s.width_min > 0.0)) fail(p + ".width_min", "must be positive");
  if (!(s.width_max >= s.width_min)) fail(p + ".width_max", "must be >= basis.width_min");
  if (!(s.offdiag_scale >= 0.0)) fail(p + ".offdiag_scale", "must be >= 0");
  for (int i = 0; i < 3; ++i)
    if (s.shift_max(i) < s.shift_min(i)) fail(p + ".shift_max", "must be >= basis.shift_min componentwise");
  if (s.refine_sweeps < 0) fail(p + ".refine_sweeps", "must be >= 0");
  if (s.objective_mesh < 1) fail(p + ".objective_mesh", "must be >= 1");
}

void parse_kpoints(const json& k, RunConfig& c) {
  const std::string p = "kpoints";
  allow_keys(k, p, {"mesh", "list"});
  if (k.contains("mesh") == k.contains("list")) fail(p, "exactly one of mesh or list is required");
  if (k.contains("mesh")) {
    c.k_mesh = integer(k.at("mesh"), p + ".mesh");
    if (*c.k_mesh < 1) fail(p + ".mesh", "must be >= 1");
  } else {
    const json& l = k.at("list");
    if (!l.is_array() || l.empty()) fail(p + ".list", "expected a non-empty array");
    for (std::size_t i = 0; i < l.size(); ++i) c.k_list.push_back(vec3(l[i], p + ".list[" + std::to_string(i) + "]"));
  }
}

void parse_output(const json& o, RunConfig& c) {
  const std::string p = "output";
  allow_keys(o, p, {"directory", "formats"});
  if (o.contains("directory")) {
    if (!o.at("directory").is_string() || o.at("directory").get<std::string>().empty())
      fail(p + ".directory", "expected a non-empty path string");
    c.output_directory = o.at("directory").get<std::string>();
  }
  if (o.contains("formats")) {
    const json& f = o.at("formats");
    if (!f.is_array()) fail(p + ".formats", "expected an array");
    c.outputs.clear();
    for (std::size_t i = 0; i < f.size(); ++i) {
      const std::string q = p + ".formats[" + std::to_string(i) + "]";
      if (!f[i].is_string()) fail(q, "expected a string");
      const std::string v = f[i].get<std::string>();
      if (v != "basis" && v != "trace" && v != "bands" && v != "fit") fail(q, "expected basis, trace, bands or fit");
      c.outputs.push_back(v);
    }
  }
}

std::vector<Vec3> axis_mesh(const LatticeSpec& lattice, int count) {
  int axis = -1;
  for (int mu = 0; mu < 3 && axis < 0; ++mu)
    if (lattice.periodic[mu]) axis = mu;
  if (axis < 0 || count == 1) return {Vec3::Zero()};
  const double len = lattice.cell_lengths(axis);
  std::vector<Vec3> out;
  for (int j = 0; j < count; ++j) {
    Vec3 k = Vec3::Zero();
    k(axis) = -M_PI / len + 2.0 * M_PI * j / ((count - 1) * len);
    out.push_back(k);
  }
  return out;
}

} // namespace

bool RunConfig::writes(const std::string& artifact) const {
  return std::find(outputs.begin(), outputs.end(), artifact) != outputs.end();
}

std::vector<Vec3> RunConfig::band_kpoints() const {
  if (!k_list.empty()) return k_list;
  return axis_mesh(lattice, k_mesh.value_or(1));
}

std::vector<Vec3> RunConfig::objective_kpoints() const { return axis_mesh(lattice, basis.objective_mesh); }

OptimizerConfig RunConfig::optimizer() const {
  OptimizerConfig o;
  o.trials_per_step = basis.trials_per_step;
  o.growth_target = basis.size;
  o.seed = basis.seed;
  o.width_min = basis.width_min;
  o.width_max = basis.width_max;
  o.offdiag_scale = basis.offdiag_scale;
  o.shift_min = basis.shift_min;
  o.shift_max = basis.shift_max;
  o.refine_steps = basis.refine_sweeps;
  o.kpoints = objective_kpoints();
  o.threads = threads;
  return o;
}

std::string RunConfig::provenance() const {
  std::ostringstream os;
  os << "pecg " << kVersion << " config_fnv1a=" << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(text)
     << std::dec << " seed=" << basis.seed;
  return os.str();
}

std::uint64_t fnv1a64(const std::string& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : data) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

RunConfig parse_run_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Config, std::string("<document>: ") + e.what());
  }
  allow_keys(doc, "", {"system", "lattice", "coulomb", "basis", "kpoints", "output"});
  RunConfig c;
  parse_system(require(doc, "", "system"), c);
  parse_lattice(require(doc, "", "lattice"), c);
  parse_coulomb(require(doc, "", "coulomb"), c);
  parse_basis(require(doc, "", "basis"), c);
  parse_kpoints(require(doc, "", "kpoints"), c);
  if (doc.contains("output")) parse_output(doc.at("output"), c);
  // hashed in canonical serialization
  c.text = doc.dump();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Config, path + ": cannot open config file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

} // namespace pecg
