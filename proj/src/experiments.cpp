#include "dvi/experiments.hpp"

#include "dvi/csv.hpp"
#include "dvi/dct.hpp"
#include "dvi/diagnostics.hpp"
#include "dvi/extended.hpp"
#include "dvi/genfun.hpp"
#include "dvi/optctrl.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace dvi {

namespace {

using Defaults = std::map<std::string, std::string>;

struct ExperimentInfo {
  std::string key;
  std::string description;
  Defaults defaults;
};

const std::vector<ExperimentInfo>& catalog() {
  static const std::vector<ExperimentInfo> info = {
      {"integrate",
       "trajectory and energy-error series for any scheme and system; midpoint on the harmonic oscillator "
       "keeps the energy error at round-off (linear-system energy conservation)",
       {{"system", "harmonic"}, {"scheme", "midpoint"}, {"tau", "0.01"}, {"T", "100"}}},
      {"exactness",
       "generating-function exactness defect along a propagated state transition matrix; harmonic panel of "
       "figure fig:harmonic, and the Earth J2/J3 orbit with system=earth-j2j3 T=31.41592653589793",
       {{"system", "harmonic"}, {"scheme", "midpoint"}, {"tau", "0.01"}, {"T", "100"}, {"mask_condition", "1e3"}}},
      {"energy-conserving",
       "extended phase space Stormer or midpoint with energy-fixed step sizes (scheme=stormer|midpoint); "
       "the double well from (1, 0.05) is system=double-well",
       {{"system", "harmonic"}, {"scheme", "midpoint"}, {"tau", "0.01"}, {"n_steps", "10000"}}},
      {"dct-energy",
       "energy error of a midpoint trajectory before and after a discrete canonical rotation; data behind "
       "figures fig:ex1_1 and fig:ex1_2",
       {{"system", "double-well"},
        {"scheme", "midpoint"},
        {"tau", "0.01"},
        {"n_steps", "10000"},
        {"theta", CsvWriter::format(std::acos(0.99))}}},
      {"control-heisenberg",
       "discrete maximum principle for the Heisenberg system by shooting on the reduced Hamiltonian, with a "
       "random perturbation check of optimality",
       {{"a", "1"},
        {"T", "1"},
        {"n_steps", "100"},
        {"geometry", "midpoint"},
        {"segments", "1"},
        {"samples", "200"},
        {"scale", "0.05"},
        {"seed", "1"},
        {"z_target", "0"}}},
      {"defect-sweep",
       "symplectic defect of one step map at random probes around the system's default state "
       "(schemes: integrator keys, extended-stormer, extended-midpoint)",
       {{"system", "harmonic"},
        {"scheme", "verlet"},
        {"tau", "0.1"},
        {"probes", "50"},
        {"half_width", "0.5"},
        {"seed", "7"},
        {"beta", "0.25"}}},
  };
  return info;
}

const ExperimentInfo& info_for(const std::string& key) {
  for (const auto& e : catalog())
    if (e.key == key) return e;
  std::string valid;
  for (const auto& e : catalog()) valid += " " + e.key;
  throw ConfigError("experiment", "unknown experiment '" + key + "'; valid experiments:" + valid);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Config values merged over experiment defaults, with typed accessors.
class Settings {
 public:
  explicit Settings(const ExperimentConfig& cfg) : key_(cfg.experiment()) {
    values_ = info_for(key_).defaults;
    for (const auto& [k, v] : cfg.values) values_[k] = v;
  }

  const std::string& experiment() const { return key_; }
  bool has(const std::string& k) const { return values_.count(k) != 0; }

  std::string str(const std::string& k) const {
    auto it = values_.find(k);
    if (it == values_.end()) throw ConfigError(k, "missing setting '" + k + "'");
    return it->second;
  }

  double num(const std::string& k) const {
    const std::string s = str(k);
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ConfigError(k, "setting '" + k + "' is not a finite number: '" + s + "'");
    }
  }

  long integer(const std::string& k) const {
    const std::string s = str(k);
    try {
      std::size_t used = 0;
      const long v = std::stol(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ConfigError(k, "setting '" + k + "' is not an integer: '" + s + "'");
    }
  }

  bool flag(const std::string& k) const {
    const std::string s = str(k);
    if (s == "1" || s == "true") return true;
    if (s == "0" || s == "false") return false;
    throw ConfigError(k, "setting '" + k + "' must be 0, 1, true or false");
  }

  Vec vec(const std::string& k) const {
    std::vector<double> parts;
    std::stringstream ss(str(k));
    std::string item;
    while (std::getline(ss, item, ',')) {
      const std::string t = trim(item);
      try {
        std::size_t used = 0;
        parts.push_back(std::stod(t, &used));
        if (used != t.size()) throw std::invalid_argument(t);
      } catch (const std::exception&) {
        throw ConfigError(k, "setting '" + k + "' must be a comma-separated list of numbers");
      }
    }
    return Eigen::Map<Vec>(parts.data(), static_cast<Eigen::Index>(parts.size()));
  }

  double tau() const {
    const double t = num("tau");
    if (!(t > 0.0)) throw ConfigError("tau", "tau must be positive");
    return t;
  }

  long steps() const {
    if (has("n_steps")) {
      const long n = integer("n_steps");
      if (n < 0) throw ConfigError("n_steps", "n_steps must be nonnegative");
      return n;
    }
    const double t_final = num("T");
    if (t_final < 0.0) throw ConfigError("T", "T must be nonnegative");
    return std::lround(t_final / tau());
  }

  StepperConfig stepper() const {
    StepperConfig c;
    c.tau = tau();
    if (has("newton_tol")) c.newton_tol = num("newton_tol");
    try {
      c.validate();
    } catch (const Error& e) {
      throw ConfigError("newton_tol", e.what());
    }
    return c;
  }

  CatalogSystem system() const {
    try {
      return make_system(str("system"));
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw ConfigError("system", e.what());
    }
  }

  PhaseState initial(const CatalogSystem& sys) const {
    PhaseState z = sys.initial;
    if (has("q0")) z.q = vec("q0");
    if (has("p0")) z.p = vec("p0");
    if (z.q.size() != sys.initial.q.size()) throw ConfigError("q0", "q0 must have the system's dimension");
    if (z.p.size() != sys.initial.p.size()) throw ConfigError("p0", "p0 must have the system's dimension");
    return z;
  }

  std::string output() const { return has("output") ? str("output") : key_; }

 private:
  std::string key_;
  Defaults values_;
};

template <class F>
auto as_config(const std::string& key, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(key, e.what());
  }
}

std::vector<std::string> state_columns(const char* prefix, int n) {
  std::vector<std::string> c;
  for (int i = 1; i <= n; ++i) c.push_back(prefix + std::to_string(i));
  return c;
}

void append(std::vector<std::optional<double>>& row, const Vec& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) row.emplace_back(v(i));
}

void append_columns(std::vector<std::string>& cols, const std::vector<std::string>& more) {
  cols.insert(cols.end(), more.begin(), more.end());
}

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

// Each runner validates its settings before any heavy work, so config errors
// surface as ConfigError and everything after that as solver errors.

void run_integrate(const Settings& s, CsvWriter& csv, std::ostream& log) {
  const CatalogSystem sys = s.system();
  const Scheme scheme = as_config("scheme", [&] { return parse_scheme(s.str("scheme")); });
  if (needs_separable(scheme) && !sys.separable)
    throw ConfigError("scheme", "scheme '" + scheme_key(scheme) + "' needs a separable system");
  const StepperConfig cfg = s.stepper();
  SchemeOptions opt;
  if (s.has("beta")) opt.newmark_beta = s.num("beta");
  const PhaseState z0 = s.initial(sys);
  const long steps = s.steps();
  const int n = z0.dim();

  std::vector<std::string> cols{"k", "t"};
  append_columns(cols, state_columns("q", n));
  append_columns(cols, state_columns("p", n));
  append_columns(cols, {"newton_iters", "energy_error"});
  csv.header(cols);
  if (steps == 0) return;

  const Trajectory traj = integrate(scheme, sys, z0, steps, cfg, opt);
  const auto err = energy_error_series(traj, sys.hamiltonian);
  for (std::size_t k = 0; k < traj.size(); ++k) {
    std::vector<std::optional<double>> row{static_cast<double>(k), traj.times[k]};
    append(row, traj.states[k].q);
    append(row, traj.states[k].p);
    row.emplace_back(traj.meta[k].newton_iters);
    row.emplace_back(err[k]);
    csv.row(row);
  }
  log << "max |energy error| = " << CsvWriter::format(max_abs(err)) << '\n';
}

void run_exactness(const Settings& s, CsvWriter& csv, std::ostream& log) {
  const CatalogSystem sys = s.system();
  const Scheme scheme = as_config("scheme", [&] { return parse_scheme(s.str("scheme")); });
  if (scheme != Scheme::Midpoint && scheme != Scheme::Rk4)
    throw ConfigError("scheme", "exactness propagates with midpoint or rk4");
  const StepperConfig cfg = s.stepper();
  ExactnessOptions opt;
  opt.mask_condition = s.num("mask_condition");
  const PhaseState z0 = s.initial(sys);
  const long steps = s.steps();
  csv.header({"t", "defect", "condition", "masked"});
  if (steps == 0) return;

  const auto prop = propagate_stm(sys.hamiltonian, z0, scheme, cfg.tau, steps, cfg);
  const auto samples = exactness_series(prop.stms, opt);
  for (const auto& e : samples) csv.row(std::vector<double>{e.t, e.defect, e.condition, e.masked ? 1.0 : 0.0});
  log << "max unmasked defect = " << CsvWriter::format(max_masked_defect(samples)) << '\n';
  log << "max finite defect = " << CsvWriter::format(max_finite_defect(samples)) << '\n';
}

void run_energy_conserving(const Settings& s, CsvWriter& csv, std::ostream& log) {
  const CatalogSystem sys = s.system();
  const ExtendedScheme scheme = as_config("scheme", [&] { return parse_extended_scheme(s.str("scheme")); });
  if (scheme == ExtendedScheme::Stormer && !sys.separable)
    throw ConfigError("scheme", "extended Stormer needs a separable system");
  const StepperConfig cfg = s.stepper();
  const PhaseState z0 = s.initial(sys);
  const long steps = s.steps();
  const int n = z0.dim();

  std::vector<std::string> cols{"k", "t"};
  append_columns(cols, state_columns("q", n));
  append_columns(cols, state_columns("p", n));
  append_columns(cols, {"h_k", "e_k", "root_iters", "energy_error"});
  csv.header(cols);
  if (steps == 0) return;

  const auto recs = integrate_extended(scheme, sys, z0, steps, cfg);
  double worst = 0.0;
  for (std::size_t k = 0; k < recs.size(); ++k) {
    const auto& st = recs[k].state;
    // Constraint residual of the step that produced this record.
    const double err = k == 0 ? 0.0 : extended_step_energy(scheme, sys, recs[k - 1].state, st) + st.e;
    worst = std::max(worst, std::abs(err));
    std::vector<std::optional<double>> row{static_cast<double>(k), st.t};
    append(row, st.q);
    append(row, st.p);
    row.emplace_back(recs[k].h_k);
    row.emplace_back(st.e);
    row.emplace_back(recs[k].root_iters);
    row.emplace_back(err);
    csv.row(row);
  }
  log << "max |energy error| = " << CsvWriter::format(worst) << '\n';
}

void run_dct_energy(const Settings& s, CsvWriter& csv, std::ostream& log) {
  const CatalogSystem sys = s.system();
  if (s.str("scheme") != "midpoint")
    throw ConfigError("scheme", "discrete canonical maps are defined for midpoint trajectories only");
  const StepperConfig cfg = s.stepper();
  const double theta = s.num("theta");
  const PhaseState z0 = s.initial(sys);
  if (z0.dim() != 1) throw ConfigError("system", "the rotation map acts on one degree of freedom");
  const long steps = s.steps();
  csv.header({"k", "original_error", "transformed_error", "abs_difference"});
  if (steps == 0) return;

  const Trajectory traj = integrate(Scheme::Midpoint, sys, z0, steps, cfg);
  const auto original = energy_error_series(traj, sys.hamiltonian);
  const auto moved = transformed_energy_error(rotation_map(theta), traj, sys.hamiltonian);
  double worst = 0.0;
  for (std::size_t k = 0; k < original.size(); ++k) {
    const double d = std::abs(moved[k] - original[k]);
    worst = std::max(worst, d);
    csv.row(std::vector<double>{static_cast<double>(k), original[k], moved[k], d});
  }
  log << "max |difference| = " << CsvWriter::format(worst) << '\n';
}

void run_control_heisenberg(const Settings& s, CsvWriter& csv, std::ostream& log) {
  const double a = s.num("a");
  const double horizon = s.num("T");
  if (!(horizon > 0.0)) throw ConfigError("T", "T must be positive");
  const long steps = s.integer("n_steps");
  if (steps < 0) throw ConfigError("n_steps", "n_steps must be nonnegative");
  const Geometry geometry = as_config("geometry", [&] { return parse_geometry(s.str("geometry")); });
  ShootConfig scfg;
  scfg.segments = static_cast<int>(s.integer("segments"));
  if (scfg.segments < 1 || scfg.segments > std::max<long>(1, steps))
    throw ConfigError("segments", "segments must lie in [1, n_steps]");
  if (s.has("newton_tol")) scfg.newton.newton_tol = s.num("newton_tol");
  const long samples = s.integer("samples");
  if (samples < 0) throw ConfigError("samples", "samples must be nonnegative");
  const double scale = s.num("scale");
  const long seed = s.integer("seed");
  const bool z_target = s.flag("z_target");

  std::vector<std::string> cols{"k"};
  append_columns(cols, state_columns("x", 3));
  append_columns(cols, state_columns("p", 3));
  append_columns(cols, state_columns("u", 2));
  cols.push_back("stationarity");
  csv.header(cols);
  if (steps == 0) return;

  const OptimalControlProblem ocp = make_heisenberg_problem(a, horizon, static_cast<int>(steps), z_target);
  const ShootResult res = shoot(ocp, geometry, ocp.default_p0_guess, scfg);
  const DiscreteSolution& sol = res.solution;
  const auto stat = stationarity_residuals(ocp, sol);
  double worst_stat = 0.0;
  for (std::size_t k = 0; k < sol.xs.size(); ++k) {
    std::vector<std::optional<double>> row{static_cast<double>(k)};
    append(row, sol.xs[k]);
    append(row, sol.ps[k]);
    if (k < sol.us.size()) {
      append(row, sol.us[k]);
      const double r = stat[k].cwiseAbs().maxCoeff();
      worst_stat = std::max(worst_stat, r);
      row.emplace_back(r);
    } else {
      row.insert(row.end(), 3, std::nullopt);
    }
    csv.row(row);
  }
  const double cost = cost_of(ocp, geometry, sol.xs, sol.us, sol.tau);
  log << "shooting iterations = " << res.report.iterations << '\n';
  log << "boundary residual = " << CsvWriter::format(res.report.residual) << '\n';
  log << "max stationarity residual = " << CsvWriter::format(worst_stat) << '\n';
  log << "cost = " << CsvWriter::format(cost) << '\n';
  if (samples > 0) {
    const auto rep = perturbation_oracle(ocp, sol, static_cast<int>(samples), scale, static_cast<std::uint64_t>(seed));
    log << "perturbations feasible = " << rep.feasible << " of " << rep.samples << ", not cheaper = " << rep.not_worse
        << ", min perturbed cost = " << CsvWriter::format(rep.min_cost) << '\n';
  }
}

void run_defect_sweep(const Settings& s, CsvWriter& csv, std::ostream& log) {
  const CatalogSystem sys = s.system();
  const std::string key = s.str("scheme");
  const bool extended = key == "extended-stormer" || key == "extended-midpoint";
  const StepperConfig cfg = s.stepper();
  const long count = s.integer("probes");
  if (count < 0) throw ConfigError("probes", "probes must be nonnegative");
  const double half_width = s.num("half_width");
  const long seed = s.integer("seed");
  const double beta = s.num("beta");
  const PhaseState center = s.initial(sys);
  const int n = center.dim();

  std::optional<Scheme> scheme;
  std::optional<ExtendedScheme> ext;
  if (extended) {
    ext = as_config("scheme", [&] { return parse_extended_scheme(key); });
    if (*ext == ExtendedScheme::Stormer && !sys.separable)
      throw ConfigError("scheme", "extended Stormer needs a separable system");
  } else {
    scheme = as_config("scheme", [&] { return parse_scheme(key); });
    if (needs_separable(*scheme) && !sys.separable)
      throw ConfigError("scheme", "scheme '" + key + "' needs a separable system");
  }

  std::vector<std::string> cols{"probe"};
  append_columns(cols, state_columns("q", n));
  append_columns(cols, state_columns("p", n));
  append_columns(cols, {"defect", "method"});
  csv.header(cols);
  if (count == 0) return;

  const auto probes = sample_probes(center, half_width, static_cast<int>(count), static_cast<std::uint64_t>(seed));
  std::vector<double> defects(probes.size());
  JacobianMethod method = JacobianMethod::CentralFd;
  if (ext) {
    // The energy-fixed step size is too sensitive for difference Jacobians.
    method = JacobianMethod::Analytic;
    for (std::size_t i = 0; i < probes.size(); ++i) {
      try {
        const auto s0 = extended_initial_state(*ext, sys, probes[i], cfg);
        defects[i] = symplectic_defect_of(extended_tangent_map(*ext, sys, s0, extended_step(*ext, sys, s0, cfg)));
      } catch (StepFailure& f) {
        f.set_step_index(static_cast<long>(i));
        throw;
      }
    }
  } else {
    SchemeOptions opt;
    opt.newmark_beta = beta;
    const StepMap step = make_step_map(*scheme, sys, cfg, opt);
    ChartJacobian chart;
    if (*scheme == Scheme::Newmark) {
      const SeparableSystem sep = *sys.separable;
      const double tau = cfg.tau;
      chart = [sep, beta, tau](const PhaseState& z) { return newmark_chart_jacobian(sep, z, beta, tau); };
    }
    const auto reports = symplectic_defect(step, probes, chart);
    for (std::size_t i = 0; i < probes.size(); ++i) defects[i] = reports[i].defect;
  }
  for (std::size_t i = 0; i < probes.size(); ++i) {
    std::vector<std::string> row{std::to_string(i)};
    for (int j = 0; j < n; ++j) row.push_back(CsvWriter::format(probes[i].q(j)));
    for (int j = 0; j < n; ++j) row.push_back(CsvWriter::format(probes[i].p(j)));
    row.push_back(CsvWriter::format(defects[i]));
    row.push_back(jacobian_method_name(method));
    csv.cells(row);
  }
  log << "max defect = " << CsvWriter::format(max_abs(defects)) << '\n';
}

}  // namespace

std::string ExperimentConfig::experiment() const {
  auto it = values.find("experiment");
  if (it == values.end()) throw ConfigError("experiment", "no experiment key given");
  return it->second;
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "experiment", "system",     "scheme", "tau",   "T",     "n_steps",  "q0",       "p0",
      "theta",      "beta",       "a",      "geometry", "segments", "samples", "scale", "seed",
      "probes",     "half_width", "mask_condition", "newton_tol", "z_target", "output"};
  return keys;
}

const std::vector<std::string>& experiment_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& e : catalog()) k.push_back(e.key);
    return k;
  }();
  return keys;
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  const auto& keys = config_keys();
  if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
    std::string valid;
    for (const auto& k : keys) valid += " " + k;
    throw ConfigError(key, "unknown key '" + key + "'; valid keys:" + valid);
  }
  values[key] = value;
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("", "line " + std::to_string(lineno) + ": expected key=value, got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    if (cfg.has(key)) throw ConfigError(key, "key '" + key + "' given twice");
    cfg.set(key, trim(line.substr(eq + 1)));
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot read config file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string list_experiments() {
  std::ostringstream os;
  for (const auto& e : catalog()) {
    os << e.key << "\n  " << e.description << "\n  defaults:";
    for (const auto& [k, v] : e.defaults) os << ' ' << k << '=' << v;
    os << '\n';
  }
  return os.str();
}

int run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, std::ostream& log) {
  std::ostringstream buffer;
  try {
    const Settings s(cfg);
    CsvWriter csv(buffer);
    const std::string& key = s.experiment();
    const std::filesystem::path file = out_dir / (s.output() + ".csv");
    if (key == "integrate") run_integrate(s, csv, log);
    else if (key == "exactness") run_exactness(s, csv, log);
    else if (key == "energy-conserving") run_energy_conserving(s, csv, log);
    else if (key == "dct-energy") run_dct_energy(s, csv, log);
    else if (key == "control-heisenberg") run_control_heisenberg(s, csv, log);
    else run_defect_sweep(s, csv, log);

    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    std::ofstream out(file, std::ios::binary);
    if (!out) throw ConfigError("output", "cannot write '" + file.string() + "'");
    out << buffer.str();
    log << "wrote " << file.string() << '\n';
    return kExitOk;
  } catch (const ConfigError& e) {
    log << "config error";
    if (!e.key().empty()) log << " (key '" << e.key() << "')";
    log << ": " << e.what() << '\n';
    return kExitConfig;
  } catch (const StepFailure& e) {
    log << "solver failure at step " << e.step_index() << ": " << e.what() << '\n';
    return kExitSolver;
  } catch (const Error& e) {
    log << "solver failure: " << e.what() << '\n';
    return kExitSolver;
  }
}

}  // namespace dvi
