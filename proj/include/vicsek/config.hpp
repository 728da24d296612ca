#pragma once

// Flat "key = value" experiment configuration. Lines starting with '#' and
// trailing "# ..." are comments. Unknown keys, repeated keys and unparsable
// values are rejected with the offending line number.

#include "vicsek/errors.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <initializer_list>
#include <limits>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

namespace vicsek {

struct ExperimentConfig {
  std::string experiment = "run-pde";

  // Grids.
  int dim_x = 1;
  std::size_t cells = 32;
  double domain_length = 1.0;
  std::size_t angular_nodes = 64;

  // Solver.
  double mu = 0.2;
  double eps = 1e-6;
  double dt = 1e-3;
  double t_final = 1.0;
  double picard_tol_rel = 1e-10;
  int picard_max_iter = 20;
  std::vector<double> p_list{1.0, 2.0, INFINITY};
  double alpha = 0.1;
  std::string transport = "semi-lagrangian";  // semi-lagrangian | upwind
  std::string angular_form = "expanded";      // expanded | divergence
  std::string nu = "constant";                // constant | affine | tabulated
  double nu_a = 1.0;
  double nu_b = 0.0;
  std::vector<double> nu_table;
  std::string kernel = "dirac";  // dirac | gaussian | tophat
  double kernel_width = 0.1;
  std::size_t snapshot_every = 0;
  std::string dump_path;

  // Initial condition.
  std::string ic = "perturbed-fvm";  // uniform | fvm | perturbed-fvm | file
  std::string ic_file;
  double ic_mass = 1.0;
  double ic_mu = 0.0;  // 0 means use mu
  double ic_density_amp = 0.1;
  int ic_density_kx = 1;
  double ic_director_angle = 0.0;
  double ic_director_twist = 0.0;
  std::string ic_modes;  // amp:kx:ktheta:phase, comma separated

  std::uint64_t seed = 1;
  unsigned threads = 1;

  // Particles.
  std::size_t particles = 10000;
  double particle_dt = 1e-3;
  int particle_dim = 2;
  double radius_R = 0.1;
  std::string tie_policy = "keep";       // keep | random
  std::string neighbor_method = "auto";  // auto | cell-list | sweep
  std::size_t summary_every = 10;
  std::size_t histogram_bins = 16;

  // equilibria
  std::vector<double> eq_mu_list{0.001, 0.1, 0.2, 0.5, 1.0, 2.0, 10.0, 1000.0};

  // eps-study
  double eps_max = 1e-2;
  double eps_min = 1e-6;
  std::vector<double> eps_pair{1e-5, 1e-6};

  // stability
  double stab_delta = 1e-3;
  int stab_mode_kx = 1;
  int stab_mode_ktheta = 1;
  bool stab_refine = true;
  double stab_tolerance = 0.2;

  // meanfield-compare
  std::vector<double> mf_n_list{1e3, 1e4, 1e5};
  std::size_t mf_bins_x = 16;
  std::size_t mf_bins_theta = 16;
  double mf_bandwidth = 0.0;
  std::vector<double> mf_checkpoints{0.5};
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ConfigError("not a number: '" + s + "'");
  }
  if (used != s.size()) throw ConfigError("not a number: '" + s + "'");
  return v;
}

template <class T>
T parse_integer(const std::string& s) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &used);
  } catch (const std::exception&) {
    throw ConfigError("not an integer: '" + s + "'");
  }
  if (used != s.size()) throw ConfigError("not an integer: '" + s + "'");
  if constexpr (std::is_unsigned_v<T>)
    if (v < 0) throw ConfigError("negative value for an unsigned key: '" + s + "'");
  return static_cast<T>(v);
}

inline std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_double(item));
  }
  return out;
}

inline std::string format_list(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_double(v[i]);
  return s;
}

struct Binding {
  std::string key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <class T>
Binding bind(const char* key, T ExperimentConfig::*m) {
  Binding b;
  b.key = key;
  b.set = [m](ExperimentConfig& c, const std::string& v) {
    if constexpr (std::is_same_v<T, double>)
      c.*m = parse_double(v);
    else if constexpr (std::is_same_v<T, bool>) {
      if (v == "true" || v == "1") c.*m = true;
      else if (v == "false" || v == "0") c.*m = false;
      else throw ConfigError("not a boolean: '" + v + "'");
    } else if constexpr (std::is_integral_v<T>)
      c.*m = parse_integer<T>(v);
    else if constexpr (std::is_same_v<T, std::string>)
      c.*m = v;
    else
      c.*m = parse_list(v);
  };
  b.get = [m](const ExperimentConfig& c) -> std::string {
    if constexpr (std::is_same_v<T, double>)
      return format_double(c.*m);
    else if constexpr (std::is_same_v<T, bool>)
      return c.*m ? "true" : "false";
    else if constexpr (std::is_integral_v<T>)
      return std::to_string(c.*m);
    else if constexpr (std::is_same_v<T, std::string>)
      return c.*m;
    else
      return format_list(c.*m);
  };
  return b;
}

inline const std::vector<Binding>& bindings() {
  using C = ExperimentConfig;
  static const std::vector<Binding> all = {
      bind("experiment", &C::experiment),
      bind("dim_x", &C::dim_x),
      bind("cells", &C::cells),
      bind("domain_length", &C::domain_length),
      bind("angular_nodes", &C::angular_nodes),
      bind("mu", &C::mu),
      bind("eps", &C::eps),
      bind("dt", &C::dt),
      bind("t_final", &C::t_final),
      bind("picard_tol_rel", &C::picard_tol_rel),
      bind("picard_max_iter", &C::picard_max_iter),
      bind("p_list", &C::p_list),
      bind("alpha", &C::alpha),
      bind("transport", &C::transport),
      bind("angular_form", &C::angular_form),
      bind("nu", &C::nu),
      bind("nu_a", &C::nu_a),
      bind("nu_b", &C::nu_b),
      bind("nu_table", &C::nu_table),
      bind("kernel", &C::kernel),
      bind("kernel_width", &C::kernel_width),
      bind("snapshot_every", &C::snapshot_every),
      bind("dump_path", &C::dump_path),
      bind("ic", &C::ic),
      bind("ic_file", &C::ic_file),
      bind("ic_mass", &C::ic_mass),
      bind("ic_mu", &C::ic_mu),
      bind("ic_density_amp", &C::ic_density_amp),
      bind("ic_density_kx", &C::ic_density_kx),
      bind("ic_director_angle", &C::ic_director_angle),
      bind("ic_director_twist", &C::ic_director_twist),
      bind("ic_modes", &C::ic_modes),
      bind("seed", &C::seed),
      bind("threads", &C::threads),
      bind("particles", &C::particles),
      bind("particle_dt", &C::particle_dt),
      bind("particle_dim", &C::particle_dim),
      bind("radius_R", &C::radius_R),
      bind("tie_policy", &C::tie_policy),
      bind("neighbor_method", &C::neighbor_method),
      bind("summary_every", &C::summary_every),
      bind("histogram_bins", &C::histogram_bins),
      bind("eq_mu_list", &C::eq_mu_list),
      bind("eps_max", &C::eps_max),
      bind("eps_min", &C::eps_min),
      bind("eps_pair", &C::eps_pair),
      bind("stab_delta", &C::stab_delta),
      bind("stab_mode_kx", &C::stab_mode_kx),
      bind("stab_mode_ktheta", &C::stab_mode_ktheta),
      bind("stab_refine", &C::stab_refine),
      bind("stab_tolerance", &C::stab_tolerance),
      bind("mf_n_list", &C::mf_n_list),
      bind("mf_bins_x", &C::mf_bins_x),
      bind("mf_bins_theta", &C::mf_bins_theta),
      bind("mf_bandwidth", &C::mf_bandwidth),
      bind("mf_checkpoints", &C::mf_checkpoints),
  };
  return all;
}

inline void require_one_of(const std::string& key, const std::string& v, std::initializer_list<const char*> allowed) {
  for (const char* a : allowed)
    if (v == a) return;
  std::string list;
  for (const char* a : allowed) list += std::string(list.empty() ? "" : "|") + a;
  throw ConfigError(key + " = '" + v + "' is not one of " + list);
}

}  // namespace detail

/// Checks enumerations and ranges that do not need the numerical modules.
inline void validate(const ExperimentConfig& c) {
  using detail::require_one_of;
  require_one_of("transport", c.transport, {"semi-lagrangian", "upwind"});
  require_one_of("angular_form", c.angular_form, {"expanded", "divergence"});
  require_one_of("nu", c.nu, {"constant", "affine", "tabulated"});
  require_one_of("kernel", c.kernel, {"dirac", "gaussian", "tophat"});
  require_one_of("ic", c.ic, {"uniform", "fvm", "perturbed-fvm", "file"});
  require_one_of("tie_policy", c.tie_policy, {"keep", "random"});
  require_one_of("neighbor_method", c.neighbor_method, {"auto", "cell-list", "sweep"});
  if (c.dim_x != 1 && c.dim_x != 2) throw ConfigError("dim_x must be 1 or 2");
  if (c.particle_dim != 2 && c.particle_dim != 3) throw ConfigError("particle_dim must be 2 or 3");
  if (c.ic == "file" && c.ic_file.empty()) throw ConfigError("ic = file needs ic_file");
  if (c.nu == "tabulated" && c.nu_table.size() < 5) throw ConfigError("nu = tabulated needs at least 5 nu_table values");
  if (c.threads == 0) throw ConfigError("threads must be >= 1");
}

inline ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig c;
  std::vector<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const auto hash = raw.find('#');
    const std::string line = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    const detail::Binding* b = nullptr;
    for (const auto& cand : detail::bindings())
      if (cand.key == key) b = &cand;
    if (!b) throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    for (const auto& s : seen)
      if (s == key) throw ConfigError("line " + std::to_string(lineno) + ": key '" + key + "' given twice");
    seen.push_back(key);
    try {
      b->set(c, value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + key + ": " + e.what());
    }
  }
  validate(c);
  return c;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline ExperimentConfig load_config(const std::string& path) { return parse_config(read_text_file(path)); }

/// Every key with its resolved value, one per line, in a fixed order.
inline std::string to_text(const ExperimentConfig& c) {
  std::string s;
  for (const auto& b : detail::bindings()) s += b.key + " = " + b.get(c) + "\n";
  return s;
}

/// FNV-1a, 64 bit.
inline std::uint64_t fnv1a(const std::string& data, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char ch : data) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace vicsek
