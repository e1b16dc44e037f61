// Config-driven experiment runner: JSON spec in, CSV rows and a JSON
// manifest out.

#pragma once

#include "kerrcat/dynamics.hpp"
#include "kerrcat/gates.hpp"
#include "kerrcat/model.hpp"
#include "kerrcat/noise.hpp"
#include "kerrcat/protocols.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace kerrcat {

using json = nlohmann::ordered_json;

inline constexpr int kConfigVersion = 1;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ResourceRefusal : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ExperimentKind {
  gate_fidelity_sweep,
  decoherence_sweep,
  noise_stochastic,
  noise_systematic,
  switch_demo,
  combined_noise,
  cat_prep,
  single_qubit
};

inline const std::vector<std::pair<std::string, ExperimentKind>>& experiment_kinds() {
  static const std::vector<std::pair<std::string, ExperimentKind>> kinds{
      {"gate_fidelity_sweep", ExperimentKind::gate_fidelity_sweep},
      {"decoherence_sweep", ExperimentKind::decoherence_sweep},
      {"noise_stochastic", ExperimentKind::noise_stochastic},
      {"noise_systematic", ExperimentKind::noise_systematic},
      {"switch_demo", ExperimentKind::switch_demo},
      {"combined_noise", ExperimentKind::combined_noise},
      {"cat_prep", ExperimentKind::cat_prep},
      {"single_qubit", ExperimentKind::single_qubit}};
  return kinds;
}

inline std::string to_string(ExperimentKind k) {
  for (const auto& [name, kind] : experiment_kinds())
    if (kind == k) return name;
  return "?";
}

/// Physical parameter with its unit convention: rad/us = value * (two_pi ? 2 pi : 1).
struct Quantity {
  double value = 0.0;
  bool two_pi = false;
  double rad_per_us() const { return kerrcat::rad_per_us(value, two_pi); }
};

struct ExperimentSpec {
  int version = kConfigVersion;
  ExperimentKind kind = ExperimentKind::gate_fidelity_sweep;
  Mode mode = Mode::full;
  std::uint64_t seed = 0;
  bool density = false;
  json config = json::object();     // GateConfig fields as written
  json protocol = json::object();   // cat_prep / single_qubit parameters
  json grid = json::object();       // axis -> list of values, in file order
  json stochastic = json::object();
  json systematic = json::object();
  json switch_plan;                 // null or {"eps": .., "m_prime": ..}
  json integrator;                  // null or settings
  double max_bytes = 8.0 * 1024 * 1024 * 1024;
  std::string source;               // raw text, for line-anchored messages
};

namespace detail {

/// Line of the first occurrence of "key" in the source, or 0.
inline int line_of(const std::string& source, const std::string& key) {
  const std::string needle = "\"" + key + "\"";
  const auto pos = source.find(needle);
  if (pos == std::string::npos) return 0;
  return 1 + static_cast<int>(std::count(source.begin(), source.begin() + static_cast<std::ptrdiff_t>(pos), '\n'));
}

[[noreturn]] inline void config_fail(const ExperimentSpec& spec, const std::string& key, const std::string& what) {
  const int line = line_of(spec.source, key);
  std::ostringstream msg;
  msg << "config";
  if (line > 0) msg << ":" << line;
  msg << ": " << what;
  throw ConfigError(msg.str());
}

inline bool default_two_pi(const std::string& name) {
  return name == "K" || name == "J" || name == "Delta" || name == "Omega_p";
}

inline Quantity read_quantity(const ExperimentSpec& spec, const json& node, const std::string& name) {
  Quantity q;
  q.two_pi = default_two_pi(name);
  if (node.is_number()) {
    q.value = node.get<double>();
  } else if (node.is_object() && node.contains("value") && node["value"].is_number()) {
    q.value = node["value"].get<double>();
    if (node.contains("two_pi")) {
      if (!node["two_pi"].is_boolean()) config_fail(spec, name, "'two_pi' of '" + name + "' must be true or false");
      q.two_pi = node["two_pi"].get<bool>();
    }
  } else {
    config_fail(spec, name, "'" + name + "' must be a number or {\"value\": v, \"two_pi\": bool}");
  }
  return q;
}

inline bool two_pi_of(const ExperimentSpec& spec, const std::string& name) {
  const json& c = spec.config;
  if (c.contains(name) && c[name].is_object() && c[name].contains("two_pi") && c[name]["two_pi"].is_boolean())
    return c[name]["two_pi"].get<bool>();
  return default_two_pi(name);
}

inline int read_int(const ExperimentSpec& spec, const json& node, const std::string& name) {
  if (!node.is_number_integer()) config_fail(spec, name, "'" + name + "' must be an integer");
  return node.get<int>();
}

}  // namespace detail

/// Builds the GateConfig described by spec.config (unresolved: derived fields
/// stay at their "automatic" values).
inline GateConfig gate_config_from_spec(const ExperimentSpec& spec) {
  GateConfig c;
  const json& j = spec.config;
  if (!j.is_object()) detail::config_fail(spec, "config", "'config' must be an object");
  static const std::vector<std::string> known{"N", "m", "K", "Omega_p", "alpha", "J", "Delta", "kappa", "gamma", "kappa0", "gamma0",
                                              "bus_dim", "kpo_dim", "kpo_basis", "kpo_levels", "gate_time"};
  for (const auto& [key, value] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end()) detail::config_fail(spec, key, "unknown config field '" + key + "'");
  if (j.contains("N")) c.N = detail::read_int(spec, j["N"], "N");
  if (j.contains("m")) c.m = detail::read_int(spec, j["m"], "m");
  if (j.contains("K")) c.K = detail::read_quantity(spec, j["K"], "K").rad_per_us();
  if (j.contains("Omega_p") && j.contains("alpha")) detail::config_fail(spec, "alpha", "give either 'alpha' or 'Omega_p', not both");
  if (j.contains("Omega_p")) c.Omega_p = detail::read_quantity(spec, j["Omega_p"], "Omega_p").rad_per_us();
  if (j.contains("alpha")) {
    if (!j["alpha"].is_number()) detail::config_fail(spec, "alpha", "'alpha' must be a number");
    const double a = j["alpha"].get<double>();
    c.Omega_p = c.K * a * a;
  } else if (!j.contains("Omega_p")) {
    c.Omega_p = 4.0 * c.K;
  }
  if (j.contains("J")) c.J = detail::read_quantity(spec, j["J"], "J").rad_per_us();
  if (j.contains("Delta")) c.Delta = detail::read_quantity(spec, j["Delta"], "Delta").rad_per_us();
  if (j.contains("kappa")) c.kappa = detail::read_quantity(spec, j["kappa"], "kappa").rad_per_us();
  if (j.contains("gamma")) c.gamma = detail::read_quantity(spec, j["gamma"], "gamma").rad_per_us();
  if (j.contains("kappa0")) c.kappa0 = detail::read_quantity(spec, j["kappa0"], "kappa0").rad_per_us();
  if (j.contains("gamma0")) c.gamma0 = detail::read_quantity(spec, j["gamma0"], "gamma0").rad_per_us();
  if (j.contains("bus_dim")) c.bus_dim = detail::read_int(spec, j["bus_dim"], "bus_dim");
  if (j.contains("kpo_dim")) c.kpo_dim = detail::read_int(spec, j["kpo_dim"], "kpo_dim");
  if (j.contains("kpo_levels")) c.kpo_levels = detail::read_int(spec, j["kpo_levels"], "kpo_levels");
  if (j.contains("kpo_basis")) {
    const std::string b = j["kpo_basis"].is_string() ? j["kpo_basis"].get<std::string>() : "";
    if (b == "fock") c.kpo_basis = KpoBasis::fock;
    else if (b == "eigen") c.kpo_basis = KpoBasis::eigen;
    else detail::config_fail(spec, "kpo_basis", "'kpo_basis' must be \"fock\" or \"eigen\"");
  }
  if (j.contains("gate_time")) {
    if (!j["gate_time"].is_number()) detail::config_fail(spec, "gate_time", "'gate_time' must be a number (us)");
    c.gate_time = j["gate_time"].get<double>();
  }
  return c;
}

inline ExperimentSpec parse_spec(const std::string& text) {
  ExperimentSpec spec;
  spec.source = text;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    // Convert the byte offset into a line number.
    const std::size_t pos = std::min<std::size_t>(e.byte, text.size());
    const int line = 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(pos), '\n'));
    throw ConfigError("config:" + std::to_string(line) + ": malformed JSON (" + std::string(e.what()) + ")");
  }
  if (!doc.is_object()) throw ConfigError("config:1: top level must be an object");
  static const std::vector<std::string> known{"version", "kind", "mode", "seed", "rng", "density", "config", "protocol", "grid",
                                              "stochastic", "systematic", "switch", "integrator", "max_bytes", "description"};
  for (const auto& [key, value] : doc.items())
    if (std::find(known.begin(), known.end(), key) == known.end()) detail::config_fail(spec, key, "unknown field '" + key + "'");
  if (!doc.contains("version")) throw ConfigError("config:1: missing 'version'");
  if (!doc["version"].is_number_integer() || doc["version"].get<int>() != kConfigVersion)
    detail::config_fail(spec, "version", "unsupported version (expected " + std::to_string(kConfigVersion) + ")");
  if (!doc.contains("kind") || !doc["kind"].is_string()) detail::config_fail(spec, "kind", "missing or non-string 'kind'");
  {
    const std::string k = doc["kind"].get<std::string>();
    bool found = false;
    for (const auto& [name, kind] : experiment_kinds())
      if (name == k) {
        spec.kind = kind;
        found = true;
      }
    if (!found) detail::config_fail(spec, "kind", "unknown kind '" + k + "'");
  }
  spec.mode = spec.kind == ExperimentKind::combined_noise ? Mode::effective : Mode::full;
  if (doc.contains("mode")) {
    try {
      spec.mode = mode_from_string(doc["mode"].get<std::string>());
    } catch (const std::exception&) {
      detail::config_fail(spec, "mode", "'mode' must be \"full\" or \"effective\"");
    }
  }
  if (doc.contains("seed")) {
    if (!doc["seed"].is_number_unsigned()) detail::config_fail(spec, "seed", "'seed' must be a non-negative integer");
    spec.seed = doc["seed"].get<std::uint64_t>();
  }
  if (doc.contains("rng") && doc["rng"] != kRngAlgorithm)
    detail::config_fail(spec, "rng", std::string("unsupported rng (only \"") + kRngAlgorithm + "\")");
  spec.density = spec.kind == ExperimentKind::decoherence_sweep || spec.kind == ExperimentKind::combined_noise;
  if (doc.contains("density")) {
    if (!doc["density"].is_boolean()) detail::config_fail(spec, "density", "'density' must be a boolean");
    spec.density = doc["density"].get<bool>();
  }
  if (doc.contains("config")) spec.config = doc["config"];
  if (doc.contains("protocol")) spec.protocol = doc["protocol"];
  if (doc.contains("grid")) {
    spec.grid = doc["grid"];
    if (!spec.grid.is_object()) detail::config_fail(spec, "grid", "'grid' must be an object of lists");
    for (const auto& [axis, values] : spec.grid.items())
      if (!values.is_array()) detail::config_fail(spec, axis, "grid axis '" + axis + "' must be a list");
  }
  if (doc.contains("stochastic")) spec.stochastic = doc["stochastic"];
  if (doc.contains("systematic")) spec.systematic = doc["systematic"];
  if (doc.contains("switch")) spec.switch_plan = doc["switch"];
  if (doc.contains("integrator")) spec.integrator = doc["integrator"];
  if (doc.contains("max_bytes")) {
    if (!doc["max_bytes"].is_number() || doc["max_bytes"].get<double>() <= 0)
      detail::config_fail(spec, "max_bytes", "'max_bytes' must be positive");
    spec.max_bytes = doc["max_bytes"].get<double>();
  }
  (void)gate_config_from_spec(spec);  // field-level validation up front
  return spec;
}

inline ExperimentSpec load_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_spec(ss.str());
}

// ---------------------------------------------------------------------------
// Grid

/// One grid point: axis name -> value, in axis order.
using GridPoint = std::vector<std::pair<std::string, json>>;

inline std::vector<GridPoint> expand_grid(const json& grid) {
  std::vector<GridPoint> points{GridPoint{}};
  for (const auto& [axis, values] : grid.items()) {
    std::vector<GridPoint> next;
    for (const GridPoint& p : points)
      for (const json& v : values) {
        GridPoint q = p;
        q.emplace_back(axis, v);
        next.push_back(std::move(q));
      }
    points = std::move(next);
  }
  if (grid.empty()) return {GridPoint{}};
  for (const auto& [axis, values] : grid.items())
    if (values.empty()) return {};
  return points;
}

inline const json* grid_value(const GridPoint& p, const std::string& axis) {
  for (const auto& [name, value] : p)
    if (name == axis) return &value;
  return nullptr;
}

namespace detail {
inline double grid_number(const ExperimentSpec& spec, const json& v, const std::string& axis) {
  if (!v.is_number()) config_fail(spec, axis, "grid axis '" + axis + "' must hold numbers");
  return v.get<double>();
}
}  // namespace detail

/// Applies the physical grid axes to a copy of the base config.
inline GateConfig apply_grid(const ExperimentSpec& spec, GateConfig c, const GridPoint& p) {
  for (const auto& [axis, v] : p) {
    auto q = [&](const std::string& name) { return rad_per_us(detail::grid_number(spec, v, axis), detail::two_pi_of(spec, name)); };
    if (axis == "N") c.N = static_cast<int>(detail::grid_number(spec, v, axis));
    else if (axis == "m") c.m = static_cast<int>(detail::grid_number(spec, v, axis));
    else if (axis == "J") c.J = q("J");
    else if (axis == "K") c.K = q("K");
    else if (axis == "Delta") c.Delta = q("Delta");
    else if (axis == "alpha") {
      const double a = detail::grid_number(spec, v, axis);
      c.Omega_p = c.K * a * a;
    } else if (axis == "kappa") c.kappa = q("kappa");
    else if (axis == "gamma") c.gamma = q("gamma");
    else if (axis == "kappa0") c.kappa0 = q("kappa0");
    else if (axis == "gamma0") c.gamma0 = q("gamma0");
    else if (axis == "kappa0_gamma0") c.kappa0 = c.gamma0 = q("kappa0");
    else if (axis == "kappa_gamma") c.kappa = c.gamma = q("kappa");
    else if (axis == "bus_dim") c.bus_dim = static_cast<int>(detail::grid_number(spec, v, axis));
    else if (axis == "kpo_levels") c.kpo_levels = static_cast<int>(detail::grid_number(spec, v, axis));
    else if (axis == "kpo_dim") c.kpo_dim = static_cast<int>(detail::grid_number(spec, v, axis));
  }
  // J or alpha changes move the resonant detuning and gate time unless fixed in the config.
  if (!spec.config.contains("Delta") && !grid_value(p, "Delta")) c.Delta = 0.0;
  if (!spec.config.contains("gate_time")) c.gate_time = 0.0;
  return c;
}

// ---------------------------------------------------------------------------
// Resources

struct ResourceEstimate {
  double dimension = 0.0;
  double state_bytes = 0.0;    // one state vector or density matrix
  double working_bytes = 0.0;  // integrator working set, about ten copies
  double est_steps = 0.0;
  bool density = false;
};

/// dims: bus x (kpo dim)^N for full mode, bus x 2^N for effective mode.
inline ResourceEstimate estimate_resources(const GateConfig& config_in, Mode mode, bool density) {
  const GateConfig c = resolve(config_in);
  ResourceEstimate r;
  const double local = mode == Mode::effective ? 2.0 : (c.kpo_basis == KpoBasis::eigen ? c.kpo_levels : c.kpo_dim);
  r.dimension = c.bus_dim * std::pow(local, c.N);
  r.density = density;
  r.state_bytes = r.dimension * (density ? r.dimension : 1.0) * 16.0;
  r.working_bytes = 10.0 * r.state_bytes;
  const double max_step = std::min(0.1 / c.Delta, c.gate_time / 100.0);
  r.est_steps = std::ceil(c.gate_time * c.time_scale / max_step);
  return r;
}

inline ResourceEstimate estimate_resources(const ExperimentSpec& spec) {
  ResourceEstimate worst;
  const GateConfig base = gate_config_from_spec(spec);
  for (const GridPoint& p : expand_grid(spec.grid)) {
    if (spec.kind == ExperimentKind::cat_prep || spec.kind == ExperimentKind::single_qubit) continue;
    GateConfig c = apply_grid(spec, base, p);
    Mode mode = spec.mode;
    if (const json* m = grid_value(p, "mode")) mode = mode_from_string(m->get<std::string>());
    const ResourceEstimate r = estimate_resources(c, mode, spec.density);
    if (r.working_bytes > worst.working_bytes) worst = r;
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Records

struct ResultRecord {
  std::size_t index = 0;
  std::vector<std::pair<std::string, json>> columns;  // swept values then metrics
  double runtime_s = 0.0;
};

namespace detail {
inline std::string format_cell(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "1" : "0";
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number_unsigned()) return std::to_string(v.get<unsigned long long>());
  if (v.is_number()) {
    const double d = v.get<double>();
    if (std::isnan(d)) return "nan";
    std::ostringstream os;
    os << std::setprecision(12) << d;
    return os.str();
  }
  if (v.is_null()) return "nan";
  return v.dump();
}
}  // namespace detail

inline std::string to_csv(std::vector<ResultRecord> records, const std::vector<std::string>& header) {
  std::sort(records.begin(), records.end(), [](const ResultRecord& a, const ResultRecord& b) { return a.index < b.index; });
  std::ostringstream os;
  for (std::size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
  os << "\n";
  for (const ResultRecord& r : records) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      std::string cell = "nan";
      for (const auto& [name, v] : r.columns)
        if (name == header[i]) cell = detail::format_cell(v);
      os << (i ? "," : "") << cell;
    }
    os << "\n";
  }
  return os.str();
}

inline std::vector<std::string> metric_columns(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::cat_prep: return {"t0", "F", "wrong_parity", "margin", "seed"};
    case ExperimentKind::single_qubit: return {"t_gate", "F_avg", "Delta_q", "xi_p", "xi_J", "seed"};
    case ExperimentKind::noise_stochastic:
      return {"t_g", "F_avg", "F_avg_ideal", "dF", "F_out", "P_C", "chi_residual", "beta_total", "seed"};
    case ExperimentKind::noise_systematic:
    case ExperimentKind::switch_demo:
    case ExperimentKind::combined_noise:
      return {"t_g", "t_stop", "tau", "Delta_before", "Delta_after", "F_avg", "F_out", "P_C", "chi_residual", "beta_total", "seed"};
    default: return {"t_g", "F_avg", "F_out", "P_C", "chi_residual", "beta_total", "seed"};
  }
}

// ---------------------------------------------------------------------------
// Running

namespace detail {

inline IntegratorSettings integrator_from_spec(const ExperimentSpec& spec, double omega, double span) {
  IntegratorSettings s = settings_for(omega, span);
  const json& j = spec.integrator;
  if (j.is_null()) return s;
  if (!j.is_object()) config_fail(spec, "integrator", "'integrator' must be an object");
  try {
    if (j.contains("method")) s.method = method_from_string(j["method"].get<std::string>());
    if (j.contains("rtol")) s.rtol = j["rtol"].get<double>();
    if (j.contains("atol")) s.atol = j["atol"].get<double>();
    if (j.contains("max_step")) s.max_step = j["max_step"].get<double>();
    if (j.contains("dt")) s.dt = j["dt"].get<double>();
    s.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    config_fail(spec, "integrator", std::string("bad integrator settings: ") + e.what());
  }
  return s;
}

inline std::set<NoiseTarget> parse_targets(const ExperimentSpec& spec, const std::string& text, const std::string& key) {
  std::set<NoiseTarget> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, '+')) {
    try {
      out.insert(noise_target_from_string(item));
    } catch (const std::exception&) {
      config_fail(spec, key, "unknown noise target '" + item + "'");
    }
  }
  return out;
}

inline double number_or(const json& obj, const std::string& key, double fallback) {
  return obj.is_object() && obj.contains(key) && obj[key].is_number() ? obj[key].get<double>() : fallback;
}

inline std::string string_or(const json& obj, const std::string& key, const std::string& fallback) {
  return obj.is_object() && obj.contains(key) && obj[key].is_string() ? obj[key].get<std::string>() : fallback;
}

inline void put_metrics(ResultRecord& r, const GateMetrics& m) {
  r.columns.emplace_back("t_g", m.t_g);
  r.columns.emplace_back("t_stop", m.t_stop);
  r.columns.emplace_back("F_avg", m.F_avg);
  r.columns.emplace_back("F_out", m.F_out);
  r.columns.emplace_back("P_C", m.P_C);
  r.columns.emplace_back("chi_residual", m.chi_residual);
  r.columns.emplace_back("beta_total", m.beta_total);
}

class BaselineCache {
 public:
  template <class F>
  double get(const std::string& key, F&& compute) {
    {
      std::lock_guard<std::mutex> lock(mu_);
      if (auto it = values_.find(key); it != values_.end()) return it->second;
    }
    const double v = compute();
    std::lock_guard<std::mutex> lock(mu_);
    values_.emplace(key, v);
    return v;
  }

 private:
  std::mutex mu_;
  std::map<std::string, double> values_;
};

inline std::string config_key(const GateConfig& c, Mode mode) {
  std::ostringstream os;
  os << std::setprecision(17) << c.N << ' ' << c.K << ' ' << c.Omega_p << ' ' << c.J << ' ' << c.Delta << ' ' << c.m << ' '
     << c.bus_dim << ' ' << c.kpo_dim << ' ' << static_cast<int>(c.kpo_basis) << ' ' << c.kpo_levels << ' ' << c.gate_time << ' '
     << static_cast<int>(mode);
  return os.str();
}

}  // namespace detail

/// Computes one grid point. `point_index` only orders the output.
inline ResultRecord run_point(const ExperimentSpec& spec, const GridPoint& p, std::size_t point_index, detail::BaselineCache& cache) {
  const auto start = std::chrono::steady_clock::now();
  ResultRecord rec;
  rec.index = point_index;
  for (const auto& [axis, v] : p) rec.columns.emplace_back(axis, v);
  std::uint64_t seed = spec.seed;
  if (const json* s = grid_value(p, "seed")) seed += static_cast<std::uint64_t>(detail::grid_number(spec, *s, "seed"));
  rec.columns.emplace_back("seed", seed);

  Mode mode = spec.mode;
  if (const json* m = grid_value(p, "mode")) {
    try {
      mode = mode_from_string(m->get<std::string>());
    } catch (const std::exception&) {
      detail::config_fail(spec, "mode", "grid 'mode' values must be \"full\" or \"effective\"");
    }
  }

  if (spec.kind == ExperimentKind::cat_prep) {
    const json& pr = spec.protocol;
    const double K = rad_per_us(detail::number_or(pr, "K", 5.0), true);
    double alpha = detail::number_or(pr, "alpha", 2.0);
    if (const json* v = grid_value(p, "alpha")) alpha = detail::grid_number(spec, *v, "alpha");
    double t0K = detail::number_or(pr, "t0_K", 1.7);
    if (const json* v = grid_value(p, "t0_K")) t0K = detail::grid_number(spec, *v, "t0_K");
    double rate_K = detail::number_or(pr, "rate_K", 0.0);
    if (const json* v = grid_value(p, "rate_K")) rate_K = detail::grid_number(spec, *v, "rate_K");
    int initial = static_cast<int>(detail::number_or(pr, "initial", 0));
    if (const json* v = grid_value(p, "initial")) initial = static_cast<int>(detail::grid_number(spec, *v, "initial"));
    const int dim = static_cast<int>(detail::number_or(pr, "dim", 0));
    const CatPrepResult r = run_cat_prep(K, alpha, t0K / K, initial, rate_K * K, rate_K * K, dim);
    rec.columns.emplace_back("t0", t0K / K);
    rec.columns.emplace_back("F", r.fidelity);
    rec.columns.emplace_back("wrong_parity", r.odd_population);
    rec.columns.emplace_back("margin", r.margin);
  } else if (spec.kind == ExperimentKind::single_qubit) {
    const json& pr = spec.protocol;
    const double K = rad_per_us(detail::number_or(pr, "K", 5.0), true);
    const double alpha = detail::number_or(pr, "alpha", 2.0);
    double tK = detail::number_or(pr, "t_gate_K", 5.0);
    if (const json* v = grid_value(p, "t_gate_K")) tK = detail::grid_number(spec, *v, "t_gate_K");
    std::string target = detail::string_or(pr, "target", "hadamard");
    if (const json* v = grid_value(p, "target")) target = v->get<std::string>();
    bool h_add = pr.is_object() && pr.contains("h_add") && pr["h_add"].is_boolean() && pr["h_add"].get<bool>();
    if (const json* v = grid_value(p, "h_add")) h_add = v->is_boolean() ? v->get<bool>() : detail::grid_number(spec, *v, "h_add") != 0.0;
    const bool exact = pr.is_object() && pr.contains("exact_h_add") && pr["exact_h_add"].is_boolean() && pr["exact_h_add"].get<bool>();
    const int dim = static_cast<int>(detail::number_or(pr, "dim", 0));
    SingleQubitTarget tgt;
    try {
      tgt = single_qubit_target_from_string(target);
    } catch (const std::exception& e) {
      detail::config_fail(spec, "target", e.what());
    }
    const double t_gate = tK / K;
    const SingleQubitParams params = design_single_qubit(tgt, t_gate, alpha, h_add, exact, dim);
    const SingleQubitResult r =
        run_single_qubit_gate(K, K * alpha * alpha, params, single_qubit_target_matrix(tgt, t_gate), h_add, t_gate, dim);
    rec.columns.emplace_back("t_gate", t_gate);
    rec.columns.emplace_back("F_avg", r.fidelity);
    rec.columns.emplace_back("Delta_q", params.Delta_q);
    rec.columns.emplace_back("xi_p", std::real(params.xi_p));
    rec.columns.emplace_back("xi_J", params.xi_J);
  } else {
    const GateConfig nominal = resolve(apply_grid(spec, gate_config_from_spec(spec), p));
    if (spec.kind == ExperimentKind::combined_noise && mode == Mode::full && nominal.N > 2)
      detail::config_fail(spec, "mode", "full mode is limited to N <= 2 for combined_noise");
    GateRunOptions opt;
    opt.mode = mode;
    opt.density = spec.density;

    if (spec.kind == ExperimentKind::gate_fidelity_sweep || spec.kind == ExperimentKind::decoherence_sweep) {
      const Schedule s = nominal_schedule(nominal);
      opt.settings = detail::integrator_from_spec(spec, nominal.Delta, nominal.gate_time);
      detail::put_metrics(rec, run_gate(nominal, s, nominal.gate_time * nominal.time_scale, opt));
    } else if (spec.kind == ExperimentKind::noise_stochastic) {
      StochasticNoiseSpec ns;
      ns.eps_s = detail::number_or(spec.stochastic, "eps_s", 0.0);
      if (const json* v = grid_value(p, "eps_s")) ns.eps_s = detail::grid_number(spec, *v, "eps_s");
      ns.n_events = static_cast<int>(detail::number_or(spec.stochastic, "n_events", 1000));
      ns.seed = seed;
      std::string targets = detail::string_or(spec.stochastic, "targets", "J+Delta");
      if (const json* v = grid_value(p, "targets")) targets = v->get<std::string>();
      ns.targets = detail::parse_targets(spec, targets, "targets");
      try {
        ns.validate();
      } catch (const std::exception& e) {
        detail::config_fail(spec, "stochastic", e.what());
      }
      const Schedule s = stochastic_schedule(nominal, ns);
      opt.density = false;
      opt.settings = detail::integrator_from_spec(spec, max_detuning(s), nominal.gate_time);
      const GateMetrics m = run_gate(nominal, s, nominal.gate_time, opt);
      const double ideal = cache.get(detail::config_key(nominal, mode), [&] {
        GateRunOptions o = opt;
        o.settings = detail::integrator_from_spec(spec, nominal.Delta, nominal.gate_time);
        return run_gate(nominal, nominal_schedule(nominal), nominal.gate_time, o).F_avg;
      });
      detail::put_metrics(rec, m);
      rec.columns.emplace_back("F_avg_ideal", ideal);
      rec.columns.emplace_back("dF", std::abs(m.F_avg - ideal));
    } else {
      // noise_systematic, switch_demo, combined_noise
      SystematicNoiseSpec sn;
      sn.eps_a = detail::number_or(spec.systematic, "eps_a", spec.kind == ExperimentKind::noise_systematic ? 0.0 : 0.05);
      if (const json* v = grid_value(p, "eps_a")) sn.eps_a = detail::grid_number(spec, *v, "eps_a");
      int sign = static_cast<int>(detail::number_or(spec.systematic, "sign", -1));
      if (const json* v = grid_value(p, "sign")) sign = static_cast<int>(detail::grid_number(spec, *v, "sign"));
      std::string targets = detail::string_or(spec.systematic, "targets",
                                              spec.kind == ExperimentKind::noise_systematic ? "J" : spec.kind == ExperimentKind::switch_demo ? "t_g" : "J+Delta+t_g");
      if (const json* v = grid_value(p, "targets")) targets = v->get<std::string>();
      for (NoiseTarget t : detail::parse_targets(spec, targets, "targets")) sn.targets[t] = sign;
      std::string plan_name = spec.switch_plan.is_null() ? "fixed" : "switch";
      if (spec.kind != ExperimentKind::noise_systematic) plan_name = "switch";
      if (const json* v = grid_value(p, "plan")) plan_name = v->get<std::string>();
      if (plan_name != "fixed" && plan_name != "switch") detail::config_fail(spec, "plan", "'plan' must be \"fixed\" or \"switch\"");
      GatePlan plan;
      if (plan_name == "switch") {
        const double eps = detail::number_or(spec.switch_plan, "eps", 0.05);
        const int m_prime = static_cast<int>(detail::number_or(spec.switch_plan, "m_prime", 1));
        try {
          plan.switch_plan = plan_detuning_switch(nominal, eps, m_prime);
        } catch (const std::exception& e) {
          detail::config_fail(spec, "switch", e.what());
        }
      }
      GateConfig actual;
      try {
        actual = apply_systematic(nominal, sn);
      } catch (const std::exception& e) {
        detail::config_fail(spec, "systematic", e.what());
      }
      const Schedule s = realize(plan, nominal, actual);
      const double t_stop = stop_time(plan, nominal, actual);
      opt.settings = detail::integrator_from_spec(spec, max_detuning(s), t_stop);
      const GateMetrics m = run_gate(actual, s, t_stop, opt);
      detail::put_metrics(rec, m);
      // t_g reports the planned gate time.
      for (auto& [name, v] : rec.columns)
        if (name == "t_g") v = plan.t_end(nominal);
      rec.columns.emplace_back("tau", plan.switch_plan ? plan.switch_plan->tau : std::numeric_limits<double>::quiet_NaN());
      rec.columns.emplace_back("Delta_before", plan.switch_plan ? plan.switch_plan->Delta_before : nominal.Delta);
      rec.columns.emplace_back("Delta_after", plan.switch_plan ? plan.switch_plan->Delta_after : nominal.Delta);
    }
  }
  rec.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

struct RunSummary {
  std::size_t points = 0;
  double wall_time_s = 0.0;
  std::string csv_path;
  std::string manifest_path;
  ResourceEstimate resources;
};

inline std::vector<std::string> csv_header(const ExperimentSpec& spec) {
  std::vector<std::string> header;
  for (const auto& [axis, values] : spec.grid.items())
    if (axis != "seed") header.push_back(axis);
  for (const std::string& m : metric_columns(spec.kind)) header.push_back(m);
  return header;
}

/// Runs every grid point on `workers` threads and writes results.csv and
/// manifest.json into out_dir.
inline RunSummary run_experiment(ExperimentSpec spec, const std::string& out_dir, int workers,
                                 std::optional<std::uint64_t> seed_override = std::nullopt,
                                 std::optional<Mode> mode_override = std::nullopt) {
  if (seed_override) spec.seed = *seed_override;
  if (mode_override) spec.mode = *mode_override;
  if (workers < 1) throw ConfigError("config: worker count must be >= 1");
  RunSummary summary;
  summary.resources = estimate_resources(spec);
  if (summary.resources.working_bytes > spec.max_bytes) {
    std::ostringstream msg;
    msg << "resource refusal: the largest grid point needs about " << std::fixed << std::setprecision(0) << summary.resources.working_bytes
        << " bytes (" << summary.resources.state_bytes << " per state copy, dimension " << summary.resources.dimension
        << (summary.resources.density ? ", density matrix" : ", state vectors") << "), ceiling is " << spec.max_bytes << " bytes";
    throw ResourceRefusal(msg.str());
  }
  const std::vector<GridPoint> points = expand_grid(spec.grid);
  std::vector<ResultRecord> records(points.size());
  std::vector<std::string> errors(points.size());
  detail::BaselineCache cache;
  std::atomic<std::size_t> next{0};
  const auto start = std::chrono::steady_clock::now();
  auto worker = [&] {
    for (std::size_t i = next++; i < points.size(); i = next++) {
      try {
        records[i] = run_point(spec, points[i], i, cache);
      } catch (const ConfigError& e) {
        errors[i] = std::string("C") + e.what();
      } catch (const ToleranceBreach& e) {
        errors[i] = std::string("T") + e.what();
      } catch (const std::invalid_argument& e) {
        errors[i] = std::string("C") + "config: " + e.what();
      } catch (const std::exception& e) {
        errors[i] = std::string("T") + e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  const int n_threads = std::min<int>(workers, static_cast<int>(std::max<std::size_t>(points.size(), 1)));
  for (int k = 0; k < n_threads; ++k) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();
  for (const std::string& e : errors) {
    if (e.empty()) continue;
    if (e[0] == 'C') throw ConfigError(e.substr(1));
    throw ToleranceBreach(e.substr(1));
  }
  summary.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  summary.points = points.size();

  std::filesystem::create_directories(out_dir);
  summary.csv_path = (std::filesystem::path(out_dir) / "results.csv").string();
  summary.manifest_path = (std::filesystem::path(out_dir) / "manifest.json").string();
  {
    std::ofstream csv(summary.csv_path, std::ios::binary);
    csv << to_csv(records, csv_header(spec));
  }
  json manifest;
  manifest["version"] = kConfigVersion;
  manifest["kind"] = to_string(spec.kind);
  manifest["mode"] = to_string(spec.mode);
  manifest["density"] = spec.density;
  manifest["seed"] = spec.seed;
  manifest["rng"] = kRngAlgorithm;
  manifest["workers"] = workers;
  manifest["points"] = summary.points;
  manifest["csv"] = "results.csv";
  manifest["units"] = "angular frequencies and rates in rad/us, times in us";
  if (spec.kind != ExperimentKind::cat_prep && spec.kind != ExperimentKind::single_qubit) {
    const GateConfig c = resolve(gate_config_from_spec(spec));
    manifest["resolved_config"] = {{"N", c.N},           {"K", c.K},           {"Omega_p", c.Omega_p}, {"alpha", c.alpha()},
                                   {"J", c.J},           {"Delta", c.Delta},   {"m", c.m},             {"kappa", c.kappa},
                                   {"gamma", c.gamma},   {"kappa0", c.kappa0}, {"gamma0", c.gamma0},   {"bus_dim", c.bus_dim},
                                   {"kpo_dim", c.kpo_dim}, {"kpo_basis", c.kpo_basis == KpoBasis::fock ? "fock" : "eigen"},
                                   {"kpo_levels", c.kpo_levels}, {"gate_time", c.gate_time}};
  }
  manifest["config"] = spec.config;
  manifest["grid"] = spec.grid;
  if (!spec.protocol.empty()) manifest["protocol"] = spec.protocol;
  if (!spec.stochastic.empty()) manifest["stochastic"] = spec.stochastic;
  if (!spec.systematic.empty()) manifest["systematic"] = spec.systematic;
  if (!spec.switch_plan.is_null()) manifest["switch"] = spec.switch_plan;
  manifest["resources"] = {{"dimension", summary.resources.dimension},
                           {"state_bytes", summary.resources.state_bytes},
                           {"working_bytes", summary.resources.working_bytes},
                           {"est_steps", summary.resources.est_steps}};
  json runtimes = json::array();
  std::vector<ResultRecord> sorted = records;
  std::sort(sorted.begin(), sorted.end(), [](const ResultRecord& a, const ResultRecord& b) { return a.index < b.index; });
  for (const ResultRecord& r : sorted) runtimes.push_back(r.runtime_s);
  manifest["point_runtimes_s"] = runtimes;
  manifest["wall_time_s"] = summary.wall_time_s;
  manifest["versions"] = {{"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                        std::to_string(EIGEN_MINOR_VERSION)},
                          {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." + std::to_string(NLOHMANN_JSON_VERSION_MINOR) +
                                                "." + std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                          {"compiler", __VERSION__}};
  std::ofstream(summary.manifest_path) << manifest.dump(2) << "\n";
  return summary;
}

}  // namespace kerrcat
