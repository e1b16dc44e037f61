// Stochastic and systematic parameter imperfections.

#pragma once

#include "kerrcat/model.hpp"

#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace kerrcat {

inline constexpr const char* kRngAlgorithm = "splitmix64-counter";

/// Counter-based generator: draw k of stream s under seed is
/// splitmix64(splitmix64(seed ^ s * golden) + k * golden), so any draw can be
/// reproduced independently of the others.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream) : key_(mix(seed ^ (stream * kGolden))) {}

  static std::uint64_t mix(std::uint64_t z) {
    z += kGolden;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t at(std::uint64_t counter) const { return mix(key_ + counter * kGolden); }

  /// Uniform in the open interval (0, 1).
  double uniform_at(std::uint64_t counter) const {
    return (static_cast<double>(at(counter) >> 11) + 0.5) * 0x1.0p-53;
  }

  std::uint64_t next() { return at(counter_++); }
  double uniform() { return uniform_at(counter_++); }

 private:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

enum class NoiseTarget { J, Delta, alpha, t_g };

inline std::string to_string(NoiseTarget t) {
  switch (t) {
    case NoiseTarget::J: return "J";
    case NoiseTarget::Delta: return "Delta";
    case NoiseTarget::alpha: return "alpha";
    case NoiseTarget::t_g: return "t_g";
  }
  return "?";
}

inline NoiseTarget noise_target_from_string(const std::string& s) {
  if (s == "J") return NoiseTarget::J;
  if (s == "Delta") return NoiseTarget::Delta;
  if (s == "alpha") return NoiseTarget::alpha;
  if (s == "t_g") return NoiseTarget::t_g;
  throw std::invalid_argument("unknown noise target '" + s + "'");
}

struct StochasticNoiseSpec {
  double eps_s = 0.0;
  int n_events = 1000;
  std::uint64_t seed = 0;
  std::set<NoiseTarget> targets{NoiseTarget::J, NoiseTarget::Delta};

  void validate() const {
    if (eps_s < 0.0) throw std::invalid_argument("StochasticNoiseSpec: eps_s must be >= 0");
    if (n_events < 1) throw std::invalid_argument("StochasticNoiseSpec: n_events must be >= 1");
    for (NoiseTarget t : targets)
      if (t != NoiseTarget::J && t != NoiseTarget::Delta)
        throw std::invalid_argument("StochasticNoiseSpec: only J and Delta can fluctuate");
  }
};

/// Piecewise-constant trace over n_events equal intervals of [0, t_end].
struct Trace {
  std::vector<double> breakpoints;
  std::vector<double> levels;
};

inline std::uint64_t stream_of(NoiseTarget t) { return static_cast<std::uint64_t>(t) + 1; }

/// Levels base (1 + u), u uniform in (-eps_s, eps_s), one per event.
inline Trace stochastic_trace(const StochasticNoiseSpec& spec, double base_value, double t_end,
                              NoiseTarget target = NoiseTarget::J) {
  spec.validate();
  if (!(t_end > 0.0)) throw std::invalid_argument("stochastic_trace: t_end must be positive");
  const CounterRng rng(spec.seed, stream_of(target));
  Trace tr;
  tr.breakpoints.reserve(static_cast<std::size_t>(spec.n_events) + 1);
  for (int k = 0; k <= spec.n_events; ++k) tr.breakpoints.push_back(t_end * k / spec.n_events);
  tr.breakpoints.back() = t_end;
  for (int k = 0; k < spec.n_events; ++k) {
    const double u = spec.eps_s * (2.0 * rng.uniform_at(static_cast<std::uint64_t>(k)) - 1.0);
    tr.levels.push_back(base_value * (1.0 + u));
  }
  return tr;
}

/// Nominal constant schedule of the config with the targeted parameters
/// replaced by independent stochastic traces.
inline Schedule stochastic_schedule(const GateConfig& config_in, const StochasticNoiseSpec& spec) {
  const GateConfig c = resolve(config_in);
  spec.validate();
  const double t_end = c.gate_time;
  const Trace j = spec.targets.count(NoiseTarget::J) ? stochastic_trace(spec, c.J, t_end, NoiseTarget::J)
                                                      : Trace{{}, std::vector<double>(static_cast<std::size_t>(spec.n_events), c.J)};
  const Trace d = spec.targets.count(NoiseTarget::Delta) ? stochastic_trace(spec, c.Delta, t_end, NoiseTarget::Delta)
                                                          : Trace{{}, std::vector<double>(static_cast<std::size_t>(spec.n_events), c.Delta)};
  std::vector<double> b;
  for (int k = 0; k <= spec.n_events; ++k) b.push_back(t_end * k / spec.n_events);
  b.back() = t_end;
  return {b, j.levels, d.levels};
}

struct SystematicNoiseSpec {
  double eps_a = 0.0;
  std::map<NoiseTarget, int> targets;  // parameter -> sign (+1 or -1)

  void validate() const {
    if (!(std::abs(eps_a) < 1.0)) throw std::invalid_argument("SystematicNoiseSpec: |eps_a| must be < 1");
    for (const auto& [t, s] : targets)
      if (s != 1 && s != -1) throw std::invalid_argument("SystematicNoiseSpec: signs must be +1 or -1");
  }
};

/// Perturbed copy: X' = X (1 + sign eps_a). Perturbing t_g sets time_scale,
/// so the evolution runs to t_g (1 + sign eps_a) while the planned gate time
/// and detuning stay nominal.
inline GateConfig apply_systematic(const GateConfig& config_in, const SystematicNoiseSpec& spec) {
  spec.validate();
  GateConfig c = resolve(config_in);
  for (const auto& [target, sign] : spec.targets) {
    const double f = 1.0 + sign * spec.eps_a;
    switch (target) {
      case NoiseTarget::J: c.J *= f; break;
      case NoiseTarget::Delta: c.Delta *= f; break;
      case NoiseTarget::alpha: {
        const double alpha = c.alpha() * f;
        c.Omega_p = c.K * alpha * alpha;
        break;
      }
      case NoiseTarget::t_g: c.time_scale *= f; break;
    }
  }
  if (!(c.J > 0.0) || !(c.Delta > 0.0) || !(c.Omega_p > 0.0) || !(c.time_scale > 0.0))
    throw std::invalid_argument("apply_systematic: perturbed parameter is not positive");
  return c;
}

}  // namespace kerrcat
