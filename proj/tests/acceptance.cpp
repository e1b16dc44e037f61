// Acceptance checks 1-12. One PASS/FAIL line per criterion; the exit status
// is nonzero when any criterion fails.

#include "kerrcat/gates.hpp"
#include "kerrcat/noise.hpp"
#include "kerrcat/protocols.hpp"

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

using namespace kerrcat;

namespace {

constexpr double kK = kTwoPi * 5.0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

GateConfig base_config(int N, double J_MHz) {
  GateConfig c;
  c.N = N;
  c.K = kK;
  c.Omega_p = 4.0 * kK;
  c.J = kTwoPi * J_MHz;
  c.bus_dim = 10;
  c.kpo_basis = KpoBasis::eigen;
  c.kpo_levels = 12;
  return resolve(c);
}

Outcome geometry_identities() {
  double worst = 0.0;
  for (int m = 1; m <= 9; ++m)
    for (double j : {0.1, 0.5, 5.0}) {
      GateConfig c = base_config(2, j);
      c.m = m;
      c.Delta = 0.0;
      c.gate_time = 0.0;
      c = resolve(c);
      worst = std::max(worst, std::abs(beta(c.gate_time, c) + kPi / 2.0));
      worst = std::max(worst, std::abs(chi(c.gate_time, c)));
    }
  return {worst < 1e-12, "max deviation " + fmt("%.2e", worst)};
}

Outcome closed_form_vs_effective() {
  GateConfig c = base_config(2, 5.0);
  c.bus_dim = 30;
  const TimeDependentOperator h = effective_generator(c, nominal_schedule(c));
  const Eigen::Index D = 4;
  const Eigen::Index cols = 6 * D;  // inputs with bus Fock <= 5
  IntegratorSettings is;
  is.rtol = 1e-10;
  is.atol = 1e-12;
  is.max_step = c.gate_time / 200.0;
  const DenseMatrix in = DenseMatrix::Identity(static_cast<Eigen::Index>(effective_space(c).dimension()), cols);
  const DenseMatrix out = evolve_columns(h, in, {0.0, c.gate_time}, is);
  const DenseMatrix ref = ms_closed_form(c.gate_time, c).leftCols(cols);
  const double d = max_abs(out - ref);
  return {d < 1e-6, "max-entry distance " + fmt("%.2e", d) + " (bus dim 30, inputs with bus Fock <= 5)"};
}

Outcome gate_fidelity_vs_J() {
  std::string detail;
  bool pass = true;
  for (double j : {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.8, 1.0}) {
    const GateConfig c = base_config(2, j);
    const GateMetrics m = run_gate(c, GateRunOptions{});
    const double tg_ref = kPi / (2.0 * c.J * c.alpha());
    if (std::abs(c.gate_time - tg_ref) > 1e-15 * tg_ref) pass = false;
    if (j <= 0.5 && !(m.F_avg >= 0.999)) pass = false;
    detail += "N=2 J=" + fmt("%.1f", j) + " F=" + fmt("%.6f", m.F_avg) + "; ";
  }
  const GateConfig fast = base_config(2, 5.0);
  if (std::abs(fast.gate_time - 0.025) > 1e-15) pass = false;
  detail += "t_g(J=5)=" + fmt("%.4f", fast.gate_time * 1e3) + " ns; ";
  for (double j : {0.1, 0.3, 0.5}) {
    GateConfig c = base_config(3, j);
    c.kpo_levels = 8;
    const GateMetrics m = run_gate(c, GateRunOptions{});
    if (!(m.F_avg >= 0.999 - 0.002)) pass = false;
    detail += "N=3 J=" + fmt("%.1f", j) + " F=" + fmt("%.6f", m.F_avg) + "; ";
  }
  return {pass, detail};
}

Outcome error_bias() {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int k = 0; k < 50; ++k) {
    const int N = 1 + static_cast<int>(u(rng) * 4.0);
    GateConfig c = base_config(N, 0.1 + 2.0 * u(rng));
    c.bus_dim = 8;
    const double tau = (0.01 + 0.98 * u(rng)) * c.gate_time;
    const int n = 1 + static_cast<int>(u(rng) * N);
    worst = std::max(worst, verify_error_bias(c, tau, n));
  }
  return {worst < 1e-10, "max distance over 50 draws " + fmt("%.2e", worst)};
}

GateMetrics density_run(GateConfig c, Mode mode) {
  GateRunOptions opt;
  opt.mode = mode;
  opt.density = true;
  return run_gate(c, opt);
}

GateConfig decoherence_config(double alpha) {
  GateConfig c = base_config(2, 5.0);
  c.Omega_p = kK * alpha * alpha;
  c.Delta = 0.0;
  c.gate_time = 0.0;
  c.kpo_dim = 0;
  c.bus_dim = 8;
  c.kpo_levels = 8;
  return resolve(c);
}

Outcome photon_loss() {
  bool pass = true;
  std::string detail;
  for (double alpha : {1.5, 1.75, 2.0, 2.25, 2.5}) {
    GateConfig c = decoherence_config(alpha);
    c.kappa = 0.1;
    const GateMetrics full = density_run(c, Mode::full);
    const GateMetrics eff = density_run(c, Mode::effective);
    const double diff = std::abs(full.F_out - eff.F_out);
    if (!(diff <= 0.01)) pass = false;
    if (alpha == 2.0 && !(full.P_C >= 0.999)) pass = false;
    detail += "alpha=" + fmt("%.2f", alpha) + " full=" + fmt("%.5f", full.F_out) + " eff=" + fmt("%.5f", eff.F_out) +
              " P_C=" + fmt("%.5f", full.P_C) + "; ";
  }
  return {pass, detail};
}

Outcome dephasing() {
  GateConfig c = decoherence_config(2.0);
  c.gamma = 0.1;
  const GateMetrics m = density_run(c, Mode::full);
  const double d = std::abs(m.P_C - m.F_out);
  return {d <= 0.02, "F_out=" + fmt("%.5f", m.F_out) + " P_C=" + fmt("%.5f", m.P_C) + " |diff|=" + fmt("%.4f", d)};
}

Outcome stochastic() {
  const GateConfig c = base_config(2, 5.0);
  GateRunOptions opt;
  opt.settings = settings_for(c.Delta, c.gate_time);
  const double f0 = run_gate(c, opt).F_avg;
  std::vector<double> dF;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    StochasticNoiseSpec spec;
    spec.eps_s = 0.1;
    spec.n_events = 1000;
    spec.seed = seed;
    const Schedule s = stochastic_schedule(c, spec);
    GateRunOptions o;
    o.settings = settings_for(max_detuning(s), c.gate_time);
    dF.push_back(std::abs(run_gate(c, s, c.gate_time, o).F_avg - f0));
  }
  std::sort(dF.begin(), dF.end());
  const double median = 0.5 * (dF[9] + dF[10]);
  return {median <= 1e-3, "F(0)=" + fmt("%.6f", f0) + " median |dF|=" + fmt("%.2e", median) + " max=" + fmt("%.2e", dF.back())};
}

double systematic_fidelity(const GateConfig& nominal, const GatePlan& plan, double eps) {
  SystematicNoiseSpec sn;
  sn.eps_a = eps;
  sn.targets = {{NoiseTarget::t_g, -1}};
  const GateConfig actual = apply_systematic(nominal, sn);
  const Schedule s = realize(plan, nominal, actual);
  const double t_stop = stop_time(plan, nominal, actual);
  GateRunOptions opt;
  opt.settings = settings_for(max_detuning(s), t_stop);
  return run_gate(actual, s, t_stop, opt).F_avg;
}

Outcome detuning_switch() {
  const GateConfig c = base_config(2, 5.0);
  const GatePlan fixed;
  const GatePlan sw{plan_detuning_switch(c, 0.05, 1)};
  const double fixed_loss = systematic_fidelity(c, fixed, 0.0) - systematic_fidelity(c, fixed, 0.05);
  const double switch_loss = systematic_fidelity(c, sw, 0.0) - systematic_fidelity(c, sw, 0.05);
  const double ratio = fixed_loss / switch_loss;
  return {ratio >= 10.0, "infidelity fixed=" + fmt("%.5f", fixed_loss) + " switch=" + fmt("%.5f", switch_loss) +
                             " ratio=" + fmt("%.2f", ratio) + " (need >= 10)"};
}

Outcome combined_noise() {
  auto config = [](int N) {
    GateConfig c = base_config(N, 5.0);
    c.kappa = c.gamma = c.kappa0 = c.gamma0 = 0.005;
    c.bus_dim = 8;
    c.kpo_levels = 8;
    return resolve(c);
  };
  auto run = [](const GateConfig& nominal, Mode mode) {
    SystematicNoiseSpec sn;
    sn.eps_a = 0.05;
    sn.targets = {{NoiseTarget::J, -1}, {NoiseTarget::Delta, -1}, {NoiseTarget::t_g, -1}};
    const GatePlan plan{plan_detuning_switch(nominal, 0.05, 1)};
    const GateConfig actual = apply_systematic(nominal, sn);
    const Schedule s = realize(plan, nominal, actual);
    const double t_stop = stop_time(plan, nominal, actual);
    GateRunOptions opt;
    opt.mode = mode;
    opt.density = true;
    opt.settings = settings_for(max_detuning(s), t_stop);
    return run_gate(actual, s, t_stop, opt).F_out;
  };
  const double f2_full = run(config(2), Mode::full);
  const double f2 = run(config(2), Mode::effective);
  const double f3 = run(config(3), Mode::effective);
  const double f4 = run(config(4), Mode::effective);
  const bool pass = std::abs(f2_full - 0.98) <= 0.01 && f2 > f3 && f3 > f4 && std::abs(f3 - 0.97) <= 0.03 &&
                    std::abs(f4 - 0.90) <= 0.03;
  return {pass, "N=2 full=" + fmt("%.5f", f2_full) + " (0.98 +- 0.01); effective N=2,3,4 = " + fmt("%.5f", f2) + ", " +
                    fmt("%.5f", f3) + " (0.97 +- 0.03), " + fmt("%.5f", f4) + " (0.90 +- 0.03)"};
}

Outcome cat_prep() {
  const double t0 = 1.7 / kK;
  const double fp = run_cat_prep(kK, 2.0, t0, 0).fidelity;
  const double fm = run_cat_prep(kK, 2.0, t0, 1).fidelity;
  const double np = run_cat_prep(kK, 2.0, t0, 0, 0.01 * kK, 0.01 * kK).fidelity;
  const double nm = run_cat_prep(kK, 2.0, t0, 1, 0.01 * kK, 0.01 * kK).fidelity;
  const bool pass = fp >= 0.99 && fm >= 0.99 && np > 0.95 && nm > 0.95;
  return {pass, "ideal F+=" + fmt("%.5f", fp) + " F-=" + fmt("%.5f", fm) + " (need >= 0.99); kappa=gamma=0.01K F+=" +
                    fmt("%.5f", np) + " F-=" + fmt("%.5f", nm) + " (need > 0.95)"};
}

double single_qubit_infidelity(SingleQubitTarget target, double tK, bool h_add) {
  const double tg = tK / kK;
  const SingleQubitParams p = design_single_qubit(target, tg, 2.0, h_add, true);
  return 1.0 - run_single_qubit_gate(kK, 4.0 * kK, p, single_qubit_target_matrix(target, tg), h_add, tg).fidelity;
}

Outcome single_qubit() {
  const double had = single_qubit_infidelity(SingleQubitTarget::hadamard, 5.0, true);
  const std::vector<double> grid{0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0};
  auto first_below = [&](SingleQubitTarget t) {
    for (double tK : grid)
      if (single_qubit_infidelity(t, tK, false) <= 1e-3) return tK;
    return std::numeric_limits<double>::infinity();
  };
  const double t_not = first_below(SingleQubitTarget::not_gate);
  const double t_had = first_below(SingleQubitTarget::hadamard);
  const bool pass = had <= 1e-4 && t_not < t_had;
  return {pass, "Hadamard with H_add at t=5/K: 1-F=" + fmt("%.3e", had) + " (need <= 1e-4); without H_add 1-F <= 1e-3 first at tK: NOT " +
                    fmt("%g", t_not) + ", Hadamard " + fmt("%g", t_had)};
}

Outcome property_suite() {
  const auto start = std::chrono::steady_clock::now();
  const std::string cmd = std::string(KERRCAT_PROPERTIES) + " --gtest_brief=1 > /dev/null 2>&1";
  const int raw = std::system(cmd.c_str());
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool ok = WIFEXITED(raw) && WEXITSTATUS(raw) == 0;
  return {ok && secs < 300.0, std::string(ok ? "all properties hold" : "property failures") + " in " + fmt("%.1f", secs) + " s"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"geometry identities", geometry_identities},
      {"closed form vs effective dynamics", closed_form_vs_effective},
      {"gate fidelity versus J", gate_fidelity_vs_J},
      {"error bias", error_bias},
      {"single-photon loss, full vs effective", photon_loss},
      {"pure dephasing, P_C vs F_out", dephasing},
      {"stochastic robustness", stochastic},
      {"detuning switch", detuning_switch},
      {"combined noise", combined_noise},
      {"cat-state preparation", cat_prep},
      {"single-qubit gates", single_qubit},
      {"property suite", property_suite},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!o.pass) ++failed;
    std::printf("criterion %2zu %-40s %s  [%.1f s] %s\n", i + 1, criteria[i].first.c_str(), o.pass ? "PASS" : "FAIL", secs,
                o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
