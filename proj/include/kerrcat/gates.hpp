// Molmer-Sorensen gate geometry, closed-form propagator, detuning-switch
// planning, and the gate metrics (average fidelity, output fidelity, P_C).

#pragma once

#include "kerrcat/dynamics.hpp"
#include "kerrcat/model.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

namespace kerrcat {

// ---------------------------------------------------------------------------
// Geometry

/// chi(t) = (2 i J alpha / Delta)(1 - e^{i Delta t}).
inline cplx chi(double t, const GateConfig& config_in) {
  const GateConfig c = resolve(config_in);
  if (t < 0.0) throw std::invalid_argument("chi: t must be >= 0");
  const double r = 2.0 * c.J * c.alpha() / c.Delta;
  return kI * r * (1.0 - std::polar(1.0, c.Delta * t));
}

/// beta(t) = (2 J alpha / Delta)^2 (sin(Delta t) - Delta t).
inline double beta(double t, const GateConfig& config_in) {
  const GateConfig c = resolve(config_in);
  if (t < 0.0) throw std::invalid_argument("beta: t must be >= 0");
  const double r = 2.0 * c.J * c.alpha() / c.Delta;
  return r * r * (std::sin(c.Delta * t) - c.Delta * t);
}

struct MsGeometry {
  double r = 0.0;       // loop radius 2 J alpha / Delta
  double theta = 0.0;   // Delta t_g
  double t_g = 0.0;
  double beta_tg = 0.0;
  double A = 0.0;       // enclosed area pi m r^2
};

inline MsGeometry geometry(const GateConfig& config_in) {
  const GateConfig c = resolve(config_in);
  MsGeometry g;
  g.r = 2.0 * c.J * c.alpha() / c.Delta;
  g.t_g = c.gate_time;
  g.theta = c.Delta * g.t_g;
  g.beta_tg = beta(g.t_g, c);
  g.A = kPi * c.m * g.r * g.r;
  return g;
}

/// t_g = 2 pi m / Delta (or the explicit gate time of the config).
inline double gate_time(const GateConfig& config_in) { return resolve(config_in).gate_time; }

/// Bus displacement and geometric phase accumulated under a schedule.
struct LoopState {
  cplx chi{0.0};
  double beta = 0.0;
};

namespace detail {
/// Contribution of one constant segment of duration u with drive
/// f = c e^{i(phi0 + Delta s)}, c = 2 J alpha.
inline LoopState segment_loop(double c, double Delta, double phi0, double u) {
  LoopState s;
  if (Delta == 0.0) {
    s.chi = c * std::polar(1.0, phi0) * u;
    return s;
  }
  s.chi = c * std::polar(1.0, phi0) * (std::polar(1.0, Delta * u) - 1.0) / (kI * Delta);
  const double r = c / Delta;
  s.beta = r * r * (std::sin(Delta * u) - Delta * u);
  return s;
}

inline LoopState compose(const LoopState& first, const LoopState& second) {
  return {first.chi + second.chi, first.beta + second.beta + std::imag(first.chi * std::conj(second.chi))};
}
}  // namespace detail

/// chi and beta from t_from to t_to (0 <= t_from <= t_to) under `schedule`.
inline LoopState loop_state(const Schedule& schedule, double alpha, double t_to, double t_from = 0.0) {
  if (t_from < 0.0 || t_to < t_from) throw std::invalid_argument("loop_state: need 0 <= t_from <= t_to");
  LoopState acc;
  double t = t_from;
  while (t < t_to) {
    const std::size_t k = schedule.segment(t);
    const bool last = k + 1 == schedule.num_segments();
    const double seg_end = last ? t_to : std::min(t_to, schedule.end(k));
    const LoopState piece = detail::segment_loop(2.0 * schedule.J(k) * alpha, schedule.Delta(k), schedule.phase(t), seg_end - t);
    acc = detail::compose(acc, piece);
    t = seg_end;
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Closed-form propagator

namespace detail {
/// Columns are the product sigma_x eigenvectors in the (|C+>, |C->) basis;
/// bit (N - n) of the column index set means sigma_x^n = -1.
inline DenseMatrix sigma_x_eigenbasis(int N) {
  const std::size_t D = std::size_t{1} << N;
  DenseMatrix v(static_cast<Eigen::Index>(D), static_cast<Eigen::Index>(D));
  const double norm = std::pow(0.5, 0.5 * N);
  for (std::size_t row = 0; row < D; ++row)
    for (std::size_t col = 0; col < D; ++col) {
      // <row|x>: product over qubits of (1 if basis C+, x if basis C-).
      int sign = 1;
      for (int n = 0; n < N; ++n) {
        const bool odd = (row >> n) & 1u;
        const bool minus = (col >> n) & 1u;
        if (odd && minus) sign = -sign;
      }
      v(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col)) = sign * norm;
    }
  return v;
}

inline double sx_eigenvalue(int N, std::size_t col) {
  int minus = 0;
  for (int n = 0; n < N; ++n) minus += (col >> n) & 1u;
  return 0.5 * (N - 2 * minus);
}
}  // namespace detail

/// D_bus(-i chi s) e^{-i beta s^2} on each S_x eigenspace s, as a dense
/// matrix on the effective space [a0, q1..qN].
inline DenseMatrix ms_propagator(const GateConfig& config_in, cplx chi_value, double beta_value) {
  const GateConfig c = resolve(config_in);
  const DenseMatrix v = detail::sigma_x_eigenbasis(c.N);
  const Eigen::Index D = v.rows();
  const Eigen::Index B = c.bus_dim;
  DenseMatrix u = DenseMatrix::Zero(B * D, B * D);
  for (Eigen::Index k = 0; k < D; ++k) {
    const double s = detail::sx_eigenvalue(c.N, static_cast<std::size_t>(k));
    const DenseMatrix bus = local_displacement(c.bus_dim, -kI * chi_value * s) * std::polar(1.0, -beta_value * s * s);
    const DenseMatrix proj = v.col(k) * v.col(k).adjoint();
    // Row-major layout: bus index is the slow index.
    for (Eigen::Index i = 0; i < B; ++i)
      for (Eigen::Index j = 0; j < B; ++j)
        if (bus(i, j) != cplx{0.0}) u.block(i * D, j * D, D, D) += bus(i, j) * proj;
  }
  return u;
}

/// U_MS(t) for the constant-detuning schedule of the config.
inline DenseMatrix ms_closed_form(double t, const GateConfig& config_in) {
  const GateConfig c = resolve(config_in);
  return ms_propagator(c, chi(t, c), beta(t, c));
}

/// Ideal gate exp(i (pi/2) S_x^2) on the 2^N computational subspace.
inline DenseMatrix ms_target(int N) {
  const DenseMatrix v = detail::sigma_x_eigenbasis(N);
  DenseVector phases(v.cols());
  for (Eigen::Index k = 0; k < v.cols(); ++k) {
    const double s = detail::sx_eigenvalue(N, static_cast<std::size_t>(k));
    phases(k) = std::polar(1.0, 0.5 * kPi * s * s);
  }
  return v * phases.asDiagonal() * v.adjoint();
}

/// Block of an effective-space operator with the bus in |0> on both sides.
inline DenseMatrix bus_vacuum_block(const DenseMatrix& u, int N) {
  const Eigen::Index D = Eigen::Index{1} << N;
  return u.topLeftCorner(D, D);
}

// ---------------------------------------------------------------------------
// Metrics

/// (Tr M M^dag + |Tr M|^2) / (D^2 + D).
inline double average_gate_fidelity(const DenseMatrix& M, int D) {
  if (D < 1 || M.rows() != D || M.cols() != D) throw std::invalid_argument("average_gate_fidelity: M must be D x D");
  const double tr_mm = std::real((M * M.adjoint()).trace());
  const double tr = std::norm(M.trace());
  return (tr_mm + tr) / (static_cast<double>(D) * D + D);
}

/// Ideal output U_target |input> on the full space (bus in |0>).
inline StateVector ideal_output(const GateConfig& config_in, const QubitBasisState& input) {
  const GateConfig c = resolve(config_in);
  const DenseMatrix target = ms_target(c.N);
  const std::vector<StateVector> basis = computational_basis(c);
  std::size_t in = 0;
  for (int n = 0; n < c.N; ++n) in = (in << 1) | (input.parities.at(static_cast<std::size_t>(n)) == CatParity::odd ? 1u : 0u);
  DenseVector out = DenseVector::Zero(static_cast<Eigen::Index>(basis.front().space().dimension()));
  for (std::size_t k = 0; k < basis.size(); ++k) out += target(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(in)) * basis[k].amplitudes();
  return StateVector::normalized(basis.front().space(), out);
}

inline StateVector ideal_output_effective(const GateConfig& config_in, const QubitBasisState& input) {
  const GateConfig c = resolve(config_in);
  const DenseMatrix target = ms_target(c.N);
  const std::vector<StateVector> basis = effective_computational_basis(c);
  std::size_t in = 0;
  for (int n = 0; n < c.N; ++n) in = (in << 1) | (input.parities.at(static_cast<std::size_t>(n)) == CatParity::odd ? 1u : 0u);
  DenseVector out = DenseVector::Zero(static_cast<Eigen::Index>(basis.front().space().dimension()));
  for (std::size_t k = 0; k < basis.size(); ++k) out += target(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(in)) * basis[k].amplitudes();
  return StateVector::normalized(basis.front().space(), out);
}

inline QubitBasisState all_even_input(int N) { return {std::vector<CatParity>(static_cast<std::size_t>(N), CatParity::even), 0}; }

/// F_out = <psi_out| rho |psi_out>, rho on the full space.
inline double output_fidelity(const DensityMatrix& rho, const GateConfig& config, const QubitBasisState& input) {
  return fidelity(rho, ideal_output(config, input));
}

/// P_C = (1/N) sum_n <C+|rho_n|C+> + <C-|rho_n|C->, rho_n the reduced state of KPO n.
inline double no_leakage(const DensityMatrix& rho, const GateConfig& config_in) {
  const GateConfig c = resolve(config_in);
  require_same_space(rho.space(), full_space(c), "no_leakage");
  const KpoLocal loc = kpo_local(c);
  double acc = 0.0;
  for (int n = 1; n <= c.N; ++n) {
    const DenseMatrix rn = rho.reduced(static_cast<std::size_t>(n));
    acc += std::real(loc.cat_plus.dot(rn * loc.cat_plus)) + std::real(loc.cat_minus.dot(rn * loc.cat_minus));
  }
  return acc / c.N;
}

/// || U(t_g, tau) P U(tau, 0) - P U(t_g, 0) ||_max with P = sigma_x^n (or
/// sigma_z^n when `pauli` is 'z'), all from closed forms.
inline double verify_error_bias(const GateConfig& config_in, double tau_err, int n, char pauli = 'x') {
  const GateConfig c = resolve(config_in);
  const double tg = c.gate_time;
  if (!(tau_err > 0.0) || !(tau_err < tg)) throw std::invalid_argument("verify_error_bias: need 0 < tau_err < t_g");
  if (n < 1 || n > c.N) throw std::invalid_argument("verify_error_bias: qubit index out of range");
  const Schedule s = nominal_schedule(c);
  const LoopState first = loop_state(s, c.alpha(), tau_err);
  const LoopState second = loop_state(s, c.alpha(), tg, tau_err);
  const LoopState whole = loop_state(s, c.alpha(), tg);
  const DenseMatrix p = pauli == 'z' ? sigma_z(c, n).dense() : sigma_x(c, n).dense();
  const DenseMatrix lhs = ms_propagator(c, second.chi, second.beta) * p * ms_propagator(c, first.chi, first.beta);
  const DenseMatrix rhs = p * ms_propagator(c, whole.chi, whole.beta);
  return max_abs(lhs - rhs);
}

// ---------------------------------------------------------------------------
// Detuning switch

struct SwitchPlan {
  double eps = 0.0;
  double tau = 0.0;          // switch time 2 pi m / Delta_before
  double Delta_before = 0.0;
  double Delta_after = 0.0;
  int m = 1;
  int m_prime = 1;
  double t_end = 0.0;        // tau + 2 pi m' / Delta_after
};

/// Delta = 4 sqrt(m) J alpha / sqrt(1 - eps) until tau = 2 pi m / Delta, then
/// Delta' = 4 sqrt(m') J alpha / sqrt(eps) for m' further loops.
inline SwitchPlan plan_detuning_switch(const GateConfig& config_in, double eps, int m_prime) {
  const GateConfig c = resolve(config_in);
  if (!(eps > 0.0) || !(eps < 1.0)) throw std::invalid_argument("plan_detuning_switch: eps must lie in (0, 1)");
  if (m_prime < 1 || m_prime > c.m) throw std::invalid_argument("plan_detuning_switch: need 1 <= m' <= m");
  SwitchPlan p;
  p.eps = eps;
  p.m = c.m;
  p.m_prime = m_prime;
  const double ja = c.J * c.alpha();
  p.Delta_before = 4.0 * std::sqrt(static_cast<double>(c.m)) * ja / std::sqrt(1.0 - eps);
  p.Delta_after = 4.0 * std::sqrt(static_cast<double>(m_prime)) * ja / std::sqrt(eps);
  p.tau = kTwoPi * c.m / p.Delta_before;
  p.t_end = p.tau + kTwoPi * m_prime / p.Delta_after;
  return p;
}

inline Schedule switch_schedule(const SwitchPlan& p, double J) {
  return Schedule({0.0, p.tau, p.t_end}, {J, J}, {p.Delta_before, p.Delta_after});
}

/// Planned protocol: a constant detuning or a switched one.
struct GatePlan {
  std::optional<SwitchPlan> switch_plan;

  double t_end(const GateConfig& nominal) const { return switch_plan ? switch_plan->t_end : resolve(nominal).gate_time; }
};

/// Schedule executed by an (possibly perturbed) `actual` config when the
/// protocol was planned with `nominal`: J comes from `actual`, the planned
/// detunings are scaled by actual.Delta / nominal.Delta.
inline Schedule realize(const GatePlan& plan, const GateConfig& nominal_in, const GateConfig& actual_in) {
  const GateConfig nominal = resolve(nominal_in);
  const GateConfig actual = resolve(actual_in);
  const double delta_factor = actual.Delta / nominal.Delta;
  if (plan.switch_plan) return switch_schedule(*plan.switch_plan, actual.J).scaled(1.0, delta_factor);
  return Schedule::constant(actual.J, nominal.Delta * delta_factor, nominal.gate_time);
}

/// Time at which the gate is stopped. A gate-time error delta = time_scale - 1
/// stretches a constant-detuning gate uniformly. On a switched plan the
/// planned interval (tau, t_end) absorbs it: delta = -eps stops at tau.
inline double stop_time(const GatePlan& plan, const GateConfig& nominal_in, const GateConfig& actual_in) {
  const GateConfig nominal = resolve(nominal_in);
  const GateConfig actual = resolve(actual_in);
  const double delta = actual.time_scale - 1.0;
  if (!plan.switch_plan) return nominal.gate_time * actual.time_scale;
  const SwitchPlan& p = *plan.switch_plan;
  if (delta >= 0.0) return p.t_end * actual.time_scale;
  const double frac = std::min(1.0, -delta / p.eps);
  return p.t_end - (p.t_end - p.tau) * frac;
}

// ---------------------------------------------------------------------------
// Running a gate

enum class Mode { full, effective };

inline std::string to_string(Mode m) { return m == Mode::full ? "full" : "effective"; }

inline Mode mode_from_string(const std::string& s) {
  if (s == "full") return Mode::full;
  if (s == "effective") return Mode::effective;
  throw std::invalid_argument("unknown mode '" + s + "'");
}

struct GateRunOptions {
  Mode mode = Mode::full;
  bool density = false;             // master equation (F_out, P_C) instead of the propagator (F_avg)
  QubitBasisState input;            // empty parities means all |C+>
  std::optional<IntegratorSettings> settings;
};

struct GateMetrics {
  double t_g = 0.0;
  double t_stop = 0.0;
  double F_avg = std::numeric_limits<double>::quiet_NaN();
  double F_out = std::numeric_limits<double>::quiet_NaN();
  double P_C = std::numeric_limits<double>::quiet_NaN();
  double chi_residual = 0.0;
  double beta_total = 0.0;
  double runtime_s = 0.0;
  StepStats stats;
};

inline double max_detuning(const Schedule& s) {
  double best = 0.0;
  for (std::size_t k = 0; k < s.num_segments(); ++k) best = std::max(best, std::abs(s.Delta(k)));
  return best;
}

/// Evolves the configured system under `schedule` until `t_stop` and scores
/// it against exp(i (pi/2) S_x^2).
inline GateMetrics run_gate(const GateConfig& config_in, const Schedule& schedule, double t_stop, const GateRunOptions& opt) {
  const GateConfig c = resolve(config_in);
  if (!(t_stop > 0.0)) throw std::invalid_argument("run_gate: stop time must be positive");
  const auto start = std::chrono::steady_clock::now();
  GateMetrics out;
  out.t_g = schedule.t_end();
  out.t_stop = t_stop;
  const LoopState loop = loop_state(schedule, c.alpha(), t_stop);
  out.chi_residual = std::abs(loop.chi);
  out.beta_total = loop.beta;

  const IntegratorSettings settings = opt.settings ? *opt.settings : settings_for(max_detuning(schedule), t_stop);
  const TimeDependentOperator h = opt.mode == Mode::full ? full_generator(c, schedule) : effective_generator(c, schedule);
  const QubitBasisState input = opt.input.parities.empty() ? all_even_input(c.N) : opt.input;
  const int D = 1 << c.N;

  if (!opt.density) {
    const std::vector<StateVector> basis = opt.mode == Mode::full ? computational_basis(c) : effective_computational_basis(c);
    const DenseMatrix b = basis_matrix(basis);
    const DenseMatrix final_cols = evolve_columns(h, b, {0.0, t_stop}, settings, &out.stats);
    const DenseMatrix u_sub = b.adjoint() * final_cols;
    const DenseMatrix M = ms_target(c.N).adjoint() * u_sub;
    out.F_avg = average_gate_fidelity(M, D);
    const StateVector ideal = opt.mode == Mode::full ? ideal_output(c, input) : ideal_output_effective(c, input);
    std::size_t in = 0;
    for (CatParity p : input.parities) in = (in << 1) | (p == CatParity::odd ? 1u : 0u);
    const DenseVector psi = final_cols.col(static_cast<Eigen::Index>(in));
    out.F_out = std::norm(ideal.amplitudes().dot(psi));
    if (opt.mode == Mode::full) {
      out.P_C = no_leakage(DensityMatrix::from_pure(StateVector(ideal.space(), psi)), c);
    } else {
      out.P_C = 1.0;
    }
  } else {
    const std::vector<CollapseOp> collapse = opt.mode == Mode::full ? collapse_ops_full(c) : collapse_ops_effective(c);
    const StateVector psi0 = opt.mode == Mode::full ? basis_state(c, input) : effective_basis_state(c, input);
    const auto res = evolve_density(h, collapse, DensityMatrix::from_pure(psi0), {0.0, t_stop}, settings);
    out.stats = res.stats;
    const DensityMatrix& rho = res.final_state();
    if (opt.mode == Mode::full) {
      out.F_out = output_fidelity(rho, c, input);
      out.P_C = no_leakage(rho, c);
    } else {
      out.F_out = fidelity(rho, ideal_output_effective(c, input));
      out.P_C = 1.0;
    }
  }
  out.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

/// Nominal constant-detuning gate of the config, stopped at gate_time * time_scale.
inline GateMetrics run_gate(const GateConfig& config_in, const GateRunOptions& opt) {
  const GateConfig c = resolve(config_in);
  return run_gate(c, nominal_schedule(c), c.gate_time * c.time_scale, opt);
}

}  // namespace kerrcat
