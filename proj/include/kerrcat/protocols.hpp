// Single-KPO protocols: cat-state preparation by a pump ramp, and
// single-qubit rotations by a single-photon drive (optionally assisted by a
// Josephson-junction term H_add).

#pragma once

#include "kerrcat/dynamics.hpp"
#include "kerrcat/gates.hpp"
#include "kerrcat/model.hpp"
#include "kerrcat/states.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace kerrcat {

// ---------------------------------------------------------------------------
// Cat-state preparation

/// alpha_t = alpha (t + t0) / t0 and Delta_q(t) = -K sin(pi (t + t0) / t0)
/// for t in [-t0, 0].
struct CatPrepSchedule {
  double K = kTwoPi * 5.0;
  double alpha = 2.0;
  double t0 = 0.0;

  void check(double t) const {
    if (!(t0 > 0.0)) throw std::invalid_argument("CatPrepSchedule: t0 must be positive");
    const double tol = 1e-12 * std::max(1.0, t0);
    if (t < -t0 - tol || t > tol) throw std::invalid_argument("CatPrepSchedule: t outside [-t0, 0]");
  }
  double progress(double t) const { return std::clamp((t + t0) / t0, 0.0, 1.0); }
  double alpha_t(double t) const { return alpha * progress(t); }
  double alpha_dot() const { return alpha / t0; }
  double Omega_p(double t) const { return K * alpha_t(t) * alpha_t(t); }
  double Delta_q(double t) const { return -K * std::sin(kPi * progress(t)); }
};

/// Omega_p(t)(a^dag^2 + a^2) - K a^dag^2 a^2 + Delta_q(t) a^dag a on one mode.
inline SparseOperator cat_prep_hamiltonian(const CatPrepSchedule& s, double t, int dim) {
  s.check(t);
  const HilbertSpace space = make_space({dim}, {"a"});
  const DenseMatrix a = local_annihilation(dim);
  const DenseMatrix a2 = a * a;
  const DenseMatrix h = s.Omega_p(t) * (a2 + a2.adjoint()) - s.K * a2.adjoint() * a2 + s.Delta_q(t) * a.adjoint() * a;
  return SparseOperator::from_dense(space, h);
}

inline TimeDependentOperator cat_prep_generator(const CatPrepSchedule& s, int dim) {
  const HilbertSpace space = make_space({dim}, {"a"});
  const DenseMatrix a = local_annihilation(dim);
  const DenseMatrix a2 = a * a;
  TimeDependentOperator h(space);
  h.add(SparseOperator::from_dense(space, -s.K * a2.adjoint() * a2));
  h.add(SparseOperator::from_dense(space, a2 + a2.adjoint()), [s](double t) { return cplx{s.Omega_p(t)}; });
  h.add(SparseOperator::from_dense(space, a.adjoint() * a), [s](double t) { return cplx{s.Delta_q(t)}; });
  return h;
}

/// Mean over the ramp of min(|Delta_q - 4 K alpha_t^2| / (2 K alpha_t),
/// |Delta_q - 4 K alpha_t^2| / sqrt((alpha_t Delta_q)^2 + alpha_dot^2)): how
/// well the displaced frame keeps the photon number fixed. Larger is better.
inline double cat_prep_margin(const CatPrepSchedule& s, int samples = 400) {
  double acc = 0.0;
  for (int k = 0; k < samples; ++k) {
    const double t = -s.t0 + s.t0 * (k + 0.5) / samples;
    const double at = s.alpha_t(t);
    const double dq = s.Delta_q(t);
    const double gap = std::abs(dq - 4.0 * s.K * at * at);
    const double r1 = gap / (2.0 * s.K * at);
    const double r2 = gap / std::sqrt(at * dq * at * dq + s.alpha_dot() * s.alpha_dot());
    acc += std::min(r1, r2);
  }
  return acc / samples;
}

struct CatPrepResult {
  double fidelity = 0.0;      // <C+-| rho(0) |C+->
  double odd_population = 0.0;  // population of the parity opposite to the target
  double margin = 0.0;
  DensityMatrix rho;
};

/// Initial Fock state 0 prepares |C+>, Fock 1 prepares |C->.
inline CatPrepResult run_cat_prep(double K, double alpha, double t0, int initial_fock, double kappa = 0.0, double gamma = 0.0,
                                  int dim = 0, std::optional<IntegratorSettings> settings = std::nullopt) {
  if (initial_fock != 0 && initial_fock != 1) throw std::invalid_argument("run_cat_prep: initial state must be Fock 0 or 1");
  if (!(t0 > 0.0)) throw std::invalid_argument("run_cat_prep: t0 must be positive");
  if (dim <= 0) dim = default_kpo_dim(alpha);
  const CatPrepSchedule s{K, alpha, t0};
  const TimeDependentOperator h = cat_prep_generator(s, dim);
  const HilbertSpace& space = h.space();
  std::vector<CollapseOp> collapse;
  if (kappa > 0.0) collapse.push_back({annihilation(space, "a"), kappa, "kappa"});
  if (gamma > 0.0) collapse.push_back({number(space, "a"), gamma, "gamma"});
  IntegratorSettings is = settings ? *settings : IntegratorSettings{};
  if (!settings) is.max_step = t0 / 1000.0;
  const int occ[] = {initial_fock};
  const DensityMatrix rho0 = DensityMatrix::from_pure(StateVector::basis(space, occ));
  auto res = evolve_density(h, collapse, rho0, {-t0, 0.0}, is);
  CatPrepResult out;
  out.rho = res.final_state();
  const CatParity target = initial_fock == 0 ? CatParity::even : CatParity::odd;
  out.fidelity = fidelity(out.rho, cat_state(space, "a", alpha, target));
  for (int n = (target == CatParity::even ? 1 : 0); n < dim; n += 2) out.odd_population += std::real(out.rho.entries()(n, n));
  out.margin = cat_prep_margin(s);
  return out;
}

// ---------------------------------------------------------------------------
// Single-qubit rotations

struct SingleQubitParams {
  cplx xi_p{0.0};        // single-photon drive
  double Delta_q = 0.0;  // detuning term Delta_q a^dag a
  double xi_J = 0.0;     // effective Josephson energy of H_add
  double phi_a = 0.0;    // <= 0 means 2 alpha
  double omega_c = 0.0;  // <= 0 means 800 K
};

struct EffectiveSingleQubit {
  double Delta_tilde = 0.0;
  double Omega1 = 0.0;
  double phi = 0.0;
  double Xi = 0.0;
  double theta_rot = 0.0;
};

/// Delta~ = Delta_q alpha^2 (coth alpha^2 - tanh alpha^2), or -xi_J / (alpha sqrt(2 pi))
/// with H_add; Omega_1 e^{-i phi} = xi alpha sqrt(tanh alpha^2) + xi^* alpha sqrt(coth alpha^2).
inline EffectiveSingleQubit effective_single_qubit(const SingleQubitParams& p, double alpha, bool use_h_add = false) {
  if (!(alpha > 0.0)) throw std::invalid_argument("effective_single_qubit: alpha must be positive");
  const double a2 = alpha * alpha;
  const double th = std::tanh(a2);
  const double ct = 1.0 / th;
  EffectiveSingleQubit e;
  if (use_h_add) {
    if (p.Delta_q != 0.0) throw std::invalid_argument("effective_single_qubit: the H_add path requires Delta_q = 0");
    e.Delta_tilde = -p.xi_J / (alpha * std::sqrt(kTwoPi));
  } else {
    e.Delta_tilde = p.Delta_q * a2 * (ct - th);
  }
  const cplx w = p.xi_p * alpha * std::sqrt(th) + std::conj(p.xi_p) * alpha * std::sqrt(ct);
  e.Omega1 = std::abs(w);
  e.phi = e.Omega1 > 0.0 ? -std::arg(w) : 0.0;
  e.Xi = std::sqrt(e.Delta_tilde * e.Delta_tilde / 4.0 + e.Omega1 * e.Omega1);
  e.theta_rot = std::atan2(2.0 * e.Omega1, e.Delta_tilde);
  return e;
}

/// U_1 in the ordered basis (|C->, |C+>).
inline DenseMatrix u1_closed_form(double Xi, double theta_rot, double phi, double t) {
  if (Xi < 0.0) throw std::invalid_argument("u1_closed_form: Xi must be non-negative");
  const double c = std::cos(Xi * t);
  const double s = std::sin(Xi * t);
  DenseMatrix u(2, 2);
  u(0, 0) = cplx{c, -s * std::cos(theta_rot)};
  u(0, 1) = -kI * std::polar(1.0, -phi) * s * std::sin(theta_rot);
  u(1, 0) = -kI * std::polar(1.0, phi) * s * std::sin(theta_rot);
  u(1, 1) = cplx{c, s * std::cos(theta_rot)};
  return u;
}

/// Generator of u1_closed_form: (Delta~/2) diag(1, -1) with transverse
/// element <C-|H|C+> = Omega_1 e^{-i phi}.
inline DenseMatrix u1_generator(double Delta_tilde, double Omega1, double phi) {
  DenseMatrix h(2, 2);
  h(0, 0) = 0.5 * Delta_tilde;
  h(1, 1) = -0.5 * Delta_tilde;
  h(0, 1) = Omega1 * std::polar(1.0, -phi);
  h(1, 0) = Omega1 * std::polar(1.0, phi);
  return h;
}

/// cos(phi_a (a + a^dag)) on the first `dim` Fock levels, evaluated in a
/// larger space so that the kept block is free of truncation error.
inline DenseMatrix cos_quadrature(int dim, double phi_a) {
  const int big = std::max(4 * dim, dim + 120);
  const DenseMatrix a = local_annihilation(big);
  Eigen::SelfAdjointEigenSolver<DenseMatrix> es(a + a.adjoint());
  const DenseVector c = (phi_a * es.eigenvalues().array()).cos().cast<cplx>().matrix();
  const DenseMatrix full = es.eigenvectors() * c.asDiagonal() * es.eigenvectors().adjoint();
  return full.topLeftCorner(dim, dim);
}

/// Rotating-wave cat-manifold splitting produced by H_add per unit xi_J:
/// <C-|diag C|C-> - <C+|diag C|C+>.
inline double h_add_splitting_per_xi(double alpha, double phi_a, int dim) {
  const DenseMatrix c = cos_quadrature(dim, phi_a);
  const DenseVector d = c.diagonal();
  const DenseVector cp = local_cat(dim, alpha, CatParity::even);
  const DenseVector cm = local_cat(dim, alpha, CatParity::odd);
  double ep = 0.0, em = 0.0;
  for (int n = 0; n < dim; ++n) {
    ep += std::norm(cp(n)) * std::real(d(n));
    em += std::norm(cm(n)) * std::real(d(n));
  }
  return em - ep;
}

enum class SingleQubitTarget { hadamard, not_gate, identity };

inline SingleQubitTarget single_qubit_target_from_string(const std::string& s) {
  if (s == "hadamard") return SingleQubitTarget::hadamard;
  if (s == "not") return SingleQubitTarget::not_gate;
  if (s == "identity") return SingleQubitTarget::identity;
  throw std::invalid_argument("unknown single-qubit target '" + s + "'");
}

/// Drive parameters realizing the target in time t_gate (Xi t = pi/2, phi = 0).
/// With H_add, xi_J follows from the closed form Delta~ = -xi_J / (alpha sqrt(2 pi)),
/// or from the exact rotating-wave splitting when `exact_h_add` is set.
inline SingleQubitParams design_single_qubit(SingleQubitTarget target, double t_gate, double alpha, bool use_h_add,
                                             bool exact_h_add = false, int dim = 0) {
  if (!(t_gate > 0.0)) throw std::invalid_argument("design_single_qubit: t_gate must be positive");
  SingleQubitParams p;
  if (target == SingleQubitTarget::identity) return p;
  const double Xi = kPi / (2.0 * t_gate);
  const double theta = target == SingleQubitTarget::hadamard ? kPi / 4.0 : kPi / 2.0;
  const double Omega1 = Xi * std::sin(theta);
  const double Delta_tilde = 2.0 * Xi * std::cos(theta);
  const double a2 = alpha * alpha;
  p.xi_p = Omega1 / (alpha * (std::sqrt(std::tanh(a2)) + std::sqrt(1.0 / std::tanh(a2))));
  if (std::abs(Delta_tilde) < 1e-15 * Xi) return p;
  if (use_h_add) {
    p.phi_a = 2.0 * alpha;
    if (exact_h_add) {
      if (dim <= 0) dim = default_kpo_dim(alpha);
      p.xi_J = Delta_tilde / h_add_splitting_per_xi(alpha, p.phi_a, dim);
    } else {
      p.xi_J = -Delta_tilde * alpha * std::sqrt(kTwoPi);
    }
  } else {
    p.Delta_q = Delta_tilde / (a2 * (1.0 / std::tanh(a2) - std::tanh(a2)));
  }
  return p;
}

inline DenseMatrix single_qubit_target_matrix(SingleQubitTarget target, double t_gate) {
  if (target == SingleQubitTarget::identity) return DenseMatrix::Identity(2, 2);
  const double theta = target == SingleQubitTarget::hadamard ? kPi / 4.0 : kPi / 2.0;
  return u1_closed_form(kPi / (2.0 * t_gate), theta, 0.0, t_gate);
}

/// Full single-KPO Hamiltonian: Kerr + Delta_q a^dag a + xi a + xi^* a^dag,
/// plus H_add(t) = xi_J cos[phi_a (a e^{-i w_c t} + a^dag e^{i w_c t})] when
/// requested. The cat energy is subtracted.
inline TimeDependentOperator single_qubit_generator(double K, double Omega_p, const SingleQubitParams& p, bool use_h_add,
                                                    int dim) {
  const HilbertSpace space = make_space({dim}, {"a"});
  const DenseMatrix a = local_annihilation(dim);
  DenseMatrix h0 = local_kerr(dim, K, Omega_p) - (Omega_p * Omega_p / K) * DenseMatrix::Identity(dim, dim);
  h0 += p.Delta_q * a.adjoint() * a + p.xi_p * a + std::conj(p.xi_p) * a.adjoint();
  TimeDependentOperator h(space);
  h.add(SparseOperator::from_dense(space, h0));
  if (use_h_add && p.xi_J != 0.0) {
    const double alpha = std::sqrt(Omega_p / K);
    const double phi_a = p.phi_a > 0.0 ? p.phi_a : 2.0 * alpha;
    const double omega_c = p.omega_c > 0.0 ? p.omega_c : 800.0 * K;
    const DenseMatrix c = p.xi_J * cos_quadrature(dim, phi_a);
    // cos(phi_a X_t) = R C R^dag with R = e^{i w_c t a^dag a}: entry (j, k) picks up e^{i w_c t (j - k)}.
    for (int d = -(dim - 1); d <= dim - 1; ++d) {
      DenseMatrix band = DenseMatrix::Zero(dim, dim);
      double size = 0.0;
      for (int j = std::max(0, d); j < std::min(dim, dim + d); ++j) {
        band(j, j - d) = c(j, j - d);
        size = std::max(size, std::abs(c(j, j - d)));
      }
      if (size < 1e-13 * std::abs(p.xi_J)) continue;
      if (d == 0) {
        h.add(SparseOperator::from_dense(space, band));
      } else {
        h.add(SparseOperator::from_dense(space, band), [omega_c, d](double t) { return std::polar(1.0, omega_c * t * d); });
      }
    }
  }
  return h;
}

struct SingleQubitResult {
  double fidelity = 0.0;
  DenseMatrix propagator;  // on (|C->, |C+>)
  double runtime_s = 0.0;
};

/// Average fidelity (D = 2) of the simulated gate on the cat manifold against
/// `target`, a 2x2 matrix in the ordered basis (|C->, |C+>).
inline SingleQubitResult run_single_qubit_gate(double K, double Omega_p, const SingleQubitParams& p, const DenseMatrix& target,
                                               bool use_h_add, double t_gate, int dim = 0,
                                               std::optional<IntegratorSettings> settings = std::nullopt) {
  if (!(t_gate > 0.0)) throw std::invalid_argument("run_single_qubit_gate: t_gate must be positive");
  if (target.rows() != 2 || target.cols() != 2) throw std::invalid_argument("run_single_qubit_gate: target must be 2x2");
  const auto start = std::chrono::steady_clock::now();
  const double alpha = std::sqrt(Omega_p / K);
  if (dim <= 0) dim = default_kpo_dim(alpha);
  const TimeDependentOperator h = single_qubit_generator(K, Omega_p, p, use_h_add, dim);
  DenseMatrix basis(dim, 2);
  basis.col(0) = local_cat(dim, alpha, CatParity::odd);
  basis.col(1) = local_cat(dim, alpha, CatParity::even);
  IntegratorSettings is;
  if (settings) {
    is = *settings;
  } else {
    const double omega_c = p.omega_c > 0.0 ? p.omega_c : 800.0 * K;
    is = settings_for(use_h_add && p.xi_J != 0.0 ? omega_c : 0.0, t_gate);
  }
  const DenseMatrix final_cols = evolve_columns(h, basis, {0.0, t_gate}, is);
  SingleQubitResult out;
  out.propagator = basis.adjoint() * final_cols;
  out.fidelity = average_gate_fidelity(target.adjoint() * out.propagator, 2);
  out.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

/// |C+-i> as the superposition (|C+> +- i |C->)/sqrt(2) on one mode.
inline DenseVector local_cat_y(int dim, double alpha, int sign) {
  if (sign != 1 && sign != -1) throw std::invalid_argument("local_cat_y: sign must be +1 or -1");
  DenseVector v = local_cat(dim, alpha, CatParity::even) + cplx{0.0, static_cast<double>(sign)} * local_cat(dim, alpha, CatParity::odd);
  return v / v.norm();
}

}  // namespace kerrcat
