#include "kerrcat/protocols.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace kerrcat;

namespace {
constexpr double kK = kTwoPi * 5.0;

double phase_free_distance(const DenseMatrix& a, const DenseMatrix& b) {
  const cplx ov = (a.adjoint() * b).trace();
  const cplx phase = std::abs(ov) > 0.0 ? ov / std::abs(ov) : cplx{1.0};
  return max_abs(a * phase - b);
}
}  // namespace

TEST(CatPrepSchedule, Boundaries) {
  const CatPrepSchedule s{kK, 2.0, 1.7 / kK};
  EXPECT_EQ(s.Omega_p(-s.t0), 0.0);
  EXPECT_NEAR(s.Delta_q(-s.t0), 0.0, 1e-15);
  EXPECT_NEAR(s.Omega_p(0.0), kK * 4.0, 1e-12);
  EXPECT_NEAR(s.Delta_q(0.0), 0.0, 1e-12);
  EXPECT_NEAR(s.Delta_q(-s.t0 / 2.0), -kK, 1e-12);
  EXPECT_EQ(s.alpha_t(-s.t0), 0.0);
  EXPECT_EQ(s.alpha_t(0.0), 2.0);
}

TEST(CatPrepHamiltonian, EndpointsAndRange) {
  const CatPrepSchedule s{kK, 2.0, 0.1};
  const DenseMatrix start = cat_prep_hamiltonian(s, -0.1, 20).dense();
  EXPECT_LT(max_abs(start - local_kerr(20, kK, 0.0)), 1e-12);
  const DenseMatrix end = cat_prep_hamiltonian(s, 0.0, 20).dense();
  EXPECT_LT(max_abs(end - local_kerr(20, kK, 4.0 * kK)), 1e-9);
  EXPECT_THROW(cat_prep_hamiltonian(s, 0.01, 20), std::invalid_argument);
  EXPECT_THROW(cat_prep_hamiltonian(s, -0.2, 20), std::invalid_argument);
}

TEST(CatPrepHamiltonian, GeneratorMatchesInstantaneousOperator) {
  const CatPrepSchedule s{kK, 2.0, 0.1};
  const TimeDependentOperator h = cat_prep_generator(s, 20);
  for (double t : {-0.1, -0.07, -0.05, -0.01, 0.0})
    EXPECT_LT(max_abs((h.at(t) - cat_prep_hamiltonian(s, t, 20)).dense()), 1e-10);
}

TEST(CatPrep, ParityConservedExactly) {
  const CatPrepResult r = run_cat_prep(kK, 2.0, 3.0 / kK, 0);
  EXPECT_EQ(r.odd_population, 0.0);
  const CatPrepResult r1 = run_cat_prep(kK, 2.0, 3.0 / kK, 1);
  EXPECT_EQ(r1.odd_population, 0.0);
}

TEST(CatPrep, AdiabaticLimit) {
  for (int initial : {0, 1}) {
    const CatPrepResult r = run_cat_prep(kK, 2.0, 50.0 / kK, initial);
    EXPECT_GE(r.fidelity, 0.999) << "initial " << initial;
  }
}

TEST(CatPrep, DecoherenceLowersFidelity) {
  const CatPrepResult ideal = run_cat_prep(kK, 2.0, 3.0 / kK, 0);
  const CatPrepResult noisy = run_cat_prep(kK, 2.0, 3.0 / kK, 0, 0.01 * kK, 0.01 * kK);
  EXPECT_LT(noisy.fidelity, ideal.fidelity);
  EXPECT_NEAR(std::real(noisy.rho.trace()), 1.0, 1e-7);
}

TEST(CatPrep, RejectsInvalid) {
  EXPECT_THROW(run_cat_prep(kK, 2.0, 1.0, 2), std::invalid_argument);
  EXPECT_THROW(run_cat_prep(kK, 2.0, 0.0, 0), std::invalid_argument);
}

TEST(EffectiveSingleQubit, RealDrive) {
  SingleQubitParams p;
  p.xi_p = 0.3;
  const EffectiveSingleQubit e = effective_single_qubit(p, 2.0);
  EXPECT_EQ(e.phi, 0.0);
  EXPECT_NEAR(e.Omega1, 0.3 * 2.0 * (std::sqrt(std::tanh(4.0)) + std::sqrt(1.0 / std::tanh(4.0))), 1e-14);
}

TEST(EffectiveSingleQubit, BareDetuningExponentiallySmall) {
  SingleQubitParams p;
  p.Delta_q = 1.0;
  const EffectiveSingleQubit e = effective_single_qubit(p, 2.0);
  EXPECT_NEAR(1.0 / std::tanh(4.0) - std::tanh(4.0), 2.0 / std::sinh(8.0), 1e-15);
  EXPECT_NEAR(e.Delta_tilde, 4.0 * 2.0 / std::sinh(8.0), 1e-15);
  EXPECT_LT(e.Delta_tilde, 1e-2);
}

TEST(EffectiveSingleQubit, HAddDetuning) {
  SingleQubitParams p;
  p.xi_J = kTwoPi;
  const EffectiveSingleQubit e = effective_single_qubit(p, 2.0, true);
  EXPECT_NEAR(std::abs(e.Delta_tilde), kTwoPi / (2.0 * std::sqrt(kTwoPi)), 1e-12);
  p.Delta_q = 0.1;
  EXPECT_THROW(effective_single_qubit(p, 2.0, true), std::invalid_argument);
}

TEST(EffectiveSingleQubit, RotatingWaveSplittingSignAndSize) {
  const double split = h_add_splitting_per_xi(2.0, 4.0, 25);
  EXPECT_LT(split, 0.0);
  EXPECT_NEAR(std::abs(split) * 2.0 * std::sqrt(kTwoPi), 1.0, 0.02);
}

TEST(U1ClosedForm, HadamardAndNot) {
  DenseMatrix had(2, 2);
  had << 1.0, 1.0, 1.0, -1.0;
  had /= std::sqrt(2.0);
  DenseMatrix x(2, 2);
  x << 0.0, 1.0, 1.0, 0.0;
  const double Xi = 3.0;
  const double t = kPi / (2.0 * Xi);
  EXPECT_LT(phase_free_distance(u1_closed_form(Xi, kPi / 4.0, 0.0, t), had), 1e-12);
  EXPECT_LT(max_abs(u1_closed_form(Xi, kPi / 4.0, 0.0, t) - cplx{0.0, -1.0} * had), 1e-12);
  EXPECT_LT(phase_free_distance(u1_closed_form(Xi, kPi / 2.0, 0.0, t), x), 1e-12);
  EXPECT_LT(max_abs(u1_closed_form(Xi, 0.7, 0.3, 0.0) - DenseMatrix::Identity(2, 2)), 1e-15);
}

TEST(U1ClosedForm, MatchesExponentialOfGenerator) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int k = 0; k < 20; ++k) {
    SingleQubitParams p;
    p.xi_p = cplx{u(rng), u(rng)};
    p.Delta_q = 50.0 * u(rng);
    const double alpha = 1.0 + std::abs(u(rng));
    const EffectiveSingleQubit e = effective_single_qubit(p, alpha);
    const double t = std::abs(u(rng));
    const DenseMatrix ref = oracle::expm_pade(u1_generator(e.Delta_tilde, e.Omega1, e.phi), t);
    const DenseMatrix got = u1_closed_form(e.Xi, e.theta_rot, e.phi, t);
    EXPECT_LT(max_abs(got - ref), 1e-10);
    EXPECT_LT(max_abs(got.adjoint() * got - DenseMatrix::Identity(2, 2)), 1e-12);
  }
}

TEST(SingleQubitGate, UndrivenIsIdentity) {
  const SingleQubitParams p;
  const SingleQubitResult r = run_single_qubit_gate(kK, 4.0 * kK, p, DenseMatrix::Identity(2, 2), false, 1.0 / kK);
  EXPECT_NEAR(r.fidelity, 1.0, 1e-8);
}

TEST(SingleQubitGate, NotGateWithoutHAdd) {
  const double tg = 2.0 / kK;
  const SingleQubitParams p = design_single_qubit(SingleQubitTarget::not_gate, tg, 2.0, false);
  const SingleQubitResult r =
      run_single_qubit_gate(kK, 4.0 * kK, p, single_qubit_target_matrix(SingleQubitTarget::not_gate, tg), false, tg);
  EXPECT_GT(r.fidelity, 0.999);
  EXPECT_LT(max_abs(r.propagator.adjoint() * r.propagator - DenseMatrix::Identity(2, 2)), 1e-2);
}

TEST(SingleQubitGate, DesignMatchesClosedFormTarget) {
  const double tg = 5.0 / kK;
  for (SingleQubitTarget target : {SingleQubitTarget::hadamard, SingleQubitTarget::not_gate}) {
    const SingleQubitParams p = design_single_qubit(target, tg, 2.0, false);
    const EffectiveSingleQubit e = effective_single_qubit(p, 2.0);
    EXPECT_NEAR(e.Xi * tg, kPi / 2.0, 1e-12);
    EXPECT_LT(max_abs(u1_closed_form(e.Xi, e.theta_rot, e.phi, tg) - single_qubit_target_matrix(target, tg)), 1e-12);
  }
  const SingleQubitParams h = design_single_qubit(SingleQubitTarget::hadamard, tg, 2.0, true);
  const EffectiveSingleQubit eh = effective_single_qubit(h, 2.0, true);
  EXPECT_NEAR(eh.Xi * tg, kPi / 2.0, 1e-12);
  EXPECT_NEAR(eh.theta_rot, kPi / 4.0, 1e-12);
  EXPECT_EQ(single_qubit_target_from_string("not"), SingleQubitTarget::not_gate);
  EXPECT_THROW(single_qubit_target_from_string("cnot"), std::invalid_argument);
}

TEST(CatY, EqualWeightSuperposition) {
  for (int sign : {1, -1}) {
    const DenseVector y = local_cat_y(25, 2.0, sign);
    EXPECT_NEAR(y.norm(), 1.0, 1e-14);
    const cplx cp = local_cat(25, 2.0, CatParity::even).dot(y);
    const cplx cm = local_cat(25, 2.0, CatParity::odd).dot(y);
    EXPECT_NEAR(std::norm(cp), 0.5, 1e-14);
    EXPECT_NEAR(std::abs(cm / cp - cplx{0.0, static_cast<double>(sign)}), 0.0, 1e-14);
  }
  EXPECT_THROW(local_cat_y(25, 2.0, 0), std::invalid_argument);
}
