#include "kerrcat/model.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace kerrcat;

namespace {

GateConfig small_config(int N = 2) {
  GateConfig c;
  c.N = N;
  c.J = kTwoPi * 0.5;
  c.kpo_dim = 20;
  c.bus_dim = 4;
  return resolve(c);
}

DenseMatrix parity(int dim) {
  DenseMatrix p = DenseMatrix::Zero(dim, dim);
  for (int n = 0; n < dim; ++n) p(n, n) = n % 2 ? -1.0 : 1.0;
  return p;
}

}  // namespace

TEST(GateConfigResolve, DerivedFields) {
  GateConfig c;
  c.J = kTwoPi * 5.0;
  const GateConfig r = resolve(c);
  EXPECT_NEAR(r.alpha() * r.alpha(), r.Omega_p / r.K, 1e-12);
  EXPECT_NEAR(r.Delta, 4.0 * r.J * 2.0, 1e-9);
  EXPECT_NEAR(r.gate_time, 0.025, 1e-15);
  EXPECT_EQ(r.kpo_dim, 25);
}

TEST(GateConfigResolve, RejectsInvalid) {
  GateConfig c;
  c.N = 0;
  EXPECT_THROW(resolve(c), std::invalid_argument);
  c = GateConfig{};
  c.kappa = -1.0;
  EXPECT_THROW(resolve(c), std::invalid_argument);
  c = GateConfig{};
  c.J = 0.0;
  EXPECT_THROW(resolve(c), std::invalid_argument);
}

TEST(Units, TwoPiConvention) {
  EXPECT_NEAR(rad_per_us(5.0, true), 2.0 * M_PI * 5.0, 1e-12);
  EXPECT_EQ(rad_per_us(0.1, false), 0.1);
}

TEST(HKerr, CatsAreEigenstatesWithCatEnergy) {
  const double K = kTwoPi * 5.0;
  const double alpha = 2.0;
  const double Omega_p = K * alpha * alpha;
  const DenseMatrix h = local_kerr(50, K, Omega_p);
  for (CatParity par : {CatParity::even, CatParity::odd}) {
    const DenseVector v = local_cat(50, alpha, par);
    EXPECT_LT((h * v - (Omega_p * Omega_p / K) * v).norm(), 1e-6 * K);
  }
}

TEST(HKerr, PureKerrFockSpectrum) {
  const double K = 1.3;
  const DenseMatrix h = local_kerr(12, K, 0.0);
  for (int n = 0; n < 12; ++n) EXPECT_NEAR(std::real(h(n, n)), -K * n * (n - 1), 1e-12);
  EXPECT_LT(max_abs(h - DenseMatrix(h.diagonal().asDiagonal())), 1e-15);
}

TEST(HKerr, ConservesParity) {
  const DenseMatrix h = local_kerr(25, kTwoPi * 5.0, kTwoPi * 20.0);
  const DenseMatrix p = parity(25);
  EXPECT_EQ(max_abs(h * p - p * h), 0.0);
}

TEST(HKerr, EmbeddedOnRequestedMode) {
  const GateConfig c = small_config();
  const SparseOperator h1 = h_kerr(c, 1);
  const DenseMatrix ref = oracle::kron(oracle::kron(DenseMatrix::Identity(4, 4), local_kerr(20, c.K, c.Omega_p)),
                                       DenseMatrix::Identity(20, 20));
  EXPECT_LT(max_abs(h1.dense() - ref), 1e-9);
  EXPECT_THROW(h_kerr(c, 3), std::invalid_argument);
}

TEST(HInt, SingleKpoAtTimeZero) {
  const GateConfig c = small_config(1);
  const HilbertSpace s = full_space(c);
  const SparseOperator a0 = annihilation(s, "a0");
  const SparseOperator a1 = annihilation(s, "a1");
  const SparseOperator ref = (a1 * a0.dagger() + a1.dagger() * a0) * cplx{c.J};
  EXPECT_LT(max_abs((h_int(c, 0.0) - ref).dense()), 1e-14);
}

TEST(HInt, HermitianAtRandomTimes) {
  const GateConfig c = small_config();
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 20; ++k) {
    const double t = u(rng);
    const SparseOperator h = h_int(c, t);
    EXPECT_EQ(max_abs((h - h.dagger()).dense()), 0.0);
    const SparseOperator ht = h_total(c, t);
    EXPECT_LT(max_abs((ht - ht.dagger()).dense()), 1e-12);
  }
}

TEST(HInt, HalfTurnFlipsCouplingSign) {
  const GateConfig c = small_config();
  const double t = kPi / c.Delta;
  EXPECT_LT(max_abs((h_int(c, t) + h_int(c, 0.0)).dense()), 1e-12);
}

TEST(HDisplaced, VacuumIsExactEigenstate) {
  GateConfig c = small_config();
  for (int sign : {1, -1}) {
    const DenseMatrix h = h_displaced(c, sign).dense();
    EXPECT_LT(h.col(0).norm(), 1e-10);
  }
  EXPECT_THROW(h_displaced(c, 0), std::invalid_argument);
}

TEST(HDisplaced, GapNearFourKAlphaSquared) {
  GateConfig c = small_config();
  c.kpo_dim = 40;
  const DenseMatrix h = h_displaced(c, 1).dense();
  Eigen::SelfAdjointEigenSolver<DenseMatrix> es(h);
  const Eigen::VectorXd e = es.eigenvalues();
  const double top = e(e.size() - 1);
  const double next = e(e.size() - 3);  // e(size - 2) is the opposite well
  EXPECT_NEAR(top, 0.0, 1e-9);
  EXPECT_NEAR((top - next) / (4.0 * c.K * 4.0), 1.0, 0.15);
}

TEST(HDisplaced, ConjugatedKerrHamiltonian) {
  GateConfig c = small_config();
  c.kpo_dim = 60;
  const double alpha = c.alpha();
  for (int sign : {1, -1}) {
    const DenseMatrix D = oracle::expm_pade(cplx{0.0, sign * alpha} * (oracle::lowering(60).adjoint() - oracle::lowering(60)), 1.0);
    const DenseMatrix h = local_kerr(60, c.K, c.Omega_p) - cat_energy(c) * DenseMatrix::Identity(60, 60);
    const DenseMatrix conj = D * h * D.adjoint();
    const DenseMatrix ref = h_displaced(c, sign).dense();
    EXPECT_LT(max_abs(conj.topLeftCorner(20, 20) - ref.topLeftCorner(20, 20)), 1e-8 * c.K) << "sign " << sign;
  }
}

TEST(HEffSpinBoson, SingleQubitAtTimeZero) {
  const GateConfig c = small_config(1);
  const HilbertSpace s = effective_space(c);
  const SparseOperator a0 = annihilation(s, "a0");
  const SparseOperator ref = sigma_x(c, 1) * (a0 + a0.dagger()) * cplx{c.J * c.alpha()};
  EXPECT_LT(max_abs((h_eff_spin_boson(c, 0.0) - ref).dense()), 1e-12);
}

TEST(HEffSpinBoson, CommutesWithEverySigmaX) {
  const GateConfig c = small_config(3);
  for (double t : {0.0, 0.013, 0.2}) {
    const SparseOperator h = h_eff_spin_boson(c, t);
    for (int n = 1; n <= 3; ++n) EXPECT_LT(max_abs(commutator(h, sigma_x(c, n)).dense()), 1e-12);
  }
}

TEST(HEffSpinBoson, NoCouplingBetweenDifferentSxEigenvalues) {
  const GateConfig c = small_config(2);
  const DenseMatrix h = h_eff_spin_boson(c, 0.07).dense();
  const DenseMatrix sx = collective_sx(c).dense();
  Eigen::SelfAdjointEigenSolver<DenseMatrix> es(sx);
  const DenseMatrix v = es.eigenvectors();
  const DenseMatrix hv = v.adjoint() * h * v;
  const Eigen::VectorXd s = es.eigenvalues();
  for (Eigen::Index i = 0; i < s.size(); ++i)
    for (Eigen::Index j = 0; j < s.size(); ++j)
      if (std::abs(s(i) - s(j)) > 0.25) {
        EXPECT_LT(std::abs(hv(i, j)), 1e-12);
      }
}

TEST(HEffSpinBoson, MatchesCatProjectionOfFullCoupling) {
  GateConfig c = small_config(2);
  c.kpo_dim = 30;
  const double t = 0.031;
  const DenseMatrix full = h_int(c, t).dense();
  const DenseMatrix eff = h_eff_spin_boson(c, t).dense();
  std::vector<StateVector> fb, eb;
  for (int bus = 0; bus < c.bus_dim; ++bus)
    for (std::size_t k = 0; k < 4; ++k) {
      QubitBasisState q = qubit_basis_label(2, k);
      q.bus_fock = bus;
      fb.push_back(basis_state(c, q));
      eb.push_back(effective_basis_state(c, q));
    }
  const DenseMatrix bf = basis_matrix(fb);
  const DenseMatrix be = basis_matrix(eb);
  const DenseMatrix pf = bf.adjoint() * full * bf;
  const DenseMatrix pe = be.adjoint() * eff * be;
  EXPECT_LT(max_abs(pf - pe), 0.02 * max_abs(pe));
}

TEST(CollapseOps, Counts) {
  GateConfig c = small_config(2);
  EXPECT_TRUE(collapse_ops_full(c).empty());
  c.kappa = c.gamma = c.kappa0 = c.gamma0 = 0.1;
  EXPECT_EQ(collapse_ops_full(c).size(), 6u);
  for (const CollapseOp& op : collapse_ops_full(c)) EXPECT_EQ(op.rate, 0.1);
}

TEST(CollapseOps, EffectiveBitFlipLimit) {
  GateConfig c = small_config(1);
  c.kappa = 0.1;
  c.Omega_p = c.K * 16.0;  // alpha = 4
  const std::vector<CollapseOp> ops = collapse_ops_effective(c);
  ASSERT_EQ(ops.size(), 1u);
  EXPECT_NEAR(ops[0].rate, c.kappa * 16.0, 1e-9);
  EXPECT_LT(max_abs(ops[0].op.dense() - sigma_x(c, 1).dense()), 1e-13);
}

TEST(CollapseOps, EffectiveSigmaYWeight) {
  GateConfig c = small_config(1);
  c.kappa = 0.1;
  const std::vector<CollapseOp> ops = collapse_ops_effective(c);
  const DenseMatrix op = ops[0].op.dense();
  const DenseMatrix sy = sigma_y(c, 1).dense();
  const cplx w = (sy.adjoint() * op).trace() / (sy.adjoint() * sy).trace();
  EXPECT_NEAR(std::imag(w), 3.35e-4, 1e-6);
  EXPECT_NEAR(std::real(w), 0.0, 1e-15);
  EXPECT_NEAR(ops[0].rate, 0.1 * 4.0 / std::sqrt(1.0 - std::exp(-16.0)), 1e-12);
}

TEST(CollapseOps, IdentityDissipatorVanishes) {
  GateConfig c = small_config(1);
  c.gamma = 0.1;
  const std::vector<CollapseOp> ops = collapse_ops_effective(c);
  ASSERT_EQ(ops.size(), 1u);
  std::mt19937_64 rng(4);
  const DenseMatrix rho = oracle::random_hermitian(static_cast<int>(effective_space(c).dimension()), rng);
  const DenseMatrix L = ops[0].op.dense();
  const DenseMatrix d = L * rho * L.adjoint() - 0.5 * (L.adjoint() * L * rho + rho * L.adjoint() * L);
  EXPECT_LT(max_abs(d), 1e-14);
}

TEST(Projectors, CatProjector) {
  const GateConfig c = small_config(2);
  const DenseMatrix p = projector_cat(c).dense();
  EXPECT_LT(max_abs(p * p - p), 1e-10);
  EXPECT_LT(max_abs(p - p.adjoint()), 1e-14);
  EXPECT_NEAR(std::real(p.trace()), 4.0, 1e-10);
  const StateVector psi = basis_state(c, {{CatParity::even, CatParity::even}, 0});
  EXPECT_LT((p * psi.amplitudes() - psi.amplitudes()).norm(), 1e-12);
}

TEST(Projectors, KpoProjectorContainsCats) {
  GateConfig c = small_config(1);
  c.kpo_dim = 40;
  const DenseMatrix p = projector_kpo(c, 1).dense();
  EXPECT_LT(max_abs(p * p - p), 1e-10);
  EXPECT_NEAR(std::real(p.trace()), 4.0 * c.bus_dim, 1e-9);
  const StateVector psi = basis_state(c, {{CatParity::odd}, 2});
  EXPECT_LT((p * psi.amplitudes() - psi.amplitudes()).norm(), 1e-6);
}

TEST(Gap, ClosedFormAtAlphaTwo) {
  GateConfig c;
  c.K = kTwoPi * 5.0;
  c.Omega_p = 4.0 * c.K;
  EXPECT_NEAR(energy_gap(c), kTwoPi * 80.0, 1e-9);
}

TEST(Gap, ClosedFormApproachedFromAboveAsAlphaGrows) {
  GateConfig c = small_config(1);
  c.kpo_dim = 60;
  double previous = 0.0;
  for (double alpha : {1.5, 2.0, 2.5, 3.0}) {
    c.Omega_p = c.K * alpha * alpha;
    auto [values, vectors] = kerr_eigensystem(c.kpo_dim, c.K, c.Omega_p);
    const double ratio = (values(0) - values(2)) / energy_gap(c);
    EXPECT_LT(ratio, 1.0);
    EXPECT_GT(ratio, previous);
    previous = ratio;
  }
  EXPECT_GT(previous, 0.9);
}

TEST(Leakage, ZeroCoupling) {
  GateConfig c;
  c.J = 0.0;
  c.Delta = kTwoPi * 10.0;
  EXPECT_EQ(leakage_estimate(c), 0.0);
}

TEST(KpoEigenBasis, ReproducesFockRepresentationOnLowManifolds) {
  GateConfig f = small_config(1);
  f.kpo_dim = 30;
  GateConfig e = f;
  e.kpo_basis = KpoBasis::eigen;
  e.kpo_levels = 8;
  const KpoLocal lf = kpo_local(f);
  const KpoLocal le = kpo_local(e);
  ASSERT_EQ(le.dim, 8);
  EXPECT_LT(max_abs(le.to_fock.adjoint() * le.to_fock - DenseMatrix::Identity(8, 8)), 1e-12);
  EXPECT_LT(max_abs(le.kerr - le.to_fock.adjoint() * lf.kerr * le.to_fock), 1e-9);
  EXPECT_GT(std::norm(lf.cat_plus.dot(le.to_fock * le.cat_plus)), 1.0 - 1e-10);
  EXPECT_GT(std::norm(lf.cat_minus.dot(le.to_fock * le.cat_minus)), 1.0 - 1e-10);
}

TEST(Schedule, ConstantAndPhase) {
  const Schedule s = Schedule::constant(2.0, 3.0, 1.0);
  EXPECT_EQ(s.num_segments(), 1u);
  EXPECT_EQ(s.J_at(0.5), 2.0);
  EXPECT_NEAR(s.phase(0.5), 1.5, 1e-15);
  EXPECT_NEAR(s.phase(1.5), 4.5, 1e-15);
}

TEST(Schedule, PhaseIsContinuousAcrossBreakpoints) {
  const Schedule s({0.0, 1.0, 3.0}, {1.0, 1.0}, {2.0, 5.0});
  EXPECT_EQ(s.segment(0.999), 0u);
  EXPECT_EQ(s.segment(1.0), 1u);
  EXPECT_NEAR(s.phase(1.0), 2.0, 1e-15);
  EXPECT_NEAR(s.phase(2.0), 7.0, 1e-15);
  EXPECT_THROW(Schedule({0.0, 1.0}, {1.0, 2.0}, {1.0}), std::invalid_argument);
  EXPECT_THROW(Schedule({0.5, 1.0}, {1.0}, {1.0}), std::invalid_argument);
}
