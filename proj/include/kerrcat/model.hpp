// Hamiltonians, collapse operators and projectors for N Kerr parametric
// oscillators (KPOs) coupled to a common bus cavity a0.
//
// Units: rates and angular frequencies are rad/us, times are us.

#pragma once

#include "kerrcat/dynamics.hpp"
#include "kerrcat/hilbert.hpp"
#include "kerrcat/states.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace kerrcat {

/// Representation of each KPO mode: the bare Fock truncation, or the
/// `kpo_levels` eigenstates of the local Kerr Hamiltonian closest to the cat
/// manifold (the full-Fock Hamiltonian and collapse operators projected onto
/// them).
enum class KpoBasis { fock, eigen };

struct GateConfig {
  int N = 2;
  double K = kTwoPi * 5.0;
  double Omega_p = 4.0 * kTwoPi * 5.0;  // alpha = 2
  double J = kTwoPi * 0.5;
  double Delta = 0.0;  // <= 0 means "resonant": 4 sqrt(m) J alpha
  int m = 1;
  double kappa0 = 0.0;
  double gamma0 = 0.0;
  double kappa = 0.0;
  double gamma = 0.0;
  int bus_dim = 10;
  int kpo_dim = 0;  // <= 0 means default_kpo_dim(alpha)
  KpoBasis kpo_basis = KpoBasis::fock;
  int kpo_levels = 10;
  double gate_time = 0.0;   // <= 0 means 2 pi m / Delta
  double time_scale = 1.0;  // systematic gate-time error: evolve to gate_time * time_scale

  double alpha() const { return std::sqrt(Omega_p / K); }
};

inline int default_kpo_dim(double alpha) {
  return std::max(20, static_cast<int>(std::ceil(alpha * alpha + 6.0 * alpha + 9.0)));
}

/// Delta = 4 sqrt(m) J alpha, which makes beta(t_g) = -pi/2.
inline double resonance_detuning(double J, double alpha, int m) {
  if (!(J > 0.0) || !(alpha > 0.0) || m < 1) throw std::invalid_argument("resonance_detuning: J, alpha > 0 and m >= 1");
  return 4.0 * std::sqrt(static_cast<double>(m)) * J * alpha;
}

/// Fills the derived fields (Delta, gate_time, kpo_dim) and checks invariants.
inline GateConfig resolve(GateConfig c) {
  if (c.N < 1) throw std::invalid_argument("GateConfig: N must be >= 1");
  if (c.m < 1) throw std::invalid_argument("GateConfig: m must be >= 1");
  if (!(c.K > 0.0) || !(c.Omega_p > 0.0)) throw std::invalid_argument("GateConfig: K and Omega_p must be positive");
  if (c.J < 0.0) throw std::invalid_argument("GateConfig: J must be non-negative");
  if (c.kappa0 < 0 || c.gamma0 < 0 || c.kappa < 0 || c.gamma < 0)
    throw std::invalid_argument("GateConfig: decay rates must be non-negative");
  if (c.bus_dim < 2) throw std::invalid_argument("GateConfig: bus_dim must be >= 2");
  if (!(c.time_scale > 0.0)) throw std::invalid_argument("GateConfig: time_scale must be positive");
  if (c.Delta <= 0.0) {
    if (!(c.J > 0.0)) throw std::invalid_argument("GateConfig: Delta must be given when J = 0");
    c.Delta = resonance_detuning(c.J, c.alpha(), c.m);
  }
  if (c.gate_time <= 0.0) c.gate_time = kTwoPi * c.m / c.Delta;
  if (c.kpo_dim <= 0) c.kpo_dim = default_kpo_dim(c.alpha());
  if (c.kpo_dim < 4) throw std::invalid_argument("GateConfig: kpo_dim must be >= 4");
  if (c.kpo_basis == KpoBasis::eigen && (c.kpo_levels < 2 || c.kpo_levels > c.kpo_dim))
    throw std::invalid_argument("GateConfig: kpo_levels must lie in [2, kpo_dim]");
  return c;
}

/// A parameter written "X/2pi = v MHz" enters as 2 pi v rad/us; one written
/// "X = v MHz" enters as v rad/us.
inline double rad_per_us(double value, bool two_pi) { return two_pi ? kTwoPi * value : value; }

// ---------------------------------------------------------------------------
// Single-KPO local operators

inline DenseMatrix local_kerr(int dim, double K, double Omega_p) {
  const DenseMatrix a = local_annihilation(dim);
  const DenseMatrix a2 = a * a;
  return -K * a2.adjoint() * a2 + Omega_p * (a2 + a2.adjoint());
}

struct KpoLocal {
  int fock_dim = 0;
  int dim = 0;
  DenseMatrix to_fock;  // fock_dim x dim; columns are the basis vectors in Fock coordinates
  DenseMatrix a;
  DenseMatrix n;
  DenseMatrix kerr;
  DenseVector cat_plus;
  DenseVector cat_minus;

  const DenseVector& cat(CatParity p) const { return p == CatParity::even ? cat_plus : cat_minus; }
};

/// Eigenpairs of the local Kerr Hamiltonian sorted by decreasing energy (the
/// cat manifold is the top of the spectrum).
inline std::pair<Eigen::VectorXd, DenseMatrix> kerr_eigensystem(int dim, double K, double Omega_p) {
  Eigen::SelfAdjointEigenSolver<DenseMatrix> es(local_kerr(dim, K, Omega_p));
  const Eigen::Index n = es.eigenvalues().size();
  Eigen::VectorXd values(n);
  DenseMatrix vectors(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    values(k) = es.eigenvalues()(n - 1 - k);
    vectors.col(k) = es.eigenvectors().col(n - 1 - k);
  }
  return {values, vectors};
}

inline KpoLocal kpo_local(const GateConfig& config_in) {
  const GateConfig c = resolve(config_in);
  const double alpha = c.alpha();
  KpoLocal loc;
  loc.fock_dim = c.kpo_dim;
  const DenseMatrix a = local_annihilation(c.kpo_dim);
  const DenseMatrix kerr = local_kerr(c.kpo_dim, c.K, c.Omega_p);
  const DenseVector cp = local_cat(c.kpo_dim, alpha, CatParity::even);
  const DenseVector cm = local_cat(c.kpo_dim, alpha, CatParity::odd);
  if (c.kpo_basis == KpoBasis::fock) {
    loc.dim = c.kpo_dim;
    loc.to_fock = DenseMatrix::Identity(c.kpo_dim, c.kpo_dim);
    loc.a = a;
    loc.n = local_number(c.kpo_dim);
    loc.kerr = kerr;
    loc.cat_plus = cp;
    loc.cat_minus = cm;
    return loc;
  }
  auto [values, vectors] = kerr_eigensystem(c.kpo_dim, c.K, c.Omega_p);
  loc.dim = c.kpo_levels;
  loc.to_fock = vectors.leftCols(c.kpo_levels);
  const DenseMatrix& v = loc.to_fock;
  auto clean = [](DenseMatrix m) {
    const double scale = std::max(1.0, max_abs(m));
    for (Eigen::Index i = 0; i < m.size(); ++i)
      if (std::abs(m(i)) < 1e-14 * scale) m(i) = 0.0;
    return m;
  };
  loc.a = clean(v.adjoint() * a * v);
  loc.n = clean(v.adjoint() * local_number(c.kpo_dim) * v);
  loc.n = 0.5 * (loc.n + loc.n.adjoint());
  loc.kerr = DenseMatrix::Zero(c.kpo_levels, c.kpo_levels);
  for (int k = 0; k < c.kpo_levels; ++k) loc.kerr(k, k) = values(k);
  loc.cat_plus = v.adjoint() * cp;
  loc.cat_minus = v.adjoint() * cm;
  loc.cat_plus.normalize();
  loc.cat_minus.normalize();
  return loc;
}

// ---------------------------------------------------------------------------
// Spaces

inline std::string kpo_label(int n) { return "a" + std::to_string(n); }
inline std::string qubit_label(int n) { return "q" + std::to_string(n); }

/// [a0, a1, ..., aN]; mode 0 is the bus cavity.
inline HilbertSpace full_space(const GateConfig& config_in) {
  const GateConfig c = resolve(config_in);
  const int kdim = c.kpo_basis == KpoBasis::fock ? c.kpo_dim : c.kpo_levels;
  std::vector<int> dims{c.bus_dim};
  std::vector<std::string> labels{"a0"};
  for (int n = 1; n <= c.N; ++n) {
    dims.push_back(kdim);
    labels.push_back(kpo_label(n));
  }
  return HilbertSpace(dims, labels);
}

/// [a0, q1, ..., qN]; each qubit is the cat manifold with local basis (|C+>, |C->).
inline HilbertSpace effective_space(const GateConfig& config_in) {
  const GateConfig c = resolve(config_in);
  std::vector<int> dims{c.bus_dim};
  std::vector<std::string> labels{"a0"};
  for (int n = 1; n <= c.N; ++n) {
    dims.push_back(2);
    labels.push_back(qubit_label(n));
  }
  return HilbertSpace(dims, labels);
}

// Pauli matrices in the (|C+>, |C->) basis with sigma+ = |C-><C+|,
// sigma_x = sigma+ + sigma-, sigma_y = i(sigma- - sigma+), sigma_z = |C-><C-| - |C+><C+|.
inline DenseMatrix pauli_x() {
  DenseMatrix m = DenseMatrix::Zero(2, 2);
  m(0, 1) = 1.0;
  m(1, 0) = 1.0;
  return m;
}
inline DenseMatrix pauli_y() {
  DenseMatrix m = DenseMatrix::Zero(2, 2);
  m(0, 1) = kI;
  m(1, 0) = -kI;
  return m;
}
inline DenseMatrix pauli_z() {
  DenseMatrix m = DenseMatrix::Zero(2, 2);
  m(0, 0) = -1.0;
  m(1, 1) = 1.0;
  return m;
}

inline SparseOperator sigma_x(const GateConfig& c, int n) { return tensor_embed(pauli_x(), effective_space(c), qubit_label(n)); }
inline SparseOperator sigma_y(const GateConfig& c, int n) { return tensor_embed(pauli_y(), effective_space(c), qubit_label(n)); }
inline SparseOperator sigma_z(const GateConfig& c, int n) { return tensor_embed(pauli_z(), effective_space(c), qubit_label(n)); }

/// S_x = (1/2) sum_n sigma_x^n on the effective space.
inline SparseOperator collective_sx(const GateConfig& config_in) {
  const GateConfig c = resolve(config_in);
  SparseOperator sx = SparseOperator::zero(effective_space(c));
  for (int n = 1; n <= c.N; ++n) sx += sigma_x(c, n);
  return sx * cplx{0.5};
}

// ---------------------------------------------------------------------------
// Hamiltonians

/// -K a^dag^2 a^2 + Omega_p (a^2 + a^dag^2) on KPO `mode` (1-based).
inline SparseOperator h_kerr(const GateConfig& config_in, int mode) {
  const GateConfig c = resolve(config_in);
  if (mode < 1 || mode > c.N) throw std::invalid_argument("h_kerr: KPO index out of range");
  return tensor_embed(kpo_local(c).kerr, full_space(c), kpo_label(mode));
}

namespace detail {
/// sum_n a_n a0^dag on the full space.
inline SparseOperator bus_raising_sum(const GateConfig& c, const KpoLocal& loc) {
  const HilbertSpace space = full_space(c);
  const SparseOperator a0dag = creation(space, "a0");
  SparseOperator acc = SparseOperator::zero(space);
  for (int n = 1; n <= c.N; ++n) acc += tensor_embed(loc.a, space, kpo_label(n)) * a0dag;
  return acc;
}
}  // namespace detail

/// sum_n J a_n a0^dag e^{i Delta t} + h.c.
inline SparseOperator h_int(const GateConfig& config_in, double t) {
  const GateConfig c = resolve(config_in);
  if (t < 0.0) throw std::invalid_argument("h_int: t must be >= 0");
  const SparseOperator raise = detail::bus_raising_sum(c, kpo_local(c));
  const cplx phase = std::polar(1.0, c.Delta * t);
  return raise * (c.J * phase) + raise.dagger() * (c.J * std::conj(phase));
}

inline SparseOperator h_total(const GateConfig& config_in, double t) {
  const GateConfig c = resolve(config_in);
  SparseOperator h = h_int(c, t);
  for (int n = 1; n <= c.N; ++n) h += h_kerr(c, n);
  return h;
}

/// Energy of the cat manifold of one KPO, Omega_p^2 / K.
inline double cat_energy(const GateConfig& c) { return c.Omega_p * c.Omega_p / c.K; }

/// Kerr Hamiltonian in the frame displaced by D(sign alpha), constant dropped:
/// -K [4 alpha^2 a^dag a + a^dag^2 a^2 - sign 2 alpha (a^dag^2 a + a^dag a^2)]
/// on a single Fock mode of dimension kpo_dim.
inline SparseOperator h_displaced(const GateConfig& config_in, int sign) {
  const GateConfig c = resolve(config_in);
  if (sign != 1 && sign != -1) throw std::invalid_argument("h_displaced: sign must be +1 or -1");
  const double alpha = c.alpha();
  const HilbertSpace space = make_space({c.kpo_dim}, {"a"});
  const DenseMatrix a = local_annihilation(c.kpo_dim);
  const DenseMatrix ad = a.adjoint();
  const DenseMatrix h = -c.K * (4.0 * alpha * alpha * ad * a + ad * ad * a * a -
                                2.0 * sign * alpha * (ad * ad * a + ad * a * a));
  return SparseOperator::from_dense(space, h);
}

/// 2 J alpha S_x (a0 e^{-i Delta t} + a0^dag e^{i Delta t}) on the effective space.
inline SparseOperator h_eff_spin_boson(const GateConfig& config_in, double t) {
  const GateConfig c = resolve(config_in);
  const HilbertSpace space = effective_space(c);
  const SparseOperator sx = collective_sx(c);
  const SparseOperator a0 = annihilation(space, "a0");
  const cplx phase = std::polar(1.0, c.Delta * t);
  return (sx * (a0 * std::conj(phase) + a0.dagger() * phase)) * cplx{2.0 * c.J * c.alpha()};
}

// ---------------------------------------------------------------------------
// Dissipation

inline std::vector<CollapseOp> collapse_ops_full(const GateConfig& config_in) {
  const GateConfig c = resolve(config_in);
  const HilbertSpace space = full_space(c);
  std::vector<CollapseOp> out;
  if (c.kappa0 > 0) out.push_back({annihilation(space, "a0"), c.kappa0, "kappa0"});
  if (c.gamma0 > 0) out.push_back({number(space, "a0"), c.gamma0, "gamma0"});
  if (c.kappa > 0 || c.gamma > 0) {
    const KpoLocal loc = kpo_local(c);
    for (int n = 1; n <= c.N; ++n) {
      if (c.kappa > 0) out.push_back({tensor_embed(loc.a, space, kpo_label(n)), c.kappa, "kappa" + std::to_string(n)});
      if (c.gamma > 0) out.push_back({tensor_embed(loc.n, space, kpo_label(n)), c.gamma, "gamma" + std::to_string(n)});
    }
  }
  return out;
}

/// Qubit-level channels: per qubit kappa alpha^2 / sqrt(1 - e^{-4 alpha^2}) D[sigma_x + i e^{-2 alpha^2} sigma_y],
/// gamma alpha^4 D[identity] (vanishes identically), plus the bus channels.
inline std::vector<CollapseOp> collapse_ops_effective(const GateConfig& config_in) {
  const GateConfig c = resolve(config_in);
  const HilbertSpace space = effective_space(c);
  const double a2 = c.alpha() * c.alpha();
  const double flip_rate = c.kappa * a2 / std::sqrt(1.0 - std::exp(-4.0 * a2));
  const double phase_weight = std::exp(-2.0 * a2);
  std::vector<CollapseOp> out;
  if (c.kappa0 > 0) out.push_back({annihilation(space, "a0"), c.kappa0, "kappa0"});
  if (c.gamma0 > 0) out.push_back({number(space, "a0"), c.gamma0, "gamma0"});
  for (int n = 1; n <= c.N; ++n) {
    if (c.kappa > 0) {
      const DenseMatrix local = pauli_x() + kI * phase_weight * pauli_y();
      out.push_back({tensor_embed(local, space, qubit_label(n)), flip_rate, "kappa" + std::to_string(n)});
    }
    if (c.gamma > 0)
      out.push_back({SparseOperator::identity(space), c.gamma * a2 * a2, "gamma" + std::to_string(n)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Basis states and projectors

inline StateVector basis_state(const GateConfig& config_in, const QubitBasisState& q) {
  const GateConfig c = resolve(config_in);
  if (static_cast<int>(q.parities.size()) != c.N) throw std::invalid_argument("basis_state: parity count must equal N");
  const KpoLocal loc = kpo_local(c);
  const HilbertSpace space = full_space(c);
  std::vector<DenseVector> parts{fock_vector(c.bus_dim, q.bus_fock)};
  for (CatParity p : q.parities) parts.push_back(loc.cat(p));
  return product_state(space, parts);
}

inline StateVector effective_basis_state(const GateConfig& config_in, const QubitBasisState& q) {
  const GateConfig c = resolve(config_in);
  if (static_cast<int>(q.parities.size()) != c.N) throw std::invalid_argument("basis_state: parity count must equal N");
  std::vector<DenseVector> parts{fock_vector(c.bus_dim, q.bus_fock)};
  for (CatParity p : q.parities) parts.push_back(fock_vector(2, p == CatParity::even ? 0 : 1));
  return product_state(effective_space(c), parts);
}

/// Index k in [0, 2^N): bit (N - n) of k is the parity of qubit n (1 = odd).
inline QubitBasisState qubit_basis_label(int N, std::size_t k) {
  QubitBasisState q;
  for (int n = 1; n <= N; ++n)
    q.parities.push_back(((k >> (N - n)) & 1u) ? CatParity::odd : CatParity::even);
  return q;
}

inline std::vector<StateVector> computational_basis(const GateConfig& config_in) {
  const GateConfig c = resolve(config_in);
  std::vector<StateVector> out;
  for (std::size_t k = 0; k < (std::size_t{1} << c.N); ++k) out.push_back(basis_state(c, qubit_basis_label(c.N, k)));
  return out;
}

inline std::vector<StateVector> effective_computational_basis(const GateConfig& config_in) {
  const GateConfig c = resolve(config_in);
  std::vector<StateVector> out;
  for (std::size_t k = 0; k < (std::size_t{1} << c.N); ++k)
    out.push_back(effective_basis_state(c, qubit_basis_label(c.N, k)));
  return out;
}

namespace detail {
inline SparseOperator product_projector(const HilbertSpace& space, const std::vector<DenseMatrix>& locals) {
  SparseMatrix acc(1, 1);
  acc.insert(0, 0) = 1.0;
  for (const DenseMatrix& l : locals) {
    const SparseMatrix ls = l.sparseView(1e-15, 1.0);
    SparseMatrix next(acc.rows() * ls.rows(), acc.cols() * ls.cols());
    std::vector<Eigen::Triplet<cplx>> trips;
    trips.reserve(static_cast<std::size_t>(acc.nonZeros() * ls.nonZeros()));
    for (Eigen::Index r = 0; r < acc.outerSize(); ++r)
      for (SparseMatrix::InnerIterator i(acc, r); i; ++i)
        for (Eigen::Index r2 = 0; r2 < ls.outerSize(); ++r2)
          for (SparseMatrix::InnerIterator j(ls, r2); j; ++j)
            trips.emplace_back(i.row() * ls.rows() + j.row(), i.col() * ls.cols() + j.col(), i.value() * j.value());
    next.setFromTriplets(trips.begin(), trips.end());
    acc = std::move(next);
  }
  return {space, std::move(acc)};
}
}  // namespace detail

/// |0><0|_bus (x) prod_n (|C+><C+| + |C-><C-|).
inline SparseOperator projector_cat(const GateConfig& config_in) {
  const GateConfig c = resolve(config_in);
  const KpoLocal loc = kpo_local(c);
  std::vector<DenseMatrix> locals{fock_vector(c.bus_dim, 0) * fock_vector(c.bus_dim, 0).adjoint()};
  const DenseMatrix pc = loc.cat_plus * loc.cat_plus.adjoint() + loc.cat_minus * loc.cat_minus.adjoint();
  for (int n = 1; n <= c.N; ++n) locals.push_back(pc);
  return detail::product_projector(full_space(c), locals);
}

/// Identity on the bus, and on each KPO the projector onto the cat manifold
/// plus the first `levels` excited manifolds (two exact eigenstates each).
inline SparseOperator projector_kpo(const GateConfig& config_in, int levels) {
  const GateConfig c = resolve(config_in);
  if (levels < 0) throw std::invalid_argument("projector_kpo: levels must be >= 0");
  const KpoLocal loc = kpo_local(c);
  auto [values, vectors] = kerr_eigensystem(c.kpo_dim, c.K, c.Omega_p);
  const int keep = std::min(2 * (levels + 1), c.kpo_dim);
  const DenseMatrix v = loc.to_fock.adjoint() * vectors.leftCols(keep);
  std::vector<DenseMatrix> locals{DenseMatrix::Identity(c.bus_dim, c.bus_dim)};
  for (int n = 1; n <= c.N; ++n) locals.push_back(v * v.adjoint());
  return detail::product_projector(full_space(c), locals);
}

/// E_gap ~ 4 K alpha^2.
inline double energy_gap(const GateConfig& config_in) {
  const GateConfig c = resolve(config_in);
  return 4.0 * c.K * c.alpha() * c.alpha();
}

/// Order-of-magnitude excitation probability N J^2 / (E_gap + Delta)^2.
/// Diagnostic only.
inline double leakage_estimate(const GateConfig& config_in) {
  const GateConfig c = resolve(config_in);
  const double denom = energy_gap(c) + c.Delta;
  return c.N * c.J * c.J / (denom * denom);
}

/// Exact-diagonalization counterpart of the displaced-Fock excited cats, for
/// validation: the eigenvector of the local Kerr Hamiltonian in the first
/// excited manifold with the requested parity.
inline DenseVector local_excited_cat_exact(const GateConfig& config_in, CatParity parity) {
  const GateConfig c = resolve(config_in);
  auto [values, vectors] = kerr_eigensystem(c.kpo_dim, c.K, c.Omega_p);
  int seen = 0;
  for (Eigen::Index k = 0; k < vectors.cols(); ++k) {
    const DenseVector v = vectors.col(k);
    double even = 0.0;
    for (Eigen::Index i = 0; i < v.size(); i += 2) even += std::norm(v(i));
    const bool is_even = even > 0.5;
    if (is_even != (parity == CatParity::even)) continue;
    if (++seen == 2) return v;  // the first of each parity is the cat itself
  }
  throw std::runtime_error("local_excited_cat_exact: no excited state found");
}

// ---------------------------------------------------------------------------
// Schedules and generators

/// Piecewise-constant J(t) and Delta(t) over [0, t_end]. Past t_end the last
/// segment continues.
class Schedule {
 public:
  Schedule(std::vector<double> breakpoints, std::vector<double> J, std::vector<double> Delta)
      : breaks_(std::move(breakpoints)), J_(std::move(J)), Delta_(std::move(Delta)) {
    if (breaks_.size() < 2 || J_.size() + 1 != breaks_.size() || Delta_.size() + 1 != breaks_.size())
      throw std::invalid_argument("Schedule: need S+1 breakpoints for S segments");
    if (breaks_.front() != 0.0) throw std::invalid_argument("Schedule: must start at t = 0");
    for (std::size_t k = 1; k < breaks_.size(); ++k)
      if (!(breaks_[k] > breaks_[k - 1])) throw std::invalid_argument("Schedule: breakpoints must increase");
    phase_.assign(breaks_.size(), 0.0);
    for (std::size_t k = 0; k < Delta_.size(); ++k) phase_[k + 1] = phase_[k] + Delta_[k] * (breaks_[k + 1] - breaks_[k]);
  }

  static Schedule constant(double J, double Delta, double t_end) { return Schedule({0.0, t_end}, {J}, {Delta}); }

  std::size_t num_segments() const { return J_.size(); }
  double t_end() const { return breaks_.back(); }
  const std::vector<double>& breakpoints() const { return breaks_; }
  double J(std::size_t k) const { return J_.at(k); }
  double Delta(std::size_t k) const { return Delta_.at(k); }
  double start(std::size_t k) const { return breaks_.at(k); }
  double end(std::size_t k) const { return breaks_.at(k + 1); }

  std::size_t segment(double t) const {
    const auto it = std::upper_bound(breaks_.begin() + 1, breaks_.end() - 1, t);
    return static_cast<std::size_t>(it - breaks_.begin()) - 1;
  }
  double J_at(double t) const { return J_[segment(t)]; }
  double Delta_at(double t) const { return Delta_[segment(t)]; }
  /// Accumulated phase phi(t) = int_0^t Delta.
  double phase(double t) const {
    const std::size_t k = segment(t);
    return phase_[k] + Delta_[k] * (t - breaks_[k]);
  }
  double phase_at_start(std::size_t k) const { return phase_.at(k); }

  std::vector<double> interior_breakpoints() const { return {breaks_.begin() + 1, breaks_.end() - 1}; }

  Schedule scaled(double J_factor, double Delta_factor) const {
    std::vector<double> j = J_, d = Delta_;
    for (double& v : j) v *= J_factor;
    for (double& v : d) v *= Delta_factor;
    return {breaks_, j, d};
  }

 private:
  std::vector<double> breaks_;
  std::vector<double> J_;
  std::vector<double> Delta_;
  std::vector<double> phase_;
};

/// J from `j_source`, Delta from `delta_source`, on the union of breakpoints.
inline Schedule merge(const Schedule& j_source, const Schedule& delta_source) {
  std::vector<double> b = j_source.breakpoints();
  b.insert(b.end(), delta_source.breakpoints().begin(), delta_source.breakpoints().end());
  std::sort(b.begin(), b.end());
  std::vector<double> uniq;
  for (double t : b)
    if (uniq.empty() || t - uniq.back() > 1e-15 * std::max(1.0, t)) uniq.push_back(t);
  const double end = std::min(j_source.t_end(), delta_source.t_end());
  while (uniq.size() > 2 && uniq.back() > end * (1 + 1e-12)) uniq.pop_back();
  std::vector<double> j, d;
  for (std::size_t k = 0; k + 1 < uniq.size(); ++k) {
    const double mid = 0.5 * (uniq[k] + uniq[k + 1]);
    j.push_back(j_source.J_at(mid));
    d.push_back(delta_source.Delta_at(mid));
  }
  return {uniq, j, d};
}

inline Schedule nominal_schedule(const GateConfig& config_in) {
  const GateConfig c = resolve(config_in);
  return Schedule::constant(c.J, c.Delta, c.gate_time);
}

/// H(t) = sum_n h_kerr(n) + J(t) sum_n (a_n a0^dag e^{i phi(t)} + h.c.) on the
/// full space. With `subtract_cat_energy` the constant N Omega_p^2 / K is
/// removed, which only changes a global phase.
inline TimeDependentOperator full_generator(const GateConfig& config_in, const Schedule& schedule,
                                            bool subtract_cat_energy = true) {
  const GateConfig c = resolve(config_in);
  const HilbertSpace space = full_space(c);
  const KpoLocal loc = kpo_local(c);
  TimeDependentOperator h(space);
  SparseOperator kerr = SparseOperator::zero(space);
  for (int n = 1; n <= c.N; ++n) kerr += tensor_embed(loc.kerr, space, kpo_label(n));
  if (subtract_cat_energy) kerr -= SparseOperator::identity(space) * cplx{c.N * cat_energy(c)};
  h.add(kerr);
  const SparseOperator raise = detail::bus_raising_sum(c, loc);
  h.add(raise, [schedule](double t) { return schedule.J_at(t) * std::polar(1.0, schedule.phase(t)); });
  h.add(raise.dagger(), [schedule](double t) { return schedule.J_at(t) * std::polar(1.0, -schedule.phase(t)); });
  h.add_breakpoints(schedule.interior_breakpoints());
  return h;
}

/// 2 J(t) alpha S_x (a0 e^{-i phi(t)} + a0^dag e^{i phi(t)}) on the effective space.
inline TimeDependentOperator effective_generator(const GateConfig& config_in, const Schedule& schedule) {
  const GateConfig c = resolve(config_in);
  const HilbertSpace space = effective_space(c);
  const SparseOperator sx = collective_sx(c);
  const SparseOperator up = sx * creation(space, "a0");
  const double two_alpha = 2.0 * c.alpha();
  TimeDependentOperator h(space);
  h.add(up, [schedule, two_alpha](double t) { return two_alpha * schedule.J_at(t) * std::polar(1.0, schedule.phase(t)); });
  h.add(up.dagger(),
        [schedule, two_alpha](double t) { return two_alpha * schedule.J_at(t) * std::polar(1.0, -schedule.phase(t)); });
  h.add_breakpoints(schedule.interior_breakpoints());
  return h;
}

}  // namespace kerrcat
