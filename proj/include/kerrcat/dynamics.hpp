// Schrodinger and Lindblad time integration with time-dependent generators.

#pragma once

#include "kerrcat/hilbert.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace kerrcat {

/// Raised when a post-condition of the integration is violated beyond its
/// tolerance (e.g. loss of positivity).
class ToleranceBreach : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Lindblad channel rate * D[op]; the rate is kept apart from the operator.
struct CollapseOp {
  SparseOperator op;
  double rate = 0.0;
  std::string label;
};

using Coefficient = std::function<cplx(double)>;

/// H(t) = sum_k c_k(t) H_k. Terms without a coefficient are constant; purely
/// diagonal terms are stored as vectors.
class TimeDependentOperator {
 public:
  explicit TimeDependentOperator(HilbertSpace space) : space_(std::move(space)) {}

  static TimeDependentOperator constant(const SparseOperator& op) {
    TimeDependentOperator h(op.space());
    h.add(op);
    return h;
  }

  /// Slow path: the whole operator is rebuilt at every evaluation.
  static TimeDependentOperator from_function(const HilbertSpace& space, std::function<SparseOperator(double)> fn) {
    TimeDependentOperator h(space);
    h.callable_ = std::move(fn);
    return h;
  }

  TimeDependentOperator& add(const SparseOperator& op, Coefficient coeff = {}) {
    require_same_space(space_, op.space(), "TimeDependentOperator::add");
    Term term;
    term.coeff = std::move(coeff);
    if (is_diagonal(op.matrix())) {
      term.diagonal = op.matrix().diagonal();
    } else {
      term.op = op.matrix();
    }
    terms_.push_back(std::move(term));
    return *this;
  }

  TimeDependentOperator& add_breakpoints(const std::vector<double>& times) {
    breakpoints_.insert(breakpoints_.end(), times.begin(), times.end());
    std::sort(breakpoints_.begin(), breakpoints_.end());
    breakpoints_.erase(std::unique(breakpoints_.begin(), breakpoints_.end()), breakpoints_.end());
    return *this;
  }

  const HilbertSpace& space() const { return space_; }
  const std::vector<double>& breakpoints() const { return breakpoints_; }
  std::size_t dimension() const { return space_.dimension(); }

  SparseOperator at(double t) const {
    SparseOperator acc = callable_ ? callable_(t) : SparseOperator::zero(space_);
    const auto n = static_cast<Eigen::Index>(space_.dimension());
    for (const Term& term : terms_) {
      const cplx c = term.coeff ? term.coeff(t) : cplx{1.0};
      if (term.diagonal) {
        SparseMatrix d(n, n);
        d.reserve(Eigen::VectorXi::Constant(n, 1));
        for (Eigen::Index i = 0; i < n; ++i)
          if ((*term.diagonal)(i) != cplx{0.0}) d.insert(i, i) = c * (*term.diagonal)(i);
        acc += SparseOperator(space_, std::move(d));
      } else {
        acc += SparseOperator(space_, c * term.op);
      }
    }
    return acc;
  }

  /// Splits off the constant real diagonal part: H(t) = diag(E) + rest(t).
  std::pair<Eigen::VectorXd, TimeDependentOperator> split_static_diagonal() const {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(space_.dimension()));
    TimeDependentOperator rest(space_);
    rest.callable_ = callable_;
    rest.breakpoints_ = breakpoints_;
    for (const Term& term : terms_) {
      if (term.diagonal && !term.coeff && term.diagonal->imag().cwiseAbs().maxCoeff() == 0.0) {
        e += term.diagonal->real();
      } else {
        rest.terms_.push_back(term);
      }
    }
    return {e, std::move(rest)};
  }

  /// out += scale * H(t) x, for a vector or a column block x.
  template <class Mat>
  void apply_add(double t, const Mat& x, Mat& out, cplx scale) const {
    if (callable_) out.noalias() += scale * (callable_(t).matrix() * x);
    for (const Term& term : terms_) {
      const cplx c = scale * (term.coeff ? term.coeff(t) : cplx{1.0});
      if (c == cplx{0.0}) continue;
      if (term.diagonal) {
        out += (c * *term.diagonal).asDiagonal() * x;
      } else {
        out.noalias() += c * (term.op * x);
      }
    }
  }

 private:
  struct Term {
    SparseMatrix op;
    std::optional<DenseVector> diagonal;
    Coefficient coeff;
  };

  static bool is_diagonal(const SparseMatrix& m) {
    for (Eigen::Index r = 0; r < m.outerSize(); ++r)
      for (SparseMatrix::InnerIterator it(m, r); it; ++it)
        if (it.row() != it.col()) return false;
    return true;
  }

  HilbertSpace space_;
  std::vector<Term> terms_;
  std::function<SparseOperator(double)> callable_;
  std::vector<double> breakpoints_;
};

// ---------------------------------------------------------------------------
// Integrators

enum class Method { rk4_fixed, rkf45_adaptive };

inline std::string to_string(Method m) { return m == Method::rk4_fixed ? "rk4_fixed" : "rkf45_adaptive"; }

inline Method method_from_string(const std::string& s) {
  if (s == "rk4_fixed") return Method::rk4_fixed;
  if (s == "rkf45_adaptive") return Method::rkf45_adaptive;
  throw std::invalid_argument("unknown integrator method '" + s + "'");
}

struct IntegratorSettings {
  Method method = Method::rkf45_adaptive;
  double dt = 1e-4;      // rk4_fixed step (us)
  double rtol = 1e-8;
  double atol = 1e-10;
  double max_step = 0.0;  // <= 0 means span / 1000
  long max_steps = 20'000'000;
  // Integrate the constant diagonal part of the generator exactly and step
  // only the remainder.
  bool interaction_frame = false;

  void validate() const {
    if (!(dt > 0.0) || !(rtol > 0.0) || !(atol > 0.0)) throw std::invalid_argument("IntegratorSettings: dt and tolerances must be positive");
  }
};

/// Default settings for a generator whose remaining time dependence
/// oscillates at angular frequency `omega`: interaction frame on, at least
/// ~60 steps per cycle and 100 over the span.
inline IntegratorSettings settings_for(double omega, double span) {
  IntegratorSettings s;
  double cap = span / 100.0;
  if (omega > 0.0) cap = std::min(cap, 0.1 / omega);
  s.max_step = cap;
  s.dt = cap;
  s.interaction_frame = true;
  return s;
}

struct StepStats {
  long steps = 0;
  long rejected = 0;
  long rhs_evals = 0;
};

namespace detail {

/// RMS of err_i / (atol + rtol max(|y0_i|, |y1_i|)).
template <class State>
double scaled_error(const State& err, const State& y0, const State& y1, double atol, double rtol) {
  double acc = 0.0;
  const auto n = err.size();
  const auto* e = err.data();
  const auto* a = y0.data();
  const auto* b = y1.data();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double sc = atol + rtol * std::sqrt(std::max(std::norm(a[i]), std::norm(b[i])));
    acc += std::norm(e[i]) / (sc * sc);
  }
  return std::sqrt(acc / static_cast<double>(std::max<Eigen::Index>(n, 1)));
}

/// Dormand-Prince 5(4) with FSAL, from t0 to t1 with no interior breakpoint.
template <class State, class Rhs>
void dp45(Rhs& f, State& y, double t0, double t1, const IntegratorSettings& s, double& h, StepStats& stats) {
  constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  constexpr double a21 = 1.0 / 5;
  constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200, e6 = 22.0 / 525,
                   e7 = -1.0 / 40;

  State k1, k2, k3, k4, k5, k6, k7, tmp, ynew;
  k1.resizeLike(y);
  f(t0, y, k1);
  ++stats.rhs_evals;
  double t = t0;
  const double max_step = s.max_step > 0.0 ? s.max_step : (t1 - t0);
  while (t < t1) {
    h = std::min({h, max_step, t1 - t});
    const bool last = (t + h >= t1) || (t1 - (t + h) < 1e-12 * std::max(1.0, std::abs(t1)));
    if (last) h = t1 - t;
    if (h < 1e-15 * std::max(1.0, std::abs(t))) {
      std::ostringstream msg;
      msg << "dynamics: step size underflow at t = " << t << " (stiff segment)";
      throw std::runtime_error(msg.str());
    }
    if (++stats.steps > s.max_steps) throw std::runtime_error("dynamics: maximum step count exceeded");
    tmp = y + (h * a21) * k1;
    f(t + c2 * h, tmp, k2);
    tmp = y + h * (a31 * k1 + a32 * k2);
    f(t + c3 * h, tmp, k3);
    tmp = y + h * (a41 * k1 + a42 * k2 + a43 * k3);
    f(t + c4 * h, tmp, k4);
    tmp = y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
    f(t + c5 * h, tmp, k5);
    tmp = y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
    f(t + h, tmp, k6);
    ynew = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    f(t + h, ynew, k7);
    stats.rhs_evals += 6;
    tmp = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    const double err = scaled_error(tmp, y, ynew, s.atol, s.rtol);
    if (err <= 1.0) {
      t = last ? t1 : t + h;
      y.swap(ynew);
      k1.swap(k7);
    } else {
      ++stats.rejected;
      --stats.steps;
    }
    const double factor = !std::isfinite(err) ? 0.2 : err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
    if (!(err <= 1.0) || !last) h *= (err <= 1.0 ? factor : std::min(1.0, factor));
  }
}

template <class State, class Rhs>
void rk4(Rhs& f, State& y, double t0, double t1, double dt, StepStats& stats) {
  const long n = std::max(1L, static_cast<long>(std::ceil((t1 - t0) / dt - 1e-9)));
  const double h = (t1 - t0) / static_cast<double>(n);
  State k1, k2, k3, k4, tmp;
  k1.resizeLike(y);
  k2.resizeLike(y);
  k3.resizeLike(y);
  k4.resizeLike(y);
  for (long i = 0; i < n; ++i) {
    const double t = t0 + h * static_cast<double>(i);
    f(t, y, k1);
    tmp = y + (0.5 * h) * k1;
    f(t + 0.5 * h, tmp, k2);
    tmp = y + (0.5 * h) * k2;
    f(t + 0.5 * h, tmp, k3);
    tmp = y + h * k3;
    f(t + h, tmp, k4);
    y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    stats.rhs_evals += 4;
    ++stats.steps;
  }
}

}  // namespace detail

/// Integrates dy/dt = f(t, y) from t0 to t1, stopping exactly at every
/// breakpoint inside the interval. `h` carries the adaptive step between calls.
template <class State, class Rhs>
void integrate(Rhs& f, State& y, double t0, double t1, const IntegratorSettings& s,
               const std::vector<double>& breakpoints, double& h, StepStats& stats) {
  s.validate();
  if (!(t1 >= t0)) throw std::invalid_argument("integrate: t1 < t0");
  std::vector<double> stops;
  for (double b : breakpoints)
    if (b > t0 && b < t1) stops.push_back(b);
  stops.push_back(t1);
  double start = t0;
  for (double stop : stops) {
    if (stop - start <= 0.0) continue;
    if (s.method == Method::rk4_fixed) {
      detail::rk4(f, y, start, stop, s.dt, stats);
    } else {
      detail::dp45(f, y, start, stop, s, h, stats);
    }
    start = stop;
  }
}

// ---------------------------------------------------------------------------
// Drivers

template <class S>
struct EvolutionResult {
  std::vector<double> times;
  std::vector<S> states;
  std::map<std::string, std::vector<cplx>> observables;
  StepStats stats;

  const S& final_state() const { return states.back(); }
};

using Observables = std::vector<std::pair<std::string, SparseOperator>>;

namespace detail {
inline void check_times(const std::vector<double>& times) {
  if (times.size() < 2) throw std::invalid_argument("evolve: need a start and at least one output time");
  for (std::size_t i = 1; i < times.size(); ++i)
    if (!(times[i] > times[i - 1])) throw std::invalid_argument("evolve: output times must be strictly increasing");
}

inline double initial_step(const IntegratorSettings& s, double span) {
  const double cap = s.max_step > 0.0 ? s.max_step : span / 1000.0;
  return std::min(cap, span / 100.0);
}

/// e^{-i E (t - t_ref)}: the exactly integrated diagonal part.
struct DiagonalFrame {
  Eigen::VectorXd energies;
  double t_ref = 0.0;

  DenseVector phases(double t) const {
    DenseVector p(energies.size());
    for (Eigen::Index i = 0; i < energies.size(); ++i) p(i) = std::polar(1.0, -energies(i) * (t - t_ref));
    return p;
  }
};
}  // namespace detail

/// Output times include the start: times[0] is the initial time.
inline EvolutionResult<StateVector> evolve_state(const TimeDependentOperator& H, const StateVector& psi0,
                                                 const std::vector<double>& times, IntegratorSettings settings = {},
                                                 const Observables& observables = {}) {
  require_same_space(H.space(), psi0.space(), "evolve_state");
  detail::check_times(times);
  const double span = times.back() - times.front();
  if (settings.max_step <= 0.0) settings.max_step = span / 1000.0;
  auto [energies, rest] = settings.interaction_frame ? H.split_static_diagonal()
                                                     : std::pair{Eigen::VectorXd::Zero(static_cast<Eigen::Index>(H.dimension())).eval(), H};
  const detail::DiagonalFrame frame{energies, times.front()};
  DenseVector w;
  auto rhs = [&](double t, const DenseVector& z, DenseVector& dz) {
    const DenseVector p = frame.phases(t);
    w.noalias() = p.asDiagonal() * z;
    dz.setZero(z.size());
    rest.apply_add(t, w, dz, -kI);
    dz = p.conjugate().asDiagonal() * dz;
  };
  EvolutionResult<StateVector> out;
  DenseVector y = psi0.amplitudes();
  double h = detail::initial_step(settings, span);
  auto record = [&](double t) {
    StateVector psi(psi0.space(), (frame.phases(t).asDiagonal() * y).eval());
    for (const auto& [label, op] : observables) out.observables[label].push_back(expect(op, psi));
    out.times.push_back(t);
    out.states.push_back(std::move(psi));
  };
  record(times.front());
  for (std::size_t i = 1; i < times.size(); ++i) {
    integrate(rhs, y, times[i - 1], times[i], settings, H.breakpoints(), h, out.stats);
    record(times[i]);
  }
  return out;
}

/// Lindblad generator d rho/dt = -i[H, rho] + sum_k r_k D[L_k] rho.
class LindbladRhs {
 public:
  LindbladRhs(const TimeDependentOperator& H, const std::vector<CollapseOp>& collapse) : H_(H) {
    const auto n = static_cast<Eigen::Index>(H.dimension());
    damping_ = SparseMatrix(n, n);
    for (const CollapseOp& c : collapse) {
      require_same_space(H.space(), c.op.space(), "evolve_density");
      if (c.rate < 0.0) throw std::invalid_argument("evolve_density: negative collapse rate");
      if (c.rate == 0.0) continue;
      const SparseMatrix& l = c.op.matrix();
      damping_ += SparseMatrix(c.rate * (l.adjoint() * l));
      Channel ch;
      ch.rate = c.rate;
      bool diagonal = true;
      for (Eigen::Index r = 0; r < l.outerSize() && diagonal; ++r)
        for (SparseMatrix::InnerIterator it(l, r); it; ++it)
          if (it.row() != it.col()) diagonal = false;
      if (diagonal) {
        ch.diagonal = DenseVector(l.diagonal());
      } else {
        ch.op = l;
      }
      channels_.push_back(std::move(ch));
    }
    damping_.prune(cplx{0.0}, 0.0);
  }

  void operator()(double t, const DenseMatrix& rho, DenseMatrix& drho) {
    // G rho with G = -i H - (1/2) sum r L^dag L, assembled once per call.
    generator_ = SparseMatrix(cplx{0.0, -1.0} * H_.at(t).matrix());
    if (damping_.nonZeros() > 0) generator_ -= 0.5 * damping_;
    g_rho_.noalias() = generator_ * rho;
    drho = g_rho_ + g_rho_.adjoint();
    for (const Channel& ch : channels_) {
      if (ch.diagonal) {
        const DenseVector& d = *ch.diagonal;
        drho += ch.rate * (d.asDiagonal() * rho * d.conjugate().asDiagonal());
      } else {
        tmp_.noalias() = ch.op * rho;
        tmp2_ = tmp_.adjoint();
        drho.noalias() += ch.rate * (ch.op * tmp2_);
      }
    }
  }

 private:
  struct Channel {
    double rate = 0.0;
    SparseMatrix op;
    std::optional<DenseVector> diagonal;
  };
  const TimeDependentOperator& H_;
  SparseMatrix damping_;
  SparseMatrix generator_;
  std::vector<Channel> channels_;
  DenseMatrix g_rho_, tmp_, tmp2_;
};

/// Positivity is checked (min eigenvalue >= -1e-6) at output times when the
/// dimension is at most `positivity_check_dim`.
inline EvolutionResult<DensityMatrix> evolve_density(const TimeDependentOperator& H,
                                                     const std::vector<CollapseOp>& collapse,
                                                     const DensityMatrix& rho0, const std::vector<double>& times,
                                                     IntegratorSettings settings = {},
                                                     const Observables& observables = {},
                                                     std::size_t positivity_check_dim = 2000) {
  require_same_space(H.space(), rho0.space(), "evolve_density");
  detail::check_times(times);
  const double span = times.back() - times.front();
  if (settings.max_step <= 0.0) settings.max_step = span / 1000.0;
  auto [energies, rest] = settings.interaction_frame ? H.split_static_diagonal()
                                                     : std::pair{Eigen::VectorXd::Zero(static_cast<Eigen::Index>(H.dimension())).eval(), H};
  const detail::DiagonalFrame frame{energies, times.front()};
  LindbladRhs rhs(rest, collapse);
  EvolutionResult<DensityMatrix> out;
  DenseMatrix y = rho0.entries();
  double h = detail::initial_step(settings, span);
  auto record = [&](double t) {
    y = 0.5 * (y + y.adjoint()).eval();
    const DenseVector p = frame.phases(t);
    DensityMatrix rho(rho0.space(), (p.asDiagonal() * y * p.conjugate().asDiagonal()).eval());
    if (rho0.space().dimension() <= positivity_check_dim) {
      const double lmin = rho.min_eigenvalue();
      if (lmin < -1e-6) {
        std::ostringstream msg;
        msg << "evolve_density: positivity violated at t = " << t << " (min eigenvalue " << lmin << ")";
        throw ToleranceBreach(msg.str());
      }
    }
    for (const auto& [label, op] : observables) out.observables[label].push_back(expect(op, rho));
    out.times.push_back(t);
    out.states.push_back(std::move(rho));
  };
  record(times.front());
  DenseMatrix lab;
  auto step_rhs = [&](double t, const DenseMatrix& r, DenseMatrix& dr) {
    if (!settings.interaction_frame) {
      rhs(t, r, dr);
      return;
    }
    const DenseVector p = frame.phases(t);
    lab.noalias() = p.asDiagonal() * r * p.conjugate().asDiagonal();
    rhs(t, lab, dr);
    dr = (p.conjugate().asDiagonal() * dr * p.asDiagonal()).eval();
  };
  for (std::size_t i = 1; i < times.size(); ++i) {
    integrate(step_rhs, y, times[i - 1], times[i], settings, H.breakpoints(), h, out.stats);
    record(times[i]);
  }
  return out;
}

/// Evolves every basis vector from t_span.first to t_span.second and returns
/// the final states as columns (dimension x basis size).
inline DenseMatrix evolve_columns(const TimeDependentOperator& H, const DenseMatrix& columns,
                                  std::pair<double, double> t_span, IntegratorSettings settings, StepStats* stats = nullptr) {
  const double span = t_span.second - t_span.first;
  if (!(span >= 0.0)) throw std::invalid_argument("evolve_columns: t_span must be increasing");
  if (span == 0.0) return columns;
  if (settings.max_step <= 0.0) settings.max_step = span / 1000.0;
  auto [energies, rest] = settings.interaction_frame ? H.split_static_diagonal()
                                                     : std::pair{Eigen::VectorXd::Zero(static_cast<Eigen::Index>(H.dimension())).eval(), H};
  const detail::DiagonalFrame frame{energies, t_span.first};
  DenseMatrix w;
  auto rhs = [&](double t, const DenseMatrix& z, DenseMatrix& dz) {
    const DenseVector p = frame.phases(t);
    w.noalias() = p.asDiagonal() * z;
    dz.setZero(z.rows(), z.cols());
    rest.apply_add(t, w, dz, -kI);
    dz = (p.conjugate().asDiagonal() * dz).eval();
  };
  DenseMatrix y = columns;
  double h = detail::initial_step(settings, span);
  StepStats local;
  integrate(rhs, y, t_span.first, t_span.second, settings, H.breakpoints(), h, local);
  if (stats) *stats = local;
  return frame.phases(t_span.second).asDiagonal() * y;
}

inline DenseMatrix basis_matrix(const std::vector<StateVector>& basis) {
  if (basis.empty()) throw std::invalid_argument("basis_matrix: empty basis");
  DenseMatrix b(static_cast<Eigen::Index>(basis.front().space().dimension()), static_cast<Eigen::Index>(basis.size()));
  for (std::size_t j = 0; j < basis.size(); ++j) {
    require_same_space(basis.front().space(), basis[j].space(), "basis_matrix");
    b.col(static_cast<Eigen::Index>(j)) = basis[j].amplitudes();
  }
  return b;
}

/// M_ij = <b_i| U(t1, t0) |b_j>.
inline DenseMatrix propagator_on_subspace(const TimeDependentOperator& H, const std::vector<StateVector>& basis,
                                          std::pair<double, double> t_span, const IntegratorSettings& settings = {}) {
  const DenseMatrix b = basis_matrix(basis);
  require_same_space(H.space(), basis.front().space(), "propagator_on_subspace");
  const DenseMatrix gram = b.adjoint() * b;
  if (max_abs(gram - DenseMatrix::Identity(gram.rows(), gram.cols())) > 1e-8)
    throw std::invalid_argument("propagator_on_subspace: basis is not orthonormal");
  return b.adjoint() * evolve_columns(H, b, t_span, settings);
}

}  // namespace kerrcat
