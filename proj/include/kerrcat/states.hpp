// Coherent, cat, and displaced-Fock excited states of a Kerr parametric
// oscillator, plus the state-comparison metrics.

#pragma once

#include "kerrcat/hilbert.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace kerrcat {

/// even <-> |C+>, odd <-> |C->.
enum class CatParity { even, odd };

inline CatParity flip(CatParity p) { return p == CatParity::even ? CatParity::odd : CatParity::even; }

struct QubitBasisState {
  std::vector<CatParity> parities;
  int bus_fock = 0;
};

/// |alpha> = D(alpha)|0> on a single truncated mode.
inline DenseVector local_coherent(int dim, cplx alpha) {
  return local_displacement(dim, alpha).col(0);
}

/// N_pm [D(alpha) pm D(-alpha)] |0>. The normalization is done numerically so
/// that the truncated vector has unit norm.
inline DenseVector local_cat(int dim, double alpha, CatParity parity) {
  if (!(alpha > 0.0)) throw std::invalid_argument("cat_state: alpha must be positive");
  const DenseMatrix dp = local_displacement(dim, alpha);
  const DenseMatrix dm = local_displacement(dim, -alpha);
  const double sign = parity == CatParity::even ? 1.0 : -1.0;
  DenseVector v = dp.col(0) + sign * dm.col(0);
  // Parity support is exact in infinite dimension; clear the round-off.
  for (Eigen::Index n = (parity == CatParity::even ? 1 : 0); n < v.size(); n += 2) v(n) = 0.0;
  return v / v.norm();
}

/// N_e^pm [D(alpha) -+ D(-alpha)] |1>. The '+' state is even, the '-' state odd.
inline DenseVector local_excited_cat(int dim, double alpha, CatParity parity) {
  if (!(alpha > 0.0)) throw std::invalid_argument("excited_cat: alpha must be positive");
  const DenseMatrix dp = local_displacement(dim, alpha);
  const DenseMatrix dm = local_displacement(dim, -alpha);
  const double sign = parity == CatParity::even ? -1.0 : 1.0;
  DenseVector v = dp.col(1) + sign * dm.col(1);
  for (Eigen::Index n = (parity == CatParity::even ? 1 : 0); n < v.size(); n += 2) v(n) = 0.0;
  return v / v.norm();
}

/// Closed-form normalization 1 / sqrt(2 (1 pm e^{-2 alpha^2})).
inline double cat_normalization(double alpha, CatParity parity) {
  const double s = parity == CatParity::even ? 1.0 : -1.0;
  return 1.0 / std::sqrt(2.0 * (1.0 + s * std::exp(-2.0 * alpha * alpha)));
}

namespace detail {
inline StateVector embed_local(const HilbertSpace& space, std::size_t mode, const DenseVector& local) {
  std::vector<DenseVector> parts;
  for (std::size_t m = 0; m < space.num_modes(); ++m)
    parts.push_back(m == mode ? local : fock_vector(space.mode_dim(m), 0));
  return product_state(space, parts);
}
}  // namespace detail

/// Coherent state on one mode, vacuum on every other mode.
inline StateVector coherent(const HilbertSpace& space, std::string_view mode, cplx alpha) {
  const std::size_t m = space.mode_index(mode);
  return detail::embed_local(space, m, local_coherent(space.mode_dim(m), alpha));
}

inline StateVector cat_state(const HilbertSpace& space, std::string_view mode, double alpha, CatParity parity) {
  const std::size_t m = space.mode_index(mode);
  return detail::embed_local(space, m, local_cat(space.mode_dim(m), alpha, parity));
}

inline StateVector excited_cat(const HilbertSpace& space, std::string_view mode, double alpha, CatParity parity) {
  const std::size_t m = space.mode_index(mode);
  return detail::embed_local(space, m, local_excited_cat(space.mode_dim(m), alpha, parity));
}

inline cplx overlap(const StateVector& psi, const StateVector& phi) {
  require_same_space(psi.space(), phi.space(), "overlap");
  return psi.amplitudes().dot(phi.amplitudes());
}

/// |<psi|phi>|^2.
inline double fidelity(const StateVector& psi, const StateVector& phi) { return std::norm(overlap(psi, phi)); }

/// <phi|rho|phi>.
inline double fidelity(const DensityMatrix& rho, const StateVector& phi) {
  require_same_space(rho.space(), phi.space(), "fidelity");
  return std::real(phi.amplitudes().dot(rho.entries() * phi.amplitudes()));
}

}  // namespace kerrcat
