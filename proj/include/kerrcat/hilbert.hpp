// Truncated multimode Fock spaces and the sparse complex operator algebra
// used by every Hamiltonian and collapse operator in the library.
//
// Layout: row-major tensor ordering, mode 0 is the slowest-varying index.
// A flat index is sum_m occ[m] * stride[m] with stride[m] = prod_{k>m} dim[k].

#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace kerrcat {

using cplx = std::complex<double>;
using DenseMatrix = Eigen::MatrixXcd;
using DenseVector = Eigen::VectorXcd;
using SparseMatrix = Eigen::SparseMatrix<cplx, Eigen::RowMajor>;

inline constexpr cplx kI{0.0, 1.0};
inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

class HilbertSpace {
 public:
  HilbertSpace() = default;

  HilbertSpace(std::vector<int> dims, std::vector<std::string> labels)
      : dims_(std::move(dims)), labels_(std::move(labels)) {
    if (dims_.empty()) throw std::invalid_argument("HilbertSpace: no modes");
    if (labels_.size() != dims_.size())
      throw std::invalid_argument("HilbertSpace: one label per mode required");
    for (int d : dims_)
      if (d < 2) throw std::invalid_argument("HilbertSpace: mode dimension must be >= 2");
    for (std::size_t i = 0; i < labels_.size(); ++i)
      for (std::size_t j = i + 1; j < labels_.size(); ++j)
        if (labels_[i] == labels_[j])
          throw std::invalid_argument("HilbertSpace: duplicate label '" + labels_[i] + "'");
    strides_.assign(dims_.size(), 1);
    for (std::size_t m = dims_.size() - 1; m > 0; --m)
      strides_[m - 1] = strides_[m] * static_cast<std::size_t>(dims_[m]);
    total_ = strides_[0] * static_cast<std::size_t>(dims_[0]);
  }

  std::size_t dimension() const { return total_; }
  std::size_t num_modes() const { return dims_.size(); }
  int mode_dim(std::size_t mode) const { return dims_.at(mode); }
  std::size_t stride(std::size_t mode) const { return strides_.at(mode); }
  const std::vector<int>& dims() const { return dims_; }
  const std::vector<std::string>& labels() const { return labels_; }
  const std::string& label(std::size_t mode) const { return labels_.at(mode); }

  std::size_t mode_index(std::string_view label) const {
    for (std::size_t m = 0; m < labels_.size(); ++m)
      if (labels_[m] == label) return m;
    throw std::invalid_argument("HilbertSpace: unknown mode '" + std::string(label) + "'");
  }

  std::size_t flat_index(std::span<const int> occupation) const {
    if (occupation.size() != dims_.size())
      throw std::invalid_argument("flat_index: occupation length mismatch");
    std::size_t flat = 0;
    for (std::size_t m = 0; m < dims_.size(); ++m) {
      if (occupation[m] < 0 || occupation[m] >= dims_[m])
        throw std::out_of_range("flat_index: occupation outside truncation");
      flat += static_cast<std::size_t>(occupation[m]) * strides_[m];
    }
    return flat;
  }

  std::vector<int> multi_index(std::size_t flat) const {
    if (flat >= total_) throw std::out_of_range("multi_index: flat index out of range");
    std::vector<int> occ(dims_.size());
    for (std::size_t m = 0; m < dims_.size(); ++m) {
      occ[m] = static_cast<int>(flat / strides_[m]);
      flat %= strides_[m];
    }
    return occ;
  }

  bool operator==(const HilbertSpace& other) const {
    return dims_ == other.dims_ && labels_ == other.labels_;
  }

 private:
  std::vector<int> dims_;
  std::vector<std::string> labels_;
  std::vector<std::size_t> strides_;
  std::size_t total_ = 0;
};

/// Labels default to "a0", "a1", ... when none are given.
inline HilbertSpace make_space(std::vector<int> dims, std::vector<std::string> labels = {}) {
  if (dims.empty()) throw std::invalid_argument("make_space: empty mode list");
  if (labels.empty())
    for (std::size_t m = 0; m < dims.size(); ++m) labels.push_back("a" + std::to_string(m));
  return HilbertSpace(std::move(dims), std::move(labels));
}

inline void require_same_space(const HilbertSpace& a, const HilbertSpace& b, const char* what) {
  if (!(a == b)) throw std::invalid_argument(std::string(what) + ": Hilbert space mismatch");
}

class SparseOperator {
 public:
  SparseOperator() = default;
  SparseOperator(HilbertSpace space, SparseMatrix matrix)
      : space_(std::move(space)), matrix_(std::move(matrix)) {
    const auto n = static_cast<Eigen::Index>(space_.dimension());
    if (matrix_.rows() != n || matrix_.cols() != n)
      throw std::invalid_argument("SparseOperator: matrix shape does not match space");
    matrix_.prune([](Eigen::Index, Eigen::Index, const cplx& v) { return v != cplx{}; });
    matrix_.makeCompressed();
  }

  static SparseOperator identity(const HilbertSpace& space) {
    const auto n = static_cast<Eigen::Index>(space.dimension());
    SparseMatrix m(n, n);
    m.setIdentity();
    return {space, std::move(m)};
  }

  static SparseOperator zero(const HilbertSpace& space) {
    const auto n = static_cast<Eigen::Index>(space.dimension());
    return {space, SparseMatrix(n, n)};
  }

  static SparseOperator from_dense(const HilbertSpace& space, const DenseMatrix& m) {
    return {space, SparseMatrix(m.sparseView())};
  }

  const HilbertSpace& space() const { return space_; }
  const SparseMatrix& matrix() const { return matrix_; }
  std::size_t dimension() const { return space_.dimension(); }
  Eigen::Index nonzeros() const { return matrix_.nonZeros(); }
  DenseMatrix dense() const { return DenseMatrix(matrix_); }

  cplx element(Eigen::Index row, Eigen::Index col) const { return matrix_.coeff(row, col); }

  /// Largest entry modulus; the operator distance used throughout.
  double max_abs() const {
    double best = 0.0;
    for (Eigen::Index k = 0; k < matrix_.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(matrix_, k); it; ++it) best = std::max(best, std::abs(it.value()));
    return best;
  }

  SparseOperator dagger() const { return {space_, SparseMatrix(matrix_.adjoint())}; }

  SparseOperator operator+(const SparseOperator& o) const {
    require_same_space(space_, o.space_, "operator+");
    return {space_, SparseMatrix(matrix_ + o.matrix_)};
  }
  SparseOperator operator-(const SparseOperator& o) const {
    require_same_space(space_, o.space_, "operator-");
    return {space_, SparseMatrix(matrix_ - o.matrix_)};
  }
  SparseOperator operator*(const SparseOperator& o) const {
    require_same_space(space_, o.space_, "operator*");
    return {space_, SparseMatrix(matrix_ * o.matrix_)};
  }
  SparseOperator operator*(cplx s) const { return {space_, SparseMatrix(s * matrix_)}; }
  friend SparseOperator operator*(cplx s, const SparseOperator& op) { return op * s; }
  SparseOperator& operator+=(const SparseOperator& o) { return *this = *this + o; }
  SparseOperator& operator-=(const SparseOperator& o) { return *this = *this - o; }

 private:
  HilbertSpace space_;
  SparseMatrix matrix_;
};

class StateVector {
 public:
  StateVector() = default;
  StateVector(HilbertSpace space, DenseVector amplitudes)
      : space_(std::move(space)), amplitudes_(std::move(amplitudes)) {
    if (amplitudes_.size() != static_cast<Eigen::Index>(space_.dimension()))
      throw std::invalid_argument("StateVector: amplitude count does not match space");
  }

  static StateVector normalized(HilbertSpace space, DenseVector amplitudes) {
    StateVector s(std::move(space), std::move(amplitudes));
    s.normalize();
    return s;
  }

  static StateVector basis(const HilbertSpace& space, std::span<const int> occupation) {
    DenseVector v = DenseVector::Zero(static_cast<Eigen::Index>(space.dimension()));
    v(static_cast<Eigen::Index>(space.flat_index(occupation))) = 1.0;
    return {space, std::move(v)};
  }

  const HilbertSpace& space() const { return space_; }
  const DenseVector& amplitudes() const { return amplitudes_; }
  DenseVector& amplitudes() { return amplitudes_; }
  double norm() const { return amplitudes_.norm(); }

  void normalize() {
    const double n = amplitudes_.norm();
    if (n == 0.0) throw std::invalid_argument("StateVector: cannot normalize the zero vector");
    amplitudes_ /= n;
  }

 private:
  HilbertSpace space_;
  DenseVector amplitudes_;
};

class DensityMatrix {
 public:
  DensityMatrix() = default;
  DensityMatrix(HilbertSpace space, DenseMatrix entries)
      : space_(std::move(space)), entries_(std::move(entries)) {
    const auto n = static_cast<Eigen::Index>(space_.dimension());
    if (entries_.rows() != n || entries_.cols() != n)
      throw std::invalid_argument("DensityMatrix: shape does not match space");
  }

  static DensityMatrix from_pure(const StateVector& psi) {
    const DenseVector& v = psi.amplitudes();
    return {psi.space(), v * v.adjoint()};
  }

  static DensityMatrix maximally_mixed(const HilbertSpace& space) {
    const auto n = static_cast<Eigen::Index>(space.dimension());
    return {space, DenseMatrix::Identity(n, n) / static_cast<double>(n)};
  }

  const HilbertSpace& space() const { return space_; }
  const DenseMatrix& entries() const { return entries_; }
  DenseMatrix& entries() { return entries_; }

  cplx trace() const { return entries_.trace(); }
  double hermiticity_error() const { return (entries_ - entries_.adjoint()).cwiseAbs().maxCoeff(); }
  void symmetrize() { entries_ = (0.5 * (entries_ + entries_.adjoint())).eval(); }

  double min_eigenvalue() const {
    Eigen::SelfAdjointEigenSolver<DenseMatrix> es(entries_, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
  }

  /// Reduced state of a single mode (all other modes traced out).
  DenseMatrix reduced(std::size_t mode) const {
    const auto d = static_cast<std::size_t>(space_.mode_dim(mode));
    const std::size_t inner = space_.stride(mode);
    const std::size_t outer = space_.dimension() / (d * inner);
    DenseMatrix out = DenseMatrix::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) {
          const std::size_t r0 = (o * d + i) * inner;
          const std::size_t c0 = (o * d + j) * inner;
          cplx acc{};
          for (std::size_t r = 0; r < inner; ++r)
            acc += entries_(static_cast<Eigen::Index>(r0 + r), static_cast<Eigen::Index>(c0 + r));
          out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) += acc;
        }
    return out;
  }

 private:
  HilbertSpace space_;
  DenseMatrix entries_;
};

// ---------------------------------------------------------------------------
// Single-mode building blocks (dense, d x d)

inline DenseMatrix local_annihilation(int dim) {
  DenseMatrix a = DenseMatrix::Zero(dim, dim);
  for (int n = 1; n < dim; ++n) a(n - 1, n) = std::sqrt(static_cast<double>(n));
  return a;
}

inline DenseMatrix local_number(int dim) {
  DenseMatrix n = DenseMatrix::Zero(dim, dim);
  for (int k = 0; k < dim; ++k) n(k, k) = static_cast<double>(k);
  return n;
}

/// exp(-i H t) for Hermitian H via eigendecomposition; exactly unitary.
inline DenseMatrix expm_hermitian(const DenseMatrix& hermitian, double t = 1.0) {
  Eigen::SelfAdjointEigenSolver<DenseMatrix> es(hermitian);
  const DenseVector phases = (-kI * t * es.eigenvalues().cast<cplx>()).array().exp().matrix();
  return es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
}

/// D(amp) = exp(amp a^dag - conj(amp) a) on a single truncated mode.
inline DenseMatrix local_displacement(int dim, cplx amp) {
  const DenseMatrix a = local_annihilation(dim);
  // The generator G is anti-Hermitian; iG is Hermitian and exp(G) = exp(-i (iG)).
  const DenseMatrix generator = amp * a.adjoint() - std::conj(amp) * a;
  const DenseMatrix hermitian = kI * generator;
  return expm_hermitian(0.5 * (hermitian + hermitian.adjoint()));
}

/// Kronecker embedding of a single-mode operator, identities elsewhere.
inline SparseOperator tensor_embed(const DenseMatrix& local, const HilbertSpace& space, std::size_t mode) {
  const auto d = static_cast<std::size_t>(space.mode_dim(mode));
  if (static_cast<std::size_t>(local.rows()) != d || static_cast<std::size_t>(local.cols()) != d)
    throw std::invalid_argument("tensor_embed: local operator shape does not match mode dimension");
  const std::size_t inner = space.stride(mode);
  const std::size_t outer = space.dimension() / (d * inner);
  std::vector<std::pair<std::pair<std::size_t, std::size_t>, cplx>> local_nz;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const cplx v = local(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      if (v != cplx{}) local_nz.push_back({{i, j}, v});
    }
  std::vector<Eigen::Triplet<cplx>> trips;
  trips.reserve(outer * inner * local_nz.size());
  for (std::size_t o = 0; o < outer; ++o)
    for (const auto& [ij, v] : local_nz)
      for (std::size_t r = 0; r < inner; ++r)
        trips.emplace_back(static_cast<Eigen::Index>((o * d + ij.first) * inner + r),
                           static_cast<Eigen::Index>((o * d + ij.second) * inner + r), v);
  const auto n = static_cast<Eigen::Index>(space.dimension());
  SparseMatrix m(n, n);
  m.setFromTriplets(trips.begin(), trips.end());
  return {space, std::move(m)};
}

inline SparseOperator tensor_embed(const DenseMatrix& local, const HilbertSpace& space, std::string_view mode) {
  return tensor_embed(local, space, space.mode_index(mode));
}

inline SparseOperator annihilation(const HilbertSpace& space, std::string_view mode) {
  const std::size_t m = space.mode_index(mode);
  return tensor_embed(local_annihilation(space.mode_dim(m)), space, m);
}

inline SparseOperator creation(const HilbertSpace& space, std::string_view mode) {
  return annihilation(space, mode).dagger();
}

inline SparseOperator number(const HilbertSpace& space, std::string_view mode) {
  const std::size_t m = space.mode_index(mode);
  return tensor_embed(local_number(space.mode_dim(m)), space, m);
}

/// Warns through the return flag rather than throwing when the amplitude is
/// large for the truncation; callers that care check displacement_is_resolved.
inline bool displacement_is_resolved(int dim, cplx amp) {
  return std::abs(amp) * std::abs(amp) + 6.0 * std::abs(amp) + 6.0 < static_cast<double>(dim);
}

inline SparseOperator displacement(const HilbertSpace& space, std::string_view mode, cplx amp) {
  const std::size_t m = space.mode_index(mode);
  return tensor_embed(local_displacement(space.mode_dim(m), amp), space, m);
}

inline StateVector apply(const SparseOperator& op, const StateVector& state) {
  require_same_space(op.space(), state.space(), "apply");
  return {state.space(), op.matrix() * state.amplitudes()};
}

inline SparseOperator mul(const SparseOperator& a, const SparseOperator& b) { return a * b; }
inline SparseOperator dagger(const SparseOperator& op) { return op.dagger(); }

inline SparseOperator commutator(const SparseOperator& a, const SparseOperator& b) { return a * b - b * a; }

inline cplx expect(const SparseOperator& op, const StateVector& state) {
  require_same_space(op.space(), state.space(), "expect");
  return state.amplitudes().dot(op.matrix() * state.amplitudes());
}

/// Tr(op rho).
inline cplx expect(const SparseOperator& op, const DensityMatrix& rho) {
  require_same_space(op.space(), rho.space(), "expect");
  cplx acc{};
  const SparseMatrix& m = op.matrix();
  for (Eigen::Index r = 0; r < m.outerSize(); ++r)
    for (SparseMatrix::InnerIterator it(m, r); it; ++it) acc += it.value() * rho.entries()(it.col(), r);
  return acc;
}

/// Kronecker product of single-mode vectors in mode order.
inline StateVector product_state(const HilbertSpace& space, const std::vector<DenseVector>& locals) {
  if (locals.size() != space.num_modes()) throw std::invalid_argument("product_state: one vector per mode required");
  DenseVector acc = DenseVector::Ones(1);
  for (std::size_t m = 0; m < locals.size(); ++m) {
    const DenseVector& v = locals[m];
    if (v.size() != space.mode_dim(m)) throw std::invalid_argument("product_state: local dimension mismatch");
    DenseVector next(acc.size() * v.size());
    for (Eigen::Index i = 0; i < acc.size(); ++i) next.segment(i * v.size(), v.size()) = acc(i) * v;
    acc = std::move(next);
  }
  return {space, std::move(acc)};
}

inline DenseVector fock_vector(int dim, int n) {
  if (n < 0 || n >= dim) throw std::out_of_range("fock_vector: level outside truncation");
  DenseVector v = DenseVector::Zero(dim);
  v(n) = 1.0;
  return v;
}

inline double max_abs(const DenseMatrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

}  // namespace kerrcat
