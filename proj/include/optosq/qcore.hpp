#pragma once

// Dense operator algebra on truncated bosonic Fock spaces.
//
// Multimode spaces are ordered left to right as given in HilbertSpec; the
// three-mode models use a (x) b (x) c and the two-mode model b (x) c.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "optosq/errors.hpp"

namespace optosq {

using cplx = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;

inline constexpr cplx kI{0.0, 1.0};

class HilbertSpec {
 public:
  explicit HilbertSpec(std::vector<int> mode_dims) : dims_(std::move(mode_dims)) {
    if (dims_.empty()) throw InvalidDimensionError("HilbertSpec: no modes");
    for (int d : dims_) {
      if (d < 2) throw InvalidDimensionError("HilbertSpec: every mode needs at least 2 levels");
    }
  }

  int modes() const { return static_cast<int>(dims_.size()); }
  int dim(int slot) const {
    if (slot < 0 || slot >= modes()) throw RangeError("HilbertSpec: slot out of range");
    return dims_[static_cast<std::size_t>(slot)];
  }
  const std::vector<int>& mode_dims() const { return dims_; }

  int total_dim() const {
    int n = 1;
    for (int d : dims_) n *= d;
    return n;
  }

  bool operator==(const HilbertSpec&) const = default;

 private:
  std::vector<int> dims_;
};

/// Square complex matrix acting on a truncated Hilbert space.
class QOperator {
 public:
  QOperator() = default;
  explicit QOperator(CMatrix m) : m_(std::move(m)) {
    if (m_.rows() != m_.cols()) throw InvalidDimensionError("QOperator: matrix is not square");
  }

  static QOperator identity(int dim) { return QOperator(CMatrix::Identity(dim, dim)); }
  static QOperator zero(int dim) { return QOperator(CMatrix::Zero(dim, dim)); }

  int dim() const { return static_cast<int>(m_.rows()); }
  const CMatrix& matrix() const { return m_; }
  cplx operator()(int i, int j) const { return m_(i, j); }

  QOperator adjoint() const { return QOperator(m_.adjoint()); }

  /// Largest elementwise |A - A^dagger|.
  double hermiticity_defect() const {
    if (m_.size() == 0) return 0.0;
    return (m_ - m_.adjoint()).cwiseAbs().maxCoeff();
  }
  bool is_hermitian(double tol = 1e-12) const { return hermiticity_defect() <= tol; }

  friend QOperator operator*(const QOperator& x, const QOperator& y) {
    check_same(x, y);
    return QOperator(x.m_ * y.m_);
  }
  friend QOperator operator+(const QOperator& x, const QOperator& y) {
    check_same(x, y);
    return QOperator(x.m_ + y.m_);
  }
  friend QOperator operator-(const QOperator& x, const QOperator& y) {
    check_same(x, y);
    return QOperator(x.m_ - y.m_);
  }
  friend QOperator operator*(cplx s, const QOperator& x) { return QOperator(s * x.m_); }
  friend QOperator operator*(double s, const QOperator& x) { return QOperator(s * x.m_); }

 private:
  static void check_same(const QOperator& x, const QOperator& y) {
    if (x.dim() != y.dim()) throw InvalidDimensionError("QOperator: dimension mismatch");
  }

  CMatrix m_;
};

inline QOperator commutator(const QOperator& x, const QOperator& y) { return x * y - y * x; }

/// Lowering operator with <m|b|m+1> = sqrt(m+1).
inline QOperator annihilation(int n_levels) {
  if (n_levels < 2) throw InvalidDimensionError("annihilation: need at least 2 levels");
  CMatrix b = CMatrix::Zero(n_levels, n_levels);
  for (int m = 0; m + 1 < n_levels; ++m) b(m, m + 1) = std::sqrt(static_cast<double>(m + 1));
  return QOperator(std::move(b));
}

inline QOperator creation(int n_levels) { return annihilation(n_levels).adjoint(); }

inline QOperator number(int n_levels) {
  const QOperator b = annihilation(n_levels);
  return b.adjoint() * b;
}

/// X = (b + b^dagger)/sqrt(2) for an already embedded lowering operator.
inline QOperator position_quadrature(const QOperator& b) {
  return (1.0 / std::sqrt(2.0)) * (b + b.adjoint());
}

/// Y = (b - b^dagger)/(sqrt(2) i).
inline QOperator momentum_quadrature(const QOperator& b) {
  return cplx(0.0, -1.0 / std::sqrt(2.0)) * (b - b.adjoint());
}

inline CMatrix kron(const CMatrix& x, const CMatrix& y) {
  CMatrix out(x.rows() * y.rows(), x.cols() * y.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      out.block(i * y.rows(), j * y.cols(), y.rows(), y.cols()) = x(i, j) * y;
    }
  }
  return out;
}

/// identity (x) ... (x) op (x) ... (x) identity, with `op` in position `slot`.
inline QOperator embed(const QOperator& op, int slot, const HilbertSpec& spec) {
  if (slot < 0 || slot >= spec.modes()) throw RangeError("embed: slot out of range");
  if (op.dim() != spec.dim(slot)) throw InvalidDimensionError("embed: operator dimension does not match mode");
  CMatrix out = CMatrix::Identity(1, 1);
  for (int k = 0; k < spec.modes(); ++k) {
    out = kron(out, k == slot ? op.matrix() : CMatrix::Identity(spec.dim(k), spec.dim(k)));
  }
  return QOperator(std::move(out));
}

/// Lowering operator of mode `slot`, embedded in the full space.
inline QOperator mode_annihilation(int slot, const HilbertSpec& spec) {
  return embed(annihilation(spec.dim(slot)), slot, spec);
}

/// Physicality measures of a candidate density matrix.
struct StateDiagnostics {
  double hermiticity = 0.0;     ///< max |rho - rho^dagger|
  double trace_error = 0.0;     ///< |Tr rho - 1|
  double min_eigenvalue = 0.0;  ///< smallest eigenvalue of the Hermitian part
};

inline StateDiagnostics diagnose_state(const CMatrix& rho) {
  StateDiagnostics d;
  d.hermiticity = (rho - rho.adjoint()).cwiseAbs().maxCoeff();
  d.trace_error = std::abs(rho.trace() - cplx(1.0, 0.0));
  const CMatrix herm = 0.5 * (rho + rho.adjoint());
  Eigen::SelfAdjointEigenSolver<CMatrix> es(herm, Eigen::EigenvaluesOnly);
  d.min_eigenvalue = es.eigenvalues().minCoeff();
  return d;
}

struct StateTolerances {
  double hermiticity = 1e-12;
  double trace = 1e-10;
  double min_eigenvalue = -1e-10;
};

inline bool is_physical(const StateDiagnostics& d, const StateTolerances& tol = {}) {
  return d.hermiticity <= tol.hermiticity && d.trace_error <= tol.trace && d.min_eigenvalue >= tol.min_eigenvalue;
}

/// Hermitian, unit-trace, positive semidefinite matrix.
class DensityMatrix {
 public:
  /// Validates against `tol` and throws PhysicalityError on violation.
  explicit DensityMatrix(CMatrix rho, const StateTolerances& tol = {}) : m_(std::move(rho)) {
    if (m_.rows() != m_.cols()) throw InvalidDimensionError("DensityMatrix: matrix is not square");
    const StateDiagnostics d = diagnose_state(m_);
    if (!is_physical(d, tol)) {
      throw PhysicalityError("DensityMatrix: not a physical state (hermiticity " + std::to_string(d.hermiticity) +
                             ", trace error " + std::to_string(d.trace_error) + ", min eigenvalue " +
                             std::to_string(d.min_eigenvalue) + ")");
    }
  }

  static DensityMatrix pure(const Eigen::VectorXcd& psi) {
    const Eigen::VectorXcd n = psi / psi.norm();
    return DensityMatrix(n * n.adjoint());
  }

  /// |k><k| on a space of dimension `dim`.
  static DensityMatrix basis(int dim, int k) {
    if (k < 0 || k >= dim) throw RangeError("DensityMatrix::basis: level out of range");
    CMatrix m = CMatrix::Zero(dim, dim);
    m(k, k) = 1.0;
    return DensityMatrix(std::move(m));
  }

  int dim() const { return static_cast<int>(m_.rows()); }
  const CMatrix& matrix() const { return m_; }
  StateDiagnostics diagnostics() const { return diagnose_state(m_); }

 private:
  CMatrix m_;
};

/// rho_A (x) rho_B in the order given.
inline DensityMatrix tensor(const DensityMatrix& x, const DensityMatrix& y) {
  return DensityMatrix(kron(x.matrix(), y.matrix()));
}

inline DensityMatrix tensor(const std::vector<DensityMatrix>& parts) {
  if (parts.empty()) throw InvalidDimensionError("tensor: no factors");
  CMatrix out = parts.front().matrix();
  for (std::size_t k = 1; k < parts.size(); ++k) out = kron(out, parts[k].matrix());
  return DensityMatrix(std::move(out));
}

/// Bose-Einstein populations n^k/(n+1)^(k+1), renormalised after truncation.
inline DensityMatrix thermal_state(int n_levels, double n_m) {
  if (n_levels < 2) throw InvalidDimensionError("thermal_state: need at least 2 levels");
  if (!(n_m >= 0.0) || !std::isfinite(n_m)) throw DomainError("thermal_state: mean occupation must be >= 0");
  CMatrix rho = CMatrix::Zero(n_levels, n_levels);
  if (n_m == 0.0) {
    rho(0, 0) = 1.0;
    return DensityMatrix(std::move(rho));
  }
  const double ratio = n_m / (n_m + 1.0);
  double w = 1.0 / (n_m + 1.0);
  double total = 0.0;
  for (int k = 0; k < n_levels; ++k) {
    rho(k, k) = w;
    total += w;
    w *= ratio;
  }
  rho /= total;
  return DensityMatrix(std::move(rho));
}

/// Tr[op rho].
inline cplx expectation(const QOperator& op, const CMatrix& rho) {
  if (op.dim() != rho.rows()) throw InvalidDimensionError("expectation: dimension mismatch");
  // Tr[A B] = sum_ij A_ij B_ji
  return (op.matrix().transpose().cwiseProduct(rho)).sum();
}

inline cplx expectation(const QOperator& op, const DensityMatrix& rho) { return expectation(op, rho.matrix()); }

/// <Z^2> - <Z>^2 for Hermitian Z.
inline double quadrature_variance(const CMatrix& rho, const QOperator& z) {
  if (!z.is_hermitian(1e-12)) throw DomainError("quadrature_variance: operator is not Hermitian");
  const double mean = expectation(z, rho).real();
  const double second = expectation(z * z, rho).real();
  return second - mean * mean;
}

inline double quadrature_variance(const DensityMatrix& rho, const QOperator& z) {
  return quadrature_variance(rho.matrix(), z);
}

/// Population in the top `levels` Fock states of mode `slot` (truncation guard).
inline double top_level_population(const CMatrix& rho, const HilbertSpec& spec, int slot, int levels = 2) {
  const int n = spec.dim(slot);
  int inner = 1;
  for (int k = slot + 1; k < spec.modes(); ++k) inner *= spec.dim(k);
  double pop = 0.0;
  for (Eigen::Index i = 0; i < rho.rows(); ++i) {
    const int level = static_cast<int>((i / inner) % n);
    if (level >= n - levels) pop += rho(i, i).real();
  }
  return pop;
}

}  // namespace optosq
