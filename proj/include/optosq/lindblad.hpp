#pragma once

// Master-equation track: the linearised fluctuation Hamiltonians (static
// three-mode, effective two-mode after cavity elimination, and the
// time-dependent three-mode version driven by the mean-field trajectory),
// Lindblad evolution, and direct steady-state solves.
//
// Operators and states are dense at the public surface. The integrator works
// on sparse copies of the Hamiltonian and jump operators, which is what makes
// the 160-dimensional three-mode model affordable.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "optosq/errors.hpp"
#include "optosq/meanfield.hpp"
#include "optosq/model.hpp"
#include "optosq/ode.hpp"
#include "optosq/qcore.hpp"
#include "optosq/timeseries.hpp"

namespace optosq {

using SparseOp = Eigen::SparseMatrix<cplx, Eigen::RowMajor>;

enum class HamiltonianKind { full_linear, effective, time_dependent };

inline const char* to_string(HamiltonianKind k) {
  switch (k) {
    case HamiltonianKind::full_linear:
      return "full_linear";
    case HamiltonianKind::effective:
      return "effective";
    case HamiltonianKind::time_dependent:
      return "time_dependent";
  }
  return "?";
}

inline HilbertSpec default_truncation(HamiltonianKind k) {
  return k == HamiltonianKind::effective ? HilbertSpec({14, 8}) : HilbertSpec({4, 10, 4});
}

struct HamiltonianSpec {
  HamiltonianKind kind = HamiltonianKind::effective;
  DerivedParams params;
  HilbertSpec space = HilbertSpec({14, 8});
  std::shared_ptr<const MeanFieldTrajectory> trajectory;  ///< time_dependent only

  int cavity_slot() const { return kind == HamiltonianKind::effective ? -1 : 0; }
  int mechanical_slot() const { return kind == HamiltonianKind::effective ? 0 : 1; }
  int atomic_slot() const { return kind == HamiltonianKind::effective ? 1 : 2; }

  void validate() const {
    const int expected = kind == HamiltonianKind::effective ? 2 : 3;
    if (space.modes() != expected) {
      throw InvalidDimensionError(std::string("HamiltonianSpec: kind ") + to_string(kind) + " needs " +
                                  std::to_string(expected) + " modes");
    }
    if (kind == HamiltonianKind::time_dependent && !trajectory) {
      throw DomainError("HamiltonianSpec: time_dependent kind needs a mean-field trajectory");
    }
  }
};

inline HamiltonianSpec full_linear_spec(const DerivedParams& d, HilbertSpec space = HilbertSpec({4, 10, 4})) {
  return {HamiltonianKind::full_linear, d, std::move(space), nullptr};
}

inline HamiltonianSpec effective_spec(const DerivedParams& d, HilbertSpec space = HilbertSpec({14, 8})) {
  return {HamiltonianKind::effective, d, std::move(space), nullptr};
}

inline HamiltonianSpec time_dependent_spec(const DerivedParams& d, std::shared_ptr<const MeanFieldTrajectory> traj,
                                           HilbertSpec space = HilbertSpec({4, 10, 4})) {
  if (traj && traj->form() != MeanFieldForm::abc) {
    throw DomainError("time_dependent_spec: trajectory must use the a, b, c formulation");
  }
  return {HamiltonianKind::time_dependent, d, std::move(space), std::move(traj)};
}

/// One term coefficient(t) * op of a Hamiltonian.
struct HamiltonianTerm {
  QOperator op;
  std::function<cplx(double)> coefficient;  ///< empty for constant terms
  cplx constant{1.0, 0.0};

  cplx at(double t) const { return coefficient ? coefficient(t) : constant; }
  bool is_static() const { return !coefficient; }
};

/// Decomposes H(t) into operator terms with scalar coefficients.
inline std::vector<HamiltonianTerm> hamiltonian_terms(const HamiltonianSpec& h) {
  h.validate();
  const DerivedParams& d = h.params;
  const PhysicalParams& p = d.base;
  std::vector<HamiltonianTerm> terms;
  auto add = [&](QOperator op, cplx value) { terms.push_back({std::move(op), {}, value}); };

  const QOperator b = mode_annihilation(h.mechanical_slot(), h.space);
  const QOperator c = mode_annihilation(h.atomic_slot(), h.space);
  const QOperator bd = b.adjoint(), cd = c.adjoint();
  const QOperator bx = b + bd;
  const QOperator parametric = b * b + bd * bd;

  if (h.kind == HamiltonianKind::effective) {
    add(bd * b, d.omega_m_tilde);
    add(cd * c, d.Delta_eff);
    add(bx * (c + cd), d.G_eff);
    add(parametric, d.eta_prime);
    return terms;
  }

  const QOperator a = mode_annihilation(h.cavity_slot(), h.space);
  const QOperator ad = a.adjoint();
  add(bd * b, d.omega_m_prime);
  add(cd * c, p.Delta_a);
  add(parametric, p.eta);
  add(cd * a + c * ad, p.G);

  if (h.kind == HamiltonianKind::full_linear) {
    add(ad * a, d.Delta_c_eff);
    add((a + ad) * bx, -d.G0);
    return terms;
  }

  // time_dependent: detuning and coupling follow <a(t)>, <b(t)>.
  add(ad * a, p.delta_c);
  const auto traj = h.trajectory;
  const double g0p = p.g0_prime;
  terms.push_back({ad * a, [traj, g0p](double t) { return cplx(-2.0 * g0p * traj->at(t).b.real(), 0.0); }, {}});
  terms.push_back({a * bx, [traj, g0p](double t) { return -g0p * std::conj(traj->at(t).a); }, {}});
  terms.push_back({ad * bx, [traj, g0p](double t) { return -g0p * traj->at(t).a; }, {}});
  return terms;
}

inline QOperator build_hamiltonian(const HamiltonianSpec& h, double t = 0.0) {
  if (h.kind == HamiltonianKind::time_dependent) {
    h.validate();
    (void)h.trajectory->at(t);  // range check before touching the terms
  }
  QOperator H = QOperator::zero(h.space.total_dim());
  for (const auto& term : hamiltonian_terms(h)) H = H + term.at(t) * term.op;
  return H;
}

struct DissipationChannel {
  QOperator op;
  double rate = 0.0;
  std::string name;
};

struct DissipatorSpec {
  std::vector<DissipationChannel> channels;

  void validate(int dim) const {
    for (const auto& ch : channels) {
      if (!(ch.rate >= 0.0) || !std::isfinite(ch.rate)) throw DomainError("DissipatorSpec: negative rate " + ch.name);
      if (ch.op.dim() != dim) throw InvalidDimensionError("DissipatorSpec: channel dimension mismatch " + ch.name);
    }
  }
};

/// Dissipators matching the Langevin amplitude rates: a channel whose
/// amplitude decays as exp(-k t) enters with Lindblad rate 2k.
inline DissipatorSpec standard_dissipators(const HamiltonianSpec& h) {
  h.validate();
  const PhysicalParams& p = h.params.base;
  const QOperator b = mode_annihilation(h.mechanical_slot(), h.space);
  const QOperator c = mode_annihilation(h.atomic_slot(), h.space);
  DissipatorSpec d;
  if (h.kind != HamiltonianKind::effective) {
    d.channels.push_back({mode_annihilation(h.cavity_slot(), h.space), 2.0 * p.kappa, "a"});
  }
  d.channels.push_back({b, 2.0 * p.gamma_m * (p.n_m + 1.0), "b"});
  d.channels.push_back({b.adjoint(), 2.0 * p.gamma_m * p.n_m, "b_dag"});
  const double atomic = h.kind == HamiltonianKind::effective ? h.params.gamma_eff : p.gamma_a;
  d.channels.push_back({c, 2.0 * atomic, "c"});
  return d;
}

/// -i[H, rho] + sum_k rate_k (L rho L' - {L'L, rho}/2).
inline CMatrix lindblad_rhs(const QOperator& H, const DissipatorSpec& d, const CMatrix& rho) {
  if (H.dim() != rho.rows() || rho.rows() != rho.cols()) throw InvalidDimensionError("lindblad_rhs: dimension mismatch");
  d.validate(H.dim());
  const CMatrix& h = H.matrix();
  CMatrix out = -kI * (h * rho - rho * h);
  for (const auto& ch : d.channels) {
    const CMatrix& L = ch.op.matrix();
    const CMatrix LdL = L.adjoint() * L;
    out += ch.rate * (L * rho * L.adjoint() - 0.5 * (LdL * rho + rho * LdL));
  }
  return out;
}

inline CMatrix lindblad_rhs(const QOperator& H, const DissipatorSpec& d, const DensityMatrix& rho) {
  return lindblad_rhs(H, d, rho.matrix());
}

/// Sparse Liouvillian generator used by the integrator.
///
/// Every product is arranged as dense * sparse, which Eigen handles several
/// times faster than sparse * dense for column-major states.
class LindbladGenerator {
 public:
  LindbladGenerator(const HamiltonianSpec& h, const DissipatorSpec& d) : dim_(h.space.total_dim()) {
    d.validate(dim_);
    CMatrix Hnh = CMatrix::Zero(dim_, dim_);
    for (auto& term : hamiltonian_terms(h)) {
      if (term.is_static()) {
        Hnh += term.constant * term.op.matrix();
      } else {
        dynamic_.push_back({sparse(term.op.matrix().transpose()), std::move(term.coefficient)});
      }
    }
    for (const auto& ch : d.channels) {
      if (ch.rate == 0.0) continue;
      const CMatrix& L = ch.op.matrix();
      Hnh += cplx(0.0, -0.5 * ch.rate) * (L.adjoint() * L);
      jumps_.push_back({sparse(L.transpose()), sparse(L.adjoint()), ch.rate});
    }
    hnh_t_ = sparse(Hnh.transpose());
  }

  int dim() const { return dim_; }

  void operator()(double t, const CMatrix& rho, CMatrix& out) {
    // trans_ = (Hnh rho)^T = rho^T Hnh^T; transposes are materialised first
    // because Eigen's transposed-view * sparse path is slow.
    rho_t_ = rho.transpose();
    trans_.noalias() = rho_t_ * hnh_t_;
    for (const auto& term : dynamic_) {
      const cplx k = term.coefficient(t);
      if (k != cplx(0.0, 0.0)) trans_.noalias() += k * (rho_t_ * term.op_t);
    }
    work_ = cplx(0.0, -1.0) * trans_.transpose();
    out = work_ + work_.adjoint();
    for (const auto& j : jumps_) {
      half_.noalias() = rho * j.op_dag;
      rho_t_ = half_.transpose();
      trans_.noalias() = rho_t_ * j.op_t;
      out += j.rate * trans_.transpose();
    }
  }

 private:
  static SparseOp sparse(const CMatrix& m) {
    SparseOp s = m.sparseView(cplx(1.0, 0.0), 1e-300);
    s.makeCompressed();
    return s;
  }

  using ColSparse = Eigen::SparseMatrix<cplx>;
  struct Dynamic {
    ColSparse op_t;
    std::function<cplx(double)> coefficient;
  };
  struct Jump {
    ColSparse op_t;
    ColSparse op_dag;
    double rate;
  };

  int dim_;
  ColSparse hnh_t_;
  std::vector<Dynamic> dynamic_;
  std::vector<Jump> jumps_;
  CMatrix rho_t_, trans_, work_, half_;
};

struct Observable {
  std::string name;
  QOperator op;
  bool variance = false;  ///< record <O^2> - <O>^2 instead of <O>
};

/// X and Y variances and phonon number of the mirror.
inline std::vector<Observable> mechanical_observables(const HamiltonianSpec& h) {
  const QOperator b = mode_annihilation(h.mechanical_slot(), h.space);
  return {{"var_X", position_quadrature(b), true},
          {"var_Y", momentum_quadrature(b), true},
          {"phonons", b.adjoint() * b, false}};
}

/// Fewest levels for which thermal(n_m), renormalized, keeps the top two
/// levels below `guard`.
inline int thermal_levels(double n_m, double guard = 1e-4) {
  if (!(n_m >= 0.0)) throw DomainError("thermal_levels: negative thermal occupation");
  if (n_m == 0.0) return 2;
  const double q = n_m / (n_m + 1.0);
  for (int n = 2; n <= 2000; ++n) {
    const double top = (std::pow(q, n - 2) + std::pow(q, n - 1)) * (1.0 - q) / (1.0 - std::pow(q, n));
    if (top < guard) return n;
  }
  throw DomainError("thermal_levels: n_m too large");
}

/// Effective-model space for runs that start from a hot mirror. A short
/// mechanical ladder carries a spurious slow relaxation whose weight falls
/// with the number of levels (from n_m = 1, the excess phonons left at t = 120
/// are 1e-3, 1e-4 and 1e-6 for 15, 20 and 32 levels).
inline HilbertSpec cooling_truncation(double n_m) { return HilbertSpec({std::max(32, thermal_levels(n_m)), 6}); }

/// Initial fluctuation state: mirror thermal at n_m, cavity and atoms in vacuum.
inline DensityMatrix initial_state(const HamiltonianSpec& h, double n_m) {
  std::vector<DensityMatrix> parts;
  for (int k = 0; k < h.space.modes(); ++k) {
    parts.push_back(k == h.mechanical_slot() ? thermal_state(h.space.dim(k), n_m)
                                             : DensityMatrix::basis(h.space.dim(k), 0));
  }
  return tensor(parts);
}

struct MasterEquationOptions {
  double t_final = 500.0;
  double dt = 0.01;
  double sample_dt = 0.5;
  StateTolerances tolerances{};
  double guard_population = 1e-4;  ///< allowed weight in the top two levels of each mode
};

/// Recommended step for each kind: the largest detuning sets the stiffness.
inline double default_me_dt(const HamiltonianSpec& h) {
  if (h.kind == HamiltonianKind::effective) return 0.005;  // 0.01 lets min eigenvalue dip to -5e-10
  const PhysicalParams& p = h.params.base;
  const double fastest = std::max({std::abs(h.params.Delta_c_eff), std::abs(p.delta_c), p.kappa, p.G,
                                   std::abs(p.Delta_a), p.omega_m});
  return 0.05 / fastest;
}

struct MasterEquationResult {
  TimeSeries series;  ///< requested observables, then trace_error, hermiticity, min_eigenvalue, guard_population
  DensityMatrix final_state;
  bool truncation_ok = true;  ///< guard levels stayed below tolerance at the final sample
  double max_guard_population = 0.0;
};

inline MasterEquationResult evolve_master_equation(const HamiltonianSpec& h, const DissipatorSpec& d,
                                                   const DensityMatrix& rho0, const MasterEquationOptions& opt,
                                                   const std::vector<Observable>& observables) {
  h.validate();
  const int dim = h.space.total_dim();
  if (rho0.dim() != dim) throw InvalidDimensionError("evolve_master_equation: initial state dimension mismatch");
  if (!(opt.t_final > 0.0) || !(opt.dt > 0.0)) throw DomainError("evolve_master_equation: bad time grid");
  if (h.kind == HamiltonianKind::time_dependent) {
    (void)h.trajectory->at(0.0);
    (void)h.trajectory->at(opt.t_final);
  }
  for (const auto& o : observables) {
    if (o.op.dim() != dim) throw InvalidDimensionError("evolve_master_equation: observable " + o.name);
  }

  LindbladGenerator gen(h, d);
  std::vector<std::string> columns;
  std::vector<QOperator> squares;
  for (const auto& o : observables) {
    columns.push_back(o.name);
    squares.push_back(o.variance ? o.op * o.op : QOperator());
  }
  for (const char* c : {"trace_error", "hermiticity", "min_eigenvalue", "guard_population"}) columns.emplace_back(c);

  const long steps = step_count(opt.t_final, opt.dt);
  const double h_step = opt.t_final / static_cast<double>(steps);
  const long stride = std::max(1L, static_cast<long>(std::llround(opt.sample_dt / h_step)));

  MasterEquationResult out{TimeSeries(columns), rho0, true, 0.0};
  CMatrix rho = rho0.matrix();

  auto record = [&](double t) {
    const StateDiagnostics diag = diagnose_state(rho);
    if (!is_physical(diag, opt.tolerances)) {
      throw PhysicalityError("evolve_master_equation: state left the physical set at t=" + format_number(t) +
                             " (hermiticity " + format_number(diag.hermiticity) + ", trace error " +
                             format_number(diag.trace_error) + ", min eigenvalue " +
                             format_number(diag.min_eigenvalue) + "); enlarge truncation or reduce dt");
    }
    double guard = 0.0;
    for (int k = 0; k < h.space.modes(); ++k) guard = std::max(guard, top_level_population(rho, h.space, k));
    out.max_guard_population = std::max(out.max_guard_population, guard);
    std::vector<double> row;
    for (std::size_t k = 0; k < observables.size(); ++k) {
      const double mean = expectation(observables[k].op, rho).real();
      row.push_back(observables[k].variance ? expectation(squares[k], rho).real() - mean * mean : mean);
    }
    row.insert(row.end(), {diag.trace_error, diag.hermiticity, diag.min_eigenvalue, guard});
    out.series.append(t, std::move(row));
    return guard;
  };
  record(0.0);

  Rk4<CMatrix> rk;
  double guard = 0.0;
  for (long k = 1; k <= steps; ++k) {
    rk.step(gen, static_cast<double>(k - 1) * h_step, rho, h_step);
    rho = 0.5 * (rho + rho.adjoint()).eval();
    if (k % stride == 0 || k == steps) {
      if (!rho.allFinite()) throw InstabilityError("evolve_master_equation: state diverged", k * h_step);
      guard = record(static_cast<double>(k) * h_step);
    }
  }
  out.final_state = DensityMatrix(rho, opt.tolerances);
  out.truncation_ok = guard < opt.guard_population;
  return out;
}

struct DirectSteadyState {
  DensityMatrix rho;
  double residual = 0.0;  ///< max |L rho| of the returned state
};

/// Null vector of the Liouvillian with Tr rho = 1, by sparse LU on the
/// column-stacked superoperator. Only the block coupled to the populations is
/// solved (for parity-conserving models this halves the unknowns); the row of
/// element (0,0) is replaced by the trace condition.
inline DirectSteadyState steady_state_direct(const QOperator& H, const DissipatorSpec& d) {
  const int n = H.dim();
  d.validate(n);
  const int N = n * n;
  const auto idx = [n](int i, int j) { return i + j * n; };

  CMatrix Hnh = H.matrix();
  for (const auto& ch : d.channels) {
    Hnh += cplx(0.0, -0.5 * ch.rate) * (ch.op.matrix().adjoint() * ch.op.matrix());
  }
  std::vector<Eigen::Triplet<cplx>> trip;
  // -i Hnh rho + i rho Hnh^dagger
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < n; ++k) {
      const cplx v = Hnh(i, k);
      if (v == cplx(0.0, 0.0)) continue;
      for (int j = 0; j < n; ++j) {
        trip.emplace_back(idx(i, j), idx(k, j), -kI * v);
        trip.emplace_back(idx(j, i), idx(j, k), kI * std::conj(v));
      }
    }
  }
  for (const auto& ch : d.channels) {
    if (ch.rate == 0.0) continue;
    const CMatrix& L = ch.op.matrix();
    std::vector<std::tuple<int, int, cplx>> nz;
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < n; ++k) {
        if (L(i, k) != cplx(0.0, 0.0)) nz.emplace_back(i, k, L(i, k));
      }
    }
    for (const auto& [i, k, u] : nz) {
      for (const auto& [j, l, w] : nz) trip.emplace_back(idx(i, j), idx(k, l), ch.rate * u * std::conj(w));
    }
  }

  // Union-find over the sparsity graph; populations are tied by the trace.
  std::vector<int> parent(static_cast<std::size_t>(N));
  for (int k = 0; k < N; ++k) parent[k] = k;
  const auto find = [&parent](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& t : trip) parent[find(t.row())] = find(t.col());
  for (int i = 1; i < n; ++i) parent[find(idx(i, i))] = find(0);
  const int root = find(0);
  std::vector<int> local(static_cast<std::size_t>(N), -1);
  std::vector<int> global;
  for (int k = 0; k < N; ++k) {
    if (find(k) == root) {
      local[k] = static_cast<int>(global.size());
      global.push_back(k);
    }
  }
  const int m = static_cast<int>(global.size());

  std::vector<Eigen::Triplet<cplx>> reduced;
  reduced.reserve(trip.size());
  for (const auto& t : trip) {
    const int r = local[t.row()];
    if (r > 0) reduced.emplace_back(r, local[t.col()], t.value());
  }
  for (int i = 0; i < n; ++i) reduced.emplace_back(0, local[idx(i, i)], cplx(1.0, 0.0));
  Eigen::SparseMatrix<cplx> Lsup(m, m);
  Lsup.setFromTriplets(reduced.begin(), reduced.end());
  Lsup.makeCompressed();

  Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(m);
  rhs(0) = 1.0;
  Eigen::SparseLU<Eigen::SparseMatrix<cplx>, Eigen::COLAMDOrdering<int>> lu;
  lu.compute(Lsup);
  if (lu.info() != Eigen::Success) throw DegenerateError("steady_state_direct: Liouvillian factorisation failed");
  const Eigen::VectorXcd x = lu.solve(rhs);
  if (lu.info() != Eigen::Success || !x.allFinite()) throw DegenerateError("steady_state_direct: solve failed");

  CMatrix rho = CMatrix::Zero(n, n);
  for (int k = 0; k < m; ++k) rho(global[k] % n, global[k] / n) = x(k);
  rho = 0.5 * (rho + rho.adjoint()).eval();
  rho /= rho.trace().real();
  const double residual = lindblad_rhs(H, d, rho).cwiseAbs().maxCoeff();
  return {DensityMatrix(std::move(rho), StateTolerances{1e-12, 1e-10, -1e-9}), residual};
}

}  // namespace optosq
