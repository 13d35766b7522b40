#include "wpmec/qsim.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>

namespace wpmec {

namespace {
using cd = std::complex<double>;

int qubit_count(const Statevector& st) {
  int n = 0;
  while ((Eigen::Index(1) << n) < st.size()) ++n;
  if ((Eigen::Index(1) << n) != st.size())
    throw std::invalid_argument("state length is not a power of two");
  return n;
}
}  // namespace

CircuitConfig CircuitConfig::make(int n_qubits, Axis axis) {
  if (n_qubits < 1) throw std::invalid_argument("n_qubits must be >= 1");
  CircuitConfig cfg;
  cfg.n_qubits = n_qubits;
  cfg.variational_axis = axis;
  cfg.theta = VectorXd::Zero(n_qubits);
  return cfg;
}

Statevector zero_state(int n_qubits) {
  if (n_qubits < 1) throw std::invalid_argument("n_qubits must be >= 1");
  Statevector st = Statevector::Zero(Eigen::Index(1) << n_qubits);
  st(0) = cd(1.0, 0.0);
  return st;
}

void apply_rotation(Statevector& state, int qubit, Axis axis, double angle) {
  const int n = qubit_count(state);
  if (qubit < 0 || qubit >= n) throw std::invalid_argument("qubit index out of range");
  const double c = std::cos(angle / 2.0), s = std::sin(angle / 2.0);
  cd m00, m01, m10, m11;
  switch (axis) {
    case Axis::X:
      m00 = cd(c, 0);  m01 = cd(0, -s);
      m10 = cd(0, -s); m11 = cd(c, 0);
      break;
    case Axis::Y:
      m00 = cd(c, 0); m01 = cd(-s, 0);
      m10 = cd(s, 0); m11 = cd(c, 0);
      break;
    case Axis::Z:
      m00 = cd(c, -s); m01 = cd(0, 0);
      m10 = cd(0, 0);  m11 = cd(c, s);
      break;
  }
  const Eigen::Index bit = Eigen::Index(1) << qubit;
  const Eigen::Index total = state.size();
  for (Eigen::Index base = 0; base < total; ++base) {
    if (base & bit) continue;
    cd a0 = state(base), a1 = state(base | bit);
    state(base) = m00 * a0 + m01 * a1;
    state(base | bit) = m10 * a0 + m11 * a1;
  }
}

void apply_cnot_chain(Statevector& state) {
  const int n = qubit_count(state);
  for (int i = 0; i + 1 < n; ++i) {
    const Eigen::Index ctrl = Eigen::Index(1) << i;
    const Eigen::Index targ = Eigen::Index(1) << (i + 1);
    for (Eigen::Index j = 0; j < state.size(); ++j)
      if ((j & ctrl) && !(j & targ)) std::swap(state(j), state(j | targ));
  }
}

VectorXd expect_z(const Statevector& state) {
  const int n = qubit_count(state);
  VectorXd q = VectorXd::Zero(n);
  for (Eigen::Index j = 0; j < state.size(); ++j) {
    double p = std::norm(state(j));
    for (int i = 0; i < n; ++i) q(i) += (j >> i) & 1 ? -p : p;
  }
  return q;
}

namespace {

// Runs the template with explicit per-gate angles so the parameter-shift rule
// can nudge any single gate.
VectorXd run_angles(const VectorXd& rx, const VectorXd& ry, const VectorXd& var,
                    Axis var_axis, int n) {
  Statevector st = zero_state(n);
  for (int i = 0; i < n; ++i) {
    apply_rotation(st, i, Axis::X, rx(i));
    apply_rotation(st, i, Axis::Y, ry(i));
  }
  apply_cnot_chain(st);
  for (int i = 0; i < n; ++i) apply_rotation(st, i, var_axis, var(i));
  return expect_z(st);
}

}  // namespace

std::pair<Statevector, VectorXd> encode_forward(const VectorXd& x_reduced,
                                                const CircuitConfig& cfg) {
  const int n = cfg.n_qubits;
  if (x_reduced.size() != n || cfg.theta.size() != n)
    throw std::invalid_argument("encode_forward: dimension mismatch");
  Statevector st = zero_state(n);
  for (int i = 0; i < n; ++i) {
    apply_rotation(st, i, Axis::X, std::numbers::pi * x_reduced(i));
    apply_rotation(st, i, Axis::Y, std::numbers::pi / 2.0 * x_reduced(i));
  }
  apply_cnot_chain(st);
  for (int i = 0; i < n; ++i) apply_rotation(st, i, cfg.variational_axis, cfg.theta(i));
  return {st, expect_z(st)};
}

QsimGradients gradients(const VectorXd& x_reduced, const CircuitConfig& cfg) {
  const int n = cfg.n_qubits;
  if (x_reduced.size() != n || cfg.theta.size() != n)
    throw std::invalid_argument("gradients: dimension mismatch");
  const double hp = std::numbers::pi / 2.0;
  VectorXd rx = std::numbers::pi * x_reduced;
  VectorXd ry = hp * x_reduced;
  QsimGradients g;
  g.dq_dtheta.resize(n, n);
  g.dq_dx.resize(n, n);
  if (cfg.variational_axis == Axis::Z) {
    // Z rotations commute with the Z measurements, so these derivatives are
    // exactly zero; skip the shifted evaluations rather than round to ~1e-16.
    g.dq_dtheta.setZero();
  } else {
    for (int j = 0; j < n; ++j) {
      VectorXd var = cfg.theta;
      var(j) = cfg.theta(j) + hp;
      VectorXd qp = run_angles(rx, ry, var, cfg.variational_axis, n);
      var(j) = cfg.theta(j) - hp;
      VectorXd qm = run_angles(rx, ry, var, cfg.variational_axis, n);
      g.dq_dtheta.col(j) = (qp - qm) / 2.0;
    }
  }
  for (int j = 0; j < n; ++j) {
    double save = rx(j);
    rx(j) = save + hp;
    VectorXd qp = run_angles(rx, ry, cfg.theta, cfg.variational_axis, n);
    rx(j) = save - hp;
    VectorXd qm = run_angles(rx, ry, cfg.theta, cfg.variational_axis, n);
    rx(j) = save;
    VectorXd col = std::numbers::pi * (qp - qm) / 2.0;  // d(gate angle)/dx' = pi

    save = ry(j);
    ry(j) = save + hp;
    qp = run_angles(rx, ry, cfg.theta, cfg.variational_axis, n);
    ry(j) = save - hp;
    qm = run_angles(rx, ry, cfg.theta, cfg.variational_axis, n);
    ry(j) = save;
    col += hp * (qp - qm) / 2.0;  // d(gate angle)/dx' = pi/2
    g.dq_dx.col(j) = col;
  }
  return g;
}

}  // namespace wpmec
