#pragma once

#include <Eigen/Dense>
#include <utility>

#include "wpmec/env.hpp"

namespace wpmec {

using Statevector = Eigen::VectorXcd;

enum class Axis { X, Y, Z };

// Fixed circuit template: per-qubit encoding rotations R_x(pi*x'_i) then
// R_y((pi/2)*x'_i), a CNOT chain, and one trainable rotation per qubit.
// The trainable axis defaults to Y; Axis::Z reproduces the literal
// rotate-then-measure-Z layout whose gradients vanish identically (Z rotations
// commute with Z measurements) — kept selectable for fidelity experiments.
struct CircuitConfig {
  int n_qubits = 8;
  Axis variational_axis = Axis::Y;
  VectorXd theta;  // n_qubits angles

  static CircuitConfig make(int n_qubits, Axis axis = Axis::Y);
};

// |0...0> on n qubits; amplitudes little-endian (qubit 0 = least significant
// bit of the amplitude index).
Statevector zero_state(int n_qubits);

// In-place exp(-i*angle*sigma_axis/2) on one qubit.
void apply_rotation(Statevector& state, int qubit, Axis axis, double angle);

// CNOT(i, i+1) for i = 0..n-2 in order; a single-qubit state is left as is.
void apply_cnot_chain(Statevector& state);

// Per-qubit Pauli-Z expectations of a state.
VectorXd expect_z(const Statevector& state);

// Full template: returns the final state and the n_b Pauli-Z expectations q.
std::pair<Statevector, VectorXd> encode_forward(const VectorXd& x_reduced,
                                                const CircuitConfig& cfg);

struct QsimGradients {
  Eigen::MatrixXd dq_dtheta;  // (i,j) = d q_i / d theta_j
  Eigen::MatrixXd dq_dx;      // (i,j) = d q_i / d x'_j
};

// Exact derivatives via the parameter-shift rule, one +-pi/2 gate-angle pair
// per rotation; the two encoding gates sharing x'_j contribute through the
// chain rule with their pi and pi/2 scales.
QsimGradients gradients(const VectorXd& x_reduced, const CircuitConfig& cfg);

}  // namespace wpmec
