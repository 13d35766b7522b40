#pragma once

#include <memory>
#include <string>
#include <vector>

#include "wpmec/nn.hpp"
#include "wpmec/qsim.hpp"

namespace wpmec {

// Channel gains (~1e-6) are multiplied by this fixed factor before entering
// any network; unscaled magnitudes leave sigmoid units flat.
inline constexpr double kInputScale = 1e6;

// Common interface of the decision networks.  forward takes one row per
// sample — n_devices entries, or input_window()*n_devices for the recurrent
// variant — and returns relaxed decisions in (0,1)^n_devices.  backward
// consumes dLoss/dOutput of the latest forward and accumulates parameter
// gradients; every forward invalidates the previous pass's caches.
class PolicyModel {
 public:
  virtual ~PolicyModel() = default;
  virtual std::string variant() const = 0;
  virtual int n_devices() const = 0;
  // Consecutive frames consumed per decision (1 for feed-forward variants).
  virtual int input_window() const { return 1; }
  virtual MatrixXd forward(const MatrixXd& x, bool train) = 0;
  virtual MatrixXd backward(const MatrixXd& d_out) = 0;
  // Trainable parameters, fixed order.
  virtual std::vector<Param*> params() = 0;
  virtual void reset_hidden() {}
  // Single-frame decision in the online loop; recurrent variants carry
  // hidden state across calls (reset via reset_hidden).
  virtual RowVectorXd infer_online(const RowVectorXd& x_scaled);

  long param_count();
  // One optimizer update on mean binary cross-entropy; returns the loss
  // measured before the update.
  double train_step(const MatrixXd& x, const MatrixXd& targets, Adam& opt);
  void save(const std::string& path);
  void load(const std::string& path);  // throws on variant or shape mismatch

 protected:
  // Tensors persisted in checkpoints: params() plus non-trainable state.
  virtual std::vector<Param*> checkpoint_tensors() { return params(); }
};

// Fully connected net, layers n -> 120 -> 80 -> n (ReLU, ReLU, sigmoid).
class DnnPolicy : public PolicyModel {
 public:
  DnnPolicy(int n, RandomStream& init_rng);
  std::string variant() const override { return "dnn"; }
  int n_devices() const override { return n_; }
  MatrixXd forward(const MatrixXd& x, bool train) override;
  MatrixXd backward(const MatrixXd& d_out) override;
  std::vector<Param*> params() override;

 private:
  int n_;
  Linear l1_, l2_, l3_;
  MatrixXd z1_, z2_, y_;
};

// Two stacked GRU layers (hidden 128) with per-step batchnorm + dropout
// between them, dropout on the final top state, sigmoid head.  forward takes
// flattened windows (row = window_len * n entries, oldest frame first);
// infer_online runs statefully one frame at a time.
class RnnPolicy : public PolicyModel {
 public:
  static constexpr int kHidden = 128;
  RnnPolicy(int n, RandomStream& init_rng, std::uint64_t dropout_seed, double dropout_rate = 0.1);
  std::string variant() const override { return "rnn"; }
  int n_devices() const override { return n_; }
  int input_window() const override { return 10; }
  MatrixXd forward(const MatrixXd& x, bool train) override;
  MatrixXd backward(const MatrixXd& d_out) override;
  std::vector<Param*> params() override;
  void reset_hidden() override;
  RowVectorXd infer_online(const RowVectorXd& x_scaled) override;

 protected:
  std::vector<Param*> checkpoint_tensors() override;

 private:
  int n_;
  GRUCell g1_, g2_;
  BatchNorm bn_;
  Dropout drop1_, drop2_;
  Linear head_;
  RandomStream drop_rng_;
  MatrixXd h1_cur_, h2_cur_;  // online inference state
  int last_len_ = 0;
  MatrixXd y_;
};

// Quantum-classical hybrid: n -> 64 -> 8 (ReLU twice), an 8-qubit encoding
// circuit read out as Pauli-Z expectations, attention over the length-1
// feature sequence (or a plain linear layer for the quantum_dnn variant),
// then 8 -> 64 -> n (ReLU, sigmoid).
class QuantumPolicy : public PolicyModel {
 public:
  QuantumPolicy(int n, bool attention, RandomStream& init_rng, Axis axis = Axis::Y);
  std::string variant() const override { return attention_ ? "quantum_attention" : "quantum_dnn"; }
  int n_devices() const override { return n_; }
  MatrixXd forward(const MatrixXd& x, bool train) override;
  MatrixXd backward(const MatrixXd& d_out) override;
  std::vector<Param*> params() override;

  Param& circuit_theta() { return theta_; }
  MultiHeadAttention& attention_block() { return *attn_; }

 private:
  CircuitConfig circuit() const;

  int n_;
  bool attention_;
  Axis axis_;
  Linear l1_, l2_;
  Param theta_;
  std::unique_ptr<MultiHeadAttention> attn_;  // quantum_attention
  std::unique_ptr<Linear> qlin_;              // quantum_dnn
  Linear l3_, l4_;
  MatrixXd z1_, z2_, a2_, z3_, y_;
};

// variant in {dnn, rnn, quantum_dnn, quantum_attention}; parameter init and
// the dropout stream derive from (seed, "policy-init") and (seed, "dropout").
std::unique_ptr<PolicyModel> make_policy(const std::string& variant, int n_devices,
                                         std::uint64_t seed);

}  // namespace wpmec
