#pragma once

#include <Eigen/Dense>
#include <memory>
#include <string>
#include <vector>

#include "wpmec/rng.hpp"

namespace wpmec {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;

// Trainable tensor: value, gradient accumulator, Adam moment buffers.
struct Param {
  std::string name;
  MatrixXd value, grad, m, v;

  Param(std::string n, int rows, int cols);
  // U(-1/sqrt(fan_in), 1/sqrt(fan_in)); fan_in = rows (vectors use cols).
  void init_uniform(RandomStream& rng);
  void zero_grad();
  long count() const { return value.size(); }
};

struct AdamConfig {
  double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

// Bias-corrected Adam over a parameter list; moments live in the Params.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}
  void step(const std::vector<Param*>& params);
  long step_count() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  long t_ = 0;
};

// ---- activations (stateless, batch rows) ----
MatrixXd relu(const MatrixXd& x);
MatrixXd relu_backward(const MatrixXd& dy, const MatrixXd& x);
MatrixXd sigmoid(const MatrixXd& x);
MatrixXd sigmoid_backward(const MatrixXd& dy, const MatrixXd& y);  // y = sigmoid(x)
// Row-wise softmax with max subtraction.
MatrixXd softmax_rows(const MatrixXd& x);

// Mean binary cross-entropy with predictions clamped to [1e-7, 1-1e-7];
// d_m, when given, receives the exact gradient (zero where the clamp binds).
double bce_loss(const MatrixXd& m, const MatrixXd& target, MatrixXd* d_m = nullptr);

// y = xW + b.  Caches stack so a layer can be stepped repeatedly (BPTT) and
// unwound in reverse.
class Linear {
 public:
  Param W, b;
  Linear(const std::string& name, int in, int out, RandomStream& rng);
  // cache = false skips recording (pure inference; backward not possible).
  MatrixXd forward(const MatrixXd& x, bool cache = true);
  MatrixXd backward(const MatrixXd& dy);  // pops the latest cache
  void clear_cache();
  std::vector<Param*> params();

 private:
  std::vector<MatrixXd> xs_;
};

// Gated recurrent cell, gate order [z r g] packed column-wise:
//   z = sigmoid(x Wx_z + h Wh_z + b_z),  r = sigmoid(x Wx_r + h Wh_r + b_r),
//   g = tanh(x Wx_g + (r o h) Wh_g + b_g),  h' = (1-z) o h + z o g.
// All-zero parameters give h' = 0.5 h (sigma(0) = 0.5, tanh(0) = 0).
class GRUCell {
 public:
  Param Wx, Wh, b;
  const int in, hidden;
  GRUCell(const std::string& name, int in, int hidden, RandomStream& rng);
  // One step for a batch; cache = true records for backprop through time.
  MatrixXd step(const MatrixXd& x, const MatrixXd& h_prev, bool cache = true);
  // Unwinds the latest cached step: gradient on h' -> (dx, dh_prev).
  std::pair<MatrixXd, MatrixXd> step_backward(const MatrixXd& dh_new);
  void clear_cache();
  std::vector<Param*> params();

 private:
  struct Cache {
    MatrixXd x, h_prev, z, r, g, rh;
  };
  std::vector<Cache> caches_;
};

// Per-feature batch standardization with learned scale/shift.  Train mode
// (batch >= 2) uses batch statistics and refreshes the running ones with
// momentum 0.9; inference normalizes by the running statistics.
class BatchNorm {
 public:
  Param gamma, beta;
  Param running_mean, running_var;  // non-trainable state (1 x F), checkpointed
  double momentum = 0.9, eps = 1e-5;
  BatchNorm(const std::string& name, int features);
  MatrixXd forward(const MatrixXd& x, bool train);
  MatrixXd backward(const MatrixXd& dy);  // pops the latest train-mode cache
  void clear_cache();
  std::vector<Param*> params();

 private:
  struct Cache {
    MatrixXd x_hat;
    RowVectorXd inv_std;
  };
  std::vector<Cache> caches_;
};

// Inverted dropout: train mode zeroes entries with probability `rate` and
// scales the rest by 1/(1-rate); inference is the identity and records no
// mask (backward is only defined after a train-mode forward).
class Dropout {
 public:
  explicit Dropout(double rate) : rate_(rate) {}
  MatrixXd forward(const MatrixXd& x, bool train, RandomStream& rng);
  // Deterministic path with an externally fixed mask (tests).
  MatrixXd forward_with_mask(const MatrixXd& x, const MatrixXd& mask);
  MatrixXd backward(const MatrixXd& dy);
  void clear_cache();
  double rate() const { return rate_; }

 private:
  double rate_;
  std::vector<MatrixXd> masks_;
};

// Multi-head scaled dot-product self-attention on an L x n_q sequence:
// per head A_h = softmax(Q_h K_h^T / sqrt(d_k)), Z_h = A_h V_h, heads
// concatenated and projected by W_O.  No biases.
class MultiHeadAttention {
 public:
  const int n_q, heads, d_k;
  std::vector<Param> Wq, Wk, Wv;  // per head, n_q x d_k
  Param Wo;                       // (heads*d_k) x n_q
  MultiHeadAttention(const std::string& name, int n_q, int heads, RandomStream& rng);
  MatrixXd forward(const MatrixXd& x, bool cache = true);
  MatrixXd backward(const MatrixXd& dy);
  void clear_cache();
  std::vector<Param*> params();

 private:
  struct Cache {
    MatrixXd x;
    std::vector<MatrixXd> Q, K, V, A;
  };
  std::vector<Cache> caches_;
};

// Flat binary checkpoint: magic, variant string, shape table, row-major
// little-endian doubles.
void save_checkpoint(const std::string& path, const std::string& variant,
                     const std::vector<const Param*>& params);
// Loads into existing params (shape-checked); returns the stored variant.
std::string load_checkpoint(const std::string& path, const std::vector<Param*>& params);
// Reads just the variant string.
std::string checkpoint_variant(const std::string& path);

}  // namespace wpmec
