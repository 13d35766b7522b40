#include "wpmec/policy.hpp"

#include <stdexcept>

namespace wpmec {

RowVectorXd PolicyModel::infer_online(const RowVectorXd& x_scaled) {
  return forward(x_scaled, /*train=*/false).row(0);
}

long PolicyModel::param_count() {
  long total = 0;
  for (Param* p : params()) total += p->count();
  return total;
}

double PolicyModel::train_step(const MatrixXd& x, const MatrixXd& targets, Adam& opt) {
  if (x.rows() == 0) throw std::invalid_argument("train_step: empty batch");
  std::vector<Param*> ps = params();
  for (Param* p : ps) p->zero_grad();
  MatrixXd y = forward(x, /*train=*/true);
  MatrixXd dy;
  double loss = bce_loss(y, targets, &dy);
  backward(dy);
  opt.step(ps);
  return loss;
}

void PolicyModel::save(const std::string& path) {
  std::vector<Param*> ts = checkpoint_tensors();
  std::vector<const Param*> cts(ts.begin(), ts.end());
  save_checkpoint(path, variant(), cts);
}

void PolicyModel::load(const std::string& path) {
  std::vector<Param*> ts = checkpoint_tensors();
  std::string stored = load_checkpoint(path, ts);
  if (stored != variant())
    throw std::invalid_argument("checkpoint variant '" + stored + "' does not match '" +
                                variant() + "'");
}

// ---- DnnPolicy ----

DnnPolicy::DnnPolicy(int n, RandomStream& init_rng)
    : n_(n),
      l1_("dnn.l1", n, 120, init_rng),
      l2_("dnn.l2", 120, 80, init_rng),
      l3_("dnn.l3", 80, n, init_rng) {}

MatrixXd DnnPolicy::forward(const MatrixXd& x, bool train) {
  (void)train;  // no stochastic layers
  if (x.cols() != n_) throw std::invalid_argument("dnn: expected n columns");
  l1_.clear_cache();
  l2_.clear_cache();
  l3_.clear_cache();
  z1_ = l1_.forward(x);
  z2_ = l2_.forward(relu(z1_));
  y_ = sigmoid(l3_.forward(relu(z2_)));
  return y_;
}

MatrixXd DnnPolicy::backward(const MatrixXd& d_out) {
  MatrixXd d = sigmoid_backward(d_out, y_);
  d = relu_backward(l3_.backward(d), z2_);
  d = relu_backward(l2_.backward(d), z1_);
  return l1_.backward(d);
}

std::vector<Param*> DnnPolicy::params() {
  std::vector<Param*> out;
  for (auto* l : {&l1_, &l2_, &l3_})
    for (Param* p : l->params()) out.push_back(p);
  return out;
}

// ---- RnnPolicy ----

RnnPolicy::RnnPolicy(int n, RandomStream& init_rng, std::uint64_t dropout_seed,
                     double dropout_rate)
    : n_(n),
      g1_("rnn.gru1", n, kHidden, init_rng),
      g2_("rnn.gru2", kHidden, kHidden, init_rng),
      bn_("rnn.bn", kHidden),
      drop1_(dropout_rate),
      drop2_(dropout_rate),
      head_("rnn.head", kHidden, n, init_rng),
      drop_rng_(dropout_seed),
      h1_cur_(MatrixXd::Zero(1, kHidden)),
      h2_cur_(MatrixXd::Zero(1, kHidden)) {
  // Start the update gates open (the forget-gate-bias trick): early training is
  // then driven by the current frame, and the cells learn what to retain.
  g1_.b.value.leftCols(kHidden).array() += 1.0;
  g2_.b.value.leftCols(kHidden).array() += 1.0;
}

void RnnPolicy::reset_hidden() {
  h1_cur_.setZero();
  h2_cur_.setZero();
}

MatrixXd RnnPolicy::forward(const MatrixXd& x, bool train) {
  if (x.cols() % n_ != 0 || x.cols() == 0)
    throw std::invalid_argument("rnn: row length must be a multiple of n");
  const int len = static_cast<int>(x.cols()) / n_;
  const long batch = x.rows();
  g1_.clear_cache();
  g2_.clear_cache();
  bn_.clear_cache();
  drop1_.clear_cache();
  drop2_.clear_cache();
  head_.clear_cache();
  last_len_ = len;
  MatrixXd h1 = MatrixXd::Zero(batch, kHidden);
  MatrixXd h2 = MatrixXd::Zero(batch, kHidden);
  for (int t = 0; t < len; ++t) {
    h1 = g1_.step(x.middleCols(static_cast<long>(t) * n_, n_), h1, /*cache=*/true);
    MatrixXd mid = bn_.forward(h1, train);
    mid = drop1_.forward(mid, train, drop_rng_);
    h2 = g2_.step(mid, h2, /*cache=*/true);
  }
  MatrixXd top = drop2_.forward(h2, train, drop_rng_);
  y_ = sigmoid(head_.forward(top));
  return y_;
}

MatrixXd RnnPolicy::backward(const MatrixXd& d_out) {
  const long batch = d_out.rows();
  MatrixXd d = sigmoid_backward(d_out, y_);
  MatrixXd dh2 = drop2_.backward(head_.backward(d));
  MatrixXd dh1 = MatrixXd::Zero(batch, kHidden);
  MatrixXd dx(batch, static_cast<long>(last_len_) * n_);
  for (int t = last_len_ - 1; t >= 0; --t) {
    auto [dmid, dh2_prev] = g2_.step_backward(dh2);
    dh1 += bn_.backward(drop1_.backward(dmid));
    auto [dxt, dh1_prev] = g1_.step_backward(dh1);
    dx.middleCols(static_cast<long>(t) * n_, n_) = dxt;
    dh2 = dh2_prev;
    dh1 = dh1_prev;
  }
  return dx;
}

RowVectorXd RnnPolicy::infer_online(const RowVectorXd& x_scaled) {
  if (x_scaled.cols() != n_) throw std::invalid_argument("rnn: expected n entries");
  h1_cur_ = g1_.step(x_scaled, h1_cur_, /*cache=*/false);
  MatrixXd mid = bn_.forward(h1_cur_, /*train=*/false);
  mid = drop1_.forward(mid, /*train=*/false, drop_rng_);
  h2_cur_ = g2_.step(mid, h2_cur_, /*cache=*/false);
  MatrixXd top = drop2_.forward(h2_cur_, /*train=*/false, drop_rng_);
  return sigmoid(head_.forward(top, /*cache=*/false)).row(0);
}

std::vector<Param*> RnnPolicy::params() {
  std::vector<Param*> out;
  for (Param* p : g1_.params()) out.push_back(p);
  for (Param* p : bn_.params()) out.push_back(p);
  for (Param* p : g2_.params()) out.push_back(p);
  for (Param* p : head_.params()) out.push_back(p);
  return out;
}

std::vector<Param*> RnnPolicy::checkpoint_tensors() {
  std::vector<Param*> out = params();
  out.push_back(&bn_.running_mean);
  out.push_back(&bn_.running_var);
  return out;
}

// ---- QuantumPolicy ----

QuantumPolicy::QuantumPolicy(int n, bool attention, RandomStream& init_rng, Axis axis)
    : n_(n),
      attention_(attention),
      axis_(axis),
      l1_("q.l1", n, 64, init_rng),
      l2_("q.l2", 64, 8, init_rng),
      theta_("q.circuit.theta", 1, 8),
      l3_("q.l3", 8, 64, init_rng),
      l4_("q.l4", 64, n, init_rng) {
  theta_.init_uniform(init_rng);
  if (attention_)
    attn_ = std::make_unique<MultiHeadAttention>("q.attn", 8, 4, init_rng);
  else
    qlin_ = std::make_unique<Linear>("q.qlin", 8, 8, init_rng);
}

CircuitConfig QuantumPolicy::circuit() const {
  CircuitConfig cfg = CircuitConfig::make(8, axis_);
  cfg.theta = theta_.value.row(0).transpose();
  return cfg;
}

MatrixXd QuantumPolicy::forward(const MatrixXd& x, bool train) {
  if (x.cols() != n_) throw std::invalid_argument("quantum policy: expected n columns");
  l1_.clear_cache();
  l2_.clear_cache();
  l3_.clear_cache();
  l4_.clear_cache();
  if (attn_) attn_->clear_cache();
  if (qlin_) qlin_->clear_cache();
  const long batch = x.rows();
  z1_ = l1_.forward(x);
  z2_ = l2_.forward(relu(z1_));
  a2_ = relu(z2_);
  const CircuitConfig cfg = circuit();
  MatrixXd q(batch, 8);
  for (long i = 0; i < batch; ++i)
    q.row(i) = encode_forward(a2_.row(i).transpose(), cfg).second.transpose();
  MatrixXd mixed(batch, 8);
  if (attn_) {
    // Each sample is a length-1 sequence through the attention block.
    for (long i = 0; i < batch; ++i) mixed.row(i) = attn_->forward(q.row(i), train);
  } else {
    mixed = qlin_->forward(q, train);
  }
  z3_ = l3_.forward(mixed);
  y_ = sigmoid(l4_.forward(relu(z3_)));
  return y_;
}

MatrixXd QuantumPolicy::backward(const MatrixXd& d_out) {
  const long batch = d_out.rows();
  MatrixXd d = sigmoid_backward(d_out, y_);
  d = relu_backward(l4_.backward(d), z3_);
  MatrixXd dmixed = l3_.backward(d);
  MatrixXd dq(batch, 8);
  if (attn_) {
    // Caches pop in reverse sample order.
    for (long i = batch - 1; i >= 0; --i) dq.row(i) = attn_->backward(dmixed.row(i));
  } else {
    dq = qlin_->backward(dmixed);
  }
  const CircuitConfig cfg = circuit();
  MatrixXd da2(batch, 8);
  for (long i = 0; i < batch; ++i) {
    QsimGradients g = gradients(a2_.row(i).transpose(), cfg);
    theta_.grad.row(0) += dq.row(i) * g.dq_dtheta;
    da2.row(i) = dq.row(i) * g.dq_dx;
  }
  d = relu_backward(da2, z2_);
  d = relu_backward(l2_.backward(d), z1_);
  return l1_.backward(d);
}

std::vector<Param*> QuantumPolicy::params() {
  std::vector<Param*> out;
  for (Param* p : l1_.params()) out.push_back(p);
  for (Param* p : l2_.params()) out.push_back(p);
  out.push_back(&theta_);
  if (attn_)
    for (Param* p : attn_->params()) out.push_back(p);
  if (qlin_)
    for (Param* p : qlin_->params()) out.push_back(p);
  for (Param* p : l3_.params()) out.push_back(p);
  for (Param* p : l4_.params()) out.push_back(p);
  return out;
}

std::unique_ptr<PolicyModel> make_policy(const std::string& variant, int n_devices,
                                         std::uint64_t seed) {
  if (n_devices < 1) throw std::invalid_argument("make_policy: n_devices must be positive");
  RandomStream init_rng(derive_seed(seed, "policy-init"));
  if (variant == "dnn") return std::make_unique<DnnPolicy>(n_devices, init_rng);
  if (variant == "rnn")
    return std::make_unique<RnnPolicy>(n_devices, init_rng, derive_seed(seed, "dropout"));
  if (variant == "quantum_dnn")
    return std::make_unique<QuantumPolicy>(n_devices, /*attention=*/false, init_rng);
  if (variant == "quantum_attention")
    return std::make_unique<QuantumPolicy>(n_devices, /*attention=*/true, init_rng);
  throw std::invalid_argument("make_policy: unknown variant '" + variant + "'");
}

}  // namespace wpmec
