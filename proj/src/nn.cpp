#include "wpmec/nn.hpp"

#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace wpmec {

Param::Param(std::string n, int rows, int cols)
    : name(std::move(n)),
      value(MatrixXd::Zero(rows, cols)),
      grad(MatrixXd::Zero(rows, cols)),
      m(MatrixXd::Zero(rows, cols)),
      v(MatrixXd::Zero(rows, cols)) {}

void Param::init_uniform(RandomStream& rng) {
  const long fan_in = value.rows() > 1 ? value.rows() : value.cols();
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (long i = 0; i < value.rows(); ++i)
    for (long j = 0; j < value.cols(); ++j) value(i, j) = rng.uniform(-bound, bound);
}

void Param::zero_grad() { grad.setZero(); }

void Adam::step(const std::vector<Param*>& params) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (Param* p : params) {
    p->m = cfg_.beta1 * p->m + (1.0 - cfg_.beta1) * p->grad;
    p->v = cfg_.beta2 * p->v + (1.0 - cfg_.beta2) * p->grad.cwiseProduct(p->grad);
    p->value.array() -=
        cfg_.lr * (p->m.array() / bc1) / ((p->v.array() / bc2).sqrt() + cfg_.eps);
  }
}

MatrixXd relu(const MatrixXd& x) { return x.cwiseMax(0.0); }

MatrixXd relu_backward(const MatrixXd& dy, const MatrixXd& x) {
  return (x.array() > 0.0).select(dy, MatrixXd::Zero(dy.rows(), dy.cols()));
}

MatrixXd sigmoid(const MatrixXd& x) {
  return x.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

MatrixXd sigmoid_backward(const MatrixXd& dy, const MatrixXd& y) {
  return (dy.array() * y.array() * (1.0 - y.array())).matrix();
}

MatrixXd softmax_rows(const MatrixXd& x) {
  MatrixXd out(x.rows(), x.cols());
  for (long i = 0; i < x.rows(); ++i) {
    Eigen::ArrayXd row = x.row(i).array() - x.row(i).maxCoeff();
    Eigen::ArrayXd e = row.exp();
    out.row(i) = (e / e.sum()).matrix();
  }
  return out;
}

double bce_loss(const MatrixXd& m, const MatrixXd& target, MatrixXd* d_m) {
  if (m.rows() != target.rows() || m.cols() != target.cols())
    throw std::invalid_argument("bce_loss: shape mismatch");
  constexpr double lo = 1e-7, hi = 1.0 - 1e-7;
  const double count = static_cast<double>(m.size());
  double loss = 0.0;
  if (d_m) d_m->setZero(m.rows(), m.cols());
  for (long i = 0; i < m.rows(); ++i) {
    for (long j = 0; j < m.cols(); ++j) {
      double mc = std::min(std::max(m(i, j), lo), hi);
      double t = target(i, j);
      loss -= t * std::log(mc) + (1.0 - t) * std::log(1.0 - mc);
      if (d_m && m(i, j) > lo && m(i, j) < hi)
        (*d_m)(i, j) = (mc - t) / (mc * (1.0 - mc) * count);
    }
  }
  return loss / count;
}

// ---- Linear ----

Linear::Linear(const std::string& name, int in, int out, RandomStream& rng)
    : W(name + ".W", in, out), b(name + ".b", 1, out) {
  W.init_uniform(rng);
  b.init_uniform(rng);
}

MatrixXd Linear::forward(const MatrixXd& x, bool cache) {
  if (x.cols() != W.value.rows()) throw std::invalid_argument(W.name + ": shape mismatch");
  if (cache) xs_.push_back(x);
  return (x * W.value).rowwise() + b.value.row(0);
}

MatrixXd Linear::backward(const MatrixXd& dy) {
  if (xs_.empty()) throw std::logic_error(W.name + ": backward without forward");
  MatrixXd x = std::move(xs_.back());
  xs_.pop_back();
  W.grad.noalias() += x.transpose() * dy;
  b.grad.row(0) += dy.colwise().sum();
  return dy * W.value.transpose();
}

void Linear::clear_cache() { xs_.clear(); }

std::vector<Param*> Linear::params() { return {&W, &b}; }

// ---- GRUCell ----

GRUCell::GRUCell(const std::string& name, int in_, int hidden_, RandomStream& rng)
    : Wx(name + ".Wx", in_, 3 * hidden_),
      Wh(name + ".Wh", hidden_, 3 * hidden_),
      b(name + ".b", 1, 3 * hidden_),
      in(in_),
      hidden(hidden_) {
  Wx.init_uniform(rng);
  Wh.init_uniform(rng);
  b.init_uniform(rng);
}

MatrixXd GRUCell::step(const MatrixXd& x, const MatrixXd& h_prev, bool cache) {
  if (x.cols() != in || h_prev.cols() != hidden || x.rows() != h_prev.rows())
    throw std::invalid_argument("gru: shape mismatch");
  const int H = hidden;
  MatrixXd u = (x * Wx.value).rowwise() + b.value.row(0);  // [z r g] pre-activations
  MatrixXd vzr = h_prev * Wh.value.leftCols(2 * H);
  MatrixXd z = sigmoid(u.leftCols(H) + vzr.leftCols(H));
  MatrixXd r = sigmoid(u.middleCols(H, H) + vzr.rightCols(H));
  MatrixXd rh = r.cwiseProduct(h_prev);
  MatrixXd g = (u.rightCols(H) + rh * Wh.value.rightCols(H))
                   .unaryExpr([](double t) { return std::tanh(t); });
  MatrixXd h_new = ((1.0 - z.array()) * h_prev.array() + z.array() * g.array()).matrix();
  if (cache) caches_.push_back({x, h_prev, z, r, g, rh});
  return h_new;
}

std::pair<MatrixXd, MatrixXd> GRUCell::step_backward(const MatrixXd& dh_new) {
  if (caches_.empty()) throw std::logic_error("gru: backward without cached step");
  Cache c = std::move(caches_.back());
  caches_.pop_back();
  const int H = hidden;
  MatrixXd dz = dh_new.cwiseProduct(c.g - c.h_prev);
  MatrixXd dg = dh_new.cwiseProduct(c.z);
  MatrixXd dh_prev = dh_new.cwiseProduct(MatrixXd::Ones(dh_new.rows(), H) - c.z);

  MatrixXd dg_pre = (dg.array() * (1.0 - c.g.array().square())).matrix();
  MatrixXd drh = dg_pre * Wh.value.rightCols(H).transpose();
  Wh.grad.rightCols(H).noalias() += c.rh.transpose() * dg_pre;
  MatrixXd dr = drh.cwiseProduct(c.h_prev);
  dh_prev += drh.cwiseProduct(c.r);

  MatrixXd dz_pre = (dz.array() * c.z.array() * (1.0 - c.z.array())).matrix();
  MatrixXd dr_pre = (dr.array() * c.r.array() * (1.0 - c.r.array())).matrix();
  MatrixXd dvzr(dh_new.rows(), 2 * H);
  dvzr << dz_pre, dr_pre;
  dh_prev += dvzr * Wh.value.leftCols(2 * H).transpose();
  Wh.grad.leftCols(2 * H).noalias() += c.h_prev.transpose() * dvzr;

  MatrixXd du(dh_new.rows(), 3 * H);
  du << dz_pre, dr_pre, dg_pre;
  MatrixXd dx = du * Wx.value.transpose();
  Wx.grad.noalias() += c.x.transpose() * du;
  b.grad.row(0) += du.colwise().sum();
  return {dx, dh_prev};
}

void GRUCell::clear_cache() { caches_.clear(); }

std::vector<Param*> GRUCell::params() { return {&Wx, &Wh, &b}; }

// ---- BatchNorm ----

BatchNorm::BatchNorm(const std::string& name, int features)
    : gamma(name + ".gamma", 1, features),
      beta(name + ".beta", 1, features),
      running_mean(name + ".running_mean", 1, features),
      running_var(name + ".running_var", 1, features) {
  gamma.value.setOnes();
  running_var.value.setOnes();
}

MatrixXd BatchNorm::forward(const MatrixXd& x, bool train) {
  if (x.cols() != gamma.value.cols()) throw std::invalid_argument("batchnorm: feature mismatch");
  if (!train) {
    Eigen::RowVectorXd inv_std = (running_var.value.row(0).array() + eps).rsqrt().matrix();
    MatrixXd x_hat =
        ((x.rowwise() - running_mean.value.row(0)).array().rowwise() * inv_std.array()).matrix();
    return ((x_hat.array().rowwise() * gamma.value.row(0).array()).rowwise() +
            beta.value.row(0).array())
        .matrix();
  }
  if (x.rows() < 2) throw std::invalid_argument("batchnorm: train mode needs batch >= 2");
  const double B = static_cast<double>(x.rows());
  RowVectorXd mean = x.colwise().mean();
  MatrixXd centered = x.rowwise() - mean;
  RowVectorXd var = centered.array().square().colwise().sum() / B;
  RowVectorXd inv_std = (var.array() + eps).rsqrt().matrix();
  MatrixXd x_hat = (centered.array().rowwise() * inv_std.array()).matrix();
  running_mean.value.row(0) = momentum * running_mean.value.row(0) + (1.0 - momentum) * mean;
  running_var.value.row(0) = momentum * running_var.value.row(0) + (1.0 - momentum) * var;
  caches_.push_back({x_hat, inv_std});
  return ((x_hat.array().rowwise() * gamma.value.row(0).array()).rowwise() +
          beta.value.row(0).array())
      .matrix();
}

MatrixXd BatchNorm::backward(const MatrixXd& dy) {
  if (caches_.empty()) throw std::logic_error("batchnorm: backward without train forward");
  Cache c = std::move(caches_.back());
  caches_.pop_back();
  const double B = static_cast<double>(dy.rows());
  MatrixXd dxhat = dy.array().rowwise() * gamma.value.row(0).array();
  gamma.grad.row(0) += (dy.array() * c.x_hat.array()).colwise().sum().matrix();
  beta.grad.row(0) += dy.colwise().sum();
  RowVectorXd sum_dxhat = dxhat.colwise().sum();
  RowVectorXd sum_dxhat_xhat = (dxhat.array() * c.x_hat.array()).colwise().sum();
  MatrixXd dx = (((dxhat.array() * B).rowwise() - sum_dxhat.array()) -
                 (c.x_hat.array().rowwise() * sum_dxhat_xhat.array()))
                    .matrix();
  dx = (dx.array().rowwise() * (c.inv_std.array() / B)).matrix();
  return dx;
}

void BatchNorm::clear_cache() { caches_.clear(); }

std::vector<Param*> BatchNorm::params() { return {&gamma, &beta}; }

// ---- Dropout ----

MatrixXd Dropout::forward(const MatrixXd& x, bool train, RandomStream& rng) {
  if (!train) return x;
  if (rate_ == 0.0) {
    masks_.push_back(MatrixXd::Ones(x.rows(), x.cols()));
    return x;
  }
  const double keep_scale = 1.0 / (1.0 - rate_);
  MatrixXd mask(x.rows(), x.cols());
  for (long i = 0; i < x.rows(); ++i)
    for (long j = 0; j < x.cols(); ++j)
      mask(i, j) = rng.u01() >= rate_ ? keep_scale : 0.0;
  masks_.push_back(mask);
  return x.cwiseProduct(mask);
}

MatrixXd Dropout::forward_with_mask(const MatrixXd& x, const MatrixXd& mask) {
  masks_.push_back(mask);
  return x.cwiseProduct(mask);
}

MatrixXd Dropout::backward(const MatrixXd& dy) {
  if (masks_.empty()) throw std::logic_error("dropout: backward without forward");
  MatrixXd mask = std::move(masks_.back());
  masks_.pop_back();
  return dy.cwiseProduct(mask);
}

void Dropout::clear_cache() { masks_.clear(); }

// ---- MultiHeadAttention ----

MultiHeadAttention::MultiHeadAttention(const std::string& name, int n_q_, int heads_,
                                       RandomStream& rng)
    : n_q(n_q_), heads(heads_), d_k(n_q_ / heads_), Wo(name + ".Wo", n_q_, n_q_) {
  if (n_q % heads != 0) throw std::invalid_argument("attention: n_q must be divisible by heads");
  Wq.reserve(heads);
  Wk.reserve(heads);
  Wv.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    Wq.emplace_back(name + ".Wq" + std::to_string(h), n_q, d_k);
    Wk.emplace_back(name + ".Wk" + std::to_string(h), n_q, d_k);
    Wv.emplace_back(name + ".Wv" + std::to_string(h), n_q, d_k);
    Wq.back().init_uniform(rng);
    Wk.back().init_uniform(rng);
    Wv.back().init_uniform(rng);
  }
  Wo.init_uniform(rng);
}

MatrixXd MultiHeadAttention::forward(const MatrixXd& x, bool cache) {
  if (x.cols() != n_q) throw std::invalid_argument("attention: feature mismatch");
  const double scale = 1.0 / std::sqrt(static_cast<double>(d_k));
  const long L = x.rows();
  Cache c;
  c.x = x;
  MatrixXd concat(L, heads * d_k);
  for (int h = 0; h < heads; ++h) {
    MatrixXd Q = x * Wq[h].value;
    MatrixXd K = x * Wk[h].value;
    MatrixXd V = x * Wv[h].value;
    MatrixXd A = softmax_rows(Q * K.transpose() * scale);
    concat.middleCols(h * d_k, d_k) = A * V;
    c.Q.push_back(std::move(Q));
    c.K.push_back(std::move(K));
    c.V.push_back(std::move(V));
    c.A.push_back(std::move(A));
  }
  if (cache) caches_.push_back(std::move(c));
  return concat * Wo.value;
}

MatrixXd MultiHeadAttention::backward(const MatrixXd& dy) {
  if (caches_.empty()) throw std::logic_error("attention: backward without forward");
  Cache c = std::move(caches_.back());
  caches_.pop_back();
  const double scale = 1.0 / std::sqrt(static_cast<double>(d_k));
  const long L = c.x.rows();
  MatrixXd concat(L, heads * d_k);
  for (int h = 0; h < heads; ++h) concat.middleCols(h * d_k, d_k) = c.A[h] * c.V[h];
  Wo.grad.noalias() += concat.transpose() * dy;
  MatrixXd dconcat = dy * Wo.value.transpose();
  MatrixXd dx = MatrixXd::Zero(L, n_q);
  for (int h = 0; h < heads; ++h) {
    MatrixXd dZ = dconcat.middleCols(h * d_k, d_k);
    MatrixXd dA = dZ * c.V[h].transpose();
    MatrixXd dV = c.A[h].transpose() * dZ;
    // softmax rows: dS = A o (dA - rowsum(dA o A))
    MatrixXd dS(L, L);
    for (long i = 0; i < L; ++i) {
      double dot = c.A[h].row(i).dot(dA.row(i));
      dS.row(i) = c.A[h].row(i).array() * (dA.row(i).array() - dot);
    }
    MatrixXd dQ = dS * c.K[h] * scale;
    MatrixXd dK = dS.transpose() * c.Q[h] * scale;
    Wq[h].grad.noalias() += c.x.transpose() * dQ;
    Wk[h].grad.noalias() += c.x.transpose() * dK;
    Wv[h].grad.noalias() += c.x.transpose() * dV;
    dx.noalias() += dQ * Wq[h].value.transpose();
    dx.noalias() += dK * Wk[h].value.transpose();
    dx.noalias() += dV * Wv[h].value.transpose();
  }
  return dx;
}

void MultiHeadAttention::clear_cache() { caches_.clear(); }

std::vector<Param*> MultiHeadAttention::params() {
  std::vector<Param*> ps;
  for (int h = 0; h < heads; ++h) {
    ps.push_back(&Wq[h]);
    ps.push_back(&Wk[h]);
    ps.push_back(&Wv[h]);
  }
  ps.push_back(&Wo);
  return ps;
}

// ---- checkpoints ----

namespace {
constexpr char kMagic[8] = {'W', 'P', 'M', 'E', 'C', 'N', 'N', '1'};

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), 4);
}

std::uint32_t read_u32(std::istream& is) {
  unsigned char buf[4];
  is.read(reinterpret_cast<char*>(buf), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
  return v;
}
}  // namespace

void save_checkpoint(const std::string& path, const std::string& variant,
                     const std::vector<const Param*>& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  os.write(kMagic, 8);
  write_u32(os, static_cast<std::uint32_t>(variant.size()));
  os.write(variant.data(), static_cast<std::streamsize>(variant.size()));
  write_u32(os, static_cast<std::uint32_t>(params.size()));
  for (const Param* p : params) {
    write_u32(os, static_cast<std::uint32_t>(p->name.size()));
    os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    write_u32(os, static_cast<std::uint32_t>(p->value.rows()));
    write_u32(os, static_cast<std::uint32_t>(p->value.cols()));
  }
  for (const Param* p : params) {
    // Row-major little-endian doubles (host is little-endian x86-64).
    for (long i = 0; i < p->value.rows(); ++i)
      for (long j = 0; j < p->value.cols(); ++j) {
        double d = p->value(i, j);
        os.write(reinterpret_cast<const char*>(&d), sizeof(d));
      }
  }
  if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

namespace {
std::string read_header(std::istream& is, std::vector<std::array<std::uint32_t, 2>>& shapes,
                        std::vector<std::string>& names) {
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("not a checkpoint file (bad magic)");
  std::uint32_t vlen = read_u32(is);
  std::string variant(vlen, '\0');
  is.read(variant.data(), vlen);
  std::uint32_t count = read_u32(is);
  shapes.resize(count);
  names.resize(count);
  for (std::uint32_t t = 0; t < count; ++t) {
    std::uint32_t nlen = read_u32(is);
    names[t].resize(nlen);
    is.read(names[t].data(), nlen);
    shapes[t][0] = read_u32(is);
    shapes[t][1] = read_u32(is);
  }
  if (!is) throw std::runtime_error("truncated checkpoint header");
  return variant;
}
}  // namespace

std::string load_checkpoint(const std::string& path, const std::vector<Param*>& params) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  std::vector<std::array<std::uint32_t, 2>> shapes;
  std::vector<std::string> names;
  std::string variant = read_header(is, shapes, names);
  if (shapes.size() != params.size())
    throw std::runtime_error("checkpoint tensor count mismatch");
  for (size_t t = 0; t < params.size(); ++t) {
    if (static_cast<long>(shapes[t][0]) != params[t]->value.rows() ||
        static_cast<long>(shapes[t][1]) != params[t]->value.cols())
      throw std::runtime_error("checkpoint shape mismatch for " + names[t]);
  }
  for (Param* p : params) {
    for (long i = 0; i < p->value.rows(); ++i)
      for (long j = 0; j < p->value.cols(); ++j) {
        double d;
        is.read(reinterpret_cast<char*>(&d), sizeof(d));
        p->value(i, j) = d;
      }
  }
  if (!is) throw std::runtime_error("truncated checkpoint data");
  return variant;
}

std::string checkpoint_variant(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  std::vector<std::array<std::uint32_t, 2>> shapes;
  std::vector<std::string> names;
  return read_header(is, shapes, names);
}

}  // namespace wpmec
