#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <stdexcept>
#include <vector>

#include "wpmec/policy.hpp"

using namespace wpmec;

namespace {

MatrixXd random_matrix(long r, long c, RandomStream& rng, double lo, double hi) {
  MatrixXd m(r, c);
  for (long i = 0; i < r; ++i)
    for (long j = 0; j < c; ++j) m(i, j) = rng.uniform(lo, hi);
  return m;
}

// Typical scaled inputs: gains ~1e-6 times kInputScale land around 1.
MatrixXd scaled_inputs(long r, long c, RandomStream& rng) {
  return random_matrix(r, c, rng, 0.05, 4.0);
}

MatrixXd random_targets(long r, long c, RandomStream& rng) {
  MatrixXd t(r, c);
  for (long i = 0; i < r; ++i)
    for (long j = 0; j < c; ++j) t(i, j) = double(rng.index(2));
  return t;
}

// Finite-difference check of d(bce)/d(param) through a full policy forward.
void check_policy_grads(PolicyModel& pol, const MatrixXd& x, const MatrixXd& t,
                        double step, double tol) {
  auto loss = [&] { return bce_loss(pol.forward(x, true), t); };
  for (Param* p : pol.params()) p->zero_grad();
  MatrixXd out = pol.forward(x, true);
  MatrixXd d;
  bce_loss(out, t, &d);
  pol.backward(d);
  for (Param* p : pol.params()) {
    for (long i = 0; i < p->value.rows(); ++i)
      for (long j = 0; j < p->value.cols(); ++j) {
        const double save = p->value(i, j);
        p->value(i, j) = save + step;
        const double up = loss();
        p->value(i, j) = save - step;
        const double dn = loss();
        p->value(i, j) = save;
        const double fd = (up - dn) / (2 * step);
        CHECK(std::abs(p->grad(i, j) - fd) <= tol * std::max(1.0, std::abs(fd)));
      }
  }
}

}  // namespace

TEST_SUITE("policy") {

TEST_CASE("trainable parameter counts") {
  CHECK(make_policy("dnn", 10, 1)->param_count() == 11810);
  CHECK(make_policy("rnn", 10, 1)->param_count() == 153610);
  CHECK(make_policy("quantum_attention", 10, 1)->param_count() == 2714);
  CHECK(make_policy("quantum_dnn", 10, 1)->param_count() == 2530);
  CHECK_THROWS_AS(make_policy("mlp", 10, 1), std::invalid_argument);
}

TEST_CASE("outputs are relaxed decisions in the open unit interval") {
  RandomStream rng(501, "policy-range");
  for (const char* v : {"dnn", "rnn", "quantum_dnn", "quantum_attention"}) {
    auto pol = make_policy(v, 5, 77);
    const int cols = pol->input_window() * 5;
    MatrixXd x = scaled_inputs(3, cols, rng);
    MatrixXd y = pol->forward(x, false);
    REQUIRE(y.rows() == 3);
    REQUIRE(y.cols() == 5);
    for (long i = 0; i < y.rows(); ++i)
      for (long j = 0; j < y.cols(); ++j) {
        CHECK(y(i, j) > 0.0);
        CHECK(y(i, j) < 1.0);
      }
    // The online path agrees with the batch path at inference.
    RowVectorXd probe = scaled_inputs(1, 5, rng).row(0);
    pol->reset_hidden();
    RowVectorXd online = pol->infer_online(probe);
    REQUIRE(online.size() == 5);
    for (long j = 0; j < 5; ++j) {
      CHECK(online(j) > 0.0);
      CHECK(online(j) < 1.0);
    }
  }
}

TEST_CASE("zeroed feed-forward network is maximally uncertain") {
  auto pol = make_policy("dnn", 4, 3);
  for (Param* p : pol->params()) p->value.setZero();
  RandomStream rng(503, "policy-half");
  MatrixXd y = pol->forward(scaled_inputs(2, 4, rng), false);
  for (long i = 0; i < y.rows(); ++i)
    for (long j = 0; j < y.cols(); ++j) CHECK(y(i, j) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("feed-forward gradients match finite differences") {
  RandomStream rng(507, "policy-dnnfd");
  auto pol = make_policy("dnn", 4, 11);
  MatrixXd x = scaled_inputs(3, 4, rng);
  MatrixXd t = random_targets(3, 4, rng);
  check_policy_grads(*pol, x, t, 1e-6, 1e-5);
}

TEST_CASE("recurrent gradients match finite differences") {
  // Dropout must be disabled for determinism; batch >= 2 satisfies the
  // standardization layer.  A shortened window keeps the check fast.
  RandomStream init(509, "policy-rnnfd");
  RnnPolicy pol(3, init, 1234, 0.0);
  RandomStream rng(510, "policy-rnnfd-x");
  MatrixXd x = scaled_inputs(2, 5 * 3, rng);
  MatrixXd t = random_targets(2, 3, rng);
  check_policy_grads(pol, x, t, 1e-6, 2e-5);
}

TEST_CASE("hybrid gradients match finite differences") {
  RandomStream rng(511, "policy-qfd");
  for (const char* v : {"quantum_dnn", "quantum_attention"}) {
    auto pol = make_policy(v, 4, 13);
    MatrixXd x = scaled_inputs(2, 4, rng);
    MatrixXd t = random_targets(2, 4, rng);
    check_policy_grads(*pol, x, t, 1e-5, 1e-4);
  }
}

TEST_CASE("recurrent policy accepts any window length") {
  auto pol = make_policy("rnn", 3, 21);
  RandomStream rng(513, "policy-window");
  CHECK(pol->input_window() == 10);
  MatrixXd one = scaled_inputs(2, 3, rng);  // a single frame works too
  MatrixXd y = pol->forward(one, false);
  CHECK(y.cols() == 3);
  MatrixXd full = scaled_inputs(2, 30, rng);
  CHECK(pol->forward(full, false).cols() == 3);
  CHECK_THROWS_AS(pol->forward(scaled_inputs(2, 7, rng), false), std::invalid_argument);
}

TEST_CASE("online inference carries hidden state until reset") {
  auto pol = make_policy("rnn", 4, 31);
  RandomStream rng(517, "policy-state");
  RowVectorXd f1 = scaled_inputs(1, 4, rng).row(0);
  RowVectorXd f2 = scaled_inputs(1, 4, rng).row(0);

  pol->reset_hidden();
  RowVectorXd a1 = pol->infer_online(f1);
  RowVectorXd a2 = pol->infer_online(f2);

  pol->reset_hidden();
  RowVectorXd b1 = pol->infer_online(f1);
  RowVectorXd b2 = pol->infer_online(f2);

  CHECK((a1 - b1).cwiseAbs().maxCoeff() == 0.0);  // same history, same output
  CHECK((a2 - b2).cwiseAbs().maxCoeff() == 0.0);

  pol->reset_hidden();
  RowVectorXd fresh = pol->infer_online(f2);  // different history now
  CHECK((fresh - a2).cwiseAbs().maxCoeff() > 0.0);

  // Stateless variants are unaffected by history.
  auto dnn = make_policy("dnn", 4, 31);
  RowVectorXd d1 = dnn->infer_online(f1);
  dnn->infer_online(f2);
  dnn->reset_hidden();
  CHECK((dnn->infer_online(f1) - d1).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("same seed builds the same policy") {
  RandomStream rng(519, "policy-det");
  for (const char* v : {"dnn", "rnn", "quantum_dnn", "quantum_attention"}) {
    auto p1 = make_policy(v, 4, 99);
    auto p2 = make_policy(v, 4, 99);
    MatrixXd x = scaled_inputs(2, p1->input_window() * 4, rng);
    CHECK((p1->forward(x, false) - p2->forward(x, false)).cwiseAbs().maxCoeff() == 0.0);
    auto p3 = make_policy(v, 4, 100);
    CHECK((p1->forward(x, false) - p3->forward(x, false)).cwiseAbs().maxCoeff() > 0.0);
  }
}

TEST_CASE("training drives the loss toward labeled decisions") {
  RandomStream rng(523, "policy-train");
  for (const char* v : {"dnn", "quantum_dnn", "quantum_attention"}) {
    auto pol = make_policy(v, 4, 7);
    MatrixXd x = scaled_inputs(4, 4, rng);
    MatrixXd t = random_targets(4, 4, rng);
    Adam opt(AdamConfig{5e-3, 0.9, 0.999, 1e-8});
    const double first = pol->train_step(x, t, opt);
    double last = first;
    for (int i = 0; i < 400; ++i) last = pol->train_step(x, t, opt);
    CHECK(last < 1e-2);
    CHECK(last < first);
  }
}

TEST_CASE("recurrent training overfits a duplicated pair") {
  // Two distinct windows, each duplicated so batch statistics stay sane.
  RandomStream init(527, "policy-rnn-train");
  RnnPolicy pol(3, init, 55, 0.0);
  RandomStream rng(528, "policy-rnn-train-x");
  MatrixXd w1 = scaled_inputs(1, 30, rng);
  MatrixXd w2 = scaled_inputs(1, 30, rng);
  MatrixXd x(4, 30);
  x << w1, w2, w1, w2;
  MatrixXd t(4, 3);
  t << 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0;
  Adam opt(AdamConfig{5e-3, 0.9, 0.999, 1e-8});
  const double first = pol.train_step(x, t, opt);
  double last = first;
  for (int i = 0; i < 300; ++i) last = pol.train_step(x, t, opt);
  CHECK(last < 5e-2);
  CHECK(last < first);
}

TEST_CASE("rounded outputs are on the confident side of the loss") {
  RandomStream rng(529, "policy-round");
  auto pol = make_policy("dnn", 6, 17);
  MatrixXd x = scaled_inputs(3, 6, rng);
  MatrixXd y = pol->forward(x, false);
  MatrixXd t = (y.array() > 0.5).cast<double>();
  CHECK(bce_loss(y, t) < std::log(2.0));  // agreeing labels beat coin flips
}

TEST_CASE("checkpoints restore behavior exactly") {
  RandomStream rng(531, "policy-ckpt");
  for (const char* v : {"dnn", "rnn", "quantum_attention"}) {
    auto pol = make_policy(v, 3, 41);
    const int cols = pol->input_window() * 3;
    // Nudge every tensor away from init (moves batchnorm running stats too).
    MatrixXd x = scaled_inputs(4, cols, rng);
    MatrixXd t = random_targets(4, 3, rng);
    Adam opt;
    for (int i = 0; i < 3; ++i) pol->train_step(x, t, opt);

    const std::string path = std::string("policy_ckpt_") + v + ".bin";
    pol->save(path);

    auto fresh = make_policy(v, 3, 4242);
    MatrixXd probe = scaled_inputs(2, cols, rng);
    CHECK((fresh->forward(probe, false) - pol->forward(probe, false)).cwiseAbs().maxCoeff() >
          0.0);
    fresh->load(path);
    CHECK((fresh->forward(probe, false) - pol->forward(probe, false)).cwiseAbs().maxCoeff() ==
          0.0);

    auto other = make_policy(v == std::string("dnn") ? "rnn" : "dnn", 3, 1);
    CHECK_THROWS_AS(other->load(path), std::runtime_error);
    std::remove(path.c_str());
  }
}

TEST_CASE("input scale constant matches the gain magnitude") {
  CHECK(kInputScale == 1e6);
}

}  // TEST_SUITE
