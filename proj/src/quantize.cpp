#include "wpmec/quantize.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace wpmec {

namespace {

void check_m(const VectorXd& m) {
  if (m.size() < 1) throw std::invalid_argument("m must be nonempty");
  for (int i = 0; i < m.size(); ++i)
    if (!(m(i) >= 0.0 && m(i) <= 1.0)) throw std::invalid_argument("m entries must lie in [0,1]");
}

VectorXi threshold(const VectorXd& m, double t) {
  VectorXi x(m.size());
  for (int i = 0; i < m.size(); ++i) x(i) = m(i) > t ? 1 : 0;
  return x;
}

// Indices ordered by |m - 0.5| ascending; stable, so distance ties keep
// index order.
std::vector<int> uncertainty_order(const VectorXd& m) {
  std::vector<int> idx(m.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    return std::abs(m(a) - 0.5) < std::abs(m(b) - 0.5);
  });
  return idx;
}

}  // namespace

CandidateSet op_quantize(const VectorXd& m, int K) {
  check_m(m);
  const int n = static_cast<int>(m.size());
  if (K < 1 || K > n + 1) throw std::invalid_argument("K must lie in [1, N+1]");
  CandidateSet set;
  set.generator = CandidateSet::Generator::op;
  set.actions.reserve(K);
  set.actions.push_back(threshold(m, 0.5));
  std::vector<int> idx = uncertainty_order(m);
  for (int k = 2; k <= K; ++k) {
    int pivot = idx[k - 2];
    double p = m(pivot);
    VectorXi x = threshold(m, p);
    x(pivot) = p <= 0.5 ? 1 : 0;
    set.actions.push_back(std::move(x));
  }
  return set;
}

CandidateSet ugq_quantize(const VectorXd& m, int K, double sigma, RandomStream& rng,
                          std::vector<int>* dup_of) {
  check_m(m);
  if (K < 1) throw std::invalid_argument("K must be >= 1");
  if (sigma < 0.0) throw std::invalid_argument("sigma must be nonnegative");
  const int n = static_cast<int>(m.size());
  CandidateSet set;
  set.generator = CandidateSet::Generator::ugq;
  set.noise_sigma = sigma;
  set.actions.reserve(K);
  if (dup_of) dup_of->assign(K, -1);
  set.actions.push_back(threshold(m, 0.5));
  std::vector<int> idx = uncertainty_order(m);
  for (int i = 1; i < K; ++i) {
    double p = m(idx[i % n]);
    double t = 0.5 + (p - 0.5) * 0.7 + rng.uniform(-sigma, sigma);
    VectorXi x = threshold(m, t);
    for (int j = 0; j < static_cast<int>(set.actions.size()); ++j) {
      if (set.actions[j] == x) {
        int flip = idx[(i + 1) % n];
        x(flip) ^= 1;
        if (dup_of) (*dup_of)[i] = j;
        break;  // exactly one flip, appended even if it still collides
      }
    }
    set.actions.push_back(std::move(x));
  }
  return set;
}

}  // namespace wpmec
