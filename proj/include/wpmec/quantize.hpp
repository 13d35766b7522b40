#pragma once

#include <vector>

#include "wpmec/env.hpp"

namespace wpmec {

// Ordered list of binary candidate decisions distilled from a relaxed vector m.
struct CandidateSet {
  std::vector<VectorXi> actions;
  enum class Generator { op, ugq } generator = Generator::op;
  double noise_sigma = 0.0;
};

// Order-preserving quantization: candidate 1 thresholds m at 0.5; candidate k
// (k >= 2) thresholds at the (k-1)-th entry of m ranked by |m_i - 0.5|
// ascending, the pivot entry itself going to 1 iff its value <= 0.5.
// Requires 1 <= K <= N+1.
CandidateSet op_quantize(const VectorXd& m, int K);

// Uncertainty-guided quantization: after the 0.5-threshold action, each round
// i picks the i-th most uncertain entry as pivot p, thresholds the whole
// vector at 0.5 + (p-0.5)*0.7 + U(-sigma, sigma), and resolves a duplicate by
// flipping the next pivot's bit (exactly one flip; the result is appended
// regardless).  Strict ">" at every threshold.  dup_of, when given, records
// for each candidate the index of the member it originally collided with
// (-1 if none).
CandidateSet ugq_quantize(const VectorXd& m, int K, double sigma, RandomStream& rng,
                          std::vector<int>* dup_of = nullptr);

}  // namespace wpmec
