#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "wpmec/env.hpp"

namespace wpmec {

// Time split and objective for one frame: fraction a of the frame charges the
// devices, fraction tau(i) carries device i's upload, a + sum(tau) <= 1.
struct Allocation {
  double a = 1.0;
  VectorXd tau;
  double value = 0.0;
};

struct SolveReport {
  Allocation allocation;
  int iterations = 0;
  bool converged = true;
};

// Per-channel precomputation shared by every decision evaluated on the same
// gains: local-only rate terms, offload SNR coefficients, scaled weights and
// the weight-class partition (devices with equal priority share one
// Lagrangian stationarity equation).
struct FrameCache {
  VectorXd local_term;           // w_i * eta1 * (h_i/k_i)^{1/3}
  VectorXd c;                    // mu * P * h_i^2 / N0
  VectorXd wp;                   // w_i * B / vu
  std::vector<int> cls_of;       // device -> weight class (first-occurrence order)
  std::vector<double> wp_cls;    // per-class scaled weight
  int n_classes = 0;
};

FrameCache make_frame_cache(const VectorXd& h, const SystemParams& p);

// Reusable scratch for the solver hot path; one per calling context.
struct P2Workspace {
  std::vector<double> C;       // per-class SNR-coefficient sums
  std::vector<double> u, s;    // per-class log-SNR duals and SNRs
  std::vector<int> active;     // classes with at least one offloader
  std::vector<signed char> flags;
  void reserve(int n_classes, int n_devices);
};

// Exact maximizer of the convex allocation subproblem for a fixed decision x.
// Joint dual root-finding: all per-class stationarity conditions and the tight
// time budget are expressed through one scalar (the base class's log-SNR) and
// solved by a safeguarded false-position iteration; the budget is then met
// exactly by construction.  tol bounds the relative optimality gap.
SolveReport solve_p2(const VectorXd& h, const VectorXi& x, const SystemParams& p,
                     double tol = 1e-6);
SolveReport solve_p2(const FrameCache& fc, const VectorXi& x, const SystemParams& p,
                     double tol, P2Workspace& ws);

// Value-only hot path; x given as n flags in {0,1}.
double solve_value(const FrameCache& fc, const signed char* x, int n, double tol,
                   P2Workspace& ws);

// Literal nested scheme kept as a cross-check: golden-section over a with, for
// each a, a dual bisection on nu and per-device tau bisections.  Orders of
// magnitude slower than solve_p2; used by tests.
SolveReport solve_p2_reference(const VectorXd& h, const VectorXi& x,
                               const SystemParams& p, double tol = 1e-6);

// Building blocks of the reference scheme, exposed for property tests.
// Sum of the per-device time demands at multiplier nu (each by bisection).
double inner_sum_tau(const VectorXd& h, const VectorXi& x, double a,
                     const SystemParams& p, double nu);
// Budget-tight allocation of 1-a among offloaders at fixed a.
VectorXd inner_allocate(const VectorXd& h, const VectorXi& x, double a,
                        const SystemParams& p);
// Objective at fixed a under the inner allocation.
double outer_g(const VectorXd& h, const VectorXi& x, double a,
               const SystemParams& p);

// Argmax of solve_p2 value over all 2^N decisions; ties go to the smallest
// binary encoding (bit i = device i).  Refuses N > 14.
std::pair<VectorXi, double> exhaustive_best(const VectorXd& h, const SystemParams& p);

// Multi-start greedy single-bit-flip ascent; starts are all-local, all-offload,
// then random decisions.  Deterministic given the stream state.
std::pair<VectorXi, double> local_search_best(const VectorXd& h, const SystemParams& p,
                                              int starts, RandomStream& rng);

// value / ref_value; the reference must be positive.
double normalized_rate(double value, double ref_value);

}  // namespace wpmec
