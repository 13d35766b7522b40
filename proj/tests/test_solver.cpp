#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "wpmec/solver.hpp"

using namespace wpmec;

namespace {

SystemParams params_n(int n) {
  return SystemParams::defaults(n, VectorXd::Constant(n, 3.0));
}

// Random faded gains around the mean gain at each device's distance.
VectorXd random_gains(const SystemParams& p, RandomStream& rng) {
  VectorXd h(p.n_devices);
  for (int i = 0; i < p.n_devices; ++i)
    h(i) = mean_channel_gain(p.distances(i), p) * std::max(rng.exponential(), 1e-8);
  return h;
}

VectorXi mask_to_x(std::uint64_t mask, int n) {
  VectorXi x(n);
  for (int i = 0; i < n; ++i) x(i) = int((mask >> i) & 1u);
  return x;
}

VectorXi random_x(int n, RandomStream& rng) {
  VectorXi x(n);
  for (int i = 0; i < n; ++i) x(i) = int(rng.index(2));
  return x;
}

}  // namespace

TEST_SUITE("solver") {

TEST_CASE("all-local decision spends the whole frame charging") {
  RandomStream rng(101, "solver-local");
  for (int n : {1, 3, 6}) {
    SystemParams p = params_n(n);
    VectorXd h = random_gains(p, rng);
    SolveReport rep = solve_p2(h, VectorXi::Zero(n), p);
    REQUIRE(rep.converged);
    CHECK(rep.allocation.a == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(rep.allocation.tau.cwiseAbs().maxCoeff() == 0.0);
    double expect = 0.0;
    for (int i = 0; i < n; ++i)
      expect += p.weights(i) * p.eta1() * std::cbrt(h(i) / p.k(i));
    CHECK(rep.allocation.value == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("single offloader matches a dense grid over the time split") {
  SystemParams p = params_n(2);
  RandomStream rng(7, "solver-grid");
  VectorXd h = random_gains(p, rng);
  VectorXi x(2);
  x << 1, 0;
  const double solved = solve_p2(h, x, p).allocation.value;

  double grid_best = 0.0;
  const double step = 1e-3;
  for (double a = 0.0; a <= 1.0 + 1e-12; a += step) {
    const double ca = std::min(a, 1.0);
    const double local1 = p.weights(1) * local_rate(h(1), ca, p.k(1), p);
    for (double tau = 0.0; tau <= 1.0 - ca + 1e-12; tau += step) {
      const double v =
          p.weights(0) * offload_rate(h(0), ca, std::min(tau, 1.0 - ca), p) + local1;
      grid_best = std::max(grid_best, v);
    }
  }
  CHECK(solved == doctest::Approx(grid_best).epsilon(1e-3));
  CHECK(solved >= grid_best - 1e-9 * grid_best);  // grid can only undershoot
}

TEST_CASE("joint dual solver agrees with the nested golden-section scheme") {
  RandomStream rng(23, "solver-cross");
  for (int n = 1; n <= 5; ++n) {
    SystemParams p = params_n(n);
    for (int rep = 0; rep < 4; ++rep) {
      VectorXd h = random_gains(p, rng);
      VectorXi x = random_x(n, rng);
      const double fast = solve_p2(h, x, p).allocation.value;
      const double slow = solve_p2_reference(h, x, p).allocation.value;
      CHECK(fast == doctest::Approx(slow).epsilon(2e-5));
    }
  }
}

TEST_CASE("budget is spent exactly whenever someone offloads") {
  RandomStream rng(31, "solver-budget");
  SystemParams p = params_n(6);
  for (int rep = 0; rep < 25; ++rep) {
    VectorXd h = random_gains(p, rng);
    VectorXi x = random_x(6, rng);
    if (x.sum() == 0) x(0) = 1;
    Allocation al = solve_p2(h, x, p).allocation;
    CHECK(std::abs(al.a + al.tau.sum() - 1.0) <= 1e-12);
    CHECK(al.a > 0.0);
    CHECK(al.a < 1.0);
    for (int i = 0; i < 6; ++i) {
      CHECK(al.tau(i) >= 0.0);
      if (!x(i)) CHECK(al.tau(i) == 0.0);
      if (x(i)) CHECK(al.tau(i) > 0.0);
    }
  }
}

TEST_CASE("reported value equals the objective at the reported split") {
  RandomStream rng(37, "solver-consist");
  SystemParams p = params_n(5);
  for (int rep = 0; rep < 20; ++rep) {
    VectorXd h = random_gains(p, rng);
    VectorXi x = random_x(5, rng);
    Allocation al = solve_p2(h, x, p).allocation;
    const double direct = weighted_sum_rate(h, x, al.a, al.tau, p);
    CHECK(al.value == doctest::Approx(direct).epsilon(1e-9));
  }
}

TEST_CASE("optimal split beats random feasible splits") {
  RandomStream rng(41, "solver-opt");
  SystemParams p = params_n(4);
  for (int rep = 0; rep < 10; ++rep) {
    VectorXd h = random_gains(p, rng);
    VectorXi x = random_x(4, rng);
    if (x.sum() == 0) x(2) = 1;
    const double best = solve_p2(h, x, p).allocation.value;
    for (int trial = 0; trial < 40; ++trial) {
      // Random point on the simplex a + sum(tau) = 1 with support on x.
      double a = rng.uniform(0.01, 0.99);
      VectorXd tau = VectorXd::Zero(4);
      double wsum = 0.0;
      for (int i = 0; i < 4; ++i)
        if (x(i)) wsum += (tau(i) = rng.uniform(0.05, 1.0));
      tau *= (1.0 - a) / wsum;
      const double v = weighted_sum_rate(h, x, a, tau, p);
      CHECK(best >= v - 1e-9 * std::max(1.0, v));
    }
  }
}

TEST_CASE("value is nondecreasing in every channel gain") {
  RandomStream rng(43, "solver-mono");
  SystemParams p = params_n(4);
  for (int rep = 0; rep < 8; ++rep) {
    VectorXd h = random_gains(p, rng);
    VectorXi x = random_x(4, rng);
    const double base = solve_p2(h, x, p).allocation.value;
    for (int i = 0; i < 4; ++i) {
      VectorXd hb = h;
      hb(i) *= 1.1;
      CHECK(solve_p2(hb, x, p).allocation.value >= base - 1e-12 * base);
    }
  }
}

TEST_CASE("relabeling devices relabels the solution") {
  RandomStream rng(47, "solver-perm");
  const int n = 5;
  SystemParams p = params_n(n);
  VectorXd h = random_gains(p, rng);
  VectorXi x(n);
  x << 1, 0, 1, 1, 0;
  std::vector<int> perm = {3, 0, 4, 1, 2};

  SystemParams q = p;
  VectorXd hp(n);
  VectorXi xp(n);
  for (int i = 0; i < n; ++i) {
    hp(i) = h(perm[i]);
    xp(i) = x(perm[i]);
    q.distances(i) = p.distances(perm[i]);
    q.weights(i) = p.weights(perm[i]);
    q.k(i) = p.k(perm[i]);
  }
  Allocation a0 = solve_p2(h, x, p).allocation;
  Allocation a1 = solve_p2(hp, xp, q).allocation;
  CHECK(a1.value == doctest::Approx(a0.value).epsilon(1e-12));
  CHECK(a1.a == doctest::Approx(a0.a).epsilon(1e-10));
  for (int i = 0; i < n; ++i)
    CHECK(a1.tau(i) == doctest::Approx(a0.tau(perm[i])).epsilon(1e-9));
}

TEST_CASE("uniform weight scaling scales the value but not the split") {
  RandomStream rng(53, "solver-wscale");
  SystemParams p = params_n(4);
  VectorXd h = random_gains(p, rng);
  VectorXi x(4);
  x << 1, 1, 0, 1;
  Allocation base = solve_p2(h, x, p).allocation;
  SystemParams q = p;
  q.weights *= 3.7;
  Allocation scaled = solve_p2(h, x, q).allocation;
  CHECK(scaled.value == doctest::Approx(3.7 * base.value).epsilon(1e-12));
  CHECK(scaled.a == doctest::Approx(base.a).epsilon(1e-9));
  for (int i = 0; i < 4; ++i)
    CHECK(scaled.tau(i) == doctest::Approx(base.tau(i)).epsilon(1e-9));
}

TEST_CASE("per-device time demand shrinks as the dual price grows") {
  RandomStream rng(59, "solver-dual");
  SystemParams p = params_n(4);
  VectorXd h = random_gains(p, rng);
  VectorXi x(4);
  x << 1, 0, 1, 1;
  const double a = 0.4;
  double prev = 1e300;
  for (double nu = 1e3; nu < 1e9; nu *= 3.0) {
    const double s = inner_sum_tau(h, x, a, p, nu);
    CHECK(s <= prev + 1e-12);
    CHECK(s >= 0.0);
    prev = s;
  }
}

TEST_CASE("objective at the inner optimum is concave in the charge fraction") {
  RandomStream rng(61, "solver-concave");
  SystemParams p = params_n(3);
  for (int rep = 0; rep < 10; ++rep) {
    VectorXd h = random_gains(p, rng);
    VectorXi x = random_x(3, rng);
    if (x.sum() == 0) x(1) = 1;
    const double a1 = rng.uniform(0.02, 0.95);
    const double a2 = rng.uniform(0.02, 0.95);
    const double gm = outer_g(h, x, 0.5 * (a1 + a2), p);
    const double avg = 0.5 * (outer_g(h, x, a1, p) + outer_g(h, x, a2, p));
    CHECK(gm >= avg - 1e-9 * std::max(1.0, std::abs(avg)));
  }
}

TEST_CASE("inner allocation is budget-tight and supported on offloaders") {
  RandomStream rng(67, "solver-inner");
  SystemParams p = params_n(5);
  VectorXd h = random_gains(p, rng);
  VectorXi x(5);
  x << 0, 1, 1, 0, 1;
  const double a = 0.35;
  VectorXd tau = inner_allocate(h, x, a, p);
  CHECK(tau.sum() == doctest::Approx(1.0 - a).epsilon(1e-9));
  for (int i = 0; i < 5; ++i) {
    CHECK(tau(i) >= 0.0);
    if (!x(i)) CHECK(tau(i) == 0.0);
    if (x(i)) CHECK(tau(i) > 0.0);
  }
}

TEST_CASE("exhaustive search dominates every decision") {
  RandomStream rng(71, "solver-exh");
  const int n = 4;
  SystemParams p = params_n(n);
  for (int rep = 0; rep < 6; ++rep) {
    VectorXd h = random_gains(p, rng);
    auto [bx, bv] = exhaustive_best(h, p);

    // Independent enumeration with the opposite loop order; ">=" keeps the
    // later (smaller) mask so exact ties must land on the same encoding.
    double alt_v = -1.0;
    std::uint64_t alt_m = 0;
    for (int m = 15; m >= 0; --m) {
      const double v = solve_p2(h, mask_to_x(m, n), p).allocation.value;
      CHECK(bv >= v);
      if (v >= alt_v) {
        alt_v = v;
        alt_m = std::uint64_t(m);
      }
    }
    CHECK(bv == alt_v);
    CHECK((bx.array() == mask_to_x(alt_m, n).array()).all());
  }
}

TEST_CASE("exact value ties resolve to the smallest encoding") {
  // Two identical devices make mirrored decisions bitwise-equal in value.
  SystemParams p = params_n(2);
  p.weights = VectorXd::Constant(2, 1.0);
  const double g = mean_channel_gain(3.0, p);
  for (double scale : {0.05, 0.2, 1.0, 5.0, 25.0}) {
    VectorXd h = VectorXd::Constant(2, g * scale);
    std::vector<double> v(4);
    for (int m = 0; m < 4; ++m)
      v[m] = solve_p2(h, mask_to_x(m, 2), p).allocation.value;
    REQUIRE(v[1] == v[2]);  // the tie is exact, not approximate
    auto [bx, bv] = exhaustive_best(h, p);
    const double vmax = *std::max_element(v.begin(), v.end());
    int smallest_argmax = -1;
    for (int m = 0; m < 4; ++m)
      if (v[m] == vmax) {
        smallest_argmax = m;
        break;
      }
    CHECK(bv == vmax);
    CHECK((bx.array() == mask_to_x(smallest_argmax, 2).array()).all());
  }
}

TEST_CASE("local search equals exhaustive search on one device") {
  RandomStream rng(73, "solver-ls1");
  SystemParams p = params_n(1);
  for (int rep = 0; rep < 10; ++rep) {
    VectorXd h = random_gains(p, rng);
    
    RandomStream ls_rng(derive_seed(73, "solver-ls1-starts", std::uint64_t(rep)));
    auto [lx, lv] = local_search_best(h, p, 2, ls_rng);
    auto [ex, ev] = exhaustive_best(h, p);
    CHECK(lv == ev);
    CHECK((lx.array() == ex.array()).all());
  }
}

TEST_CASE("local search matches exhaustive search on most small instances") {
  RandomStream rng(79, "solver-ls8");
  const int n = 8;
  SystemParams p = params_n(n);
  int hits = 0;
  const int instances = 100;
  for (int rep = 0; rep < instances; ++rep) {
    VectorXd h = random_gains(p, rng);
    
    RandomStream ls_rng(derive_seed(79, "solver-ls8-starts", std::uint64_t(rep)));
    auto [lx, lv] = local_search_best(h, p, 8, ls_rng);
    auto [ex, ev] = exhaustive_best(h, p);
    CHECK(lv <= ev);
    if (lv == ev) ++hits;
  }
  CHECK(hits >= 95);
}

TEST_CASE("local search result cannot be improved by one flip") {
  RandomStream rng(83, "solver-lsflip");
  const int n = 10;
  SystemParams p = params_n(n);
  for (int rep = 0; rep < 5; ++rep) {
    VectorXd h = random_gains(p, rng);
    
    RandomStream ls_rng(derive_seed(83, "solver-lsflip-starts", std::uint64_t(rep)));
    auto [lx, lv] = local_search_best(h, p, 4, ls_rng);
    for (int i = 0; i < n; ++i) {
      VectorXi flip = lx;
      flip(i) = 1 - flip(i);
      CHECK(solve_p2(h, flip, p).allocation.value <= lv);
    }
  }
}

TEST_CASE("input validation") {
  SystemParams p = params_n(2);
  VectorXd h = VectorXd::Constant(2, 1e-6);
  VectorXi x(2);
  x << 1, 0;
  CHECK_THROWS_AS(solve_p2(h, x, p, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(solve_p2(h, x, p, 2e-2), std::invalid_argument);
  CHECK_THROWS_AS(solve_p2(h, x, p, -1e-6), std::invalid_argument);

  VectorXi bad = x;
  bad(1) = 2;
  CHECK_THROWS_AS(solve_p2(h, bad, p), std::invalid_argument);
  CHECK_THROWS_AS(solve_p2(h, VectorXi::Zero(3), p), std::invalid_argument);

  VectorXd hz = h;
  hz(0) = 0.0;
  CHECK_THROWS_AS(solve_p2(hz, x, p), std::invalid_argument);
  CHECK_THROWS_AS(make_frame_cache(hz, p), std::invalid_argument);
  CHECK_THROWS_AS(solve_p2(VectorXd::Constant(3, 1e-6), x, p), std::invalid_argument);

  SystemParams big = params_n(15);
  CHECK_THROWS_AS(exhaustive_best(VectorXd::Constant(15, 1e-6), big), std::invalid_argument);

  RandomStream rng(1, "solver-valid");
  CHECK_THROWS_AS(local_search_best(h, p, 0, rng), std::invalid_argument);
}

TEST_CASE("frame cache groups devices by priority weight") {
  SystemParams p = params_n(3);
  p.weights << 1.0, 1.5, 1.0;
  FrameCache fc = make_frame_cache(VectorXd::Constant(3, 1e-6), p);
  CHECK(fc.n_classes == 2);
  CHECK(fc.cls_of == std::vector<int>{0, 1, 0});
  CHECK(fc.wp_cls.size() == 2);
  SystemParams q = params_n(3);
  q.weights << 2.0, 2.0, 2.0;
  CHECK(make_frame_cache(VectorXd::Constant(3, 1e-6), q).n_classes == 1);
}

TEST_CASE("normalized rate") {
  CHECK(normalized_rate(4.2, 4.2) == 1.0);
  CHECK(normalized_rate(2.0, 4.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK_THROWS_AS(normalized_rate(1.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(normalized_rate(1.0, -2.0), std::invalid_argument);

  RandomStream rng(89, "solver-norm");
  SystemParams p = params_n(6);
  VectorXd h = random_gains(p, rng);
  auto [ex, ev] = exhaustive_best(h, p);
  for (int rep = 0; rep < 10; ++rep) {
    VectorXi x = random_x(6, rng);
    const double v = solve_p2(h, x, p).allocation.value;
    CHECK(normalized_rate(v, ev) <= 1.0 + 1e-12);
  }
}

}  // TEST_SUITE
