#include "wpmec/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace wpmec {

namespace {

constexpr double kLn2 = 0.6931471805599453;

// Stationarity kernel: the marginal rate of an offloader with log-SNR
// u = ln(1+SNR) is wp * Phi(u) / ln2 with Phi(u) = u - 1 + e^{-u}.
// Written as u + expm1(-u) to survive cancellation at small u.
inline double phi_kernel(double u) { return u + std::expm1(-u); }

inline double phi_inv_init(double y) {
  if (y > 1.0) return y + 1.0;  // Phi(u) ~ u - 1 for large u
  double r = std::sqrt(2.0 * y);
  return r * (1.0 + r / 6.0);  // series near zero
}

// Newton inverse of phi_kernel; u0 warm start (<= 0 means "use the init").
inline double phi_kernel_inv(double y, double u0) {
  double u = u0 > 0.0 ? u0 : phi_inv_init(y);
  for (int it = 0; it < 40; ++it) {
    double em1 = std::expm1(-u);  // e^{-u} - 1
    double f = u + em1 - y;
    double d = -em1;  // Phi'(u) = 1 - e^{-u}
    if (!(d > 0.0)) {
      u = phi_inv_init(y);
      continue;
    }
    double un = u - f / d;
    if (un <= 0.0) un = 0.5 * u;
    bool done = std::abs(un - u) <= 1e-13 * std::max(1.0, u);
    u = un;
    if (done) break;
  }
  return u;
}

struct CoreOut {
  double a = 1.0;
  double value = 0.0;
  int iters = 0;
  bool converged = true;
  VectorXd* tau = nullptr;  // filled per device when non-null
};

// The whole KKT system of the fixed-decision subproblem collapses onto one
// scalar: the base weight class's log-SNR u1.  Every other class's log-SNR
// follows from wp_k * Phi(u_k) = wp_base * Phi(u1), the budget-tight charge
// fraction is a = 1/(1 + sum_k C_k/s_k), and the remaining equation — the
// charge-time stationarity d(objective)/da = nu — becomes a strictly
// decreasing residual in u1 with a unique root.
void solve_core(const FrameCache& fc, const signed char* x, int n, double tol,
                P2Workspace& ws, CoreOut& out) {
  ws.reserve(fc.n_classes, n);
  double A_L = 0.0;  // local-only objective coefficient (times a^{1/3})
  std::fill(ws.C.begin(), ws.C.begin() + fc.n_classes, 0.0);
  int n_off = 0;
  for (int i = 0; i < n; ++i) {
    if (x[i]) {
      ws.C[fc.cls_of[i]] += fc.c(i);
      ++n_off;
    } else {
      A_L += fc.local_term(i);
    }
  }
  if (out.tau) out.tau->setZero(n);
  if (n_off == 0) {
    out.a = 1.0;
    out.value = A_L;
    out.iters = 0;
    out.converged = true;
    return;
  }

  ws.active.clear();
  for (int k = 0; k < fc.n_classes; ++k)
    if (ws.C[k] > 0.0) ws.active.push_back(k);
  const int m = static_cast<int>(ws.active.size());
  const int base = ws.active[0];
  const double wp0 = fc.wp_cls[base];
  for (int j = 0; j < m; ++j) ws.u[ws.active[j]] = -1.0;  // invalidate warm starts

  double a_cur = 0.0, T_cur = 0.0;
  // Residual (times ln2, asinh-compressed): ln2*A_L/(3a^{2/3}) + sum_k
  // wp_k*C_k*e^{-u_k} - wp0*Phi(u1).  Positive below the root.
  auto resid = [&](double u1) -> double {
    double y1 = phi_kernel(u1);
    double T = 0.0, D = 0.0;
    for (int j = 0; j < m; ++j) {
      int k = ws.active[j];
      double u, em1;
      if (j == 0) {
        u = u1;
        em1 = std::expm1(-u1);
      } else {
        u = phi_kernel_inv(y1 * wp0 / fc.wp_cls[k], ws.u[k]);
        em1 = std::expm1(-u);
      }
      double s = -em1 / (1.0 + em1);  // expm1(u), exact at both extremes
      T += ws.C[k] / s;
      D += fc.wp_cls[k] * ws.C[k] * (1.0 + em1);  // wp*C*e^{-u}
      ws.u[k] = u;
      ws.s[k] = s;
    }
    double a = 1.0 / (1.0 + T);
    a_cur = a;
    T_cur = T;
    double r = D - wp0 * y1;
    if (A_L > 0.0) {
      double ca = std::cbrt(a);
      r += kLn2 * A_L / (3.0 * ca * ca);
    }
    return std::asinh(r);
  };

  const double t_lo0 = std::log(1e-12), t_hi0 = std::log(700.0);
  const double t_tol = std::min(tol, 1e-9);
  double tl = t_lo0, th = t_hi0;
  double fl = resid(std::exp(tl));
  int evals = 1;
  bool conv = true;
  double t_star;
  if (fl <= 0.0) {
    // Unreachable for valid physics (marginal local value diverges as a->0);
    // kept as a guard for pathological parameter files.
    t_star = tl;
    conv = false;
  } else {
    double fh = resid(std::exp(th));
    ++evals;
    if (fh >= 0.0) {
      // Optimal SNR beyond e^700: upload slots underflow to zero in double
      // precision, so the boundary IS the optimum to machine accuracy.
      t_star = th;
    } else {
      int side = 0;
      while (evals < 100 && th - tl > t_tol) {
        double t = (tl * fh - th * fl) / (fh - fl);  // false position
        double margin = 0.01 * (th - tl);
        if (!(t >= tl + margin && t <= th - margin)) t = 0.5 * (tl + th);
        double f = resid(std::exp(t));
        ++evals;
        if (f == 0.0) {
          tl = th = t;
          break;
        }
        if (f > 0.0) {
          tl = t;
          fl = f;
          if (side == +1) fh *= 0.5;  // Illinois: stop endpoint sticking
          side = +1;
        } else {
          th = t;
          fh = f;
          if (side == -1) fl *= 0.5;
          side = -1;
        }
      }
      conv = th - tl <= t_tol;
      t_star = 0.5 * (tl + th);
    }
  }

  resid(std::exp(t_star));  // refresh duals and a at the returned point
  ++evals;
  double a = a_cur;
  double scale = 1.0;
  double sum_pre = a * T_cur;  // equals 1-a in exact arithmetic
  if (sum_pre > 0.0 && a < 1.0) scale = (1.0 - a) / sum_pre;

  double value = A_L * std::cbrt(a);
  for (int j = 0; j < m; ++j) {
    int k = ws.active[j];
    double tau_sum = a * ws.C[k] / ws.s[k] * scale;
    value += fc.wp_cls[k] * (ws.u[k] / kLn2) * tau_sum;
  }
  if (out.tau) {
    for (int i = 0; i < n; ++i)
      if (x[i]) (*out.tau)(i) = a * fc.c(i) / ws.s[fc.cls_of[i]] * scale;
  }
  out.a = a;
  out.value = value;
  out.iters = evals;
  out.converged = conv;
}

void check_tol(double tol) {
  if (!(tol > 0.0 && tol <= 1e-2))
    throw std::invalid_argument("tol must lie in (0, 1e-2]");
}

void check_decision(const VectorXi& x, int n) {
  if (x.size() != n) throw std::invalid_argument("decision length mismatch");
  for (int i = 0; i < n; ++i)
    if (x(i) != 0 && x(i) != 1) throw std::invalid_argument("decision entries must be 0 or 1");
}

}  // namespace

void P2Workspace::reserve(int n_classes, int n_devices) {
  if (static_cast<int>(C.size()) < n_classes) {
    C.resize(n_classes);
    u.resize(n_classes);
    s.resize(n_classes);
  }
  if (static_cast<int>(flags.size()) < n_devices) flags.resize(n_devices);
}

FrameCache make_frame_cache(const VectorXd& h, const SystemParams& p) {
  const int n = p.n_devices;
  if (h.size() != n) throw std::invalid_argument("gain vector length mismatch");
  if ((h.array() <= 0.0).any()) throw std::invalid_argument("gains must be positive");
  FrameCache fc;
  fc.local_term.resize(n);
  fc.c.resize(n);
  fc.wp.resize(n);
  fc.cls_of.assign(n, -1);
  const double eta1 = p.eta1();
  const double wscale = p.bandwidth_B / p.vu;
  const double cscale = p.mu * p.power_P / p.noise_N0;
  for (int i = 0; i < n; ++i) {
    fc.local_term(i) = p.weights(i) * eta1 * std::cbrt(h(i) / p.k(i));
    fc.c(i) = cscale * h(i) * h(i);
    fc.wp(i) = p.weights(i) * wscale;
    for (int j = 0; j < i; ++j) {
      if (p.weights(j) == p.weights(i)) {
        fc.cls_of[i] = fc.cls_of[j];
        break;
      }
    }
    if (fc.cls_of[i] < 0) {
      fc.cls_of[i] = static_cast<int>(fc.wp_cls.size());
      fc.wp_cls.push_back(fc.wp(i));
    }
  }
  fc.n_classes = static_cast<int>(fc.wp_cls.size());
  return fc;
}

double solve_value(const FrameCache& fc, const signed char* x, int n, double tol,
                   P2Workspace& ws) {
  CoreOut out;
  solve_core(fc, x, n, tol, ws, out);
  return out.value;
}

SolveReport solve_p2(const FrameCache& fc, const VectorXi& x, const SystemParams& p,
                     double tol, P2Workspace& ws) {
  check_tol(tol);
  check_decision(x, p.n_devices);
  ws.reserve(fc.n_classes, p.n_devices);
  for (int i = 0; i < p.n_devices; ++i) ws.flags[i] = static_cast<signed char>(x(i));
  SolveReport rep;
  rep.allocation.tau.resize(p.n_devices);
  CoreOut out;
  out.tau = &rep.allocation.tau;
  solve_core(fc, ws.flags.data(), p.n_devices, tol, ws, out);
  rep.allocation.a = out.a;
  rep.allocation.value = out.value;
  rep.iterations = out.iters;
  rep.converged = out.converged;
  return rep;
}

SolveReport solve_p2(const VectorXd& h, const VectorXi& x, const SystemParams& p,
                     double tol) {
  FrameCache fc = make_frame_cache(h, p);
  P2Workspace ws;
  return solve_p2(fc, x, p, tol, ws);
}

std::pair<VectorXi, double> exhaustive_best(const VectorXd& h, const SystemParams& p) {
  const int n = p.n_devices;
  if (n > 14)
    throw std::invalid_argument("exhaustive_best: n_devices above enumeration cap 14");
  FrameCache fc = make_frame_cache(h, p);
  P2Workspace ws;
  ws.reserve(fc.n_classes, n);
  double best = -std::numeric_limits<double>::infinity();
  std::uint32_t best_mask = 0;
  const std::uint32_t total = 1u << n;
  for (std::uint32_t mask = 0; mask < total; ++mask) {
    for (int i = 0; i < n; ++i) ws.flags[i] = static_cast<signed char>((mask >> i) & 1u);
    double v = solve_value(fc, ws.flags.data(), n, 1e-6, ws);
    if (v > best) {
      best = v;
      best_mask = mask;
    }
  }
  VectorXi x(n);
  for (int i = 0; i < n; ++i) x(i) = static_cast<int>((best_mask >> i) & 1u);
  return {x, best};
}

std::pair<VectorXi, double> local_search_best(const VectorXd& h, const SystemParams& p,
                                              int starts, RandomStream& rng) {
  if (starts < 1) throw std::invalid_argument("starts must be >= 1");
  const int n = p.n_devices;
  FrameCache fc = make_frame_cache(h, p);
  P2Workspace ws;
  ws.reserve(fc.n_classes, n);
  std::vector<signed char> cur(n);
  std::vector<signed char> best_x(n, 0);
  double best = -std::numeric_limits<double>::infinity();
  for (int s = 0; s < starts; ++s) {
    if (s == 0) {
      std::fill(cur.begin(), cur.end(), static_cast<signed char>(0));
    } else if (s == 1) {
      std::fill(cur.begin(), cur.end(), static_cast<signed char>(1));
    } else {
      for (int i = 0; i < n; ++i) cur[i] = static_cast<signed char>(rng.index(2));
    }
    double cur_val = solve_value(fc, cur.data(), n, 1e-6, ws);
    for (;;) {
      int flip = -1;
      double flip_val = cur_val;
      for (int i = 0; i < n; ++i) {
        cur[i] ^= 1;
        double v = solve_value(fc, cur.data(), n, 1e-6, ws);
        cur[i] ^= 1;
        if (v > flip_val) {
          flip_val = v;
          flip = i;
        }
      }
      if (flip < 0) break;
      cur[flip] ^= 1;
      cur_val = flip_val;  // strictly above the previous value by construction
    }
    if (cur_val > best) {
      best = cur_val;
      best_x = cur;
    }
  }
  VectorXi x(n);
  for (int i = 0; i < n; ++i) x(i) = best_x[i];
  return {x, best};
}

double normalized_rate(double value, double ref_value) {
  if (!(ref_value > 0.0)) throw std::invalid_argument("reference value must be positive");
  return value / ref_value;
}

// ---- literal nested scheme (reference implementation for tests) ----

namespace {

// Time demanded by one offloader at multiplier nu: the tau solving
// wp*Phi(ln(1+ca/tau))/ln2 = nu, clamped to [0, 1]; monotone decreasing in nu.
double tau_demand(double wp, double ca, double nu) {
  auto marg = [&](double tau) { return wp * phi_kernel(std::log1p(ca / tau)) / kLn2; };
  if (ca <= 0.0) return 0.0;
  if (marg(1e-12) <= nu) return 0.0;
  if (marg(1.0) >= nu) return 1.0;
  double lo = 1e-12, hi = 1.0;
  for (int it = 0; it < 60; ++it) {
    double mid = 0.5 * (lo + hi);
    if (marg(mid) > nu)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

double inner_sum_tau(const VectorXd& h, const VectorXi& x, double a,
                     const SystemParams& p, double nu) {
  const double cscale = p.mu * p.power_P / p.noise_N0;
  const double wscale = p.bandwidth_B / p.vu;
  double sum = 0.0;
  for (int i = 0; i < p.n_devices; ++i)
    if (x(i)) sum += tau_demand(p.weights(i) * wscale, cscale * h(i) * h(i) * a, nu);
  return sum;
}

VectorXd inner_allocate(const VectorXd& h, const VectorXi& x, double a,
                        const SystemParams& p) {
  const int n = p.n_devices;
  VectorXd tau = VectorXd::Zero(n);
  const double budget = 1.0 - a;
  if (x.sum() == 0 || budget <= 0.0 || a <= 0.0) return tau;

  double lo = 0.0, sum_lo = inner_sum_tau(h, x, a, p, lo);
  if (sum_lo < budget) {
    // Every offloader saturated below the budget: give each its full demand.
    for (int i = 0; i < n; ++i)
      if (x(i)) tau(i) = 1.0;
    tau *= budget / tau.sum();
    return tau;
  }
  double hi = 1.0;
  double sum_hi = inner_sum_tau(h, x, a, p, hi);
  int grow = 0;
  while (sum_hi >= budget && grow++ < 200) {
    hi *= 2.0;
    sum_hi = inner_sum_tau(h, x, a, p, hi);
  }
  if (sum_hi >= budget) throw std::logic_error("dual bracket growth failed");
  for (int it = 0; it < 100; ++it) {
    double mid = 0.5 * (lo + hi);
    double s = inner_sum_tau(h, x, a, p, mid);
    if (s >= budget) {
      lo = mid;
      sum_lo = s;
    } else {
      hi = mid;
      sum_hi = s;
    }
    if (sum_lo < sum_hi - 1e-9)
      throw std::logic_error("dual monotonicity violated");  // sum tau must not increase in nu
  }
  double nu = 0.5 * (lo + hi);
  const double cscale = p.mu * p.power_P / p.noise_N0;
  const double wscale = p.bandwidth_B / p.vu;
  for (int i = 0; i < n; ++i)
    if (x(i)) tau(i) = tau_demand(p.weights(i) * wscale, cscale * h(i) * h(i) * a, nu);
  double st = tau.sum();
  if (st > 0.0) tau *= budget / st;
  return tau;
}

double outer_g(const VectorXd& h, const VectorXi& x, double a, const SystemParams& p) {
  VectorXd tau = inner_allocate(h, x, a, p);
  return weighted_sum_rate(h, x, a, tau, p);
}

SolveReport solve_p2_reference(const VectorXd& h, const VectorXi& x,
                               const SystemParams& p, double tol) {
  check_tol(tol);
  check_decision(x, p.n_devices);
  SolveReport rep;
  if (x.sum() == 0) {
    rep.allocation.a = 1.0;
    rep.allocation.tau = VectorXd::Zero(p.n_devices);
    rep.allocation.value = weighted_sum_rate(h, x, 1.0, rep.allocation.tau, p);
    rep.iterations = 0;
    rep.converged = true;
    return rep;
  }
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = 0.0, hi = 1.0;
  double c = hi - gr * (hi - lo), d = lo + gr * (hi - lo);
  double gc = outer_g(h, x, c, p), gd = outer_g(h, x, d, p);
  int iters = 2;
  while (hi - lo > tol && iters < 200) {
    if (gc >= gd) {
      hi = d;
      d = c;
      gd = gc;
      c = hi - gr * (hi - lo);
      gc = outer_g(h, x, c, p);
    } else {
      lo = c;
      c = d;
      gc = gd;
      d = lo + gr * (hi - lo);
      gd = outer_g(h, x, d, p);
    }
    ++iters;
  }
  double a = 0.5 * (lo + hi);
  rep.allocation.a = a;
  rep.allocation.tau = inner_allocate(h, x, a, p);
  rep.allocation.value = weighted_sum_rate(h, x, a, rep.allocation.tau, p);
  rep.iterations = iters;
  rep.converged = hi - lo <= tol;
  return rep;
}

}  // namespace wpmec
