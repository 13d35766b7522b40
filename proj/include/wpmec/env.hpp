#pragma once

#include <Eigen/Dense>
#include <string>

#include "wpmec/rng.hpp"

namespace wpmec {

using Eigen::VectorXd;
using Eigen::VectorXi;

// Physical and algorithmic constants of the wireless-powered MEC network.
// Defaults reproduce the Powercast TX91501-3W / P2110 setup: P = 3 W,
// mu = 0.51, free-space path loss with A_d = 4.11, f_c = 915 MHz, d_e = 2.8,
// k_i = 1e-26, phi = 100, B = 2 MHz, N0 = 1e-10, v_u = 1.1, unit frame,
// weights alternating 1.0 / 1.5, distances uniform on (2.5, 5.2) m.
struct SystemParams {
  int n_devices = 0;
  double power_P = 3.0;
  double mu = 0.51;
  VectorXd k;  // per-device effective capacitance coefficient
  double phi = 100.0;
  double bandwidth_B = 2e6;
  double noise_N0 = 1e-10;
  double vu = 1.1;
  VectorXd weights;
  VectorXd distances;
  double antenna_gain_Ad = 4.11;
  double carrier_freq = 915e6;
  double pathloss_exp = 2.8;
  double frame_T = 1.0;

  // eta1 = (mu*P)^(1/3)/phi, the local-computation rate constant.
  double eta1() const;

  // Populates n_devices, k, weights and samples distances from U(2.5, 5.2).
  static SystemParams defaults(int n_devices, RandomStream& rng);
  // As above with fixed distances (no random source needed).
  static SystemParams defaults(int n_devices, const VectorXd& distances);

  void validate() const;  // throws std::invalid_argument on violations

  std::string to_json() const;
  // Overlays fields present in the JSON text onto *this; scalar "k",
  // "weights", "distances" entries broadcast to all devices.
  void merge_json(const std::string& text);
};

// Alternating priorities: even index 1.0, odd index 1.5.
VectorXd device_weights(int n);

// A_d * (c / (4*pi*f_c*d))^{d_e}, free-space path loss at distance d.
double mean_channel_gain(double distance, const SystemParams& p);

// Per-frame channel state: gains[i] = mean gain * exponential(1) draw.
struct ChannelRealization {
  VectorXd gains;
  long frame_index = 0;
};

ChannelRealization sample_channels(RandomStream& rng, const SystemParams& p,
                                   long frame_index = 0);

// Energy harvested over fraction a of the frame: mu*P*h*a*T.
double harvested_energy(double h, double a, const SystemParams& p);

// eta1 * (h/kappa)^{1/3} * a^{1/3}; all harvested energy spent on local compute.
double local_rate(double h, double a, double kappa, const SystemParams& p);

// (B*tau/v_u) * log2(1 + mu*P*h^2*a/(tau*N0)); continuous limit 0 at tau = 0.
double offload_rate(double h, double a, double tau, const SystemParams& p);

// Weighted sum of per-device rates for decision x under allocation (a, tau).
// Throws if the allocation is infeasible (a + sum tau > 1 + 1e-9 or negatives).
double weighted_sum_rate(const VectorXd& h, const VectorXi& x, double a,
                         const VectorXd& tau, const SystemParams& p);

}  // namespace wpmec
