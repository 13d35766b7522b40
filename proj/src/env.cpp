#include "wpmec/env.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <json.hpp>

namespace wpmec {

using nlohmann::json;

double SystemParams::eta1() const { return std::cbrt(mu * power_P) / phi; }

VectorXd device_weights(int n) {
  VectorXd w(n);
  for (int i = 0; i < n; ++i) w(i) = (i % 2 == 0) ? 1.0 : 1.5;
  return w;
}

SystemParams SystemParams::defaults(int n_devices, RandomStream& rng) {
  VectorXd d(n_devices);
  for (int i = 0; i < n_devices; ++i) d(i) = rng.uniform(2.5, 5.2);
  return defaults(n_devices, d);
}

SystemParams SystemParams::defaults(int n_devices, const VectorXd& distances) {
  SystemParams p;
  p.n_devices = n_devices;
  p.k = VectorXd::Constant(n_devices, 1e-26);
  p.weights = device_weights(n_devices);
  p.distances = distances;
  p.validate();
  return p;
}

void SystemParams::validate() const {
  auto bad = [](const char* msg) { throw std::invalid_argument(msg); };
  if (n_devices < 1) bad("n_devices must be >= 1");
  if (!(mu > 0.0 && mu <= 1.0)) bad("mu must lie in (0,1]");
  if (!(power_P > 0.0)) bad("power_P must be positive");
  if (k.size() != n_devices || (k.array() <= 0.0).any()) bad("k must be positive per device");
  if (!(phi > 0.0)) bad("phi must be positive");
  if (!(bandwidth_B > 0.0)) bad("bandwidth_B must be positive");
  if (!(noise_N0 > 0.0)) bad("noise_N0 must be positive");
  if (!(vu >= 1.0)) bad("vu must be >= 1");
  if (weights.size() != n_devices || (weights.array() <= 0.0).any()) bad("weights must be positive per device");
  if (distances.size() != n_devices || (distances.array() <= 0.0).any()) bad("distances must be positive per device");
  if (!(pathloss_exp > 0.0)) bad("pathloss_exp must be positive");
  if (!(frame_T > 0.0)) bad("frame_T must be positive");
  if (!std::isfinite(eta1()) || eta1() <= 0.0) bad("derived eta1 must be finite and positive");
}

namespace {
VectorXd vec_from_json(const json& v, int n, const char* name) {
  VectorXd out(n);
  if (v.is_number()) {
    out.setConstant(v.get<double>());
  } else if (v.is_array()) {
    if (static_cast<int>(v.size()) != n)
      throw std::invalid_argument(std::string(name) + ": array length mismatch");
    for (int i = 0; i < n; ++i) out(i) = v[i].get<double>();
  } else {
    throw std::invalid_argument(std::string(name) + ": expected number or array");
  }
  return out;
}

json vec_to_json(const VectorXd& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}
}  // namespace

std::string SystemParams::to_json() const {
  json j;
  j["n_devices"] = n_devices;
  j["power_P"] = power_P;
  j["mu"] = mu;
  j["k"] = vec_to_json(k);
  j["phi"] = phi;
  j["bandwidth_B"] = bandwidth_B;
  j["noise_N0"] = noise_N0;
  j["vu"] = vu;
  j["weights"] = vec_to_json(weights);
  j["distances"] = vec_to_json(distances);
  j["antenna_gain_Ad"] = antenna_gain_Ad;
  j["carrier_freq"] = carrier_freq;
  j["pathloss_exp"] = pathloss_exp;
  j["frame_T"] = frame_T;
  return j.dump(2);
}

void SystemParams::merge_json(const std::string& text) {
  json j = json::parse(text);
  if (j.contains("n_devices")) n_devices = j["n_devices"].get<int>();
  if (n_devices < 1) throw std::invalid_argument("n_devices must be >= 1");
  auto scal = [&](const char* key, double& field) {
    if (j.contains(key)) field = j[key].get<double>();
  };
  scal("power_P", power_P);
  scal("mu", mu);
  scal("phi", phi);
  scal("bandwidth_B", bandwidth_B);
  scal("noise_N0", noise_N0);
  scal("vu", vu);
  scal("antenna_gain_Ad", antenna_gain_Ad);
  scal("carrier_freq", carrier_freq);
  scal("pathloss_exp", pathloss_exp);
  scal("frame_T", frame_T);
  if (j.contains("k")) k = vec_from_json(j["k"], n_devices, "k");
  if (j.contains("weights")) weights = vec_from_json(j["weights"], n_devices, "weights");
  if (j.contains("distances")) distances = vec_from_json(j["distances"], n_devices, "distances");
  // Resizing n_devices with vector fields left at defaults: re-expand them.
  if (k.size() != n_devices) k = VectorXd::Constant(n_devices, k.size() ? k(0) : 1e-26);
  if (weights.size() != n_devices) weights = device_weights(n_devices);
  if (distances.size() != n_devices)
    throw std::invalid_argument("distances must be given when n_devices changes");
  validate();
}

double mean_channel_gain(double distance, const SystemParams& p) {
  if (!(distance > 0.0)) throw std::invalid_argument("distance must be positive");
  constexpr double c_light = 3e8;
  return p.antenna_gain_Ad *
         std::pow(c_light / (4.0 * std::numbers::pi * p.carrier_freq * distance),
                  p.pathloss_exp);
}

ChannelRealization sample_channels(RandomStream& rng, const SystemParams& p,
                                   long frame_index) {
  p.validate();
  ChannelRealization c;
  c.frame_index = frame_index;
  c.gains.resize(p.n_devices);
  for (int i = 0; i < p.n_devices; ++i) {
    // exponential() can return exactly 0 (probability 2^-53); clamp to the
    // smallest draw it can otherwise produce so gains stay strictly positive.
    const double fade = std::max(rng.exponential(), 0x1.0p-53);
    c.gains(i) = mean_channel_gain(p.distances(i), p) * fade;
  }
  return c;
}

double harvested_energy(double h, double a, const SystemParams& p) {
  if (h < 0.0) throw std::invalid_argument("h must be nonnegative");
  if (a < 0.0 || a > 1.0) throw std::invalid_argument("a must lie in [0,1]");
  return p.mu * p.power_P * h * a * p.frame_T;
}

double local_rate(double h, double a, double kappa, const SystemParams& p) {
  if (!(h > 0.0)) throw std::invalid_argument("h must be positive");
  if (a < 0.0 || a > 1.0) throw std::invalid_argument("a must lie in [0,1]");
  if (!(kappa > 0.0)) throw std::invalid_argument("kappa must be positive");
  return p.eta1() * std::cbrt(h / kappa) * std::cbrt(a);
}

double offload_rate(double h, double a, double tau, const SystemParams& p) {
  if (!(h > 0.0)) throw std::invalid_argument("h must be positive");
  if (a < 0.0 || a > 1.0) throw std::invalid_argument("a must lie in [0,1]");
  if (tau < 0.0 || tau > 1.0) throw std::invalid_argument("tau must lie in [0,1]");
  if (tau == 0.0) return 0.0;
  double snr = p.mu * p.power_P * h * h * a / (tau * p.noise_N0);
  return p.bandwidth_B * tau / p.vu * std::log2(1.0 + snr);
}

double weighted_sum_rate(const VectorXd& h, const VectorXi& x, double a,
                         const VectorXd& tau, const SystemParams& p) {
  int n = p.n_devices;
  if (h.size() != n || x.size() != n || tau.size() != n)
    throw std::invalid_argument("dimension mismatch");
  if (a < 0.0 || (tau.array() < 0.0).any() || a + tau.sum() > 1.0 + 1e-9)
    throw std::invalid_argument("infeasible allocation");
  a = std::min(a, 1.0);  // tolerate the 1e-9 feasibility slack at the boundary
  double q = 0.0;
  for (int i = 0; i < n; ++i) {
    q += x(i) ? p.weights(i) * offload_rate(h(i), a, std::min(tau(i), 1.0), p)
              : p.weights(i) * local_rate(h(i), a, p.k(i), p);
  }
  return q;
}

}  // namespace wpmec
