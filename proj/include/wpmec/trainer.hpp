#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "wpmec/policy.hpp"
#include "wpmec/quantize.hpp"
#include "wpmec/solver.hpp"

namespace wpmec {

// One replay entry: the gains window that fed the decision (one row per frame,
// oldest first, newest last) and the best action found for the newest frame.
struct Experience {
  MatrixXd window;  // input_window x n raw (unscaled) gains
  VectorXi best_action;
  double best_value = 0.0;
  long frame_index = 0;
};

// Fixed-capacity ring; overwrites oldest-first when full.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 1024);
  void push(Experience e);
  std::size_t size() const { return size_; }
  std::size_t capacity() const { return cap_; }
  // i = 0 addresses the oldest retained entry.
  const Experience& at(std::size_t i) const;
  // Uniform draws with replacement; requires a nonempty buffer.
  std::vector<const Experience*> sample(std::size_t batch, RandomStream& rng) const;

 private:
  std::size_t cap_, size_ = 0, head_ = 0;  // head_ = next slot to overwrite
  std::vector<Experience> ring_;
};

struct ActionChoice {
  VectorXi action;
  double value = 0.0;
};

// Scores every candidate with the exact allocation solver and returns the
// argmax (first wins ties).  Candidates whose solve does not converge are
// excluded; all candidates failing raises std::runtime_error.
ActionChoice select_best(const FrameCache& fc, const std::vector<VectorXi>& candidates,
                         const SystemParams& p, double tol = 1e-6);
ActionChoice select_best(const VectorXd& h, const std::vector<VectorXi>& candidates,
                         const SystemParams& p, double tol = 1e-6);

enum class ReferenceMode { exhaustive, local_search, automatic };

struct RunConfig {
  SystemParams params;
  std::string variant = "dnn";   // dnn | rnn | quantum_dnn | quantum_attention
  std::string quantizer = "op";  // op | ugq
  int candidates_K = 0;          // 0 -> n_devices
  double sigma = 0.1;            // ugq threshold noise
  long frames = 0;
  std::uint64_t seed = 1;
  ReferenceMode reference = ReferenceMode::automatic;
  int train_every = 10;
  int batch_size = 128;
  std::size_t buffer_capacity = 1024;
  int hidden_reset_every = 1000;  // recurrent online-state reset period
  long checkpoint_every = 5000;   // 0 -> never
  std::string checkpoint_dir;     // empty -> never
  double solver_tol = 1e-6;
};

struct FrameMetrics {
  long frame_index = 0;
  double chosen_value = 0.0;
  double reference_value = 0.0;
  double normalized_rate = 0.0;
  bool trained = false;
  double training_loss = 0.0;
  double decision_time_s = 0.0;
};

// Sequential online loop: sample channel -> infer m -> quantize -> score
// candidates -> execute the best -> store experience -> periodic batch
// training.  Deterministic given the seed; every random consumer has its own
// derived stream, and the per-frame reference search draws from a stream keyed
// by the frame index so reference evaluation never perturbs decisions.
class OnlineTrainer {
 public:
  explicit OnlineTrainer(RunConfig cfg);
  FrameMetrics step();
  // Runs config().frames steps, invoking sink (when given) after each.
  std::vector<FrameMetrics> run(const std::function<void(const FrameMetrics&)>& sink = {});
  const RunConfig& config() const { return cfg_; }
  PolicyModel& policy() { return *policy_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  long frames_done() const { return frame_; }

 private:
  double reference_value(const VectorXd& gains, double chosen, long frame);

  RunConfig cfg_;
  std::unique_ptr<PolicyModel> policy_;
  ReplayBuffer buffer_;
  RandomStream channel_rng_, quant_rng_, buffer_rng_;
  Adam opt_;
  MatrixXd window_;  // rolling raw-gain window, oldest row first
  long frame_ = 0;
};

}  // namespace wpmec
