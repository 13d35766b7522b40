#include "wpmec/trainer.hpp"

#include <chrono>
#include <filesystem>
#include <stdexcept>

namespace wpmec {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : cap_(capacity) {
  if (capacity == 0) throw std::invalid_argument("replay buffer capacity must be positive");
  ring_.reserve(capacity);
}

void ReplayBuffer::push(Experience e) {
  if (size_ < cap_) {
    ring_.push_back(std::move(e));
    ++size_;
  } else {
    ring_[head_] = std::move(e);
    head_ = (head_ + 1) % cap_;
  }
}

const Experience& ReplayBuffer::at(std::size_t i) const {
  if (i >= size_) throw std::out_of_range("replay buffer index");
  return ring_[(head_ + i) % size_];
}

std::vector<const Experience*> ReplayBuffer::sample(std::size_t batch,
                                                    RandomStream& rng) const {
  if (size_ == 0) throw std::logic_error("cannot sample from an empty replay buffer");
  std::vector<const Experience*> out;
  out.reserve(batch);
  for (std::size_t i = 0; i < batch; ++i)
    out.push_back(&ring_[static_cast<std::size_t>(rng.index(size_))]);
  return out;
}

ActionChoice select_best(const FrameCache& fc, const std::vector<VectorXi>& candidates,
                         const SystemParams& p, double tol) {
  if (candidates.empty()) throw std::invalid_argument("select_best: no candidates");
  P2Workspace ws;
  ActionChoice best;
  bool any = false;
  for (const VectorXi& x : candidates) {
    SolveReport rep = solve_p2(fc, x, p, tol, ws);
    if (!rep.converged) continue;
    if (!any || rep.allocation.value > best.value) {
      best.action = x;
      best.value = rep.allocation.value;
      any = true;
    }
  }
  if (!any) throw std::runtime_error("select_best: no candidate evaluation converged");
  return best;
}

ActionChoice select_best(const VectorXd& h, const std::vector<VectorXi>& candidates,
                         const SystemParams& p, double tol) {
  return select_best(make_frame_cache(h, p), candidates, p, tol);
}

OnlineTrainer::OnlineTrainer(RunConfig cfg)
    : cfg_(std::move(cfg)),
      policy_(make_policy(cfg_.variant, cfg_.params.n_devices, cfg_.seed)),
      buffer_(cfg_.buffer_capacity),
      channel_rng_(cfg_.seed, "channel"),
      quant_rng_(cfg_.seed, "quantizer"),
      buffer_rng_(cfg_.seed, "buffer"),
      opt_() {
  cfg_.params.validate();
  const int n = cfg_.params.n_devices;
  if (cfg_.candidates_K == 0) cfg_.candidates_K = n;
  if (cfg_.candidates_K < 1) throw std::invalid_argument("candidates_K must be >= 1");
  if (cfg_.quantizer != "op" && cfg_.quantizer != "ugq")
    throw std::invalid_argument("quantizer must be 'op' or 'ugq'");
  if (cfg_.quantizer == "op" && cfg_.candidates_K > n + 1)
    throw std::invalid_argument("order-preserving quantizer caps K at n_devices + 1");
  if (cfg_.sigma < 0.0) throw std::invalid_argument("sigma must be >= 0");
  if (cfg_.frames < 0) throw std::invalid_argument("frames must be >= 0");
  if (cfg_.train_every < 1) throw std::invalid_argument("train_every must be >= 1");
  if (cfg_.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (cfg_.reference == ReferenceMode::exhaustive && n > 14)
    throw std::invalid_argument("exhaustive reference requires n_devices <= 14");
  window_ = MatrixXd::Zero(policy_->input_window(), n);
}

double OnlineTrainer::reference_value(const VectorXd& gains, double chosen, long frame) {
  const bool exhaustive = cfg_.reference == ReferenceMode::exhaustive ||
                          (cfg_.reference == ReferenceMode::automatic &&
                           cfg_.params.n_devices <= 14);
  if (exhaustive) return exhaustive_best(gains, cfg_.params).second;
  RandomStream ref_rng(derive_seed(cfg_.seed, "reference", static_cast<std::uint64_t>(frame)));
  double ref = local_search_best(gains, cfg_.params, 16, ref_rng).second;
  return std::max(ref, chosen);  // chosen is itself a max over evaluated candidates
}

FrameMetrics OnlineTrainer::step() {
  using clock = std::chrono::steady_clock;
  const long t = frame_;
  const int n = cfg_.params.n_devices;
  try {
    ChannelRealization ch = sample_channels(channel_rng_, cfg_.params, t);

    if (window_.rows() > 1) {
      for (long r = 0; r + 1 < window_.rows(); ++r) window_.row(r) = window_.row(r + 1);
    }
    window_.row(window_.rows() - 1) = ch.gains.transpose();

    if (cfg_.hidden_reset_every > 0 && t > 0 && t % cfg_.hidden_reset_every == 0)
      policy_->reset_hidden();

    const auto t0 = clock::now();
    RowVectorXd m_row = policy_->infer_online(ch.gains.transpose() * kInputScale);
    VectorXd m = m_row.transpose();
    CandidateSet cands = cfg_.quantizer == "op"
                             ? op_quantize(m, cfg_.candidates_K)
                             : ugq_quantize(m, cfg_.candidates_K, cfg_.sigma, quant_rng_);
    FrameCache fc = make_frame_cache(ch.gains, cfg_.params);
    ActionChoice choice = select_best(fc, cands.actions, cfg_.params, cfg_.solver_tol);
    const double decision_s =
        std::chrono::duration<double>(clock::now() - t0).count();

    buffer_.push(Experience{window_, choice.action, choice.value, t});

    FrameMetrics fm;
    fm.frame_index = t;
    fm.chosen_value = choice.value;
    fm.reference_value = reference_value(ch.gains, choice.value, t);
    fm.normalized_rate = normalized_rate(choice.value, fm.reference_value);
    fm.decision_time_s = decision_s;

    if ((t + 1) % cfg_.train_every == 0) {
      std::size_t eff = std::min<std::size_t>(cfg_.batch_size, buffer_.size());
      // Batch statistics in the recurrent stack need at least two rows.
      if (cfg_.variant == "rnn" && eff < 2) eff = 0;
      if (eff > 0) {
        std::vector<const Experience*> batch = buffer_.sample(eff, buffer_rng_);
        const long wlen = window_.rows();
        MatrixXd x(static_cast<long>(eff), wlen * n);
        MatrixXd targets(static_cast<long>(eff), n);
        for (std::size_t i = 0; i < eff; ++i) {
          for (long r = 0; r < wlen; ++r)
            x.block(static_cast<long>(i), r * n, 1, n) =
                batch[i]->window.row(r) * kInputScale;
          targets.row(static_cast<long>(i)) = batch[i]->best_action.cast<double>().transpose();
        }
        fm.training_loss = policy_->train_step(x, targets, opt_);
        fm.trained = true;
      }
    }

    if (cfg_.checkpoint_every > 0 && !cfg_.checkpoint_dir.empty() &&
        (t + 1) % cfg_.checkpoint_every == 0) {
      std::filesystem::create_directories(cfg_.checkpoint_dir);
      policy_->save(cfg_.checkpoint_dir + "/checkpoint_" + std::to_string(t + 1) + ".bin");
    }

    ++frame_;
    return fm;
  } catch (const std::exception& e) {
    throw std::runtime_error("frame " + std::to_string(t) + ": " + e.what());
  }
}

std::vector<FrameMetrics> OnlineTrainer::run(
    const std::function<void(const FrameMetrics&)>& sink) {
  std::vector<FrameMetrics> out;
  out.reserve(static_cast<std::size_t>(cfg_.frames));
  for (long t = 0; t < cfg_.frames; ++t) {
    out.push_back(step());
    if (sink) sink(out.back());
  }
  return out;
}

}  // namespace wpmec
