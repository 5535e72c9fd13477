#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "memsel/state_features.hpp"

namespace memsel {

struct AgentConfig {
  int hidden1 = 16;
  int hidden2 = 16;
  double gamma = 0.9;
  int sync_period = 10;
  double learning_rate = 0.1;
  double momentum = 0.9;
  double init_scale = 1.0;
  std::uint64_t seed = 3;

  void validate() const;
  friend bool operator==(const AgentConfig&, const AgentConfig&) = default;
};

inline constexpr int kStateDim = 3;
using StateArray = std::array<double, kStateDim>;

// 3 -> h1 -> h2 -> 1 with tanh hidden layers and a sigmoid output.
struct MlpParams {
  Eigen::MatrixXd w1;  // h1 x 3
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;  // h2 x h1
  Eigen::VectorXd b2;
  Eigen::VectorXd w3;  // h2
  double b3 = 0.0;

  static MlpParams zeros(int hidden1, int hidden2);
  Eigen::Index size() const;
  Eigen::VectorXd flatten() const;
  void unflatten(const Eigen::VectorXd& flat);
  friend bool operator==(const MlpParams& a, const MlpParams& b);
};

double mlp_score(const MlpParams& p, const StateArray& s);
StateArray mlp_input_gradient(const MlpParams& p, const StateArray& s);
// accum += upstream * d score / d params
void mlp_accumulate_param_gradient(const MlpParams& p, const StateArray& s, double upstream,
                                   MlpParams& accum);

// States of the L samples selected at stage t and at stage t+1, and r_{t+1}.
struct Transition {
  int stage = 0;
  std::vector<StateVector> current;
  std::vector<StateVector> next;
  double reward = 0.0;
};

// True when a sync falls on TD step `step` (1-based).
inline bool sync_due(long long step, int period) { return period > 0 && step % period == 0; }

class AgentNet {
 public:
  explicit AgentNet(AgentConfig config);

  const AgentConfig& config() const { return config_; }
  double gamma() const { return config_.gamma; }

  double score(const StateVector& s) const;         // q(s; θ)
  double target_score(const StateVector& s) const;  // q(s; θ̂)
  StateArray score_input_gradient(const StateVector& s) const;

  // (1/N) Σ_t (r_{t+1} + γ/L Σ q(next; θ̂) - 1/L Σ q(current; θ))²
  double td_loss(std::span<const Transition> transitions) const;
  // Gradient w.r.t. θ only; the target branch is a constant.
  MlpParams td_gradient(std::span<const Transition> transitions) const;
  // One momentum step; syncs θ̂ every sync_period steps. Returns the loss
  // evaluated before the update.
  double td_step(std::span<const Transition> transitions, double learning_rate);
  double td_step(std::span<const Transition> transitions) {
    return td_step(transitions, config_.learning_rate);
  }
  void sync_target();

  long long td_steps() const { return td_steps_; }
  long long syncs() const { return syncs_; }
  MlpParams& policy() { return policy_; }
  const MlpParams& policy() const { return policy_; }
  MlpParams& target() { return target_; }
  const MlpParams& target() const { return target_; }
  const MlpParams& velocity() const { return velocity_; }

  static AgentNet from_parameters(AgentConfig config, MlpParams policy, MlpParams target,
                                  MlpParams velocity, long long td_steps, long long syncs);

 private:
  AgentConfig config_;
  MlpParams policy_;
  MlpParams target_;
  MlpParams velocity_;
  long long td_steps_ = 0;
  long long syncs_ = 0;
};

}  // namespace memsel
