#include "memsel/agent.hpp"

#include <cmath>
#include <string>

#include "memsel/errors.hpp"
#include "memsel/rng.hpp"

namespace memsel {

void AgentConfig::validate() const {
  if (hidden1 < 1 || hidden2 < 1) throw ConfigError("agent hidden sizes must be >= 1");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("agent.gamma must lie in [0, 1)");
  if (sync_period < 1) throw ConfigError("agent.sync_period must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("agent.learning_rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("agent.momentum must lie in [0, 1)");
}

MlpParams MlpParams::zeros(int hidden1, int hidden2) {
  MlpParams p;
  p.w1 = Eigen::MatrixXd::Zero(hidden1, kStateDim);
  p.b1 = Eigen::VectorXd::Zero(hidden1);
  p.w2 = Eigen::MatrixXd::Zero(hidden2, hidden1);
  p.b2 = Eigen::VectorXd::Zero(hidden2);
  p.w3 = Eigen::VectorXd::Zero(hidden2);
  p.b3 = 0.0;
  return p;
}

Eigen::Index MlpParams::size() const {
  return w1.size() + b1.size() + w2.size() + b2.size() + w3.size() + 1;
}

Eigen::VectorXd MlpParams::flatten() const {
  Eigen::VectorXd out(size());
  Eigen::Index o = 0;
  auto put = [&](const auto& m) {
    out.segment(o, m.size()) = Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
    o += m.size();
  };
  put(w1);
  put(b1);
  put(w2);
  put(b2);
  put(w3);
  out(o) = b3;
  return out;
}

void MlpParams::unflatten(const Eigen::VectorXd& flat) {
  if (flat.size() != size()) throw ArgumentError("flat parameter vector has the wrong size");
  Eigen::Index o = 0;
  auto take = [&](auto& m) {
    Eigen::Map<Eigen::VectorXd>(m.data(), m.size()) = flat.segment(o, m.size());
    o += m.size();
  };
  take(w1);
  take(b1);
  take(w2);
  take(b2);
  take(w3);
  b3 = flat(o);
}

bool operator==(const MlpParams& a, const MlpParams& b) {
  return a.w1 == b.w1 && a.b1 == b.b1 && a.w2 == b.w2 && a.b2 == b.b2 && a.w3 == b.w3 &&
         a.b3 == b.b3;
}

namespace {

struct Forward {
  Eigen::VectorXd h1;
  Eigen::VectorXd h2;
  double q;
};

Forward forward(const MlpParams& p, const StateArray& s) {
  for (double v : s) {
    if (!std::isfinite(v)) throw ArgumentError("agent input must be finite");
  }
  const Eigen::Map<const Eigen::Vector3d> x(s.data());
  Forward f;
  f.h1 = (p.w1 * x + p.b1).array().tanh().matrix();
  f.h2 = (p.w2 * f.h1 + p.b2).array().tanh().matrix();
  const double z = p.w3.dot(f.h2) + p.b3;
  f.q = 1.0 / (1.0 + std::exp(-z));
  return f;
}

}  // namespace

double mlp_score(const MlpParams& p, const StateArray& s) { return forward(p, s).q; }

StateArray mlp_input_gradient(const MlpParams& p, const StateArray& s) {
  const Forward f = forward(p, s);
  const double dz = f.q * (1.0 - f.q);
  const Eigen::VectorXd d2 = (dz * p.w3).array() * (1.0 - f.h2.array().square());
  const Eigen::VectorXd d1 = (p.w2.transpose() * d2).array() * (1.0 - f.h1.array().square());
  const Eigen::Vector3d dx = p.w1.transpose() * d1;
  return {dx(0), dx(1), dx(2)};
}

void mlp_accumulate_param_gradient(const MlpParams& p, const StateArray& s, double upstream,
                                   MlpParams& accum) {
  const Forward f = forward(p, s);
  const Eigen::Map<const Eigen::Vector3d> x(s.data());
  const double dz = upstream * f.q * (1.0 - f.q);
  accum.w3 += dz * f.h2;
  accum.b3 += dz;
  const Eigen::VectorXd d2 = (dz * p.w3).array() * (1.0 - f.h2.array().square());
  accum.w2 += d2 * f.h1.transpose();
  accum.b2 += d2;
  const Eigen::VectorXd d1 = (p.w2.transpose() * d2).array() * (1.0 - f.h1.array().square());
  accum.w1 += d1 * x.transpose();
  accum.b1 += d1;
}

AgentNet::AgentNet(AgentConfig config) : config_(config) {
  config_.validate();
  policy_ = MlpParams::zeros(config_.hidden1, config_.hidden2);
  Rng rng = make_rng(config_.seed, {0xa9e});
  auto fill = [&](Eigen::MatrixXd& m) {
    std::normal_distribution<double> gauss(0.0, config_.init_scale / std::sqrt(m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = gauss(rng);
  };
  fill(policy_.w1);
  fill(policy_.w2);
  std::normal_distribution<double> gauss(0.0, config_.init_scale / std::sqrt(config_.hidden2));
  for (Eigen::Index i = 0; i < policy_.w3.size(); ++i) policy_.w3(i) = gauss(rng);
  target_ = policy_;
  velocity_ = MlpParams::zeros(config_.hidden1, config_.hidden2);
}

AgentNet AgentNet::from_parameters(AgentConfig config, MlpParams policy, MlpParams target,
                                   MlpParams velocity, long long td_steps, long long syncs) {
  AgentNet a(config);
  auto check = [&](const MlpParams& p) {
    if (p.w1.rows() != config.hidden1 || p.w1.cols() != kStateDim ||
        p.b1.size() != config.hidden1 || p.w2.rows() != config.hidden2 ||
        p.w2.cols() != config.hidden1 || p.b2.size() != config.hidden2 ||
        p.w3.size() != config.hidden2) {
      throw MismatchError("agent checkpoint layer shapes do not match its config");
    }
  };
  check(policy);
  check(target);
  check(velocity);
  a.policy_ = std::move(policy);
  a.target_ = std::move(target);
  a.velocity_ = std::move(velocity);
  a.td_steps_ = td_steps;
  a.syncs_ = syncs;
  return a;
}

double AgentNet::score(const StateVector& s) const { return mlp_score(policy_, s.as_array()); }

double AgentNet::target_score(const StateVector& s) const {
  return mlp_score(target_, s.as_array());
}

StateArray AgentNet::score_input_gradient(const StateVector& s) const {
  return mlp_input_gradient(policy_, s.as_array());
}

namespace {

void check_transitions(std::span<const Transition> transitions) {
  if (transitions.empty()) throw ArgumentError("TD loss needs at least one transition");
  for (const Transition& t : transitions) {
    if (t.current.empty() || t.next.empty()) {
      throw ArgumentError("transition at stage " + std::to_string(t.stage) +
                          " has an empty selection");
    }
  }
}

template <class Fn>
double mean_of(const std::vector<StateVector>& states, Fn&& fn) {
  double total = 0.0;
  for (const StateVector& s : states) total += fn(s);
  return total / static_cast<double>(states.size());
}

}  // namespace

double AgentNet::td_loss(std::span<const Transition> transitions) const {
  check_transitions(transitions);
  double total = 0.0;
  for (const Transition& t : transitions) {
    const double target = mean_of(t.next, [&](const StateVector& s) { return target_score(s); });
    const double current = mean_of(t.current, [&](const StateVector& s) { return score(s); });
    const double delta = t.reward + config_.gamma * target - current;
    total += delta * delta;
  }
  return total / static_cast<double>(transitions.size());
}

MlpParams AgentNet::td_gradient(std::span<const Transition> transitions) const {
  check_transitions(transitions);
  MlpParams grad = MlpParams::zeros(config_.hidden1, config_.hidden2);
  const double n = static_cast<double>(transitions.size());
  for (const Transition& t : transitions) {
    const double target = mean_of(t.next, [&](const StateVector& s) { return target_score(s); });
    const double current = mean_of(t.current, [&](const StateVector& s) { return score(s); });
    const double delta = t.reward + config_.gamma * target - current;
    const double upstream = -2.0 * delta / (n * static_cast<double>(t.current.size()));
    for (const StateVector& s : t.current) {
      mlp_accumulate_param_gradient(policy_, s.as_array(), upstream, grad);
    }
  }
  return grad;
}

double AgentNet::td_step(std::span<const Transition> transitions, double learning_rate) {
  const double before = td_loss(transitions);
  const Eigen::VectorXd g = td_gradient(transitions).flatten();
  Eigen::VectorXd v = config_.momentum * velocity_.flatten() - learning_rate * g;
  velocity_.unflatten(v);
  Eigen::VectorXd theta = policy_.flatten() + v;
  policy_.unflatten(theta);
  ++td_steps_;
  if (sync_due(td_steps_, config_.sync_period)) sync_target();
  return before;
}

void AgentNet::sync_target() {
  target_ = policy_;
  ++syncs_;
}

}  // namespace memsel
