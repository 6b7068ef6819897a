#include "boxreach/ape2.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <stdexcept>

#include "boxreach/errors.hpp"

namespace boxreach {

nlohmann::json to_json(const Ape2Config& c) {
  return {{"critics", c.critics},
          {"discount", c.discount},
          {"noise_std", c.noise_std},
          {"repeats", c.repeats},
          {"blend_horizon", c.blend_horizon},
          {"return_horizon", c.return_horizon},
          {"own_weight", c.own_weight},
          {"spread_weight", c.spread_weight},
          {"learning_rate", c.learning_rate},
          {"soft_update_rate", c.soft_update_rate},
          {"batch", c.batch},
          {"memory_capacity", c.memory_capacity},
          {"expert_ramp", c.expert_ramp},
          {"expert_max", c.expert_max},
          {"hidden", c.hidden},
          {"immediate_return", c.immediate_return}};
}

Ape2Config ape2_config_from_json(const nlohmann::json& j, Ape2Config c) {
  auto read = [&](const char* key, auto& field) {
    if (j.contains(key)) {
      try {
        j.at(key).get_to(field);
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("agent.") + key, e.what());
      }
    }
  };
  read("critics", c.critics);
  read("discount", c.discount);
  read("noise_std", c.noise_std);
  read("repeats", c.repeats);
  read("blend_horizon", c.blend_horizon);
  read("return_horizon", c.return_horizon);
  read("own_weight", c.own_weight);
  read("spread_weight", c.spread_weight);
  read("learning_rate", c.learning_rate);
  read("soft_update_rate", c.soft_update_rate);
  read("batch", c.batch);
  read("memory_capacity", c.memory_capacity);
  read("expert_ramp", c.expert_ramp);
  read("expert_max", c.expert_max);
  read("hidden", c.hidden);
  read("immediate_return", c.immediate_return);
  if (c.critics < 1) throw ConfigError("agent.critics", "must be >= 1");
  if (!(c.discount > 0.0 && c.discount < 1.0)) throw ConfigError("agent.discount", "must be in (0, 1)");
  if (c.repeats < 0) throw ConfigError("agent.repeats", "must be >= 0");
  for (double s : c.noise_std) {
    if (!(s > 0.0)) throw ConfigError("agent.noise_std", "entries must be > 0");
  }
  if (!(c.own_weight >= 0.0 && c.own_weight <= 1.0)) throw ConfigError("agent.own_weight", "must be in [0, 1]");
  if (c.return_horizon < 1) throw ConfigError("agent.return_horizon", "must be >= 1");
  if (!(c.blend_horizon > 0.0)) throw ConfigError("agent.blend_horizon", "must be > 0");
  if (c.batch < 1) throw ConfigError("agent.batch", "must be >= 1");
  if (c.memory_capacity < 1) throw ConfigError("agent.memory_capacity", "must be >= 1");
  if (!(c.soft_update_rate > 0.0 && c.soft_update_rate <= 1.0)) {
    throw ConfigError("agent.soft_update_rate", "must be in (0, 1]");
  }
  return c;
}

Ape2Agent::Ape2Agent(Ape2Config config, int state_size, int action_size, Rng& rng)
    : config_(std::move(config)), state_size_(state_size), action_size_(action_size) {
  if (config_.critics < 1) throw std::invalid_argument("Ape2Agent: need at least one critic");
  actor_ = make_mlp(state_size, config_.hidden, action_size, Activation::tanh, rng);
  actor_target_ = actor_;
  actor_opt_ = AdamState::for_network(actor_);
  for (int k = 0; k < config_.critics; ++k) {
    critics_.push_back(
        make_mlp(state_size + action_size, config_.hidden, 1, Activation::identity, rng));
    critic_targets_.push_back(critics_.back());
    critic_opts_.push_back(AdamState::for_network(critics_.back()));
  }
}

Eigen::VectorXd Ape2Agent::raw_action(const Eigen::VectorXd& state) const {
  return forward(actor_, state);
}

Eigen::MatrixXd Ape2Agent::critic_input(const Eigen::MatrixXd& states,
                                        const Eigen::MatrixXd& actions) const {
  if (states.cols() != actions.cols()) throw std::invalid_argument("critic input: column mismatch");
  Eigen::MatrixXd in(states.rows() + actions.rows(), states.cols());
  in << states, actions;
  return in;
}

Eigen::VectorXd Ape2Agent::q_ltr_batch(const Eigen::MatrixXd& states,
                                       const Eigen::MatrixXd& actions) const {
  const Eigen::MatrixXd in = critic_input(states, actions);
  Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(in.cols());
  for (const Network& c : critics_) sum += forward_batch(c, in);
  return (sum / static_cast<double>(critics_.size())).transpose();
}

double Ape2Agent::q_ltr(const Eigen::VectorXd& state, const Eigen::VectorXd& action) const {
  return q_ltr_batch(state, action)[0];
}

double Ape2Agent::eta() const {
  if (!config_.immediate_return) return 1.0;
  return std::clamp(static_cast<double>(t_c_) / config_.blend_horizon, 0.0, 1.0);
}

double Ape2Agent::td_error(int k, const Transition& t) const {
  const Eigen::VectorXd next_action = forward(actor_target_, t.next_state);
  Eigen::VectorXd next_in(state_size_ + action_size_);
  next_in << t.next_state, next_action;
  Eigen::VectorXd in(state_size_ + action_size_);
  in << t.state, t.action;
  return t.reward + config_.discount * forward(critic_targets_.at(k), next_in)[0] -
         forward(critics_.at(k), in)[0];
}

Ape2Agent::CriticPass Ape2Agent::critic_pass(const Batch& batch) const {
  const Eigen::MatrixXd next_actions = forward_batch(actor_target_, batch.next_states);
  const Eigen::MatrixXd next_in = critic_input(batch.next_states, next_actions);
  const Eigen::MatrixXd in = critic_input(batch.states, batch.actions);
  CriticPass pass;
  pass.mean_q = Eigen::RowVectorXd::Zero(batch.size());
  for (int k = 0; k < config_.critics; ++k) {
    const Eigen::RowVectorXd target =
        batch.rewards.transpose() + config_.discount * forward_batch(critic_targets_[k], next_in);
    pass.traces.push_back(trace_forward(critics_[k], in));
    pass.td.push_back(target - pass.traces.back().output());
    pass.mean_q += pass.traces.back().output();
  }
  pass.mean_q /= static_cast<double>(config_.critics);
  return pass;
}

// d(batch-mean hybrid loss of critic k) / d Q_k, per sample.
Eigen::RowVectorXd Ape2Agent::critic_output_gradient(int k, const CriticPass& pass) const {
  const double K = static_cast<double>(config_.critics);
  const double w1 = config_.own_weight;
  const double w2 = config_.spread_weight;
  const double n = static_cast<double>(pass.mean_q.size());
  const Eigen::RowVectorXd& td = pass.td[k];
  const Eigen::RowVectorXd spread = pass.traces[k].output() - pass.mean_q;
  return (-2.0 * (w1 + (1.0 - w1) / K) * td + 2.0 * w2 * (1.0 - 1.0 / K) * spread) / n;
}

double Ape2Agent::critic_loss(int k, const Batch& batch) const {
  const CriticPass pass = critic_pass(batch);
  const double K = static_cast<double>(config_.critics);
  Eigen::RowVectorXd all = Eigen::RowVectorXd::Zero(batch.size());
  for (const auto& td : pass.td) all += td.array().square().matrix();
  const Eigen::RowVectorXd spread = pass.traces.at(k).output() - pass.mean_q;
  const Eigen::RowVectorXd per_sample =
      config_.own_weight * pass.td[k].array().square().matrix() +
      ((1.0 - config_.own_weight) / K) * all + config_.spread_weight * spread.array().square().matrix();
  return per_sample.mean();
}

Gradient Ape2Agent::critic_gradient(int k, const Batch& batch) const {
  const CriticPass pass = critic_pass(batch);
  return backward(critics_.at(k), pass.traces[k], critic_output_gradient(k, pass)).params;
}

void Ape2Agent::critic_update(const Batch& batch) {
  const CriticPass pass = critic_pass(batch);
  for (const auto& td : pass.td) {
    if (!td.allFinite()) throw NumericError("critic_update: non-finite TD error");
  }
  std::vector<Gradient> grads;
  grads.reserve(critics_.size());
  for (int k = 0; k < config_.critics; ++k) {
    grads.push_back(backward(critics_[k], pass.traces[k], critic_output_gradient(k, pass)).params);
    if (!grads.back().all_finite()) throw NumericError("critic_update: non-finite gradient");
  }
  for (int k = 0; k < config_.critics; ++k) {
    adam_step(critic_opts_[k], critics_[k], grads[k], config_.learning_rate);
  }
}

double Ape2Agent::actor_objective(const Batch& batch) const {
  return q_ltr_batch(batch.states, forward_batch(actor_, batch.states)).mean();
}

Gradient Ape2Agent::actor_gradient(const Batch& batch) const {
  const ForwardTrace actor_trace = trace_forward(actor_, batch.states);
  const Eigen::MatrixXd in = critic_input(batch.states, actor_trace.output());
  const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(1, batch.size());
  Eigen::MatrixXd dq_da = Eigen::MatrixXd::Zero(action_size_, batch.size());
  for (const Network& critic : critics_) {
    dq_da += input_gradient(critic, trace_forward(critic, in), ones).bottomRows(action_size_);
  }
  // Minimize -mean Q_LTR.
  const double scale = -1.0 / (static_cast<double>(critics_.size()) * batch.size());
  return backward(actor_, actor_trace, dq_da * scale).params;
}

void Ape2Agent::actor_update(const Batch& batch) {
  adam_step(actor_opt_, actor_, actor_gradient(batch), config_.learning_rate);
}

void Ape2Agent::update_targets() {
  soft_update(actor_target_, actor_, config_.soft_update_rate);
  for (int k = 0; k < config_.critics; ++k) {
    soft_update(critic_targets_[k], critics_[k], config_.soft_update_rate);
  }
}

bool Ape2Agent::optimize(const Batch& batch) {
  try {
    critic_update(batch);
    actor_update(batch);
  } catch (const NumericError& e) {
    std::cerr << "warning: skipping batch: " << e.what() << "\n";
    return false;
  }
  update_targets();
  ++t_c_;
  return true;
}

nlohmann::json Ape2Agent::to_json() const {
  nlohmann::json critics = nlohmann::json::array();
  nlohmann::json targets = nlohmann::json::array();
  nlohmann::json opts = nlohmann::json::array();
  for (int k = 0; k < config_.critics; ++k) {
    critics.push_back(boxreach::to_json(critics_[k]));
    targets.push_back(boxreach::to_json(critic_targets_[k]));
    opts.push_back(boxreach::to_json(critic_opts_[k]));
  }
  return {{"format", "boxreach-agent"},
          {"version", 1},
          {"config", boxreach::to_json(config_)},
          {"state_size", state_size_},
          {"action_size", action_size_},
          {"optimization_count", t_c_},
          {"actor", boxreach::to_json(actor_)},
          {"actor_target", boxreach::to_json(actor_target_)},
          {"actor_optimizer", boxreach::to_json(actor_opt_)},
          {"critics", critics},
          {"critic_targets", targets},
          {"critic_optimizers", opts}};
}

Ape2Agent Ape2Agent::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "boxreach-agent" || j.at("version") != 1) {
      throw CheckpointError("unsupported agent checkpoint format");
    }
    Ape2Agent agent;
    agent.config_ = ape2_config_from_json(j.at("config"));
    agent.state_size_ = j.at("state_size").get<int>();
    agent.action_size_ = j.at("action_size").get<int>();
    agent.t_c_ = j.at("optimization_count").get<long>();
    agent.actor_ = network_from_json(j.at("actor"));
    agent.actor_target_ = network_from_json(j.at("actor_target"));
    agent.actor_opt_ = adam_from_json(j.at("actor_optimizer"));
    for (const auto& c : j.at("critics")) agent.critics_.push_back(network_from_json(c));
    for (const auto& c : j.at("critic_targets")) agent.critic_targets_.push_back(network_from_json(c));
    for (const auto& o : j.at("critic_optimizers")) agent.critic_opts_.push_back(adam_from_json(o));
    if (static_cast<int>(agent.critics_.size()) != agent.config_.critics ||
        agent.critic_targets_.size() != agent.critics_.size() ||
        agent.critic_opts_.size() != agent.critics_.size()) {
      throw CheckpointError("critic count does not match config");
    }
    if (agent.actor_.input_size() != agent.state_size_ ||
        agent.actor_.output_size() != agent.action_size_) {
      throw CheckpointError("actor shape does not match declared sizes");
    }
    return agent;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed agent checkpoint: ") + e.what());
  }
}

std::vector<Eigen::VectorXd> explore_candidates(const Eigen::VectorXd& action,
                                                std::span<const double> noise_std, int repeats,
                                                Rng& rng) {
  std::vector<Eigen::VectorXd> out;
  out.reserve(1 + noise_std.size() * std::max(repeats, 0));
  out.push_back(action);
  for (double sigma : noise_std) {
    std::normal_distribution<double> noise(0.0, sigma);
    for (int n = 0; n < repeats; ++n) {
      Eigen::VectorXd c = action;
      for (Eigen::Index i = 0; i < c.size(); ++i) c[i] += noise(rng);
      out.push_back(c.cwiseMax(-1.0).cwiseMin(1.0));
    }
  }
  return out;
}

Eigen::VectorXd scale_action(const Scene& scene, const Eigen::VectorXd& action) {
  return action * scene.dq_max;
}

double immediate_return(const Scene& scene, const Ape2Agent& agent, const EpisodeCursor& cursor,
                        const Eigen::VectorXd& action, int horizon, const ActionMap& map) {
  if (horizon < 1) throw std::invalid_argument("immediate_return: horizon must be >= 1");
  JointConfig q = cursor.q;
  Eigen::VectorXd a = action;
  StateVector state;
  bool have_state = false;
  double total = 0.0;
  for (int h = 0; h < horizon; ++h) {
    const int index = cursor.step_index + h;
    if (h > 0) a = agent.raw_action(state.flatten());
    Eigen::VectorXd dq;
    if (map) {
      if (!have_state) state = observe(scene, q, cursor.goal);
      dq = map(state, a, index);
    } else {
      dq = scale_action(scene, a);
    }
    StepResult r = step(scene, q, dq, cursor.goal, index);
    total += r.reward;
    q = std::move(r.q);
    state = std::move(r.state);
    have_state = true;
  }
  return total;
}

double hybrid_value(double eta, double q_ltr_value, double immediate_value) {
  return eta * q_ltr_value + (1.0 - eta) * immediate_value;
}

Selection select_from_candidates(const Ape2Agent& agent, const Scene& scene,
                                 const EpisodeCursor& cursor, const Eigen::VectorXd& state,
                                 std::vector<Eigen::VectorXd> candidates, const ActionMap& map) {
  Selection sel;
  sel.candidates = std::move(candidates);
  const int n = static_cast<int>(sel.candidates.size());
  if (n == 0) throw std::invalid_argument("select_action: empty candidate set");
  sel.values.assign(n, 0.0);
  if (n > 1) {
    const double eta = agent.eta();
    Eigen::VectorXd q_values = Eigen::VectorXd::Zero(n);
    if (eta > 0.0) {
      Eigen::MatrixXd states = state.replicate(1, n);
      Eigen::MatrixXd actions(agent.action_size(), n);
      for (int i = 0; i < n; ++i) actions.col(i) = sel.candidates[i];
      q_values = agent.q_ltr_batch(states, actions);
    }
    for (int i = 0; i < n; ++i) {
      const double r_ir =
          eta < 1.0 ? immediate_return(scene, agent, cursor, sel.candidates[i],
                                       agent.config().return_horizon, map)
                    : 0.0;
      sel.values[i] = hybrid_value(eta, q_values[i], r_ir);
    }
  }
  sel.index = static_cast<int>(std::max_element(sel.values.begin(), sel.values.end()) -
                               sel.values.begin());
  sel.action = sel.candidates[sel.index];
  return sel;
}

Selection select_action(const Ape2Agent& agent, const Scene& scene, const EpisodeCursor& cursor,
                        const Eigen::VectorXd& state, Rng& rng, const ActionMap& map) {
  const Eigen::VectorXd raw = agent.raw_action(state);
  const auto& cfg = agent.config();
  return select_from_candidates(agent, scene, cursor, state,
                                explore_candidates(raw, cfg.noise_std, cfg.repeats, rng), map);
}

}  // namespace boxreach
