#include "boxreach/ed2.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "boxreach/errors.hpp"

namespace boxreach {

double NoiseSchedule::posterior_variance(int t) const {
  return beta.at(t) * (1.0 - alpha_bar.at(t - 1)) / (1.0 - alpha_bar.at(t));
}

NoiseSchedule make_schedule(int steps, double beta_first, double beta_last) {
  if (steps < 1) throw std::invalid_argument("make_schedule: steps must be >= 1");
  if (!(beta_first > 0.0 && beta_first <= beta_last && beta_last < 1.0)) {
    throw std::invalid_argument("make_schedule: need 0 < beta_first <= beta_last < 1");
  }
  NoiseSchedule s;
  s.beta.assign(steps + 1, 0.0);
  s.alpha.assign(steps + 1, 1.0);
  s.alpha_bar.assign(steps + 1, 1.0);
  for (int t = 1; t <= steps; ++t) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(t - 1) / (steps - 1);
    s.beta[t] = beta_first + (beta_last - beta_first) * frac;
    s.alpha[t] = 1.0 - s.beta[t];
    s.alpha_bar[t] = s.alpha_bar[t - 1] * s.alpha[t];
  }
  return s;
}

NoiseSchedule make_schedule(int steps) {
  if (steps < 1) throw std::invalid_argument("make_schedule: steps must be >= 1");
  const double stretch = 1000.0 / steps;
  return make_schedule(steps, std::min(1e-4 * stretch, 0.5), std::min(0.02 * stretch, 0.5));
}

Eigen::VectorXd forward_noise(const Eigen::VectorXd& tau0, int t, const Eigen::VectorXd& eps,
                              const NoiseSchedule& schedule) {
  if (eps.size() != tau0.size()) throw std::invalid_argument("forward_noise: shape mismatch");
  const double ab = schedule.alpha_bar.at(t);
  return std::sqrt(ab) * tau0 + std::sqrt(1.0 - ab) * eps;
}

Eigen::VectorXd reverse_step(const NoiseSchedule& schedule, const Eigen::VectorXd& tau_t, int t,
                             const Eigen::VectorXd& predicted_noise, const Eigen::VectorXd& z) {
  const double beta = schedule.beta.at(t);
  const double mean_scale = 1.0 / std::sqrt(schedule.alpha.at(t));
  const double noise_scale = beta / std::sqrt(1.0 - schedule.alpha_bar.at(t));
  Eigen::VectorXd out = mean_scale * (tau_t - noise_scale * predicted_noise);
  if (t > 1) out += std::sqrt(schedule.posterior_variance(t)) * z;
  return out;
}

Eigen::VectorXd encode_trajectory(const ManipulatorModel& model,
                                  const std::vector<JointConfig>& configs) {
  const int dof = model.dof();
  Eigen::VectorXd out(static_cast<Eigen::Index>(configs.size()) * dof);
  for (std::size_t i = 0; i < configs.size(); ++i) {
    for (int j = 0; j < dof; ++j) {
      const auto& lim = model.joint_limits[j];
      out[i * dof + j] = 2.0 * (configs[i][j] - lim.min) / (lim.max - lim.min) - 1.0;
    }
  }
  return out;
}

std::vector<JointConfig> decode_trajectory(const ManipulatorModel& model,
                                           const Eigen::VectorXd& tensor) {
  const int dof = model.dof();
  if (tensor.size() % dof != 0) throw std::invalid_argument("decode_trajectory: bad length");
  std::vector<JointConfig> out(tensor.size() / dof, JointConfig(dof));
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (int j = 0; j < dof; ++j) {
      const auto& lim = model.joint_limits[j];
      const double x = std::clamp(tensor[i * dof + j], -1.0, 1.0);
      out[i][j] = lim.min + 0.5 * (x + 1.0) * (lim.max - lim.min);
    }
  }
  return out;
}

Eigen::VectorXd time_embedding(int t, int size) {
  Eigen::VectorXd out(size);
  const int half = size / 2;
  for (int i = 0; i < half; ++i) {
    const double freq = std::pow(1000.0, -static_cast<double>(i) / std::max(half - 1, 1));
    out[2 * i] = std::sin(t * freq);
    out[2 * i + 1] = std::cos(t * freq);
  }
  if (size % 2) out[size - 1] = static_cast<double>(t) / 100.0;
  return out;
}

std::string to_string(DenoiserOutput o) {
  switch (o) {
    case DenoiserOutput::noise: return "noise";
    case DenoiserOutput::sample: return "sample";
    case DenoiserOutput::preconditioned: return "preconditioned";
  }
  return "?";
}

DenoiserOutput denoiser_output_from_string(const std::string& name) {
  for (auto o : {DenoiserOutput::noise, DenoiserOutput::sample, DenoiserOutput::preconditioned}) {
    if (to_string(o) == name) return o;
  }
  throw ConfigError("ed2.output", "unknown denoiser output '" + name + "'");
}

Denoiser make_denoiser(int trajectory_size, int embedding_size, std::span<const int> hidden,
                       Rng& rng, DenoiserOutput output, double data_std) {
  Denoiser d;
  d.output = output;
  d.data_std = data_std;
  d.trajectory_size = trajectory_size;
  d.embedding_size = embedding_size;
  d.net = make_mlp(trajectory_size + embedding_size, hidden, trajectory_size,
                   Activation::identity, rng);
  return d;
}

namespace {

// eps_hat = skip * tau_t + out * net(in * tau_t, t).
struct Scaling {
  double in = 1.0;
  double skip = 0.0;
  double out = 1.0;
};

Scaling scaling(const Denoiser& model, int t, const NoiseSchedule& schedule) {
  const double a = std::sqrt(schedule.alpha_bar.at(t));
  const double b = std::sqrt(1.0 - schedule.alpha_bar.at(t));
  const double spread = std::sqrt(a * a * model.data_std * model.data_std + b * b);
  switch (model.output) {
    case DenoiserOutput::noise:
      return {};
    case DenoiserOutput::sample:
      // net estimates tau_0; eps follows from the forward-noise identity.
      return {1.0 / spread, 1.0 / b, -a / b};
    case DenoiserOutput::preconditioned:
      // skip is the best linear guess of eps for data of spread data_std;
      // out is the standard deviation of what is left.
      return {1.0 / spread, b / (spread * spread), a * model.data_std / spread};
  }
  return {};
}

Eigen::MatrixXd denoiser_input(const Denoiser& model, const Eigen::MatrixXd& noisy,
                               std::span<const int> steps, const NoiseSchedule& schedule) {
  if (noisy.rows() != model.trajectory_size || static_cast<std::size_t>(noisy.cols()) != steps.size()) {
    throw std::invalid_argument("denoiser input shape mismatch");
  }
  Eigen::MatrixXd in(model.trajectory_size + model.embedding_size, noisy.cols());
  for (Eigen::Index c = 0; c < noisy.cols(); ++c) {
    in.col(c).head(model.trajectory_size) = scaling(model, steps[c], schedule).in * noisy.col(c);
    in.col(c).tail(model.embedding_size) = time_embedding(steps[c], model.embedding_size);
  }
  return in;
}

Eigen::MatrixXd noisy_batch(const Eigen::MatrixXd& tau0, const Eigen::MatrixXd& eps,
                            std::span<const int> steps, const NoiseSchedule& schedule) {
  Eigen::MatrixXd out(tau0.rows(), tau0.cols());
  for (Eigen::Index c = 0; c < tau0.cols(); ++c) {
    out.col(c) = forward_noise(tau0.col(c), steps[c], eps.col(c), schedule);
  }
  return out;
}

Eigen::MatrixXd combine(const Denoiser& model, const Eigen::MatrixXd& net_out,
                        const Eigen::MatrixXd& noisy, std::span<const int> steps,
                        const NoiseSchedule& schedule) {
  Eigen::MatrixXd out(noisy.rows(), noisy.cols());
  for (Eigen::Index c = 0; c < noisy.cols(); ++c) {
    const Scaling k = scaling(model, steps[c], schedule);
    out.col(c) = k.skip * noisy.col(c) + k.out * net_out.col(c);
  }
  return out;
}

// min(SNR, cap) / SNR; 1 when uncapped.
double loss_weight(const NoiseSchedule& schedule, int t, double cap) {
  if (cap <= 0.0) return 1.0;
  const double snr = schedule.alpha_bar.at(t) / (1.0 - schedule.alpha_bar.at(t));
  return std::min(snr, cap) / snr;
}

}  // namespace

Eigen::MatrixXd predict_noise(const Denoiser& model, const Eigen::MatrixXd& noisy,
                              std::span<const int> steps, const NoiseSchedule& schedule) {
  return combine(model, forward_batch(model.net, denoiser_input(model, noisy, steps, schedule)), noisy,
                 steps, schedule);
}

double diffusion_loss(const Denoiser& model, const Eigen::MatrixXd& tau0,
                      const Eigen::MatrixXd& eps, std::span<const int> steps,
                      const NoiseSchedule& schedule) {
  const Eigen::MatrixXd pred =
      predict_noise(model, noisy_batch(tau0, eps, steps, schedule), steps, schedule);
  return (eps - pred).colwise().squaredNorm().mean();
}

std::vector<double> train_ed2(std::span<const Eigen::VectorXd> demos, Denoiser& model,
                              const NoiseSchedule& schedule, const Ed2TrainConfig& config,
                              Rng& rng) {
  if (demos.empty()) throw NoDataError("train_ed2: no demonstrations");
  for (const auto& d : demos) {
    if (d.size() != model.trajectory_size) {
      throw std::invalid_argument("train_ed2: demonstration length does not match the model");
    }
  }
  AdamState opt = AdamState::for_network(model.net);
  std::uniform_int_distribution<std::size_t> pick(0, demos.size() - 1);
  std::uniform_int_distribution<int> pick_t(1, schedule.steps());
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> curve;
  curve.reserve(config.iterations);
  const int b = config.batch;
  Eigen::MatrixXd tau0(model.trajectory_size, b);
  Eigen::MatrixXd eps(model.trajectory_size, b);
  std::vector<int> steps(b);
  for (int it = 0; it < config.iterations; ++it) {
    for (int c = 0; c < b; ++c) {
      tau0.col(c) = demos[pick(rng)];
      steps[c] = pick_t(rng);
      for (Eigen::Index r = 0; r < eps.rows(); ++r) eps(r, c) = normal(rng);
    }
    const Eigen::MatrixXd noisy = noisy_batch(tau0, eps, steps, schedule);
    const ForwardTrace trace = trace_forward(model.net, denoiser_input(model, noisy, steps, schedule));
    Eigen::MatrixXd diff = combine(model, trace.output(), noisy, steps, schedule) - eps;
    double loss = 0.0;
    for (int c = 0; c < b; ++c) {
      const double w = loss_weight(schedule, steps[c], config.snr_cap);
      loss += w * diff.col(c).squaredNorm();
      diff.col(c) *= w * scaling(model, steps[c], schedule).out * 2.0 / b;
    }
    curve.push_back(loss / b);
    const Gradient grad = backward(model.net, trace, diff).params;
    adam_step(opt, model.net, grad, config.learning_rate);
  }
  return curve;
}

Eigen::MatrixXd sample_trajectories(const Denoiser& model, const NoiseSchedule& schedule,
                                    int count, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  auto gaussian = [&] {
    Eigen::MatrixXd m(model.trajectory_size, count);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
    return m;
  };
  Eigen::MatrixXd tau = gaussian();
  for (int t = schedule.steps(); t >= 1; --t) {
    const std::vector<int> steps(count, t);
    const Eigen::MatrixXd eps_hat = predict_noise(model, tau, steps, schedule);
    const Eigen::MatrixXd z = t > 1 ? gaussian() : Eigen::MatrixXd::Zero(tau.rows(), count);
    for (int c = 0; c < count; ++c) {
      tau.col(c) = reverse_step(schedule, tau.col(c), t, eps_hat.col(c), z.col(c));
    }
  }
  return tau.cwiseMax(-1.0).cwiseMin(1.0);
}

Eigen::VectorXd sample_trajectory(const Denoiser& model, const NoiseSchedule& schedule, Rng& rng) {
  return sample_trajectories(model, schedule, 1, rng).col(0);
}

std::vector<JointConfig> replay_configurations(const Scene& scene,
                                               const std::vector<JointConfig>& trajectory) {
  std::vector<JointConfig> out;
  if (trajectory.empty()) return out;
  out.push_back(scene.model.clamp(trajectory.front()));
  for (std::size_t i = 1; i < trajectory.size(); ++i) {
    const Eigen::VectorXd delta =
        (trajectory[i] - out.back()).cwiseMax(-scene.dq_max).cwiseMin(scene.dq_max);
    out.push_back(scene.model.clamp(out.back() + delta));
  }
  return out;
}

GoalPose goal_from_trajectory(const Scene& scene, const std::vector<JointConfig>& trajectory) {
  const auto replayed = replay_configurations(scene, trajectory);
  const RigidTransform tcp = tcp_pose(scene.model, replayed.back());
  return {tcp.translation, tcp.rotation};
}

std::optional<std::vector<Transition>> trajectory_to_transitions(
    const Scene& scene, const std::vector<JointConfig>& trajectory, const GoalPose& goal) {
  if (trajectory.size() < 2) return std::vector<Transition>{};
  const std::vector<JointConfig> replayed = replay_configurations(scene, trajectory);
  if (!verify_trajectory(scene, replayed).collision_free) return std::nullopt;
  std::vector<Transition> out;
  out.reserve(replayed.size() - 1);
  StateVector state = observe(scene, replayed.front(), goal);
  for (std::size_t i = 0; i + 1 < replayed.size(); ++i) {
    const Eigen::VectorXd dq = replayed[i + 1] - replayed[i];
    StepResult r = step(scene, replayed[i], dq, goal, static_cast<int>(i));
    Transition t;
    t.state = state.flatten();
    t.action = dq / scene.dq_max;
    t.reward = r.reward;
    t.next_state = r.state.flatten();
    t.done = r.done;
    out.push_back(std::move(t));
    state = std::move(r.state);
  }
  return out;
}

ExpertFill fill_expert_memory(const Scene& scene, const Denoiser& model,
                              const NoiseSchedule& schedule, int count, std::size_t capacity,
                              Rng& rng) {
  ExpertFill fill{ReplayMemory(capacity), 0, 0};
  constexpr int kChunk = 64;
  constexpr int kProbeAttempts = 10000;
  while (fill.accepted < count) {
    const Eigen::MatrixXd samples = sample_trajectories(model, schedule, kChunk, rng);
    for (int c = 0; c < kChunk && fill.accepted < count; ++c) {
      ++fill.attempts;
      const auto configs = decode_trajectory(scene.model, samples.col(c));
      const GoalPose goal = goal_from_trajectory(scene, configs);
      auto transitions = trajectory_to_transitions(scene, configs, goal);
      if (!transitions) continue;
      ++fill.accepted;
      for (auto& t : *transitions) fill.memory.push(std::move(t));
    }
    if (fill.attempts >= kProbeAttempts && fill.acceptance_rate() < 0.01) {
      throw GenerationFailure("fill_expert_memory: acceptance rate below 1% after " +
                              std::to_string(fill.attempts) + " attempts");
    }
  }
  return fill;
}

BcResult train_bc(const ReplayMemory& expert, const BcConfig& config, Rng& rng) {
  if (expert.empty()) throw NoDataError("train_bc: expert memory is empty");
  const Transition& first = expert.at(0);
  BcResult out;
  out.policy = make_mlp(static_cast<int>(first.state.size()), config.hidden,
                        static_cast<int>(first.action.size()), Activation::tanh, rng);
  AdamState opt = AdamState::for_network(out.policy);
  const int b = static_cast<int>(std::min<std::size_t>(config.batch, expert.size()));
  Eigen::MatrixXd states(first.state.size(), b);
  Eigen::MatrixXd actions(first.action.size(), b);
  for (int it = 0; it < config.iterations; ++it) {
    for (int c = 0; c < b; ++c) {
      const Transition& t = expert.sample(rng);
      states.col(c) = t.state;
      actions.col(c) = t.action.cwiseMax(-1.0).cwiseMin(1.0);
    }
    const ForwardTrace trace = trace_forward(out.policy, states);
    const Eigen::MatrixXd diff = trace.output() - actions;
    out.loss.push_back(diff.colwise().squaredNorm().mean());
    adam_step(opt, out.policy, backward(out.policy, trace, diff * (2.0 / b)).params,
              config.learning_rate);
  }
  return out;
}

Eigen::VectorXd hybrid_action(const Network& bc, const Eigen::VectorXd& state,
                              const Eigen::VectorXd& drl_action, int step, int base_steps,
                              double residual_weight) {
  if (!(residual_weight > 0.0 && residual_weight <= 1.0)) {
    throw std::invalid_argument("hybrid_action: residual weight must be in (0, 1]");
  }
  if (step >= base_steps) return residual_weight * drl_action;
  return (forward(bc, state) + residual_weight * drl_action).cwiseMax(-1.0).cwiseMin(1.0);
}

}  // namespace boxreach
