#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "boxreach/approximator.hpp"
#include "boxreach/environment.hpp"
#include "boxreach/random.hpp"
#include "boxreach/replay.hpp"

namespace boxreach {

/// Linear beta schedule with derived alpha and cumulative alpha-bar.
/// Diffusion steps are 1-based; index 0 holds alpha_bar = 1.
struct NoiseSchedule {
  std::vector<double> beta;       // beta[t], t in [1, steps]; beta[0] unused
  std::vector<double> alpha;
  std::vector<double> alpha_bar;  // alpha_bar[0] = 1

  int steps() const { return static_cast<int>(beta.size()) - 1; }
  /// beta_t (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t)
  double posterior_variance(int t) const;
};

NoiseSchedule make_schedule(int steps, double beta_first, double beta_last);

/// The 1000-step 1e-4 -> 0.02 schedule stretched to `steps`: both ends are
/// multiplied by 1000 / steps (the last one capped at 0.5) so alpha_bar at
/// the final step still reaches ~0 for short chains.
NoiseSchedule make_schedule(int steps);

/// sqrt(alpha_bar_t) tau0 + sqrt(1 - alpha_bar_t) eps
Eigen::VectorXd forward_noise(const Eigen::VectorXd& tau0, int t, const Eigen::VectorXd& eps,
                              const NoiseSchedule& schedule);

/// One ancestral step: posterior mean from the predicted noise plus
/// sqrt(posterior_variance) * z. Pass z = 0 for the mean alone.
Eigen::VectorXd reverse_step(const NoiseSchedule& schedule, const Eigen::VectorXd& tau_t, int t,
                             const Eigen::VectorXd& predicted_noise, const Eigen::VectorXd& z);

/// Joint angles mapped to [-1, 1] through the joint limits, flattened row by row.
Eigen::VectorXd encode_trajectory(const ManipulatorModel& model,
                                  const std::vector<JointConfig>& configs);
/// Inverse of encode_trajectory after clipping to [-1, 1].
std::vector<JointConfig> decode_trajectory(const ManipulatorModel& model,
                                           const Eigen::VectorXd& tensor);

/// Sinusoidal features of the diffusion step.
Eigen::VectorXd time_embedding(int t, int size);

/// What the MLP's output means. The predicted noise is always formed as
/// skip(t) * tau_t + out(t) * net(in(t) * tau_t, t):
///   noise           net is the noise estimate itself
///   sample          net estimates tau_0, converted through forward_noise
///   preconditioned  net fills in what the best linear estimate for data of
///                   spread data_std misses
/// The last two avoid making a narrow MLP copy its input through a
/// step-dependent gain.
enum class DenoiserOutput { noise, sample, preconditioned };

/// Time-conditioned fully-connected noise predictor.
struct Denoiser {
  Network net;
  int trajectory_size = 0;
  int embedding_size = 0;
  DenoiserOutput output = DenoiserOutput::sample;
  double data_std = 0.5;
};

std::string to_string(DenoiserOutput o);
DenoiserOutput denoiser_output_from_string(const std::string& name);

Denoiser make_denoiser(int trajectory_size, int embedding_size, std::span<const int> hidden,
                       Rng& rng, DenoiserOutput output = DenoiserOutput::sample,
                       double data_std = 0.5);

/// Predicted noise for each column of `noisy` at the matching step.
Eigen::MatrixXd predict_noise(const Denoiser& model, const Eigen::MatrixXd& noisy,
                              std::span<const int> steps, const NoiseSchedule& schedule);

/// Mean over the batch of ||eps - eps_theta(tau_t, t)||^2.
double diffusion_loss(const Denoiser& model, const Eigen::MatrixXd& tau0,
                      const Eigen::MatrixXd& eps, std::span<const int> steps,
                      const NoiseSchedule& schedule);

struct Ed2TrainConfig {
  int iterations = 5000;
  int batch = 32;
  double learning_rate = 1e-3;
  /// Per-sample weight min(SNR_t, cap) / SNR_t on the noise loss; <= 0 keeps
  /// the plain unweighted loss.
  double snr_cap = 5.0;
};

/// Mini-batch Adam on the noise-prediction loss, each sample weighted per
/// Ed2TrainConfig::snr_cap. Returns the per-iteration weighted batch loss. Throws NoDataError for an empty demo set.
std::vector<double> train_ed2(std::span<const Eigen::VectorXd> demos, Denoiser& model,
                              const NoiseSchedule& schedule, const Ed2TrainConfig& config,
                              Rng& rng);

/// Ancestral sampling from pure noise; result clipped to [-1, 1]. Columns are
/// independent samples.
Eigen::MatrixXd sample_trajectories(const Denoiser& model, const NoiseSchedule& schedule,
                                    int count, Rng& rng);
Eigen::VectorXd sample_trajectory(const Denoiser& model, const NoiseSchedule& schedule, Rng& rng);

/// Replays consecutive joint deltas (clipped to dq_max) through
/// environment::step. Returns nullopt when the replayed path touches an
/// expanded box.
std::optional<std::vector<Transition>> trajectory_to_transitions(
    const Scene& scene, const std::vector<JointConfig>& trajectory, const GoalPose& goal);

/// Configurations actually visited when the trajectory's deltas are replayed.
std::vector<JointConfig> replay_configurations(const Scene& scene,
                                               const std::vector<JointConfig>& trajectory);

/// TCP pose of the last replayed configuration.
GoalPose goal_from_trajectory(const Scene& scene, const std::vector<JointConfig>& trajectory);

struct ExpertFill {
  ReplayMemory memory;
  int accepted = 0;
  int attempts = 0;
  double acceptance_rate() const { return attempts ? double(accepted) / attempts : 0.0; }
};

/// Samples until `count` trajectories pass verification. Throws
/// GenerationFailure when fewer than 1% of the first 10^4 attempts pass.
ExpertFill fill_expert_memory(const Scene& scene, const Denoiser& model,
                              const NoiseSchedule& schedule, int count, std::size_t capacity,
                              Rng& rng);

struct BcConfig {
  std::vector<int> hidden{256, 256};
  int iterations = 3000;
  int batch = 64;
  double learning_rate = 1e-3;
};

struct BcResult {
  Network policy;
  std::vector<double> loss;
};

/// Supervised regression of stored actions on stored states; tanh head.
BcResult train_bc(const ReplayMemory& expert, const BcConfig& config, Rng& rng);

/// For step < base_steps: clip(bc(state) + weight * drl_action, -1, 1);
/// afterwards weight * drl_action.
Eigen::VectorXd hybrid_action(const Network& bc, const Eigen::VectorXd& state,
                              const Eigen::VectorXd& drl_action, int step, int base_steps,
                              double residual_weight);

}  // namespace boxreach
