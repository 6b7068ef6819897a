#pragma once

#include <functional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "boxreach/approximator.hpp"
#include "boxreach/environment.hpp"
#include "boxreach/random.hpp"
#include "boxreach/replay.hpp"
#include "json.hpp"

namespace boxreach {

struct Ape2Config {
  int critics = 5;                        // K
  double discount = 0.98;                 // xi
  std::vector<double> noise_std{0.05, 0.2};  // sigma_m, normalized action units
  int repeats = 3;                        // N per noise level
  double blend_horizon = 2e5;             // T, optimizer steps
  int return_horizon = 1;                 // H
  double own_weight = 0.6;                // omega_1
  double spread_weight = 0.1;             // omega_2
  double learning_rate = 1e-3;
  double soft_update_rate = 0.01;
  int batch = 64;
  int memory_capacity = 60000;
  long expert_ramp = 2000;                // T_B
  int expert_max = 16;                    // B_EM max
  std::vector<int> hidden{256, 256};
  /// When false the hybrid value ignores the immediate return (eta = 1).
  bool immediate_return = true;

  int candidate_count() const {
    return 1 + static_cast<int>(noise_std.size()) * repeats;
  }
};

nlohmann::json to_json(const Ape2Config& c);
Ape2Config ape2_config_from_json(const nlohmann::json& j, Ape2Config base = {});

/// Actor and K critics with target copies and Adam states. Actions are
/// normalized to [-1, 1]; multiply by Scene::dq_max for joint increments.
class Ape2Agent {
 public:
  Ape2Agent(Ape2Config config, int state_size, int action_size, Rng& rng);

  const Ape2Config& config() const { return config_; }
  int state_size() const { return state_size_; }
  int action_size() const { return action_size_; }
  long optimization_count() const { return t_c_; }
  void set_optimization_count(long t_c) { t_c_ = t_c; }

  const Network& actor() const { return actor_; }
  const Network& actor_target() const { return actor_target_; }
  const std::vector<Network>& critics() const { return critics_; }
  const std::vector<Network>& critic_targets() const { return critic_targets_; }
  Network& mutable_actor() { return actor_; }
  std::vector<Network>& mutable_critics() { return critics_; }

  Eigen::VectorXd raw_action(const Eigen::VectorXd& state) const;

  /// Mean of the online critics at (s, a).
  double q_ltr(const Eigen::VectorXd& state, const Eigen::VectorXd& action) const;
  /// Batched Q_LTR, one column per (state, action) pair.
  Eigen::VectorXd q_ltr_batch(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions) const;

  /// clip(t_c / T, 0, 1); always 1 when the immediate return is disabled.
  double eta() const;

  /// r + xi * Q'_k(s', mu'(s')) - Q_k(s, a), k zero-based.
  double td_error(int k, const Transition& t) const;

  /// Batch-mean hybrid loss of critic k.
  double critic_loss(int k, const Batch& batch) const;
  /// Gradient of critic_loss(k) with respect to critic k's parameters.
  Gradient critic_gradient(int k, const Batch& batch) const;

  /// Batch-mean Q_LTR(s, mu(s)).
  double actor_objective(const Batch& batch) const;
  /// Gradient of -actor_objective with respect to the actor parameters.
  Gradient actor_gradient(const Batch& batch) const;

  /// One Adam step per critic on its hybrid loss. Throws NumericError on a
  /// non-finite loss without touching any critic.
  void critic_update(const Batch& batch);
  void actor_update(const Batch& batch);
  void update_targets();

  /// critic_update, actor_update, target soft updates, then ++t_c. A batch
  /// producing a non-finite loss is skipped; returns false in that case.
  bool optimize(const Batch& batch);

  nlohmann::json to_json() const;
  static Ape2Agent from_json(const nlohmann::json& j);

 private:
  Ape2Agent() = default;
  Eigen::MatrixXd critic_input(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions) const;

  struct CriticPass {
    std::vector<ForwardTrace> traces;
    std::vector<Eigen::RowVectorXd> td;  // L_k per sample
    Eigen::RowVectorXd mean_q;
  };
  CriticPass critic_pass(const Batch& batch) const;
  Eigen::RowVectorXd critic_output_gradient(int k, const CriticPass& pass) const;

  Ape2Config config_;
  int state_size_ = 0;
  int action_size_ = 0;
  long t_c_ = 0;
  Network actor_;
  Network actor_target_;
  std::vector<Network> critics_;
  std::vector<Network> critic_targets_;
  AdamState actor_opt_;
  std::vector<AdamState> critic_opts_;
};

/// The unperturbed action followed by repeats copies per noise level, each
/// perturbed by N(0, sigma^2) and clipped to [-1, 1].
std::vector<Eigen::VectorXd> explore_candidates(const Eigen::VectorXd& action,
                                                std::span<const double> noise_std, int repeats,
                                                Rng& rng);

/// Where an episode currently is; owned by the caller.
struct EpisodeCursor {
  JointConfig q;
  GoalPose goal;
  int step_index = 0;
};

/// Maps a normalized agent action to the joint increment actually executed.
using ActionMap =
    std::function<Eigen::VectorXd(const StateVector& state, const Eigen::VectorXd& action, int step)>;

/// Default map: action * dq_max.
Eigen::VectorXd scale_action(const Scene& scene, const Eigen::VectorXd& action);

/// Sum of rewards over `horizon` simulated steps starting with `action`;
/// later steps use the agent's raw action. Nothing outside is mutated.
double immediate_return(const Scene& scene, const Ape2Agent& agent, const EpisodeCursor& cursor,
                        const Eigen::VectorXd& action, int horizon,
                        const ActionMap& map = nullptr);

double hybrid_value(double eta, double q_ltr_value, double immediate_value);

struct Selection {
  int index = 0;
  Eigen::VectorXd action;
  std::vector<Eigen::VectorXd> candidates;
  std::vector<double> values;
};

/// Scores candidates with the hybrid value; ties go to the lowest index.
Selection select_from_candidates(const Ape2Agent& agent, const Scene& scene,
                                 const EpisodeCursor& cursor, const Eigen::VectorXd& state,
                                 std::vector<Eigen::VectorXd> candidates,
                                 const ActionMap& map = nullptr);

Selection select_action(const Ape2Agent& agent, const Scene& scene, const EpisodeCursor& cursor,
                        const Eigen::VectorXd& state, Rng& rng, const ActionMap& map = nullptr);

}  // namespace boxreach
