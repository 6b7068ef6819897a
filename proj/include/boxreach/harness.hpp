#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "boxreach/ape2.hpp"
#include "boxreach/demonstrations.hpp"
#include "boxreach/ed2.hpp"
#include "boxreach/environment.hpp"
#include "json.hpp"

namespace boxreach {

enum class Variant { ddpg, ape2, ape2_bc, ape2_dc_ed2, ape2_dc_file };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& name);
bool uses_expert_memory(Variant v);

/// ddpg: one critic, no candidates, no immediate return. Others unchanged.
Ape2Config agent_config_for(Variant v, Ape2Config base);

struct Ed2Settings {
  DemoConfig demos;
  int diffusion_steps = 80;  // N_D
  int embedding = 16;
  std::vector<int> hidden{256, 256};
  DenoiserOutput output = DenoiserOutput::sample;
  double data_std = 0.5;
  Ed2TrainConfig train;
  int generated = 800;
  BcConfig bc;
  double residual_weight = 0.1;   // phi
  std::filesystem::path expert_file;  // ape2+dc-file
  std::filesystem::path demo_file;    // optional pre-recorded demonstrations
};

struct RunConfig {
  std::filesystem::path scene_path;
  Variant variant = Variant::ape2;
  Ape2Config agent;
  std::vector<std::uint64_t> seeds{0};
  int episodes = 1000;
  std::filesystem::path output_dir = "runs";
  int checkpoint_every = 0;  // episodes; 0 = only at the end
  int window = 250;
  /// Success when D holds at any step instead of at the final step.
  bool success_any_step = false;
  Ed2Settings ed2;
};

/// Reads a run config. Relative paths resolve against `base_dir`. The
/// BOXREACH_OUTPUT_DIR environment variable overrides output_dir.
RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

struct EpisodeRecord {
  int episode = 0;  // 1-based
  double total_reward = 0.0;
  bool success = false;
  double final_position_error = 0.0;
  double final_orientation_error = 0.0;
  int steps = 0;
  double step_micros = 0.0;
};

/// c / (b - a + 1) * 100 for consecutive windows of `window` episodes; a
/// trailing partial window is reported over its own length.
std::vector<double> windowed_success(const std::vector<EpisodeRecord>& records, int window);
double success_rate(const std::vector<EpisodeRecord>& records, int first, int last);

/// Population standard deviation of episode rewards.
double reward_fluctuation(const std::vector<EpisodeRecord>& records);

struct Spread {
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
};
Spread spread_of(const std::vector<double>& values);
nlohmann::json to_json(const Spread& s);

/// Element-wise mean/min/max across seeds.
std::vector<Spread> aggregate(const std::vector<std::vector<double>>& per_seed);

void write_episodes_csv(std::ostream& out, const std::vector<EpisodeRecord>& records);
std::vector<EpisodeRecord> read_episodes_csv(std::istream& in);

/// Expert data prepared before training.
struct ExpertSetup {
  ReplayMemory memory{1};
  std::optional<Network> bc;
  double acceptance_rate = 0.0;
  int demonstrations = 0;
  std::vector<double> ed2_loss;
};

/// Demonstrations -> ED2 training -> verified generation -> EM, plus BC when
/// the variant needs it. For ape2+dc-file the EM is read from disk.
ExpertSetup prepare_expert(const Scene& scene, const RunConfig& config, Rng& rng);

struct TrainingResult {
  std::vector<EpisodeRecord> episodes;
  Ape2Agent agent;
};

using EpisodeCallback = std::function<void(const EpisodeRecord&, const Ape2Agent&)>;

/// Training loop for one seed.
TrainingResult train_seed(const Scene& scene, const RunConfig& config, std::uint64_t seed,
                          const ExpertSetup* expert, const EpisodeCallback& on_episode = nullptr);

/// All seeds; writes per-seed CSVs, checkpoints, reward curves and summary.json.
nlohmann::json run_training(const RunConfig& config);

struct Rollout {
  std::vector<JointConfig> configs;
  bool reached = false;  // D held at the last configuration
  double planning_seconds = 0.0;
};

/// Greedy policy rollout until D holds or max_steps. `bc` enables the hybrid
/// policy with the given residual weight and base-step count.
Rollout rollout(const Scene& scene, const Ape2Agent& agent, const JointConfig& start,
                const GoalPose& goal, const Network* bc = nullptr, double residual_weight = 0.1,
                int base_steps = 80);

struct TrialResult {
  bool success = false;
  double trajectory_length = 0.0;
  double min_clearance = 0.0;
  int steps = 0;
};

struct EvaluationReport {
  std::vector<TrialResult> trials;
  double success_rate = 0.0;  // percent
  Spread trajectory_length;
  Spread min_clearance;
};

nlohmann::json to_json(const EvaluationReport& r);

EvaluationReport evaluate_policy(const Scene& scene, const Ape2Agent& agent, int trials, Rng& rng,
                                 const Network* bc = nullptr);
EvaluationReport evaluate_goals(const Scene& scene, const Ape2Agent& agent,
                                const std::vector<GoalPose>& goals, const Network* bc = nullptr);

/// Throws std::runtime_error when the rollout fails verification; nothing is
/// written in that case.
nlohmann::json export_trajectory(const Scene& scene, const Ape2Agent& agent, const JointConfig& start,
                                 const GoalPose& goal, const std::filesystem::path& csv_path);

struct BenchReport {
  int steps = 0;
  Spread step_micros;
  double per_300_steps_seconds = 0.0;
};

/// Times observe + APE2 action selection + step on the scene with an
/// untrained agent built from `agent_config`.
BenchReport bench_reward(const Scene& scene, int n_steps, const Ape2Config& agent_config,
                         std::uint64_t seed = 0);

Ape2Agent load_agent(const std::filesystem::path& path);
void save_agent(const std::filesystem::path& path, const Ape2Agent& agent);

}  // namespace boxreach
