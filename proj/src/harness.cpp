#include "boxreach/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "boxreach/errors.hpp"
#include "boxreach/json_io.hpp"

namespace boxreach {

namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

template <typename T>
void read_field(const json& j, const char* key, T& field, const std::string& prefix) {
  if (!j.contains(key)) return;
  try {
    j.at(key).get_to(field);
  } catch (const json::exception& e) {
    throw ConfigError(prefix + key, e.what());
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

Ed2Settings ed2_settings_from_json(const json& j, const std::filesystem::path& base) {
  Ed2Settings s;
  const std::string p = "ed2.";
  read_field(j, "demo_grid", s.demos.grid, p);
  read_field(j, "trajectory_length", s.demos.length, p);
  read_field(j, "demo_restarts", s.demos.restarts, p);
  read_field(j, "via_attempts", s.demos.via_attempts, p);
  read_field(j, "diffusion_steps", s.diffusion_steps, p);
  read_field(j, "embedding", s.embedding, p);
  read_field(j, "hidden", s.hidden, p);
  read_field(j, "iterations", s.train.iterations, p);
  read_field(j, "batch", s.train.batch, p);
  read_field(j, "learning_rate", s.train.learning_rate, p);
  read_field(j, "snr_cap", s.train.snr_cap, p);
  std::string output = to_string(s.output);
  read_field(j, "output", output, p);
  s.output = denoiser_output_from_string(output);
  read_field(j, "data_std", s.data_std, p);
  read_field(j, "generated", s.generated, p);
  read_field(j, "residual_weight", s.residual_weight, p);
  if (j.contains("bc")) {
    const json& b = j.at("bc");
    read_field(b, "hidden", s.bc.hidden, "ed2.bc.");
    read_field(b, "iterations", s.bc.iterations, "ed2.bc.");
    read_field(b, "batch", s.bc.batch, "ed2.bc.");
    read_field(b, "learning_rate", s.bc.learning_rate, "ed2.bc.");
  }
  std::string file;
  read_field(j, "expert_file", file, p);
  if (!file.empty()) s.expert_file = resolve(base, file);
  file.clear();
  read_field(j, "demo_file", file, p);
  if (!file.empty()) s.demo_file = resolve(base, file);

  if (s.demos.grid < 1) throw ConfigError("ed2.demo_grid", "must be >= 1");
  if (s.demos.length < 2) throw ConfigError("ed2.trajectory_length", "must be >= 2");
  if (s.diffusion_steps < 1) throw ConfigError("ed2.diffusion_steps", "must be >= 1");
  if (!(s.data_std > 0.0)) throw ConfigError("ed2.data_std", "must be > 0");
  if (s.embedding < 2) throw ConfigError("ed2.embedding", "must be >= 2");
  if (s.train.iterations < 1) throw ConfigError("ed2.iterations", "must be >= 1");
  if (s.train.batch < 1) throw ConfigError("ed2.batch", "must be >= 1");
  if (s.generated < 1) throw ConfigError("ed2.generated", "must be >= 1");
  if (!(s.residual_weight >= 0.0)) throw ConfigError("ed2.residual_weight", "must be >= 0");
  return s;
}

json spreads_json(const std::vector<Spread>& spreads) {
  json out = json::array();
  for (const auto& s : spreads) out.push_back(to_json(s));
  return out;
}

}  // namespace

std::string to_string(Variant v) {
  switch (v) {
    case Variant::ddpg: return "ddpg-equivalent";
    case Variant::ape2: return "ape2";
    case Variant::ape2_bc: return "ape2+bc";
    case Variant::ape2_dc_ed2: return "ape2+dc-ed2";
    case Variant::ape2_dc_file: return "ape2+dc-file";
  }
  return "unknown";
}

Variant variant_from_string(const std::string& name) {
  for (Variant v : {Variant::ddpg, Variant::ape2, Variant::ape2_bc, Variant::ape2_dc_ed2,
                    Variant::ape2_dc_file}) {
    if (to_string(v) == name) return v;
  }
  throw ConfigError("variant", "unknown variant '" + name + "'");
}

bool uses_expert_memory(Variant v) {
  return v == Variant::ape2_dc_ed2 || v == Variant::ape2_dc_file;
}

Ape2Config agent_config_for(Variant v, Ape2Config base) {
  if (v == Variant::ddpg) {
    base.critics = 1;
    base.repeats = 0;
    base.immediate_return = false;
  }
  return base;
}

RunConfig run_config_from_json(const json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw ConfigError("", "run config must be an object");
  RunConfig c;
  std::string scene;
  read_field(j, "scene", scene, "");
  if (scene.empty()) throw ConfigError("scene", "missing");
  c.scene_path = resolve(base_dir, scene);
  std::string variant = to_string(c.variant);
  read_field(j, "variant", variant, "");
  c.variant = variant_from_string(variant);
  if (j.contains("agent")) c.agent = ape2_config_from_json(j.at("agent"));
  read_field(j, "seeds", c.seeds, "");
  read_field(j, "episodes", c.episodes, "");
  std::string out;
  read_field(j, "output_dir", out, "");
  if (!out.empty()) c.output_dir = resolve(base_dir, out);
  read_field(j, "checkpoint_every", c.checkpoint_every, "");
  read_field(j, "window", c.window, "");
  read_field(j, "success_any_step", c.success_any_step, "");
  if (j.contains("ed2")) c.ed2 = ed2_settings_from_json(j.at("ed2"), base_dir);

  if (const char* env = std::getenv("BOXREACH_OUTPUT_DIR"); env && *env) c.output_dir = env;

  if (c.episodes < 1) throw ConfigError("episodes", "must be >= 1");
  if (c.seeds.empty()) throw ConfigError("seeds", "must list at least one seed");
  if (c.window < 1) throw ConfigError("window", "must be >= 1");
  if (c.checkpoint_every < 0) throw ConfigError("checkpoint_every", "must be >= 0");
  if (c.variant == Variant::ape2_dc_file && c.ed2.expert_file.empty()) {
    throw ConfigError("ed2.expert_file", "required for ape2+dc-file");
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  return run_config_from_json(read_json_file(path), path.parent_path());
}

double success_rate(const std::vector<EpisodeRecord>& records, int first, int last) {
  if (first < 1 || last < first) throw std::invalid_argument("success_rate: bad interval");
  int count = 0;
  for (const auto& r : records) {
    if (r.episode >= first && r.episode <= last && r.success) ++count;
  }
  return 100.0 * count / (last - first + 1);
}

std::vector<double> windowed_success(const std::vector<EpisodeRecord>& records, int window) {
  if (window < 1) throw std::invalid_argument("windowed_success: window must be >= 1");
  std::vector<double> out;
  const int n = static_cast<int>(records.size());
  for (int a = 1; a <= n; a += window) {
    out.push_back(success_rate(records, a, std::min(a + window - 1, n)));
  }
  return out;
}

double reward_fluctuation(const std::vector<EpisodeRecord>& records) {
  if (records.empty()) return 0.0;
  double mean = 0.0;
  for (const auto& r : records) mean += r.total_reward;
  mean /= static_cast<double>(records.size());
  double var = 0.0;
  for (const auto& r : records) var += (r.total_reward - mean) * (r.total_reward - mean);
  return std::sqrt(var / static_cast<double>(records.size()));
}

Spread spread_of(const std::vector<double>& values) {
  if (values.empty()) return {};
  Spread s{0.0, values.front(), values.front()};
  for (double v : values) {
    s.mean += v;
    s.min = std::min(s.min, v);
    s.max = std::max(s.max, v);
  }
  s.mean /= static_cast<double>(values.size());
  return s;
}

json to_json(const Spread& s) { return {{"mean", s.mean}, {"min", s.min}, {"max", s.max}}; }

std::vector<Spread> aggregate(const std::vector<std::vector<double>>& per_seed) {
  std::size_t n = 0;
  for (const auto& v : per_seed) n = std::max(n, v.size());
  std::vector<Spread> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> column;
    for (const auto& v : per_seed) {
      if (i < v.size()) column.push_back(v[i]);
    }
    out.push_back(spread_of(column));
  }
  return out;
}

void write_episodes_csv(std::ostream& out, const std::vector<EpisodeRecord>& records) {
  out << "episode,total_reward,success,final_position_error,final_orientation_error,steps,"
         "step_micros\n";
  out << std::setprecision(17);
  for (const auto& r : records) {
    out << r.episode << ',' << r.total_reward << ',' << (r.success ? 1 : 0) << ','
        << r.final_position_error << ',' << r.final_orientation_error << ',' << r.steps << ','
        << r.step_micros << '\n';
  }
}

std::vector<EpisodeRecord> read_episodes_csv(std::istream& in) {
  std::vector<EpisodeRecord> records;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream row(line);
    EpisodeRecord r;
    int success = 0;
    if (!(row >> r.episode >> r.total_reward >> success >> r.final_position_error >>
          r.final_orientation_error >> r.steps >> r.step_micros)) {
      throw std::runtime_error("malformed episode row: " + line);
    }
    r.success = success != 0;
    records.push_back(r);
  }
  return records;
}

ExpertSetup prepare_expert(const Scene& scene, const RunConfig& config, Rng& rng) {
  ExpertSetup setup;
  const Ed2Settings& s = config.ed2;
  if (config.variant == Variant::ape2_dc_file) {
    std::ifstream in(s.expert_file);
    if (!in) throw ConfigError("ed2.expert_file", "cannot open " + s.expert_file.string());
    setup.memory = read_transitions_csv(in, static_cast<std::size_t>(config.agent.memory_capacity));
    if (setup.memory.empty()) throw NoDataError("expert file holds no transitions");
    setup.acceptance_rate = 1.0;
    return setup;
  }
  if (config.variant != Variant::ape2_dc_ed2 && config.variant != Variant::ape2_bc) return setup;

  std::vector<Demonstration> demos;
  if (!s.demo_file.empty()) {
    demos = demonstrations_from_json(read_json_file(s.demo_file));
  } else {
    demos = scripted_demonstrations(scene, s.demos, rng);
  }
  if (demos.empty()) throw GenerationFailure("no feasible demonstrations in the target region");
  setup.demonstrations = static_cast<int>(demos.size());

  std::vector<Eigen::VectorXd> encoded;
  for (const auto& d : demos) encoded.push_back(encode_trajectory(scene.model, d.configs));
  const int size = static_cast<int>(encoded.front().size());
  Denoiser model = make_denoiser(size, s.embedding, s.hidden, rng, s.output, s.data_std);
  NoiseSchedule schedule = make_schedule(s.diffusion_steps);
  setup.ed2_loss = train_ed2(encoded, model, schedule, s.train, rng);

  const std::size_t capacity =
      static_cast<std::size_t>(s.generated) * static_cast<std::size_t>(demos.front().configs.size());
  ExpertFill fill = fill_expert_memory(scene, model, schedule, s.generated, capacity, rng);
  setup.acceptance_rate = fill.acceptance_rate();
  setup.memory = std::move(fill.memory);
  if (config.variant == Variant::ape2_bc) setup.bc = train_bc(setup.memory, s.bc, rng).policy;
  return setup;
}

TrainingResult train_seed(const Scene& scene, const RunConfig& config, std::uint64_t seed,
                          const ExpertSetup* expert, const EpisodeCallback& on_episode) {
  Rng rng(seed);
  const Ape2Config ac = agent_config_for(config.variant, config.agent);
  const int state_size = StateVector::flat_size(scene.dof());
  TrainingResult result{{}, Ape2Agent(ac, state_size, scene.dof(), rng)};
  Ape2Agent& agent = result.agent;

  ReplayMemory interaction(static_cast<std::size_t>(ac.memory_capacity));
  const ReplayMemory no_expert(1);
  const ReplayMemory& em =
      (expert && uses_expert_memory(config.variant)) ? expert->memory : no_expert;
  if (uses_expert_memory(config.variant) && em.empty()) {
    throw NoDataError("variant " + to_string(config.variant) + " needs a filled expert memory");
  }

  const Network* bc = nullptr;
  if (config.variant == Variant::ape2_bc) {
    if (!expert || !expert->bc) throw NoDataError("ape2+bc needs a trained behavior-cloning policy");
    bc = &*expert->bc;
  }
  ActionMap map;
  if (bc) {
    const int base_steps = config.ed2.demos.length;
    const double weight = config.ed2.residual_weight;
    map = [&scene, bc, base_steps, weight](const StateVector& st, const Eigen::VectorXd& a,
                                           int step_index) {
      return Eigen::VectorXd(
          hybrid_action(*bc, st.flatten(), a, step_index, base_steps, weight) * scene.dq_max);
    };
  }

  for (int episode = 1; episode <= config.episodes; ++episode) {
    EpisodeCursor cursor{scene.home, sample_goal(scene, rng), 0};
    StateVector state = observe(scene, cursor.q, cursor.goal);
    EpisodeRecord record;
    record.episode = episode;
    bool reached_any = false;
    const auto start = Clock::now();
    for (int i = 0; i < scene.max_steps; ++i) {
      cursor.step_index = i;
      const Eigen::VectorXd s = state.flatten();
      Selection sel = select_action(agent, scene, cursor, s, rng, map);
      const Eigen::VectorXd dq = map ? map(state, sel.action, i) : scale_action(scene, sel.action);
      StepResult res = step(scene, cursor.q, dq, cursor.goal, i);
      Eigen::VectorXd next = res.state.flatten();
      interaction.push({s, sel.action, res.reward, next, res.done});
      record.total_reward += res.reward;
      reached_any = reached_any || res.state.at_goal;
      cursor.q = std::move(res.q);
      state = std::move(res.state);
      ++record.steps;

      if (interaction.size() >= static_cast<std::size_t>(ac.batch)) {
        auto batch = sample_batch(interaction, em, agent.optimization_count(), ac.batch,
                                  ac.expert_ramp, ac.expert_max, rng);
        agent.optimize(stack(batch));
      }
      if (res.done) break;
    }
    record.step_micros = record.steps ? 1e6 * seconds_since(start) / record.steps : 0.0;
    record.success = config.success_any_step ? reached_any : state.at_goal;
    record.final_position_error = state.position_error();
    record.final_orientation_error = state.orientation_error();
    result.episodes.push_back(record);
    if (on_episode) on_episode(record, agent);
  }
  return result;
}

json run_training(const RunConfig& config) {
  const Scene scene = load_scene(config.scene_path);
  const std::filesystem::path root = config.output_dir / to_string(config.variant);
  std::filesystem::create_directories(root);

  std::vector<std::vector<double>> windows;
  std::vector<double> fluctuations;
  json seeds = json::array();
  std::ofstream curves = open_output(root / "reward_curves.csv");
  curves << "variant,seed,episode,total_reward,success\n" << std::setprecision(17);

  for (std::uint64_t seed : config.seeds) {
    const std::filesystem::path dir = root / ("seed_" + std::to_string(seed));
    std::filesystem::create_directories(dir);

    ExpertSetup expert;
    json expert_info;
    if (config.variant != Variant::ape2 && config.variant != Variant::ddpg) {
      Rng expert_rng(seed ^ 0x9e3779b97f4a7c15ULL);
      expert = prepare_expert(scene, config, expert_rng);
      expert_info = {{"transitions", expert.memory.size()},
                     {"acceptance_rate", expert.acceptance_rate},
                     {"demonstrations", expert.demonstrations}};
      if (!expert.ed2_loss.empty()) {
        expert_info["ed2_loss_first"] = expert.ed2_loss.front();
        expert_info["ed2_loss_last"] = expert.ed2_loss.back();
      }
    }

    auto on_episode = [&](const EpisodeRecord& r, const Ape2Agent& agent) {
      if (config.checkpoint_every > 0 && r.episode % config.checkpoint_every == 0) {
        save_agent(dir / "checkpoints" / ("agent_ep" + std::to_string(r.episode) + ".json"), agent);
      }
    };
    TrainingResult result = train_seed(scene, config, seed, &expert, on_episode);
    save_agent(dir / "agent.json", result.agent);
    if (expert.bc) write_json_file(dir / "bc_policy.json", to_json(*expert.bc));
    {
      std::ofstream csv = open_output(dir / "episodes.csv");
      write_episodes_csv(csv, result.episodes);
    }
    for (const auto& r : result.episodes) {
      curves << to_string(config.variant) << ',' << seed << ',' << r.episode << ','
             << r.total_reward << ',' << (r.success ? 1 : 0) << '\n';
    }

    std::vector<double> w = windowed_success(result.episodes, config.window);
    const double rf = reward_fluctuation(result.episodes);
    std::vector<double> micros;
    for (const auto& r : result.episodes) micros.push_back(r.step_micros);
    json entry = {{"seed", seed},
                  {"windowed_success", w},
                  {"reward_fluctuation", rf},
                  {"step_micros", to_json(spread_of(micros))},
                  {"optimization_count", result.agent.optimization_count()}};
    if (!expert_info.is_null()) entry["expert"] = expert_info;
    seeds.push_back(entry);
    windows.push_back(std::move(w));
    fluctuations.push_back(rf);
  }

  json summary = {{"variant", to_string(config.variant)},
                  {"scene", config.scene_path.string()},
                  {"episodes", config.episodes},
                  {"window", config.window},
                  {"agent", to_json(agent_config_for(config.variant, config.agent))},
                  {"seeds", seeds},
                  {"windowed_success", spreads_json(aggregate(windows))},
                  {"reward_fluctuation", to_json(spread_of(fluctuations))}};
  write_json_file(root / "summary.json", summary);
  return summary;
}

Rollout rollout(const Scene& scene, const Ape2Agent& agent, const JointConfig& start,
                const GoalPose& goal, const Network* bc, double residual_weight, int base_steps) {
  if (agent.state_size() != StateVector::flat_size(scene.dof()) ||
      agent.action_size() != scene.dof()) {
    throw CheckpointError("checkpoint does not match the scene's degrees of freedom");
  }
  if (start.size() != scene.dof()) throw ConfigError("q", "wrong number of joints");
  if (!scene.model.within_limits(start)) throw ConfigError("q", "outside joint limits");

  const auto t0 = Clock::now();
  Rollout out;
  out.configs.push_back(start);
  StateVector state = observe(scene, start, goal);
  for (int i = 0; i < scene.max_steps && !state.at_goal; ++i) {
    Eigen::VectorXd s = state.flatten();
    Eigen::VectorXd a = agent.raw_action(s);
    if (bc) a = hybrid_action(*bc, s, a, i, base_steps, residual_weight);
    StepResult res = step(scene, out.configs.back(), a * scene.dq_max, goal, i);
    out.configs.push_back(res.q);
    state = std::move(res.state);
  }
  out.reached = state.at_goal;
  out.planning_seconds = seconds_since(t0);
  return out;
}

json to_json(const EvaluationReport& r) {
  json trials = json::array();
  for (const auto& t : r.trials) {
    trials.push_back({{"success", t.success},
                      {"trajectory_length", t.trajectory_length},
                      {"min_clearance", t.min_clearance},
                      {"steps", t.steps}});
  }
  return {{"success_rate", r.success_rate},
          {"trajectory_length", to_json(r.trajectory_length)},
          {"min_clearance", to_json(r.min_clearance)},
          {"trials", trials}};
}

EvaluationReport evaluate_goals(const Scene& scene, const Ape2Agent& agent,
                                const std::vector<GoalPose>& goals, const Network* bc) {
  EvaluationReport report;
  std::vector<double> lengths;
  std::vector<double> clearances;
  int successes = 0;
  for (const auto& goal : goals) {
    Rollout roll = rollout(scene, agent, scene.home, goal, bc);
    TrialResult t;
    t.steps = static_cast<int>(roll.configs.size()) - 1;
    t.success = roll.reached && verify_trajectory(scene, roll.configs).collision_free;
    t.trajectory_length = tcp_path_length(scene, roll.configs);
    t.min_clearance = min_clearance(scene, roll.configs);
    successes += t.success ? 1 : 0;
    lengths.push_back(t.trajectory_length);
    clearances.push_back(t.min_clearance);
    report.trials.push_back(t);
  }
  if (!goals.empty()) report.success_rate = 100.0 * successes / static_cast<double>(goals.size());
  report.trajectory_length = spread_of(lengths);
  report.min_clearance = spread_of(clearances);
  return report;
}

EvaluationReport evaluate_policy(const Scene& scene, const Ape2Agent& agent, int trials, Rng& rng,
                                 const Network* bc) {
  if (trials < 1) throw std::invalid_argument("evaluate_policy: trials must be >= 1");
  std::vector<GoalPose> goals;
  for (int i = 0; i < trials; ++i) goals.push_back(sample_goal(scene, rng));
  return evaluate_goals(scene, agent, goals, bc);
}

json export_trajectory(const Scene& scene, const Ape2Agent& agent, const JointConfig& start,
                       const GoalPose& goal, const std::filesystem::path& csv_path) {
  Rollout roll = rollout(scene, agent, start, goal);
  TrajectoryCheck check = verify_trajectory(scene, roll.configs);
  if (!check.collision_free) {
    throw std::runtime_error("planned trajectory collides with an expanded box; not exported");
  }
  {
    std::ofstream out = open_output(csv_path);
    write_trajectory_csv(out, roll.configs);
  }
  const StateVector last = observe(scene, roll.configs.back(), goal);
  return {{"csv", csv_path.string()},
          {"configurations", roll.configs.size()},
          {"reached", roll.reached},
          {"collision_free", true},
          {"final_position_error", last.position_error()},
          {"final_orientation_error", last.orientation_error()},
          {"trajectory_length", tcp_path_length(scene, roll.configs)},
          {"min_clearance", min_clearance(scene, roll.configs)},
          {"planning_seconds", roll.planning_seconds}};
}

BenchReport bench_reward(const Scene& scene, int n_steps, const Ape2Config& agent_config,
                         std::uint64_t seed) {
  if (n_steps < 300) throw std::invalid_argument("bench_reward: n_steps must be >= 300");
  Rng rng(seed);
  Ape2Agent agent(agent_config, StateVector::flat_size(scene.dof()), scene.dof(), rng);
  // Halfway through the blend so both value terms are computed.
  agent.set_optimization_count(static_cast<long>(agent_config.blend_horizon / 2));

  std::vector<double> micros;
  micros.reserve(static_cast<std::size_t>(n_steps));
  EpisodeCursor cursor{scene.home, sample_goal(scene, rng), 0};
  for (int n = 0; n < n_steps; ++n) {
    const auto t0 = Clock::now();
    StateVector state = observe(scene, cursor.q, cursor.goal);
    Selection sel = select_action(agent, scene, cursor, state.flatten(), rng);
    StepResult res = step(scene, cursor.q, scale_action(scene, sel.action), cursor.goal,
                          cursor.step_index);
    micros.push_back(1e6 * seconds_since(t0));
    cursor.q = res.q;
    if (++cursor.step_index >= scene.max_steps || res.done) {
      cursor = {scene.home, sample_goal(scene, rng), 0};
    }
  }
  BenchReport report;
  report.steps = n_steps;
  report.step_micros = spread_of(micros);
  report.per_300_steps_seconds = report.step_micros.mean * 300.0 * 1e-6;
  return report;
}

Ape2Agent load_agent(const std::filesystem::path& path) {
  json j;
  try {
    j = read_json_file(path);
  } catch (const std::exception& e) {
    throw CheckpointError(e.what());
  }
  return Ape2Agent::from_json(j);
}

void save_agent(const std::filesystem::path& path, const Ape2Agent& agent) {
  try {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    write_json_file(path, agent.to_json());
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("cannot write checkpoint: ") + e.what());
  }
}

}  // namespace boxreach
