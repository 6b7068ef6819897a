#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "boxreach/demonstrations.hpp"
#include "boxreach/ed2.hpp"
#include "boxreach/errors.hpp"
#include "boxreach/harness.hpp"
#include "boxreach/json_io.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace boxreach;

namespace {

int fail(const std::string& kind, const std::string& message, int code,
         const std::string& path = {}) {
  json err = {{"error", kind}, {"message", message}};
  if (!path.empty()) err["path"] = path;
  std::cerr << err.dump() << "\n";
  return code;
}

GoalPose make_goal(const std::vector<double>& position, const std::vector<double>& euler) {
  if (position.size() != 3) throw ConfigError("goal", "expected x y z");
  if (euler.size() != 3) throw ConfigError("goal-zyx", "expected yaw pitch roll");
  GoalPose g;
  g.position = Vec3(position[0], position[1], position[2]);
  g.rotation = rotation_from_euler_zyx(Vec3(euler[0], euler[1], euler[2]));
  return g;
}

JointConfig to_config(const std::vector<double>& values) {
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

std::optional<Network> load_bc(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return network_from_json(read_json_file(path));
}

json denoiser_to_json(const Denoiser& d, int steps, const ManipulatorModel& model) {
  return {{"format", "boxreach-denoiser"},
          {"version", 1},
          {"trajectory_size", d.trajectory_size},
          {"embedding_size", d.embedding_size},
          {"output", to_string(d.output)},
          {"data_std", d.data_std},
          {"diffusion_steps", steps},
          {"dof", model.dof()},
          {"network", to_json(d.net)}};
}

Denoiser denoiser_from_json(const json& j, int& steps) {
  try {
    if (j.at("format") != "boxreach-denoiser") throw CheckpointError("not a denoiser file");
    Denoiser d;
    d.trajectory_size = j.at("trajectory_size").get<int>();
    d.embedding_size = j.at("embedding_size").get<int>();
    d.output = denoiser_output_from_string(j.value("output", "noise"));
    d.data_std = j.value("data_std", 0.5);
    d.net = network_from_json(j.at("network"));
    steps = j.at("diffusion_steps").get<int>();
    return d;
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("malformed denoiser file: ") + e.what());
  }
}

void print(const json& j) { std::cout << j.dump(1) << "\n"; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"boxreach: collision-free reaching with box obstacles"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "Train one variant over a list of seeds");
  std::string train_config;
  std::vector<std::uint64_t> train_seeds;
  std::string train_output;
  int train_episodes = 0;
  std::string train_variant;
  train->add_option("-c,--config", train_config, "Run config JSON")->required();
  train->add_option("--seeds", train_seeds, "Override seed list")->delimiter(',');
  train->add_option("-o,--output-dir", train_output, "Override output directory");
  train->add_option("--episodes", train_episodes, "Override episode budget");
  train->add_option("--variant", train_variant, "Override variant");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a checkpoint on random goals");
  std::string eval_checkpoint, eval_scene, eval_bc, eval_output;
  int eval_trials = 50;
  std::uint64_t eval_seed = 0;
  evaluate->add_option("--checkpoint", eval_checkpoint)->required();
  evaluate->add_option("--scene", eval_scene)->required();
  evaluate->add_option("--trials", eval_trials);
  evaluate->add_option("--seed", eval_seed);
  evaluate->add_option("--bc", eval_bc, "Behavior-cloning policy for the hybrid policy");
  evaluate->add_option("-o,--output", eval_output, "Write the report JSON here");

  // export / replan share most options
  std::string plan_checkpoint, plan_scene, plan_output;
  std::vector<double> plan_goal, plan_euler{0.0, 0.0, 0.0}, plan_q;
  auto* exp = app.add_subcommand("export", "Plan from home to a goal and write the joint CSV");
  auto* replan = app.add_subcommand("replan", "Plan from a given configuration to a new goal");
  for (auto* sub : {exp, replan}) {
    sub->add_option("--checkpoint", plan_checkpoint)->required();
    sub->add_option("--scene", plan_scene)->required();
    sub->add_option("--goal", plan_goal, "x y z")->expected(3)->required();
    sub->add_option("--goal-zyx", plan_euler, "yaw pitch roll")->expected(3);
    sub->add_option("-o,--output", plan_output, "CSV path")->required();
  }
  replan->add_option("--q", plan_q, "Current joint configuration")->expected(1, 64)->required();

  // bench
  auto* bench = app.add_subcommand("bench", "Time full agent-environment interaction steps");
  std::vector<std::string> bench_scenes;
  int bench_steps = 3000;
  std::string bench_config;
  bench->add_option("--scene", bench_scenes, "Scene JSON (repeatable)")->required();
  bench->add_option("--steps", bench_steps);
  bench->add_option("-c,--config", bench_config, "Run config supplying agent settings");

  // ed2-train
  auto* ed2_train = app.add_subcommand("ed2-train", "Script demonstrations and train the trajectory model");
  std::string ed2_config, ed2_output;
  std::uint64_t ed2_seed = 0;
  ed2_train->add_option("-c,--config", ed2_config)->required();
  ed2_train->add_option("-o,--output-dir", ed2_output)->required();
  ed2_train->add_option("--seed", ed2_seed);

  // ed2-sample
  auto* ed2_sample = app.add_subcommand("ed2-sample", "Generate verified expert transitions");
  std::string sample_config, sample_model, sample_output;
  int sample_count = 0;
  std::uint64_t sample_seed = 0;
  ed2_sample->add_option("-c,--config", sample_config)->required();
  ed2_sample->add_option("--model", sample_model)->required();
  ed2_sample->add_option("--count", sample_count, "Trajectories (default from config)");
  ed2_sample->add_option("--seed", sample_seed);
  ed2_sample->add_option("-o,--output", sample_output, "Transitions CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 2);
  }

  try {
    if (*train) {
      RunConfig config = load_run_config(train_config);
      if (!train_seeds.empty()) config.seeds = train_seeds;
      if (!train_output.empty()) config.output_dir = train_output;
      if (train_episodes > 0) config.episodes = train_episodes;
      if (!train_variant.empty()) config.variant = variant_from_string(train_variant);
      json summary = run_training(config);
      print({{"output_dir", (config.output_dir / to_string(config.variant)).string()},
             {"windowed_success", summary["windowed_success"]},
             {"reward_fluctuation", summary["reward_fluctuation"]}});
    } else if (*evaluate) {
      const Scene scene = load_scene(eval_scene);
      const Ape2Agent agent = load_agent(eval_checkpoint);
      const auto bc = load_bc(eval_bc);
      Rng rng(eval_seed);
      json report = to_json(evaluate_policy(scene, agent, eval_trials, rng, bc ? &*bc : nullptr));
      if (!eval_output.empty()) write_json_file(eval_output, report);
      report.erase("trials");
      print(report);
    } else if (*exp || *replan) {
      const Scene scene = load_scene(plan_scene);
      const Ape2Agent agent = load_agent(plan_checkpoint);
      const GoalPose goal = make_goal(plan_goal, plan_euler);
      const JointConfig start = *replan ? to_config(plan_q) : scene.home;
      json summary = export_trajectory(scene, agent, start, goal, plan_output);
      fs::path summary_path = fs::path(plan_output).replace_extension(".json");
      write_json_file(summary_path, summary);
      print(summary);
    } else if (*bench) {
      Ape2Config agent_config;
      if (!bench_config.empty()) agent_config = load_run_config(bench_config).agent;
      json out = json::array();
      for (const auto& path : bench_scenes) {
        const Scene scene = load_scene(path);
        BenchReport r = bench_reward(scene, bench_steps, agent_config);
        out.push_back({{"scene", path},
                       {"boxes", scene.raw_boxes.size()},
                       {"steps", r.steps},
                       {"step_micros", to_json(r.step_micros)},
                       {"per_300_steps_seconds", r.per_300_steps_seconds}});
      }
      print(out);
    } else if (*ed2_train) {
      const RunConfig config = load_run_config(ed2_config);
      const Scene scene = load_scene(config.scene_path);
      const Ed2Settings& s = config.ed2;
      Rng rng(ed2_seed);
      std::vector<Demonstration> demos = s.demo_file.empty()
                                             ? scripted_demonstrations(scene, s.demos, rng)
                                             : demonstrations_from_json(read_json_file(s.demo_file));
      if (demos.empty()) throw GenerationFailure("no feasible demonstrations in the target region");
      std::vector<Eigen::VectorXd> encoded;
      for (const auto& d : demos) encoded.push_back(encode_trajectory(scene.model, d.configs));
      Denoiser model = make_denoiser(static_cast<int>(encoded.front().size()), s.embedding, s.hidden, rng, s.output, s.data_std);
      NoiseSchedule schedule = make_schedule(s.diffusion_steps);
      std::vector<double> loss = train_ed2(encoded, model, schedule, s.train, rng);
      fs::create_directories(ed2_output);
      write_json_file(fs::path(ed2_output) / "demonstrations.json", to_json(demos));
      write_json_file(fs::path(ed2_output) / "denoiser.json",
                      denoiser_to_json(model, s.diffusion_steps, scene.model));
      std::ofstream curve(fs::path(ed2_output) / "loss.csv");
      curve << "iteration,loss\n";
      for (std::size_t i = 0; i < loss.size(); ++i) curve << i + 1 << ',' << loss[i] << '\n';
      print({{"demonstrations", demos.size()},
             {"loss_first", loss.front()},
             {"loss_last", loss.back()},
             {"output_dir", ed2_output}});
    } else if (*ed2_sample) {
      const RunConfig config = load_run_config(sample_config);
      const Scene scene = load_scene(config.scene_path);
      int steps = 0;
      const Denoiser model = denoiser_from_json(read_json_file(sample_model), steps);
      if (model.trajectory_size % scene.dof() != 0) {
        throw CheckpointError("denoiser does not match the scene's degrees of freedom");
      }
      const int count = sample_count > 0 ? sample_count : config.ed2.generated;
      const std::size_t length = static_cast<std::size_t>(model.trajectory_size / scene.dof());
      Rng rng(sample_seed);
      ExpertFill fill = fill_expert_memory(scene, model, make_schedule(steps), count,
                                           static_cast<std::size_t>(count) * length, rng);
      std::ofstream out(sample_output);
      if (!out) throw std::runtime_error("cannot write " + sample_output);
      write_transitions_csv(out, fill.memory);
      print({{"accepted", fill.accepted},
             {"attempts", fill.attempts},
             {"acceptance_rate", fill.acceptance_rate()},
             {"transitions", fill.memory.size()},
             {"output", sample_output}});
    }
  } catch (const ConfigError& e) {
    return fail("config", e.what(), 2, e.path());
  } catch (const CheckpointError& e) {
    return fail("checkpoint", e.what(), 3);
  } catch (const NoDataError& e) {
    return fail("no-data", e.what(), 4);
  } catch (const GenerationFailure& e) {
    return fail("generation-failure", e.what(), 4);
  } catch (const NumericError& e) {
    return fail("numeric", e.what(), 5);
  } catch (const std::exception& e) {
    return fail("runtime", e.what(), 1);
  }
  return EXIT_SUCCESS;
}
