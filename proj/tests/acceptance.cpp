// End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
// exits non-zero when any of them fails. Training criteria take a while on a
// single core; seeds run concurrently when more cores are available.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "boxreach/ape2.hpp"
#include "boxreach/approximator.hpp"
#include "boxreach/ed2.hpp"
#include "boxreach/environment.hpp"
#include "boxreach/geometry.hpp"
#include "boxreach/harness.hpp"
#include "boxreach/json_io.hpp"
#include "boxreach/kinematics.hpp"
#include "boxreach/replay.hpp"
#include "oracles.hpp"

using namespace boxreach;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

const fs::path kConfig = BOXREACH_TEST_CONFIG;
const std::vector<std::uint64_t> kSeeds{0, 1, 2, 3};

int failures = 0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

void report(int id, const std::string& name, const std::function<Outcome()>& body) {
  const auto start = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  if (!o.pass) ++failures;
  std::printf("%s %d %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str(), secs);
  std::fflush(stdout);
}

template <typename... Args>
std::string fmt(const char* f, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void progress(const std::string& msg) {
  std::fprintf(stderr, "  .. %s\n", msg.c_str());
  std::fflush(stderr);
}

// Runs body(seed) for every seed, concurrently when cores allow.
template <typename T>
std::vector<T> per_seed(const std::function<T(std::uint64_t)>& body) {
  std::vector<T> out;
  if (std::thread::hardware_concurrency() > 1) {
    std::vector<std::future<T>> jobs;
    for (auto s : kSeeds) jobs.push_back(std::async(std::launch::async, body, s));
    for (auto& j : jobs) out.push_back(j.get());
  } else {
    for (auto s : kSeeds) out.push_back(body(s));
  }
  return out;
}

// ---------------------------------------------------------------- geometry

Aabb random_box(Rng& rng) {
  Vec3 a(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
  Vec3 size(uniform(rng, 0.05, 1.0), uniform(rng, 0.05, 1.0), uniform(rng, 0.05, 1.0));
  return {a, a + size, std::nullopt};
}

// Endpoints drawn from the box grown by its own size on every side, so
// roughly half the pairs meet.
Segment random_segment(Rng& rng, const Aabb& b) {
  const Vec3 size = b.max - b.min;
  Segment s;
  for (int i = 0; i < 3; ++i) {
    s.start[i] = uniform(rng, b.min[i] - size[i], b.max[i] + size[i]);
    s.end[i] = uniform(rng, b.min[i] - size[i], b.max[i] + size[i]);
  }
  return s;
}

// Signed depth of a point inside the box: positive inside, negative outside
// along the worst axis. Concave along a line, so a ternary search finds the
// segment's deepest point.
double depth(const Vec3& p, const Aabb& b) {
  double d = 1e300;
  for (int i = 0; i < 3; ++i) d = std::min({d, p[i] - b.min[i], b.max[i] - p[i]});
  return d;
}

double deepest(const Segment& s, const Aabb& b) {
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 200; ++it) {
    const double m1 = lo + (hi - lo) / 3, m2 = hi - (hi - lo) / 3;
    if (depth(s.point_at(m1), b) < depth(s.point_at(m2), b)) {
      lo = m1;
    } else {
      hi = m2;
    }
  }
  return std::max({depth(s.point_at(0.5 * (lo + hi)), b), depth(s.start, b), depth(s.end, b)});
}

Outcome geometry_oracle() {
  Rng rng(101);
  const int pairs = 10000, samples = 100000;
  int hits = 0, tangent = 0, bad_overlap = 0, bad_hit = 0;
  double worst = 0.0;
  for (int i = 0; i < pairs; ++i) {
    const Aabb b = random_box(rng);
    const Segment s = random_segment(rng, b);
    const auto mc = oracle::sample_overlap(s, b, samples);
    const double len = s.length();
    const double err = std::abs(overlap_length(s, b) - mc.length);
    worst = std::max(worst, err / len);
    if (err > 1e-3 * len) ++bad_overlap;

    const double d = deepest(s, b);
    const bool member = mc.hit || d >= 0.0;
    const bool lib = segment_intersects_box(s, b);
    hits += lib ? 1 : 0;
    if (lib != member) {
      if (std::abs(d) <= 1e-9) {
        ++tangent;
      } else {
        ++bad_hit;
      }
    }
  }
  return {bad_overlap == 0 && bad_hit == 0,
          fmt("%d pairs, %d intersecting, worst overlap error %.2e |seg|, %d overlap misses, %d membership "
              "mismatches, %d near-tangent",
              pairs, hits, worst, bad_overlap, bad_hit, tangent)};
}

// ---------------------------------------------------------------- gradients

Outcome gradient_check() {
  Rng rng(202);
  const int state = StateVector::flat_size(3), action = 3;
  const int traj = 10 * 3, embed = 8;
  double worst = 0.0;
  int compared = 0, skipped = 0;
  for (int n = 0; n < 100; ++n) {
    std::vector<int> hidden;
    const int depth_n = 1 + static_cast<int>(rng() % 2);
    for (int i = 0; i < depth_n; ++i) hidden.push_back(8 + static_cast<int>(rng() % 25));
    Network net;
    int in = 0;
    switch (n % 3) {
      case 0: net = make_mlp(in = state, hidden, action, Activation::tanh, rng); break;
      case 1: net = make_mlp(in = state + action, hidden, 1, Activation::identity, rng); break;
      default: net = make_mlp(in = traj + embed, hidden, traj, Activation::identity, rng); break;
    }
    for (auto& l : net.layers) l.bias = Eigen::VectorXd::Random(l.bias.size()) * 0.2;
    const Eigen::VectorXd x = Eigen::VectorXd::Random(in);
    const Eigen::VectorXd u = Eigen::VectorXd::Random(net.layers.back().bias.size());
    const auto check = oracle::check_network_gradient(net, x, u);
    worst = std::max(worst, check.max_relative_error);
    compared += check.compared;
    skipped += check.skipped;
  }
  return {worst < 1e-4, fmt("100 nets (actor, critic, denoiser shapes), %d derivatives, max rel error %.2e, %d "
                            "skipped at ReLU kinks",
                            compared, worst, skipped)};
}

// ---------------------------------------------------------------- kinematics

double orthonormality_error(const Mat3& r) {
  return (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff();
}

JointConfig random_q(const ManipulatorModel& m, Rng& rng) {
  JointConfig q(m.dof());
  for (int i = 0; i < m.dof(); ++i) q[i] = uniform(rng, m.joint_limits[i].min, m.joint_limits[i].max);
  return q;
}

Outcome kinematics_check() {
  Rng rng(303);
  const double a1 = 0.7, a2 = 0.45;
  const ManipulatorModel arm = planar_arm({a1, a2}, 0.05, M_PI);
  double pos = 0.0, rot = 0.0, ortho = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const JointConfig q = random_q(arm, rng);
    const RigidTransform tcp = tcp_pose(arm, q);
    const Vec3 expect(a1 * std::cos(q[0]) + a2 * std::cos(q[0] + q[1]),
                      a1 * std::sin(q[0]) + a2 * std::sin(q[0] + q[1]), 0.0);
    const double phi = q[0] + q[1];
    Mat3 rz;
    rz << std::cos(phi), -std::sin(phi), 0, std::sin(phi), std::cos(phi), 0, 0, 0, 1;
    pos = std::max(pos, (tcp.translation - expect).cwiseAbs().maxCoeff());
    rot = std::max(rot, (tcp.rotation - rz).cwiseAbs().maxCoeff());
  }
  const std::vector<ManipulatorModel> models{
      arm, load_scene(kConfig / "desk_4box.json").model,
      manipulator_from_json(read_json_file(kConfig / "panda_7dof.json"))};
  for (const auto& m : models) {
    for (int i = 0; i < 1000; ++i) {
      for (const auto& f : all_frames(m, random_q(m, rng))) ortho = std::max(ortho, orthonormality_error(f.rotation));
    }
  }
  return {pos < 1e-9 && rot < 1e-9 && ortho < 1e-9,
          fmt("2R closed form: position %.2e, rotation %.2e; orthonormality over 3 arms %.2e", pos, rot, ortho)};
}

// ---------------------------------------------------------------- reward

bool same_step(const StepResult& a, const StepResult& b) {
  return a.q == b.q && a.state.flatten() == b.state.flatten() && a.reward == b.reward && a.done == b.done;
}

Outcome reward_check() {
  Rng rng(404);
  double lo = 0.0, hi = -1.0;
  int touching = 0;
  for (const char* name : {"desk_4box.json", "desk_16box.json"}) {
    const Scene scene = load_scene(kConfig / name);
    for (int i = 0; i < 5000; ++i) {
      const double r = uoar_reward(scene, random_q(scene.model, rng));
      lo = std::min(lo, r);
      hi = std::max(hi, r);
      touching += r < 0.0 ? 1 : 0;
    }
  }
  const bool range_ok = lo >= -1.0 && hi <= 0.0;

  const Scene scene = load_scene(kConfig / "desk_4box.json");
  const Scene copy = scene;
  int impure = 0;
  for (int i = 0; i < 1000; ++i) {
    const JointConfig q = random_q(scene.model, rng);
    const Eigen::VectorXd dq = Eigen::VectorXd::Random(scene.dof()) * 2 * scene.dq_max;
    const GoalPose goal = sample_goal(scene, rng);
    const JointConfig q_before = q;
    const StepResult a = step(scene, q, dq, goal, i % scene.max_steps);
    const StepResult b = step(copy, q, dq, goal, i % scene.max_steps);
    const StepResult c = step(scene, q, dq, goal, i % scene.max_steps);
    if (!same_step(a, b) || !same_step(a, c) || q != q_before) ++impure;
  }
  return {range_ok && impure == 0,
          fmt("uoar over 10^4 configs in [%.4f, %.4f] (%d in contact); %d of 1000 step calls not bitwise "
              "repeatable",
              lo, hi, touching, impure)};
}

// ---------------------------------------------------------------- batch split

Outcome batch_split_check() {
  int checked = 0, bad = 0;
  for (int b : {1, 16, 64, 256}) {
    for (long ramp : {1L, 7L, 2000L}) {
      for (int max : {0, 1, 16, 64}) {
        if (max > b) continue;
        for (long t : {0L, 1L, ramp - 1, ramp, 10 * ramp, 1000000000L}) {
          const BatchSplit s = batch_split(t, b, ramp, max, 1000000, 1000000);
          const long expect = std::clamp(t / ramp, 0L, static_cast<long>(max));
          ++checked;
          if (s.total() != b || s.from_expert != expect || s.from_interaction != b - expect) ++bad;
        }
      }
    }
  }
  return {bad == 0, fmt("%d (t, B, T_B, max) combinations, %d wrong", checked, bad)};
}

// ---------------------------------------------------------------- timing

Outcome timing_check(const Ape2Config& agent) {
  std::vector<double> ms;
  for (const char* name : {"desk_4box.json", "desk_8box.json", "desk_16box.json"}) {
    const Scene scene = load_scene(kConfig / name);
    // Best of three runs damps scheduler noise.
    double best = 1e300;
    for (int rep = 0; rep < 3; ++rep) best = std::min(best, bench_reward(scene, 1000, agent).step_micros.mean);
    ms.push_back(best * 1e-3);
  }
  const double r8 = ms[1] / ms[0], r16 = ms[2] / ms[0];
  return {ms[0] < 10.0 && r8 <= 1.25 && r16 <= 1.25,
          fmt("per step %.3f / %.3f / %.3f ms for 4 / 8 / 16 boxes, ratios %.3f and %.3f", ms[0], ms[1], ms[2],
              r8, r16)};
}

// ---------------------------------------------------------------- hybrid evaluation

Outcome hybrid_check(const Ape2Config& base) {
  const Scene scene = load_scene(kConfig / "desk_4box.json");
  Rng rng(505);
  Ape2Agent agent(base, StateVector::flat_size(scene.dof()), scene.dof(), rng);
  const long T = base.blend_horizon;
  double limit_err = 0.0;
  int states = 0, moved = 0;
  for (int i = 0; i < 50; ++i) {
    EpisodeCursor cursor{random_q(scene.model, rng), sample_goal(scene, rng), 0};
    const Eigen::VectorXd s = observe(scene, cursor.q, cursor.goal).flatten();
    auto candidates = explore_candidates(agent.raw_action(s), base.noise_std, base.repeats, rng);
    for (long tc : {0L, T, 10 * T}) {
      agent.set_optimization_count(tc);
      const Selection sel = select_from_candidates(agent, scene, cursor, s, candidates);
      for (std::size_t c = 0; c < candidates.size(); ++c) {
        const double expect = tc == 0 ? immediate_return(scene, agent, cursor, candidates[c], base.return_horizon)
                                      : agent.q_ltr(s, candidates[c]);
        limit_err = std::max(limit_err, std::abs(sel.values[c] - expect));
      }
    }

    // Critic order must not matter.
    agent.set_optimization_count(T / 2);
    const Selection before = select_from_candidates(agent, scene, cursor, s, candidates);
    std::vector<Network> saved = agent.mutable_critics();
    std::shuffle(agent.mutable_critics().begin(), agent.mutable_critics().end(), rng);
    const Selection after = select_from_candidates(agent, scene, cursor, s, candidates);
    agent.mutable_critics() = saved;
    ++states;
    bool same = before.index == after.index;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      same = same && std::abs(before.values[c] - after.values[c]) <= 1e-12 * (1 + std::abs(before.values[c]));
    }
    moved += same ? 0 : 1;
  }
  return {limit_err <= 1e-12 && moved == 0,
          fmt("max |V - limit| %.2e over %d states; %d selections changed under critic permutation", limit_err,
              states, moved)};
}

// ---------------------------------------------------------------- diffusion statistics

struct NoiseStats {
  int checks = 0;
  int outside = 0;
};

NoiseStats forward_noise_stats() {
  NoiseStats out;
  Rng rng(606);
  const NoiseSchedule s = make_schedule(80);
  const Eigen::VectorXd tau0 = Eigen::Vector3d(0.6, -0.3, 0.05);
  const int n = 10000;
  for (int t : {1, 40, 80}) {
    Eigen::MatrixXd draws(3, n);
    for (int i = 0; i < n; ++i) draws.col(i) = forward_noise(tau0, t, standard_normal(rng, 3), s);
    const double ab = s.alpha_bar[t], var = 1.0 - ab;
    for (int k = 0; k < 3; ++k) {
      const Eigen::ArrayXd row = draws.row(k).transpose().array();
      const double mean = row.mean();
      const double sample_var = (row - mean).square().sum() / (n - 1);
      const double se_mean = std::sqrt(var / n);
      const double se_var = var * std::sqrt(2.0 / (n - 1));
      out.checks += 2;
      out.outside += std::abs(mean - std::sqrt(ab) * tau0[k]) > 3 * se_mean ? 1 : 0;
      out.outside += std::abs(sample_var - var) > 3 * se_var ? 1 : 0;
    }
  }
  return out;
}

struct ExpertCheck {
  double first = 0.0;  // mean loss, first 500 iterations
  double last = 0.0;   // mean loss, last 500 iterations
  double acceptance = 0.0;
  std::size_t transitions = 0;
  std::size_t replay_failures = 0;
};

ExpertCheck check_expert(const Scene& scene, const ExpertSetup& e) {
  ExpertCheck c;
  const auto& loss = e.ed2_loss;
  const std::size_t w = std::min<std::size_t>(500, loss.size());
  c.first = std::accumulate(loss.begin(), loss.begin() + w, 0.0) / w;
  c.last = std::accumulate(loss.end() - w, loss.end(), 0.0) / w;
  c.acceptance = e.acceptance_rate;
  c.transitions = e.memory.size();
  const int dof = scene.dof();
  for (std::size_t i = 0; i < e.memory.size(); ++i) {
    const Transition& t = e.memory.at(i);
    StateVector s;
    s.q = t.state.head(dof);
    GoalPose goal{t.state.segment<3>(dof + 6), rotation_from_euler_zyx(t.state.segment<3>(dof + 9))};
    const StepResult r = step(scene, s.q, t.action * scene.dq_max, goal, 0);
    const bool ok = std::abs(r.reward - t.reward) <= 1e-12 && uoar_reward(scene, s.q) == 0.0 &&
                    uoar_reward(scene, r.q) == 0.0 &&
                    (r.state.flatten() - t.next_state).cwiseAbs().maxCoeff() <= 1e-12;
    c.replay_failures += ok ? 0 : 1;
  }
  return c;
}

// ---------------------------------------------------------------- training

struct SeedRun {
  std::vector<EpisodeRecord> episodes;
  ExpertCheck expert;
};

SeedRun train(const RunConfig& base, Variant v, int episodes, std::uint64_t seed, const fs::path& out) {
  RunConfig cfg = base;
  cfg.variant = v;
  cfg.episodes = episodes;
  const Scene scene = load_scene(cfg.scene_path);
  SeedRun run;
  ExpertSetup expert;
  if (uses_expert_memory(v)) {
    // Same derivation as the CLI so runs are comparable.
    Rng expert_rng(seed ^ 0x9e3779b97f4a7c15ULL);
    expert = prepare_expert(scene, cfg, expert_rng);
    run.expert = check_expert(scene, expert);
    progress(fmt("%s seed %d: ED2 loss %.3f -> %.3f, acceptance %.1f%%", to_string(v).c_str(), int(seed),
                 run.expert.first, run.expert.last, 100 * run.expert.acceptance));
  }
  const auto start = Clock::now();
  TrainingResult r = train_seed(scene, cfg, seed, &expert, [&](const EpisodeRecord& rec, const Ape2Agent&) {
    if (rec.episode % 250 == 0) {
      const double secs = std::chrono::duration<double>(Clock::now() - start).count();
      progress(fmt("%s seed %d: episode %d, %.0fs", to_string(v).c_str(), int(seed), rec.episode, secs));
    }
  });
  run.episodes = std::move(r.episodes);
  const fs::path dir = out / to_string(v) / ("seed_" + std::to_string(seed));
  fs::create_directories(dir);
  std::ofstream csv(dir / "episodes.csv");
  write_episodes_csv(csv, run.episodes);
  return run;
}

std::string list(const std::vector<double>& v) {
  std::ostringstream ss;
  for (std::size_t i = 0; i < v.size(); ++i) ss << (i ? " " : "") << fmt("%.1f", v[i]);
  return ss.str();
}

}  // namespace

int main() {
  const RunConfig base = load_run_config(kConfig / "run_ape2.json");
  const fs::path out = fs::current_path() / "acceptance_runs";
  const auto start = Clock::now();

  report(1, "geometry oracle equivalence", geometry_oracle);
  report(2, "gradient correctness", gradient_check);
  report(3, "kinematics", kinematics_check);
  report(4, "reward range and step purity", reward_check);
  report(7, "replay schedule arithmetic", batch_split_check);
  report(9, "reward computation timing", [&] { return timing_check(base.agent); });
  report(10, "hybrid evaluation limits", [&] { return hybrid_check(base.agent); });

  std::vector<SeedRun> dc, ape, ddpg;
  report(8, "diffusion statistics", [&] {
    const NoiseStats ns = forward_noise_stats();
    dc = per_seed<SeedRun>([&](std::uint64_t s) { return train(base, Variant::ape2_dc_ed2, 250, s, out); });
    bool halved = true;
    std::size_t transitions = 0, failed = 0;
    std::string losses;
    for (const auto& r : dc) {
      halved = halved && r.expert.last < 0.5 * r.expert.first;
      transitions += r.expert.transitions;
      failed += r.expert.replay_failures;
      losses += fmt(" %.3f->%.3f", r.expert.first, r.expert.last);
    }
    return Outcome{ns.outside == 0 && halved && failed == 0 && transitions > 0,
                   fmt("forward noise %d/%d moments outside 3 SE; ED2 loss (first/last 500 mean)%s; %zu/%zu EM "
                       "transitions fail replay",
                       ns.outside, ns.checks, losses.c_str(), failed, transitions)};
  });

  report(5, "desk-scale training", [&] {
    ape = per_seed<SeedRun>([&](std::uint64_t s) { return train(base, Variant::ape2, 1000, s, out); });
    ddpg = per_seed<SeedRun>([&](std::uint64_t s) { return train(base, Variant::ddpg, 500, s, out); });
    int good = 0;
    bool beats = true;
    std::vector<double> late, early_ape, early_ddpg;
    for (std::size_t i = 0; i < kSeeds.size(); ++i) {
      late.push_back(success_rate(ape[i].episodes, 751, 1000));
      early_ape.push_back(success_rate(ape[i].episodes, 1, 500));
      early_ddpg.push_back(success_rate(ddpg[i].episodes, 1, 500));
      good += late.back() >= 95.0 ? 1 : 0;
      beats = beats && early_ape.back() > early_ddpg.back();
    }
    return Outcome{good >= 3 && beats,
                   fmt("APE2 751-1000 success %% [%s], %d seeds >= 95; 1-500 APE2 [%s] vs ddpg [%s]",
                       list(late).c_str(), good, list(early_ape).c_str(), list(early_ddpg).c_str())};
  });

  report(6, "DC-ED2 acceleration", [&] {
    if (dc.size() != kSeeds.size() || ape.size() != kSeeds.size()) {
      return Outcome{false, "training runs missing"};
    }
    std::vector<double> with, without;
    for (std::size_t i = 0; i < kSeeds.size(); ++i) {
      with.push_back(success_rate(dc[i].episodes, 1, 250));
      without.push_back(success_rate(ape[i].episodes, 1, 250));
    }
    const double a = std::accumulate(with.begin(), with.end(), 0.0) / with.size();
    const double b = std::accumulate(without.begin(), without.end(), 0.0) / without.size();
    return Outcome{a >= 1.2 * b, fmt("1-250 success %%: DC-ED2 [%s] mean %.1f, APE2 [%s] mean %.1f, ratio %.2f",
                                     list(with).c_str(), a, list(without).c_str(), b, b > 0 ? a / b : INFINITY)};
  });

  const double mins = std::chrono::duration<double>(Clock::now() - start).count() / 60.0;
  std::printf("acceptance: %d of 10 criteria failed, %.1f min total\n", failures, mins);
  return failures ? 1 : 0;
}
