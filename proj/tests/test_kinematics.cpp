#include <cmath>

#include <Eigen/LU>

#include "boxreach/errors.hpp"
#include "boxreach/json_io.hpp"
#include "boxreach/kinematics.hpp"
#include "boxreach/random.hpp"
#include "doctest.h"

using namespace boxreach;

namespace {

double orthonormality_error(const Mat3& r) {
  return (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff();
}

JointConfig random_q(const ManipulatorModel& m, Rng& rng) {
  JointConfig q(m.dof());
  for (int i = 0; i < m.dof(); ++i) q[i] = uniform(rng, m.joint_limits[i].min, m.joint_limits[i].max);
  return q;
}

ManipulatorModel panda() {
  return manipulator_from_json(read_json_file(std::string(BOXREACH_TEST_CONFIG) + "/panda_7dof.json"));
}

}  // namespace

TEST_CASE("dh_transform examples") {
  RigidTransform t = dh_transform(DhRow{1.0, 0.0, 0.0, 0.0}, 0.0);
  CHECK((t.rotation - Mat3::Identity()).norm() < 1e-15);
  CHECK((t.translation - Vec3(1, 0, 0)).norm() < 1e-15);

  t = dh_transform(DhRow{0.0, 0.0, 1.0, 0.0}, M_PI / 2);
  Mat3 rz;
  rz << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  CHECK((t.rotation - rz).norm() < 1e-15);
  CHECK((t.translation - Vec3(0, 0, 1)).norm() < 1e-15);

  // q_home is added to the commanded angle.
  RigidTransform a = dh_transform(DhRow{0.3, 0.2, 0.1, 0.5}, 0.25);
  RigidTransform b = dh_transform(DhRow{0.3, 0.2, 0.1, 0.0}, 0.75);
  CHECK((a.rotation - b.rotation).norm() < 1e-15);
  CHECK((a.translation - b.translation).norm() < 1e-15);

  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    DhRow row{uniform(rng, -1, 1), uniform(rng, -M_PI, M_PI), uniform(rng, -1, 1), uniform(rng, -1, 1)};
    RigidTransform r = dh_transform(row, uniform(rng, -M_PI, M_PI));
    CHECK(orthonormality_error(r.rotation) < 1e-12);
    CHECK(std::abs(r.rotation.determinant() - 1.0) < 1e-12);
  }
}

TEST_CASE("planar 2R forward kinematics") {
  ManipulatorModel m = planar_arm({1.0, 1.0}, 0.05, M_PI);
  JointConfig q(2);
  q << 0.0, 0.0;
  CHECK((tcp_pose(m, q).translation - Vec3(2, 0, 0)).norm() < 1e-15);
  CHECK((tcp_pose(m, q).rotation - Mat3::Identity()).norm() < 1e-15);
  CHECK(forward_kinematics(m, q).size() == 2);

  q << M_PI / 2, -M_PI / 2;
  CHECK((tcp_pose(m, q).translation - Vec3(1, 1, 0)).norm() < 1e-12);

  q << 0.0, 0.0;
  auto segs = link_segments(m, q);
  REQUIRE(segs.size() == 2);
  CHECK((segs[0].start - Vec3(0, 0, 0)).norm() < 1e-15);
  CHECK((segs[0].end - Vec3(1, 0, 0)).norm() < 1e-15);
  CHECK((segs[1].start - Vec3(1, 0, 0)).norm() < 1e-15);
  CHECK((segs[1].end - Vec3(2, 0, 0)).norm() < 1e-15);

  Rng rng(1);
  const double a1 = 0.7, a2 = 0.4;
  ManipulatorModel arm = planar_arm({a1, a2}, 0.05, M_PI);
  for (int i = 0; i < 1000; ++i) {
    JointConfig r = random_q(arm, rng);
    Vec3 expect(a1 * std::cos(r[0]) + a2 * std::cos(r[0] + r[1]),
                a1 * std::sin(r[0]) + a2 * std::sin(r[0] + r[1]), 0.0);
    CHECK((tcp_pose(arm, r).translation - expect).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("frame recursion and invariants") {
  Rng rng(2);
  for (const ManipulatorModel& m : {planar_arm({0.35, 0.3, 0.25}, 0.03, 2.8), panda()}) {
    const double total = [&] {
      JointConfig q0 = JointConfig::Zero(m.dof());
      double s = 0.0;
      for (const auto& seg : link_segments(m, q0)) s += seg.length();
      return s;
    }();
    for (int i = 0; i < 100; ++i) {
      JointConfig q = random_q(m, rng);
      auto frames = forward_kinematics(m, q);
      REQUIRE(static_cast<int>(frames.size()) == m.dof());
      RigidTransform acc;
      for (int k = 0; k < m.dof(); ++k) {
        acc = acc * dh_transform(m.dh[k], q[k]);
        CHECK((acc.rotation - frames[k].rotation).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((acc.translation - frames[k].translation).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(orthonormality_error(frames[k].rotation) < 1e-9);
        CHECK(std::abs(frames[k].rotation.determinant() - 1.0) < 1e-9);
      }
      RigidTransform tcp = tcp_pose(m, q);
      CHECK(orthonormality_error(tcp.rotation) < 1e-12);
      auto segs = link_segments(m, q);
      CHECK(segs.size() == m.segment_map.size());
      CHECK((segs.back().end - tcp.translation).norm() < 1e-12);
      double len = 0.0;
      for (const auto& s : segs) len += s.length();
      CHECK(std::abs(len - total) < 1e-9);

      auto again = forward_kinematics(m, q);
      CHECK(again.back().translation == frames.back().translation);
    }
  }
}

TEST_CASE("dimension mismatch") {
  ManipulatorModel m = planar_arm({1.0, 1.0}, 0.05, M_PI);
  CHECK_THROWS_AS(forward_kinematics(m, JointConfig::Zero(3)), std::invalid_argument);
}

TEST_CASE("model validation") {
  ManipulatorModel m = planar_arm({1.0, 1.0}, 0.05, M_PI);
  m.joint_limits[0] = {1.0, -1.0};
  CHECK_THROWS(m.validate());
  m = planar_arm({1.0, 1.0}, 0.05, M_PI);
  m.segment_map = {{2, 1}};
  CHECK_THROWS(m.validate());
  m.segment_map = {{0, 9}};
  CHECK_THROWS(m.validate());
  m = planar_arm({1.0, 1.0}, 0.05, M_PI);
  JointConfig q(2);
  q << 4.0, -4.0;
  CHECK(m.clamp(q) == JointConfig(Eigen::Vector2d(M_PI, -M_PI)));
  CHECK_FALSE(m.within_limits(q));
}

TEST_CASE("manipulator JSON round trip") {
  ManipulatorModel m = panda();
  CHECK(m.dof() == 7);
  ManipulatorModel back = manipulator_from_json(to_json(m));
  Rng rng(4);
  JointConfig q = random_q(m, rng);
  CHECK(tcp_pose(m, q).translation == tcp_pose(back, q).translation);
  CHECK(back.segment_map == m.segment_map);

  nlohmann::json bad = to_json(m);
  bad["joint_limits"][0] = {1.0};
  CHECK_THROWS_AS(manipulator_from_json(bad), ConfigError);
}
