#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Geometry>

#include "boxreach/geometry.hpp"
#include "boxreach/random.hpp"
#include "doctest.h"

using namespace boxreach;

namespace {

Aabb unit_box() { return Aabb{Vec3::Zero(), Vec3::Ones(), std::nullopt}; }

Segment seg(double x0, double y0, double z0, double x1, double y1, double z1) {
  return {Vec3(x0, y0, z0), Vec3(x1, y1, z1)};
}

bool inside(const Vec3& p, const Aabb& b) {
  for (int i = 0; i < 3; ++i) {
    if (p[i] < b.min[i] || p[i] > b.max[i]) return false;
  }
  return true;
}

// Fraction of evenly spaced samples inside the box, times the length.
double sampled_overlap(const Segment& s, const Aabb& b, int n) {
  int hits = 0;
  for (int i = 0; i < n; ++i) {
    if (inside(s.point_at((i + 0.5) / n), b)) ++hits;
  }
  return s.length() * hits / n;
}

double clamp_distance(const Vec3& p, const Aabb& b) {
  Vec3 c = p.cwiseMax(b.min).cwiseMin(b.max);
  return (p - c).norm();
}

double sampled_distance(const Segment& s, const Aabb& b, int n) {
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= n; ++i) best = std::min(best, clamp_distance(s.point_at(double(i) / n), b));
  return best;
}

Aabb random_box(Rng& rng) {
  Vec3 a(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
  Vec3 size(uniform(rng, 0.05, 1.0), uniform(rng, 0.05, 1.0), uniform(rng, 0.05, 1.0));
  return {a, a + size, std::nullopt};
}

Segment random_segment(Rng& rng) {
  return seg(uniform(rng, -2, 2), uniform(rng, -2, 2), uniform(rng, -2, 2), uniform(rng, -2, 2),
             uniform(rng, -2, 2), uniform(rng, -2, 2));
}

}  // namespace

TEST_CASE("expand_box") {
  Aabb b = expand_box(unit_box(), 0.0);
  CHECK(b.min == Vec3::Zero());
  CHECK(b.max == Vec3::Ones());
  b = expand_box(unit_box(), 0.1);
  CHECK((b.min - Vec3::Constant(-0.1)).norm() < 1e-15);
  CHECK((b.max - Vec3::Constant(1.1)).norm() < 1e-15);
  b = expand_box(unit_box(), 0.05 + 0.05);
  CHECK((b.max - Vec3::Constant(1.1)).norm() < 1e-15);
  CHECK_THROWS_AS(expand_box(unit_box(), -0.1), std::invalid_argument);
  CHECK_THROWS_AS(expand_box(unit_box(), std::nan("")), std::invalid_argument);

  Aabb framed = unit_box();
  framed.frame = RigidTransform{Mat3::Identity(), Vec3(1, 2, 3)};
  CHECK(expand_box(framed, 0.2).frame->translation == Vec3(1, 2, 3));

  Aabb twice = expand_box(expand_box(unit_box(), 0.1), 0.25);
  Aabb once = expand_box(unit_box(), 0.35);
  CHECK((twice.min - once.min).norm() < 1e-15);
  CHECK((twice.max - once.max).norm() < 1e-15);
}

TEST_CASE("slab_lambdas examples") {
  SlabInterval s = slab_lambdas(seg(-1, 0.5, 0.5, 2, 0.5, 0.5), unit_box());
  CHECK(s.near == doctest::Approx(1.0 / 3).epsilon(1e-14));
  CHECK(s.far == doctest::Approx(2.0 / 3).epsilon(1e-14));
  s = slab_lambdas(seg(0.2, 0.3, 0.4, 0.7, 0.6, 0.5), unit_box());
  CHECK(s.near == 0.0);
  CHECK(s.far == 1.0);
}

TEST_CASE("axis-parallel and degenerate segments") {
  // Parallel to x and outside the y slab: never intersects.
  CHECK_FALSE(segment_intersects_box(seg(-1, 2, 0.5, 2, 2, 0.5), unit_box()));
  // Parallel and inside both fixed slabs.
  CHECK(overlap_length(seg(-1, 0.5, 0.5, 2, 0.5, 0.5), unit_box()) == doctest::Approx(1.0));
  // Zero-length: membership only, overlap 0.
  CHECK(segment_intersects_box(seg(0.5, 0.5, 0.5, 0.5, 0.5, 0.5), unit_box()));
  CHECK(overlap_length(seg(0.5, 0.5, 0.5, 0.5, 0.5, 0.5), unit_box()) == 0.0);
  CHECK_FALSE(segment_intersects_box(seg(2, 2, 2, 2, 2, 2), unit_box()));
}

TEST_CASE("intersection and overlap examples") {
  CHECK_FALSE(segment_intersects_box(seg(2, 2, 2, 3, 3, 3), unit_box()));
  CHECK(segment_intersects_box(seg(0.5, 0.5, 0.5, 0.6, 0.6, 0.6), unit_box()));
  CHECK(overlap_length(seg(-1, 0.5, 0.5, 2, 0.5, 0.5), unit_box()) == doctest::Approx(1.0));
  CHECK(overlap_length(seg(2, 2, 2, 3, 3, 3), unit_box()) == 0.0);
}

TEST_CASE("segment_box_distance examples") {
  CHECK(segment_box_distance(seg(-1, 0.5, 0.5, 2, 0.5, 0.5), unit_box()) == 0.0);
  CHECK(segment_box_distance(seg(2, 0.5, 0.5, 3, 0.5, 0.5), unit_box()) == doctest::Approx(1.0));
  // Closest approach in the middle of the segment, off a box edge.
  const double d = segment_box_distance(seg(2, -1, 0.5, 2, 3, 0.5), unit_box());
  CHECK(d == doctest::Approx(1.0));
  CHECK(segment_box_distance(seg(2, 2, 0.5, 3, 3, 0.5), unit_box()) == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("random pairs against sampling oracles") {
  Rng rng(7);
  const int n = 20000;
  for (int trial = 0; trial < 300; ++trial) {
    Aabb b = random_box(rng);
    Segment s = random_segment(rng);
    const double ov = overlap_length(s, b);
    CHECK(ov >= 0.0);
    CHECK(ov <= s.length() + 1e-12);
    CHECK(std::abs(ov - sampled_overlap(s, b, n)) <= 2.0 * s.length() / n + 1e-12);

    SlabInterval li = slab_lambdas(s, b);
    if (segment_intersects_box(s, b)) {
      CHECK(inside(s.point_at(0.5 * (li.near + li.far)), expand_box(b, 1e-9)));
    }

    const double dist = segment_box_distance(s, b);
    CHECK(dist >= 0.0);
    const double sampled = sampled_distance(s, b, 10000);
    CHECK(dist <= sampled + 1e-12);
    CHECK(sampled - dist < 1e-3);
    if (dist > 0.0) CHECK(ov == 0.0);
    CHECK((dist == 0.0) == segment_intersects_box(s, b));
  }
}

TEST_CASE("monotonicity under enlargement") {
  Rng rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    Aabb b = random_box(rng);
    Segment s = random_segment(rng);
    CHECK(overlap_length(s, expand_box(b, uniform(rng, 0.0, 0.5))) >= overlap_length(s, b) - 1e-12);
  }
}

TEST_CASE("translation equivariance") {
  Rng rng(5);
  for (int trial = 0; trial < 500; ++trial) {
    Aabb b = random_box(rng);
    Segment s = random_segment(rng);
    Vec3 t(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
    Aabb bt{b.min + t, b.max + t, std::nullopt};
    Segment st{s.start + t, s.end + t};
    CHECK(std::abs(overlap_length(s, b) - overlap_length(st, bt)) < 1e-12);
    CHECK(std::abs(segment_box_distance(s, b) - segment_box_distance(st, bt)) < 1e-12);
    CHECK(segment_intersects_box(s, b) == segment_intersects_box(st, bt));
  }
}

TEST_CASE("oriented boxes use the frame") {
  // Box [0,1]^3 in its own frame; world point p maps to R p + t.
  Aabb b = unit_box();
  RigidTransform world_to_box;
  world_to_box.rotation = Eigen::AngleAxisd(M_PI / 4, Vec3::UnitZ()).toRotationMatrix();
  world_to_box.translation = Vec3(0.5, 0.5, 0.0);
  b.frame = world_to_box;
  RigidTransform box_to_world = world_to_box.inverse();
  // Segment through the box centre along the box's own x axis.
  Segment in_box = seg(-1, 0.5, 0.5, 2, 0.5, 0.5);
  Segment world{box_to_world.apply(in_box.start), box_to_world.apply(in_box.end)};
  CHECK(overlap_length(world, b) == doctest::Approx(1.0));
  Segment far{box_to_world.apply(Vec3(3, 0.5, 0.5)), box_to_world.apply(Vec3(4, 0.5, 0.5))};
  CHECK(segment_box_distance(far, b) == doctest::Approx(2.0));
}
