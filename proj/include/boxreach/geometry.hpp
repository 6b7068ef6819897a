#pragma once

#include <optional>

#include <Eigen/Core>

namespace boxreach {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Proper rigid transform p' = rotation * p + translation.
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  RigidTransform operator*(const RigidTransform& rhs) const {
    return {rotation * rhs.rotation, rotation * rhs.translation + translation};
  }
  RigidTransform inverse() const {
    const Mat3 rt = rotation.transpose();
    return {rt, -(rt * translation)};
  }
};

struct Segment {
  Vec3 start = Vec3::Zero();
  Vec3 end = Vec3::Zero();

  double length() const { return (end - start).norm(); }
  Vec3 point_at(double lambda) const { return start + (end - start) * lambda; }
};

/// Box given by componentwise bounds. When `frame` is set it maps world
/// coordinates into the box's own frame, and min/max are expressed there.
struct Aabb {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();
  std::optional<RigidTransform> frame;

  bool contains(const Vec3& p_box_frame) const {
    return (p_box_frame.array() >= min.array()).all() &&
           (p_box_frame.array() <= max.array()).all();
  }
};

/// Entry/exit parameters of a segment through a box, clamped to [0, 1].
/// The segment intersects the box iff near <= far.
struct SlabInterval {
  double near;
  double far;
};

/// Grows the box by `margin` on every side. Throws std::invalid_argument
/// for negative or non-finite margins.
Aabb expand_box(const Aabb& box, double margin);

/// Expresses `seg` in the box frame (identity when the box has no frame).
Segment to_box_frame(const Segment& seg, const Aabb& box);

/// Slab-method parameters. Axes along which the segment does not move
/// contribute (-inf, +inf) when the fixed coordinate lies within the slab
/// and (+inf, -inf) otherwise.
SlabInterval slab_lambdas(const Segment& seg, const Aabb& box);

bool segment_intersects_box(const Segment& seg, const Aabb& box);

/// Length of the part of `seg` inside `box`; 0 for disjoint pairs and for
/// zero-length segments.
double overlap_length(const Segment& seg, const Aabb& box);

/// Euclidean distance between the closest points of the segment and the
/// solid box.
double segment_box_distance(const Segment& seg, const Aabb& box);

/// Distance from a point (in the box frame) to the solid box.
double point_box_distance(const Vec3& p_box_frame, const Aabb& box);

}  // namespace boxreach
