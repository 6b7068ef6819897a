#include "boxreach/geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace boxreach {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

SlabInterval axis_slab(double lo, double hi, double start, double end) {
  const double delta = end - start;
  if (delta == 0.0) {
    if (start >= lo && start <= hi) return {-kInf, kInf};
    return {kInf, -kInf};
  }
  const double t1 = (lo - start) / delta;
  const double t2 = (hi - start) / delta;
  return {std::min(t1, t2), std::max(t1, t2)};
}

}  // namespace

Aabb expand_box(const Aabb& box, double margin) {
  if (!std::isfinite(margin) || margin < 0.0) {
    throw std::invalid_argument("expand_box: margin must be finite and non-negative");
  }
  Aabb out = box;
  out.min.array() -= margin;
  out.max.array() += margin;
  return out;
}

Segment to_box_frame(const Segment& seg, const Aabb& box) {
  if (!box.frame) return seg;
  return {box.frame->apply(seg.start), box.frame->apply(seg.end)};
}

SlabInterval slab_lambdas(const Segment& seg, const Aabb& box) {
  const Segment local = to_box_frame(seg, box);
  SlabInterval out{0.0, 1.0};
  for (int axis = 0; axis < 3; ++axis) {
    const SlabInterval s =
        axis_slab(box.min[axis], box.max[axis], local.start[axis], local.end[axis]);
    out.near = std::max(out.near, s.near);
    out.far = std::min(out.far, s.far);
  }
  return out;
}

bool segment_intersects_box(const Segment& seg, const Aabb& box) {
  const SlabInterval s = slab_lambdas(seg, box);
  return s.near <= s.far;
}

double overlap_length(const Segment& seg, const Aabb& box) {
  const SlabInterval s = slab_lambdas(seg, box);
  if (!(s.near <= s.far)) return 0.0;
  return std::abs(s.far - s.near) * seg.length();
}

double point_box_distance(const Vec3& p, const Aabb& box) {
  const Vec3 below = (box.min - p).cwiseMax(0.0);
  const Vec3 above = (p - box.max).cwiseMax(0.0);
  return (below + above).norm();
}

// The squared distance from p(lambda) to the box is a piecewise quadratic in
// lambda whose pieces are delimited by the slab-plane crossings. Each piece is
// minimized in closed form.
double segment_box_distance(const Segment& seg, const Aabb& box) {
  if (segment_intersects_box(seg, box)) return 0.0;
  const Segment local = to_box_frame(seg, box);
  const Vec3 start = local.start;
  const Vec3 dir = local.end - local.start;

  std::array<double, 8> breaks{};
  int count = 0;
  breaks[count++] = 0.0;
  breaks[count++] = 1.0;
  for (int axis = 0; axis < 3; ++axis) {
    if (dir[axis] == 0.0) continue;
    for (double plane : {box.min[axis], box.max[axis]}) {
      const double t = (plane - start[axis]) / dir[axis];
      if (t > 0.0 && t < 1.0) breaks[count++] = t;
    }
  }
  std::sort(breaks.begin(), breaks.begin() + count);

  double best = kInf;
  for (int i = 0; i + 1 < count; ++i) {
    const double lo = breaks[i];
    const double hi = breaks[i + 1];
    const Vec3 mid = start + dir * (0.5 * (lo + hi));
    // sq(lambda) = a*lambda^2 + b*lambda + c on this piece
    double a = 0.0, b = 0.0, c = 0.0;
    for (int axis = 0; axis < 3; ++axis) {
      double bound;
      if (mid[axis] < box.min[axis]) {
        bound = box.min[axis];
      } else if (mid[axis] > box.max[axis]) {
        bound = box.max[axis];
      } else {
        continue;
      }
      const double off = start[axis] - bound;
      a += dir[axis] * dir[axis];
      b += 2.0 * off * dir[axis];
      c += off * off;
    }
    auto eval = [&](double t) { return (a * t + b) * t + c; };
    double piece = std::min(eval(lo), eval(hi));
    if (a > 0.0) {
      const double t = -b / (2.0 * a);
      if (t > lo && t < hi) piece = std::min(piece, eval(t));
    }
    best = std::min(best, piece);
  }
  return std::sqrt(std::max(best, 0.0));
}

}  // namespace boxreach
