#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "quadplan/common.hpp"
#include "quadplan/contact_constraints.hpp"
#include "quadplan/gait_schedule.hpp"
#include "quadplan/rigid_body_model.hpp"

namespace quadplan {

struct TaskGoal {
  Vec2 heading = Vec2::UnitX();
  double step_length = 0.15;
  double base_height = 0.45;

  void validate() const {
    if (!(step_length > 0.0)) throw Error(ErrorCode::kInvalidArgument, "step length must be positive");
    if (!(base_height > 0.0)) throw Error(ErrorCode::kInvalidArgument, "base height must be positive");
    if (std::abs(heading.norm() - 1.0) > 1e-9) throw Error(ErrorCode::kInvalidArgument, "heading must be a unit vector");
  }
};

struct FootholdSettings {
  /// Minimum distance of a nominal foothold to the edges of its plane and of any higher neighbouring plane.
  double edge_margin = 0.03;
};

using Footholds = std::array<Vec3, kLegCount>;
using LegPlanes = std::array<ContactPlane, kLegCount>;

struct NominalSequence {
  /// states[0] is the nominal pose at the start of the horizon, states[i + 1] the pose at the end of phase i.
  std::vector<StateVector> states;
  std::vector<Footholds> footholds;
  std::vector<LegPlanes> planes;

  int phase_count() const { return static_cast<int>(states.size()) - 1; }
  const StateVector& final_state() const { return states.back(); }
};

struct SurfaceProjection {
  bool in_gap = false;
  Vec3 point = Vec3::Zero();
  ContactPlane plane;
};

namespace detail {

/// Smallest horizontal move that takes p out of the rectangle.
inline Vec2 push_out_of(const Rect& r, const Vec2& p) {
  const std::array<double, 4> depth{p.x() - r.min.x(), r.max.x() - p.x(), p.y() - r.min.y(), r.max.y() - p.y()};
  int side = 0;
  for (int i = 1; i < 4; ++i)
    if (depth[i] < depth[side]) side = i;
  switch (side) {
    case 0: return Vec2(r.min.x() - p.x(), 0.0);
    case 1: return Vec2(r.max.x() - p.x(), 0.0);
    case 2: return Vec2(0.0, r.min.y() - p.y());
    default: return Vec2(0.0, r.max.y() - p.y());
  }
}

inline Vec2 clamp_inside(const Rect& r, const Vec2& p, double margin) {
  Vec2 out = p;
  for (int a = 0; a < 2; ++a) {
    const double lo = r.min[a] + margin, hi = r.max[a] - margin;
    out[a] = lo <= hi ? std::clamp(p[a], lo, hi) : 0.5 * (r.min[a] + r.max[a]);
  }
  return out;
}

}  // namespace detail

/// Drops a foothold vertically onto the topmost surface below it, keeping it clear of plane edges.
inline SurfaceProjection project_to_surface(const Vec3& foothold, const Terrain& terrain,
                                            const FootholdSettings& settings = {}) {
  SurfaceProjection out;
  Vec2 xy = foothold.head<2>();
  if (terrain.gap_at(xy)) {
    out.in_gap = true;
    out.point = foothold;
    return out;
  }
  auto plane = terrain.surface_under(xy);
  if (!plane) throw Error(ErrorCode::kNoPlaneFound, "no surface under the foothold");
  const double margin = settings.edge_margin;
  if (plane->bounds) xy = detail::clamp_inside(*plane->bounds, xy, margin);
  const double own_height = plane->height_at(xy);
  for (const auto& other : terrain.surfaces()) {
    if (!other.bounds || other.id == plane->id) continue;
    const Rect grown{other.bounds->min.array() - margin, other.bounds->max.array() + margin};
    if (!grown.contains(xy) || other.bounds->contains(xy)) continue;
    if (other.height_at(xy) <= own_height + 1e-9) continue;
    xy += detail::push_out_of(grown, xy);
  }
  for (const auto& gap : terrain.gaps) {
    const Rect grown{gap.min.head<2>().array() - margin, gap.max.head<2>().array() + margin};
    if (grown.contains(xy) && !gap.contains_xy(xy)) xy += detail::push_out_of(grown, xy);
  }
  out.plane = *plane;
  out.point = plane->project_vertically(Vec3(xy.x(), xy.y(), 0.0));
  return out;
}

namespace detail {

struct GapSides {
  double coverage = 0.0;
  Vec3 near_side;
  Vec3 far_side;
};

/// Intersects the step ray with the gap footprint and returns the landing points just before and after it.
inline GapSides gap_sides(const Vec3& foothold, const Vec3& step_start, const GapVolume& gap, double margin) {
  const Vec2 start = step_start.head<2>();
  Vec2 dir = foothold.head<2>() - start;
  if (dir.norm() < 1e-12) dir = Vec2::UnitX();
  dir.normalize();
  double t_in = -std::numeric_limits<double>::infinity(), t_out = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 2; ++a) {
    if (std::abs(dir[a]) < 1e-12) continue;
    const double t0 = (gap.min[a] - start[a]) / dir[a], t1 = (gap.max[a] - start[a]) / dir[a];
    t_in = std::max(t_in, std::min(t0, t1));
    t_out = std::min(t_out, std::max(t0, t1));
  }
  const double t_target = (foothold.head<2>() - start).dot(dir);
  const auto at = [&](double t) {
    const Vec2 xy = start + t * dir;
    return Vec3(xy.x(), xy.y(), foothold.z());
  };
  return {(t_target - t_in) / (t_out - t_in), at(t_in - margin), at(t_out + margin)};
}

}  // namespace detail

/// Moves a foothold that lands in a gap onto the far side when the step covers more than half of the gap,
/// otherwise back to the near side.
inline Vec3 resolve_gap(const Vec3& foothold, const Vec3& step_start, const GapVolume& gap,
                        const FootholdSettings& settings = {}) {
  if (!gap.contains_xy(foothold.head<2>())) return foothold;
  const auto sides = detail::gap_sides(foothold, step_start, gap, settings.edge_margin);
  return sides.coverage > 0.5 ? sides.far_side : sides.near_side;
}

/// Projects a foothold, resolving gaps; falls back to the other side of the gap if the preferred one has no surface.
inline SurfaceProjection place_foothold(const Vec3& target, const Vec3& step_start, const Terrain& terrain,
                                        const FootholdSettings& settings = {}) {
  auto projection = project_to_surface(target, terrain, settings);
  if (!projection.in_gap) return projection;
  const GapVolume* gap = terrain.gap_at(target.head<2>());
  const auto sides = detail::gap_sides(target, step_start, *gap, settings.edge_margin);
  const bool forward = sides.coverage > 0.5;
  for (const Vec3& candidate : {forward ? sides.far_side : sides.near_side, forward ? sides.near_side : sides.far_side}) {
    if (terrain.gap_at(candidate.head<2>()) || !terrain.surface_under(candidate.head<2>())) continue;
    projection = project_to_surface(candidate, terrain, settings);
    if (!projection.in_gap) return projection;
  }
  throw Error(ErrorCode::kNoPlaneFound, "foothold in gap and neither side offers a surface");
}

/// Height of the least-squares plane through the footholds, evaluated at xy.
inline double support_height(const Footholds& feet, const Vec2& xy) {
  Eigen::Matrix<double, kLegCount, 3> M;
  Eigen::Matrix<double, kLegCount, 1> z;
  for (int i = 0; i < kLegCount; ++i) {
    M.row(i) << feet[i].x(), feet[i].y(), 1.0;
    z[i] = feet[i].z();
  }
  const Eigen::Vector3d c = M.completeOrthogonalDecomposition().solve(z);
  return c[0] * xy.x() + c[1] * xy.y() + c[2];
}

inline Vec2 foot_centroid(const Footholds& feet) {
  Vec2 c = Vec2::Zero();
  for (const auto& f : feet) c += f.head<2>();
  return c / kLegCount;
}

inline StateVector nominal_state(const Footholds& feet, const Vec2& base_xy, const TaskGoal& goal) {
  RobotState x;
  x.base_position() = Vec3(base_xy.x(), base_xy.y(), support_height(feet, base_xy) + goal.base_height);
  x.base_orientation() = Vec3(0.0, 0.0, std::atan2(goal.heading.y(), goal.heading.x()));
  for (int i = 0; i < kLegCount; ++i) x.foot_position(i) = feet[i];
  return x.vector();
}

/// Steps each swinging leg one step length along the heading and moves the base half a step per swing phase.
inline NominalSequence generate_nominal_sequence(const RobotState& x0, const TaskGoal& goal,
                                                 const GaitSchedule& schedule, const Terrain& terrain,
                                                 const FootholdSettings& settings = {}) {
  goal.validate();
  NominalSequence seq;
  Footholds feet;
  LegPlanes planes;
  for (int i = 0; i < kLegCount; ++i) {
    feet[i] = x0.foot_position(i);
    planes[i] = assign_contact_plane(feet[i], terrain, std::nullopt, 0.0);
  }
  const Vec2 origin = foot_centroid(feet);
  const Vec2 advance = 0.5 * goal.step_length * goal.heading;
  int swings = 0;
  seq.states.push_back(nominal_state(feet, origin, goal));
  seq.footholds.push_back(feet);
  seq.planes.push_back(planes);
  for (const auto& phase : schedule.phases) {
    if (auto leg = swing_leg(phase.config)) {
      const int i = index(*leg);
      const Vec3 start = feet[i];
      const Vec3 target = start + goal.step_length * Vec3(goal.heading.x(), goal.heading.y(), 0.0);
      const auto placed = place_foothold(target, start, terrain, settings);
      feet[i] = placed.point;
      planes[i] = placed.plane;
      ++swings;
    }
    seq.states.push_back(nominal_state(feet, origin + swings * advance, goal));
    seq.footholds.push_back(feet);
    seq.planes.push_back(planes);
  }
  return seq;
}

}  // namespace quadplan
