#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "quadplan/common.hpp"
#include "quadplan/rigid_body_model.hpp"

namespace quadplan {

using Vec2 = Eigen::Vector2d;

struct FrictionModel {
  double mu = 0.7;
  int face_count = 4;
  /// Upper bound on the vertical contact force component.
  double force_max = 2.0 * 30.0 * 9.81;

  static FrictionModel for_robot(const RobotParams& params, double mu = 0.7, int faces = 4) {
    return FrictionModel{mu, faces, 2.0 * params.weight()};
  }

  void validate() const {
    if (!(mu > 0.0)) throw Error(ErrorCode::kInvalidArgument, "friction coefficient must be positive");
    if (face_count < 4) throw Error(ErrorCode::kInvalidArgument, "friction pyramid needs at least 4 faces");
    if (!(force_max > 0.0)) throw Error(ErrorCode::kInvalidArgument, "force bound must be positive");
  }
};

/// Axis-aligned rectangle in the horizontal plane.
struct Rect {
  Vec2 min = Vec2::Zero();
  Vec2 max = Vec2::Zero();

  bool contains(const Vec2& p, double margin = 0.0) const {
    return p.x() >= min.x() + margin && p.x() <= max.x() - margin && p.y() >= min.y() + margin &&
           p.y() <= max.y() - margin;
  }
  /// Distance from an interior point to the nearest edge.
  double inner_distance(const Vec2& p) const {
    return std::min({p.x() - min.x(), max.x() - p.x(), p.y() - min.y(), max.y() - p.y()});
  }
  Rect translated(const Vec2& d) const { return Rect{min + d, max + d}; }
};

/// Surface n . r + d = 0, optionally limited to a rectangle of its vertical projection.
struct ContactPlane {
  std::string id;
  Vec3 normal = Vec3::UnitZ();
  double offset = 0.0;
  std::optional<Rect> bounds;

  double residual(const Vec3& r) const { return normal.dot(r) + offset; }
  double height_at(const Vec2& xy) const {
    return -(normal.x() * xy.x() + normal.y() * xy.y() + offset) / normal.z();
  }
  bool covers(const Vec2& xy, double margin = 0.0) const { return !bounds || bounds->contains(xy, margin); }
  Vec3 project_vertically(const Vec3& r) const { return Vec3(r.x(), r.y(), height_at(r.head<2>())); }

  static ContactPlane horizontal(std::string id, double height, std::optional<Rect> bounds = std::nullopt) {
    return ContactPlane{std::move(id), Vec3::UnitZ(), -height, bounds};
  }

  void validate() const {
    if (std::abs(normal.norm() - 1.0) > 1e-9) throw Error(ErrorCode::kInvalidArgument, "plane normal must be unit");
    if (!(normal.z() > 0.0)) throw Error(ErrorCode::kInvalidArgument, "walkable planes need an upward normal");
  }
};

struct SphereObstacle {
  std::string id;
  Vec3 center = Vec3::Zero();
  double radius = 0.05;
};

/// Region where no foot may be placed.
struct GapVolume {
  std::string id;
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();

  Rect footprint() const { return Rect{min.head<2>(), max.head<2>()}; }
  bool contains_xy(const Vec2& p) const {
    return p.x() > min.x() && p.x() < max.x() && p.y() > min.y() && p.y() < max.y();
  }
};

/// Rigid box resting on the ground; only its top face is a contact surface.
struct BoxObstacle {
  std::string id;
  Vec2 center = Vec2::Zero();
  Vec2 size = Vec2(0.5, 0.5);
  double base_height = 0.0;
  double height = 0.15;

  ContactPlane top() const {
    return ContactPlane::horizontal(id, base_height + height, Rect{center - 0.5 * size, center + 0.5 * size});
  }
};

class Terrain {
 public:
  std::vector<ContactPlane> planes;
  std::vector<BoxObstacle> boxes;
  std::vector<GapVolume> gaps;
  std::vector<SphereObstacle> spheres;

  static Terrain flat(double height = 0.0) {
    Terrain t;
    t.planes.push_back(ContactPlane::horizontal("ground", height));
    return t;
  }

  /// Static planes followed by box tops.
  std::vector<ContactPlane> surfaces() const {
    std::vector<ContactPlane> out = planes;
    for (const auto& box : boxes) out.push_back(box.top());
    return out;
  }

  const GapVolume* gap_at(const Vec2& xy) const {
    for (const auto& gap : gaps)
      if (gap.contains_xy(xy)) return &gap;
    return nullptr;
  }

  /// Highest surface whose bounds contain xy, or nothing over a gap or off the map.
  std::optional<ContactPlane> surface_under(const Vec2& xy) const {
    if (gap_at(xy)) return std::nullopt;
    std::optional<ContactPlane> best;
    for (const auto& plane : surfaces()) {
      if (!plane.covers(xy)) continue;
      if (!best || plane.height_at(xy) > best->height_at(xy)) best = plane;
    }
    return best;
  }

  bool has_obstacle(const std::string& id) const {
    return std::any_of(boxes.begin(), boxes.end(), [&](const auto& b) { return b.id == id; }) ||
           std::any_of(spheres.begin(), spheres.end(), [&](const auto& s) { return s.id == id; });
  }

  Terrain translated(const Vec3& d) const {
    Terrain t = *this;
    for (auto& p : t.planes) {
      p.offset -= p.normal.dot(d);
      if (p.bounds) p.bounds = p.bounds->translated(d.head<2>());
    }
    for (auto& b : t.boxes) {
      b.center += d.head<2>();
      b.base_height += d.z();
    }
    for (auto& g : t.gaps) {
      g.min += d;
      g.max += d;
    }
    for (auto& s : t.spheres) s.center += d;
    return t;
  }

  void validate() const {
    if (planes.empty() && boxes.empty()) throw Error(ErrorCode::kInvalidArgument, "terrain has no surfaces");
    for (const auto& p : planes) p.validate();
    for (const auto& s : spheres)
      if (!(s.radius > 0.0)) throw Error(ErrorCode::kInvalidArgument, "sphere radius must be positive");
  }
};

/// Orthonormal tangent basis (t1, t2) with t1 x t2 = n.
inline std::pair<Vec3, Vec3> tangent_basis(const Vec3& normal) {
  Vec3 seed = std::abs(normal.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  Vec3 t1 = (seed - seed.dot(normal) * normal).normalized();
  Vec3 t2 = normal.cross(t1);
  return {t1, t2};
}

/// Inscribed polyhedral friction cone: U lambda <= 0 keeps lambda inside the cone about the plane normal.
inline Eigen::MatrixX3d friction_pyramid_matrix(const FrictionModel& model, const ContactPlane& plane) {
  const auto [t1, t2] = tangent_basis(plane.normal);
  const int m = model.face_count;
  const double inscribed_mu = model.mu * std::cos(std::numbers::pi / m);
  Eigen::MatrixX3d u(m, 3);
  for (int j = 0; j < m; ++j) {
    const double phi = 2.0 * std::numbers::pi * j / m;
    const Vec3 row = std::cos(phi) * t1 + std::sin(phi) * t2 - inscribed_mu * plane.normal;
    u.row(j) = row.transpose();
  }
  return u;
}

/// Constraint switches for one node of the grid.
struct PhaseConstraintSet {
  /// Input mode applied over the interval leaving this node.
  std::array<bool, kLegCount> stance{true, true, true, true};
  /// Surface equation enforced on the foot position at this node.
  std::array<bool, kLegCount> plane_active{false, false, false, false};
  /// Sphere clearance enforced on the foot position at this node.
  std::array<bool, kLegCount> obstacle_active{false, false, false, false};
  std::array<ContactPlane, kLegCount> planes{};
  FrictionModel friction;
  std::vector<SphereObstacle> obstacles;

  /// Convention of the flat model: stance legs on their plane, swing legs clear of obstacles.
  static PhaseConstraintSet for_contacts(const std::array<bool, kLegCount>& stance,
                                         const std::array<ContactPlane, kLegCount>& planes,
                                         const FrictionModel& friction, std::vector<SphereObstacle> obstacles = {}) {
    PhaseConstraintSet set;
    set.stance = stance;
    set.planes = planes;
    set.friction = friction;
    set.obstacles = std::move(obstacles);
    for (int i = 0; i < kLegCount; ++i) {
      set.plane_active[i] = stance[i];
      set.obstacle_active[i] = !stance[i];
    }
    return set;
  }
};

/// Equalities g = 0 and inequalities h >= 0 with Jacobians; input parts are empty for state-only nodes.
struct NodeConstraints {
  VectorXd eq;
  VectorXd ineq;
  MatrixXd eq_x, eq_u;
  MatrixXd ineq_x, ineq_u;

  double max_equality_residual() const { return eq.size() ? eq.cwiseAbs().maxCoeff() : 0.0; }
  double max_inequality_violation() const {
    return ineq.size() ? std::max(0.0, -ineq.minCoeff()) : 0.0;
  }
};

namespace detail {

inline int count_rows(const PhaseConstraintSet& set, bool with_input, int* eq_rows, int* ineq_rows) {
  int ne = 0, ni = 0;
  for (int i = 0; i < kLegCount; ++i) {
    if (with_input) {
      if (set.stance[i]) {
        ne += 3;
        ni += 2 + set.friction.face_count;
      } else {
        ne += 3;
      }
    }
    if (set.plane_active[i]) ne += 1;
    if (set.obstacle_active[i]) ni += static_cast<int>(set.obstacles.size());
  }
  *eq_rows = ne;
  *ineq_rows = ni;
  return ne + ni;
}

inline NodeConstraints evaluate_constraints_impl(const RobotState& x, const ControlInput* u,
                                                 const PhaseConstraintSet& set) {
  int ne = 0, ni = 0;
  count_rows(set, u != nullptr, &ne, &ni);
  const int nu = u ? kInputDim : 0;
  NodeConstraints c;
  c.eq = VectorXd::Zero(ne);
  c.ineq = VectorXd::Zero(ni);
  c.eq_x = MatrixXd::Zero(ne, kStateDim);
  c.eq_u = MatrixXd::Zero(ne, nu);
  c.ineq_x = MatrixXd::Zero(ni, kStateDim);
  c.ineq_u = MatrixXd::Zero(ni, nu);

  int e = 0, h = 0;
  for (int i = 0; i < kLegCount; ++i) {
    const int force_col = 3 * i;
    const int vel_col = 3 * kLegCount + 3 * i;
    const int foot_row = kBaseDim + 3 * i;
    const Vec3 foot = x.foot_position(i);
    if (u) {
      if (set.stance[i]) {
        c.eq.segment<3>(e) = u->foot_velocity(i);
        c.eq_u.block<3, 3>(e, vel_col).setIdentity();
        e += 3;
        const Vec3 lambda = u->contact_force(i);
        c.ineq(h) = lambda.z();
        c.ineq_u(h, force_col + 2) = 1.0;
        c.ineq(h + 1) = set.friction.force_max - lambda.z();
        c.ineq_u(h + 1, force_col + 2) = -1.0;
        h += 2;
        const Eigen::MatrixX3d pyramid = friction_pyramid_matrix(set.friction, set.planes[i]);
        const int faces = static_cast<int>(pyramid.rows());
        c.ineq.segment(h, faces) = -pyramid * lambda;
        c.ineq_u.block(h, force_col, faces, 3) = -pyramid;
        h += faces;
      } else {
        c.eq.segment<3>(e) = u->contact_force(i);
        c.eq_u.block<3, 3>(e, force_col).setIdentity();
        e += 3;
      }
    }
    if (set.plane_active[i]) {
      c.eq(e) = set.planes[i].residual(foot);
      c.eq_x.block<1, 3>(e, foot_row) = set.planes[i].normal.transpose();
      e += 1;
    }
    if (set.obstacle_active[i]) {
      for (const auto& sphere : set.obstacles) {
        const Vec3 d = foot - sphere.center;
        c.ineq(h) = d.squaredNorm() - sphere.radius * sphere.radius;
        c.ineq_x.block<1, 3>(h, foot_row) = 2.0 * d.transpose();
        h += 1;
      }
    }
  }
  return c;
}

}  // namespace detail

/// Stance legs: v = 0, plane, 0 <= lambda_z <= b_u, U lambda <= 0. Swing legs: lambda = 0, sphere clearance.
inline NodeConstraints evaluate_node_constraints(const RobotState& x, const ControlInput& u,
                                                 const PhaseConstraintSet& set) {
  return detail::evaluate_constraints_impl(x, &u, set);
}

/// State-only constraints, used at the terminal node.
inline NodeConstraints evaluate_node_constraints(const RobotState& x, const PhaseConstraintSet& set) {
  return detail::evaluate_constraints_impl(x, nullptr, set);
}

/// Overload on raw vectors; throws on a size mismatch.
inline NodeConstraints evaluate_node_constraints(const VectorXd& x, const VectorXd& u, const PhaseConstraintSet& set) {
  if (x.size() != kStateDim || (u.size() != kInputDim && u.size() != 0))
    throw Error(ErrorCode::kDimensionMismatch, "constraint evaluation expects 24-dim state and input");
  const RobotState xs{StateVector(x)};
  if (u.size() == 0) return evaluate_node_constraints(xs, set);
  return evaluate_node_constraints(xs, ControlInput(InputVector(u)), set);
}

inline constexpr double kPlaneAnchorTolerance = 1e-3;

/// Binds a stance foot to the surface it stands on, re-anchoring the plane through the foot when it has slipped off.
inline ContactPlane assign_contact_plane(const Vec3& foot, const Terrain& terrain,
                                         const std::optional<ContactPlane>& previous = std::nullopt,
                                         double tolerance = kPlaneAnchorTolerance) {
  const auto reanchor = [&](ContactPlane plane) {
    plane.offset = -plane.normal.dot(foot);
    return plane;
  };
  if (previous) {
    if (std::abs(previous->residual(foot)) <= tolerance) return *previous;
    return reanchor(*previous);
  }
  const Vec2 xy = foot.head<2>();
  if (terrain.gap_at(xy))
    throw Error(ErrorCode::kNoPlaneFound, "foot projects into a gap volume");
  std::optional<ContactPlane> closest;
  for (const auto& plane : terrain.surfaces()) {
    if (!plane.covers(xy)) continue;
    if (!closest || std::abs(plane.residual(foot)) < std::abs(closest->residual(foot))) closest = plane;
  }
  if (!closest) throw Error(ErrorCode::kNoPlaneFound, "no terrain plane under the foot");
  if (std::abs(closest->residual(foot)) <= tolerance) return *closest;
  return reanchor(*closest);
}

}  // namespace quadplan
