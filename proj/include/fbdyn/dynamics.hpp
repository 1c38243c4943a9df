#pragma once

#include "fbdyn/model.hpp"
#include "fbdyn/types.hpp"

#include <map>
#include <string>
#include <vector>

namespace fbdyn {

// All twists, Jacobians and wrench duals use the mixed representation: world-aligned axes at the
// moving frame's origin, linear rows first. Gravity defaults to (0,0,-9.80665) m/s^2.
inline constexpr double kStandardGravity = 9.80665;
inline const Vec3 kDefaultGravity{0.0, 0.0, -kStandardGravity};

struct CentroidalMomentum {
    Vec6 h = Vec6::Zero(); // rows 0-2 linear (kg*m/s), rows 3-5 angular about the CoM (kg*m^2/s)
};

// Per-link world kinematics for one state; scratch result of a forward pass.
struct LinkKinematics {
    Mat3 rotation;   // link to world
    Vec3 origin;     // link frame origin, world
    Vec3 com;        // link CoM, world
    Vec3 axis_world; // parent joint axis in world (zero for the base / fixed joints)
    Vec3 omega;      // angular velocity, world
    Vec3 v_origin;   // velocity of the frame origin, world
    Vec3 v_com;
};

class Kinematics {
public:
    Kinematics(const RobotModel& model, const FloatingBaseState& state);

    const LinkKinematics& link(int i) const { return links_[i]; }
    const RobotModel& model() const { return *model_; }
    const FloatingBaseState& state() const { return state_; }

    double total_mass() const { return total_mass_; }
    Vec3 com() const { return com_; }
    Vec3 com_velocity() const { return com_velocity_; }

    // World pose of a link frame or contact frame by name. Throws Error on unknown names.
    Pose frame_pose(const std::string& frame) const;
    // Link the frame is attached to plus its local pose.
    std::pair<int, Pose> resolve_frame(const std::string& frame) const;

private:
    const RobotModel* model_;
    FloatingBaseState state_;
    std::vector<LinkKinematics> links_;
    double total_mass_ = 0.0;
    Vec3 com_ = Vec3::Zero();
    Vec3 com_velocity_ = Vec3::Zero();
};

Pose forward_kinematics(const RobotModel& model, const FloatingBaseState& state,
                        const std::string& frame);

// 6x(6+n); J*nu is the mixed twist of the frame, linear rows first.
MatX frame_jacobian(const RobotModel& model, const FloatingBaseState& state,
                    const std::string& frame);

// d/dt(J*nu) evaluated at nudot = 0, i.e. Jdot*nu for the frame's mixed twist.
Vec6 bias_acceleration(const RobotModel& model, const FloatingBaseState& state,
                       const std::string& frame);

// Inverse dynamics: M(q)*nudot + C(q,nu)*nu + g(q) - sum of J_e^T f_e for the supplied external
// wrenches (applied at their frame origins, mixed convention). Rows 0-5 are the base wrench
// residual; the base receives no actuation.
VecX rnea(const RobotModel& model, const FloatingBaseState& state, const VecX& nudot,
          const std::map<std::string, SpatialWrench>& external = {},
          const Vec3& gravity = kDefaultGravity);

// RNEA with the per-link transmitted wrenches kept: force/torque exerted by the parent side on
// link i across its parent joint, world axes, torque about the link frame origin. The base entry
// holds the residual base wrench.
struct RneaDetail {
    VecX generalized;
    std::vector<Vec3> force;
    std::vector<Vec3> torque;
};
RneaDetail rnea_detailed(const RobotModel& model, const FloatingBaseState& state, const VecX& nudot,
                         const std::map<std::string, SpatialWrench>& external = {},
                         const Vec3& gravity = kDefaultGravity);

// Composite-rigid-body mass matrix, (6+n)x(6+n), symmetric positive definite.
MatX mass_matrix(const RobotModel& model, const FloatingBaseState& state);

// C(q,nu)*nu + g(q); equals rnea with nudot = 0 and no externals.
VecX bias_forces(const RobotModel& model, const FloatingBaseState& state,
                 const Vec3& gravity = kDefaultGravity);

// g(q): rnea with zero velocity and zero acceleration.
VecX gravity_forces(const RobotModel& model, const FloatingBaseState& state,
                    const Vec3& gravity = kDefaultGravity);

CentroidalMomentum centroidal_momentum(const RobotModel& model, const FloatingBaseState& state);

// One active contact point with its linearized friction cone.
struct ContactPoint {
    std::string name;      // contact frame name (surface vertices get a #k suffix)
    int link = -1;
    Vec3 local_point;      // in the link frame
    Vec3 position;         // world
    Vec3 normal;           // world, unit
    Vec3 tangent1, tangent2;
    double mu = 0.0;
    int cone_facets = 8;
};

// Active contacts for one state: stacked point Jacobian (3 rows per point), the centroidal map X
// (6 x 3c), and the facet inequalities of each friction cone. Surface contacts are decomposed
// into their vertices as point contacts sharing the declared normal.
class ContactSet {
public:
    ContactSet() = default;
    ContactSet(const Kinematics& kin, const std::vector<std::string>& active_contact_names);

    int point_count() const { return static_cast<int>(points_.size()); }
    int force_dim() const { return 3 * point_count(); }
    const std::vector<ContactPoint>& points() const { return points_; }

    const MatX& jacobian() const { return jacobian_; }       // 3c x (6+n)
    const VecX& bias() const { return bias_; }               // Jdot*nu, 3c
    const MatX& centroidal_map() const { return map_com_; }  // 6 x 3c

    // Rows A f <= 0 describing all cones: per point, facets u_k.f <= mu*cos(pi/m)*n.f plus
    // n.f >= 0. Inner linearization: admissible forces satisfy the exact cone.
    const MatX& cone_rows() const { return cone_rows_; }
    // Smallest slack of the cone rows for a stacked force (negative = violated).
    double cone_margin(const VecX& forces) const;
    // Strictly cone-feasible starting point (unit normal force at every contact).
    VecX interior_forces() const;

private:
    std::vector<ContactPoint> points_;
    MatX jacobian_;
    VecX bias_;
    MatX map_com_;
    MatX cone_rows_;
};

// Centroidal map for arbitrary points: column block j is [I3; skew(p_j - com)].
MatX contact_map(const std::vector<Vec3>& points, const Vec3& com);

} // namespace fbdyn
