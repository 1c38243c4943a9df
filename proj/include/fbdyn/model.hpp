#pragma once

#include "fbdyn/motor.hpp"
#include "fbdyn/types.hpp"

#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace fbdyn {

struct LinkSpec {
    std::string name;
    double mass = 0.0;              // kg; 0 only for massless leaf frames
    Vec3 com = Vec3::Zero();        // m, in link frame
    Mat3 inertia = Mat3::Zero();    // kg*m^2, about the CoM, link frame
};

enum class JointType { kRevolute, kFixed };

struct JointLimits {
    double lower = -std::numeric_limits<double>::infinity(); // rad
    double upper = std::numeric_limits<double>::infinity();  // rad
    double velocity = std::numeric_limits<double>::infinity(); // rad/s
    double effort = std::numeric_limits<double>::infinity();   // N*m
    bool bounded() const { return std::isfinite(lower) && std::isfinite(upper); }
};

struct SeaSpec {
    double stiffness = 0.0;     // N*m/rad
    double damping = 0.0;       // N*m*s/rad
    double motor_inertia = 0.0; // kg*m^2, reflected at the joint side
};

struct MotorAttachment {
    MotorModelParams params;
    double gear = 1.0;
};

struct JointSpec {
    std::string name;
    JointType type = JointType::kRevolute;
    std::string parent;
    std::string child;
    Vec3 origin_xyz = Vec3::Zero(); // child frame origin in parent frame
    Vec3 origin_rpy = Vec3::Zero();
    Vec3 axis = Vec3::UnitZ();      // in child frame, unit norm
    JointLimits limits;
    std::optional<MotorAttachment> motor;
    std::optional<SeaSpec> sea;

    Pose origin() const { return Pose{rpy_to_rotation(origin_rpy), origin_xyz}; }
};

enum class ContactKind { kPoint, kSurface };

struct ContactFrameSpec {
    std::string name;
    std::string link;
    Vec3 origin_xyz = Vec3::Zero(); // contact frame in link frame; frame z is the contact normal
    Vec3 origin_rpy = Vec3::Zero();
    ContactKind kind = ContactKind::kPoint;
    double mu = 0.0;                // friction coefficient
    int cone_facets = 8;
    std::vector<Vec3> vertices;     // surface only: >=3 coplanar points in the contact frame

    Pose origin() const { return Pose{rpy_to_rotation(origin_rpy), origin_xyz}; }
};

// Immutable kinematic tree. Links and joints keep their declaration order; topological order is
// computed at load time. Safe for unrestricted concurrent reads once constructed.
class RobotModel {
public:
    RobotModel(std::string name, std::vector<LinkSpec> links, std::vector<JointSpec> joints,
               std::vector<ContactFrameSpec> contacts);

    const std::string& name() const { return name_; }
    const std::vector<LinkSpec>& links() const { return links_; }
    const std::vector<JointSpec>& joints() const { return joints_; }
    const std::vector<ContactFrameSpec>& contacts() const { return contacts_; }
    const std::string& base_link() const { return base_link_; }

    int link_count() const { return static_cast<int>(links_.size()); }
    // Count of actuated (revolute) joints.
    int n() const { return n_; }

    int link_index(const std::string& name) const;       // -1 when absent
    int joint_index(const std::string& name) const;      // -1 when absent
    int contact_index(const std::string& name) const;    // -1 when absent

    // Index of the joint whose child is link i, or -1 for the base.
    int parent_joint_of_link(int link) const { return parent_joint_of_link_[link]; }
    // Position of a revolute joint's rate in q / in nu rows 6.., or -1 for fixed joints.
    int joint_q_index(int joint) const { return joint_q_index_[joint]; }
    // Link indices, parents before children, base first. Every link exactly once.
    const std::vector<int>& topological_order() const { return topo_order_; }
    // Joints with a q index, in topological order.
    const std::vector<int>& actuated_joints() const { return actuated_joints_; }

    bool tree_valid() const { return tree_valid_; }

private:
    std::string name_;
    std::vector<LinkSpec> links_;
    std::vector<JointSpec> joints_;
    std::vector<ContactFrameSpec> contacts_;
    std::string base_link_;
    int n_ = 0;
    bool tree_valid_ = false;
    std::vector<int> parent_joint_of_link_;
    std::vector<int> joint_q_index_;
    std::vector<int> topo_order_;
    std::vector<int> actuated_joints_;
};

struct FloatingBaseState {
    Quat base_orientation = Quat::Identity(); // base frame to world
    Vec3 base_position = Vec3::Zero();
    VecX q;  // n
    VecX nu; // 6+n: rows 0-2 base linear velocity (world-aligned axes at the base origin),
             // rows 3-5 base angular velocity (world), rows 6.. joint rates
};

// Parse a model from its XML description. Throws ParseError on malformed input and
// ValidationError when any invariant fails.
RobotModel load_model(const std::string& source);
RobotModel load_model_file(const std::string& path);

// Full invariant check; empty iff the model is valid. Errors rather than exceptions so the CLI
// can report all violations at once.
std::vector<Diagnostic> validate_model(const RobotModel& model);

// Writes the model back to the XML grammar accepted by load_model (field-by-field round trip).
std::string serialize_model(const RobotModel& model);

// Identity base pose, q at joint-limit midpoints (0 when unbounded), zero velocity.
FloatingBaseState neutral_state(const RobotModel& model);

bool models_equal(const RobotModel& a, const RobotModel& b, double tol = 0.0);

} // namespace fbdyn
