#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace fbdyn {

using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using VecX = Eigen::VectorXd;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using MatX = Eigen::MatrixXd;
using Quat = Eigen::Quaterniond; // Hamilton, stored (x,y,z,w) by Eigen; serialized scalar-first

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ParseError : Error {
    ParseError(const std::string& msg, int line_no)
        : Error("parse error (line " + std::to_string(line_no) + "): " + msg), line(line_no) {}
    int line;
};

struct Diagnostic {
    enum class Severity { kWarning, kError };
    Severity severity = Severity::kError;
    std::string entity;
    std::string message;
};

struct ValidationError : Error {
    explicit ValidationError(std::vector<Diagnostic> diags)
        : Error(format(diags)), diagnostics(std::move(diags)) {}
    std::vector<Diagnostic> diagnostics;

private:
    static std::string format(const std::vector<Diagnostic>& diags) {
        std::string out = "model validation failed:";
        for (const auto& d : diags)
            if (d.severity == Diagnostic::Severity::kError)
                out += "\n  [" + d.entity + "] " + d.message;
        return out;
    }
};

// Rigid transform: x_world = rotation * x_local + translation.
struct Pose {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    Pose operator*(const Pose& other) const {
        return Pose{rotation * other.rotation, rotation * other.translation + translation};
    }
    Vec3 operator*(const Vec3& p) const { return rotation * p + translation; }
};

inline Mat3 skew(const Vec3& v) {
    Mat3 s;
    s << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
    return s;
}

// Extrinsic X-Y-Z (roll, pitch, yaw), the URDF convention: R = Rz(yaw) Ry(pitch) Rx(roll).
inline Mat3 rpy_to_rotation(const Vec3& rpy) {
    return (Eigen::AngleAxisd(rpy.z(), Vec3::UnitZ()) * Eigen::AngleAxisd(rpy.y(), Vec3::UnitY()) *
            Eigen::AngleAxisd(rpy.x(), Vec3::UnitX()))
        .toRotationMatrix();
}

inline Vec3 rotation_to_rpy(const Mat3& r) {
    const double pitch = std::atan2(-r(2, 0), std::sqrt(r(2, 1) * r(2, 1) + r(2, 2) * r(2, 2)));
    const double roll = std::atan2(r(2, 1), r(2, 2));
    const double yaw = std::atan2(r(1, 0), r(0, 0));
    return {roll, pitch, yaw};
}

// Unit quaternion for a rotation of |w|*dt about world axis w/|w|.
inline Quat quat_exp(const Vec3& omega_dt) {
    const double angle = omega_dt.norm();
    if (angle < 1e-14) {
        Quat q(1.0, 0.5 * omega_dt.x(), 0.5 * omega_dt.y(), 0.5 * omega_dt.z());
        q.normalize();
        return q;
    }
    const Vec3 axis = omega_dt / angle;
    return Quat(Eigen::AngleAxisd(angle, axis));
}

// Rotation vector of R (inverse of the exponential map), used by finite-difference oracles.
inline Vec3 rotation_log(const Mat3& r) {
    Eigen::AngleAxisd aa(r);
    return aa.angle() * aa.axis();
}

// 6D wrench in the mixed convention: rows 0-2 force (world axes), rows 3-5 torque about the
// annotated frame's origin (world axes). Changing the reference point is the adjoint-transpose
// map for this representation: the force is invariant, the torque picks up a lever term.
struct SpatialWrench {
    Vec3 force = Vec3::Zero();
    Vec3 torque = Vec3::Zero();
    std::string frame;

    Vec6 vector() const {
        Vec6 w;
        w << force, torque;
        return w;
    }
    static SpatialWrench from_vector(const Vec6& w, std::string frame_name = {}) {
        SpatialWrench out;
        out.force = w.head<3>();
        out.torque = w.tail<3>();
        out.frame = std::move(frame_name);
        return out;
    }
    // Torque re-referenced from `origin` to `new_origin` (both world points).
    SpatialWrench shifted_to(const Vec3& origin, const Vec3& new_origin, std::string frame_name = {}) const {
        SpatialWrench out;
        out.force = force;
        out.torque = torque + (origin - new_origin).cross(force);
        out.frame = std::move(frame_name);
        return out;
    }
};

} // namespace fbdyn
