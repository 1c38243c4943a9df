#include "fbdyn/estimation.hpp"

#include <algorithm>
#include <random>

namespace fbdyn {

namespace {

// Sub-model labels: links connected once every sensor joint is cut. Label 0 contains the base.
std::vector<int> submodel_labels(const RobotModel& model, const std::vector<FtSensorSpec>& sensors,
                                 std::vector<int>& sensor_joints) {
    sensor_joints.clear();
    for (const auto& sensor : sensors) {
        const int j = model.joint_index(sensor.joint);
        if (j < 0) throw Error("FT sensor '" + sensor.name + "' names unknown joint '" + sensor.joint + "'");
        sensor_joints.push_back(j);
    }
    std::vector<int> labels(model.link_count(), -1);
    int next_label = 0;
    for (int li : model.topological_order()) {
        const int j = model.parent_joint_of_link(li);
        if (j < 0) {
            labels[li] = next_label++;
        } else if (std::find(sensor_joints.begin(), sensor_joints.end(), j) != sensor_joints.end()) {
            labels[li] = next_label++; // cut: child side starts a new sub-model
        } else {
            labels[li] = labels[model.link_index(model.joints()[j].parent)];
        }
    }
    return labels;
}

struct SensorGeometry {
    int joint = -1;
    int child_link = -1;
    Mat3 frame_rotation; // measurement frame to world
    Vec3 frame_origin;   // world
};

SensorGeometry sensor_geometry(const Kinematics& kin, const FtSensorSpec& sensor) {
    const RobotModel& model = kin.model();
    SensorGeometry geo;
    geo.joint = model.joint_index(sensor.joint);
    if (geo.joint < 0) throw Error("unknown sensor joint '" + sensor.joint + "'");
    geo.child_link = model.link_index(model.joints()[geo.joint].child);
    const LinkKinematics& lk = kin.link(geo.child_link);
    const Pose local = sensor.frame();
    geo.frame_rotation = lk.rotation * local.rotation;
    geo.frame_origin = lk.rotation * local.translation + lk.origin;
    return geo;
}

// Measured wrench (measurement frame) -> world force and torque about the child link origin.
void measurement_to_world(const SensorGeometry& geo, const Vec3& child_origin, const Vec6& measured,
                          Vec3& force, Vec3& torque) {
    force = geo.frame_rotation * measured.head<3>();
    torque = geo.frame_rotation * measured.tail<3>() + (geo.frame_origin - child_origin).cross(force);
}

} // namespace

Vec6 synthesize_ft_reading(const RobotModel& model, const FloatingBaseState& state,
                           const VecX& nudot, const std::map<std::string, SpatialWrench>& external,
                           const FtSensorSpec& sensor, std::uint64_t seed, const Vec3& gravity) {
    const Kinematics kin(model, state);
    const SensorGeometry geo = sensor_geometry(kin, sensor);
    const RneaDetail detail = rnea_detailed(model, state, nudot, external, gravity);

    const Vec3 child_origin = kin.link(geo.child_link).origin;
    const Vec3 force = detail.force[geo.child_link];
    const Vec3 torque_at_frame =
        detail.torque[geo.child_link] + (child_origin - geo.frame_origin).cross(force);

    Vec6 reading;
    reading.head<3>() = geo.frame_rotation.transpose() * force;
    reading.tail<3>() = geo.frame_rotation.transpose() * torque_at_frame;

    if (sensor.noise_sigma_force > 0.0 || sensor.noise_sigma_torque > 0.0) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> unit(0.0, 1.0);
        for (int i = 0; i < 3; ++i) reading[i] += sensor.noise_sigma_force * unit(rng);
        for (int i = 3; i < 6; ++i) reading[i] += sensor.noise_sigma_torque * unit(rng);
    }
    return reading;
}

EstimationResult estimate(const RobotModel& model, const FloatingBaseState& state,
                          const VecX& nudot, const std::vector<FtSensorSpec>& sensors,
                          const std::map<std::string, Vec6>& measurements,
                          const std::vector<ContactHypothesis>& hypotheses, const Vec3& gravity) {
    if (sensors.empty() && !hypotheses.empty())
        throw Error("contact hypothesis requires at least one FT sensor bounding its sub-model");

    const Kinematics kin(model, state);
    std::vector<int> sensor_joints;
    const std::vector<int> labels = submodel_labels(model, sensors, sensor_joints);

    // Hypothesis bookkeeping: world point, owning sub-model; one hypothesis per sub-model.
    struct HypothesisInfo {
        const ContactHypothesis* spec = nullptr;
        int link = -1;
        int label = -1;
        Vec3 point = Vec3::Zero();
    };
    std::vector<HypothesisInfo> infos;
    for (const auto& hyp : hypotheses) {
        HypothesisInfo info;
        info.spec = &hyp;
        const auto [link, local] = kin.resolve_frame(hyp.frame);
        info.link = link;
        info.label = labels[link];
        info.point = kin.link(link).rotation * local.translation + kin.link(link).origin;
        for (const auto& other : infos)
            if (other.label == info.label)
                throw Error("more than one contact hypothesis in the sub-model of '" + hyp.frame + "'");
        infos.push_back(info);
    }

    // Predicted cut wrenches from the motion alone, then per-sensor mismatch against the
    // measurement, both expressed about the child link origin in world axes.
    const RneaDetail predicted = rnea_detailed(model, state, nudot, {}, gravity);
    struct SensorDelta {
        const FtSensorSpec* spec = nullptr;
        SensorGeometry geo;
        Vec3 dforce = Vec3::Zero();
        Vec3 dtorque = Vec3::Zero(); // about the child link origin
        Vec3 measured_force = Vec3::Zero();
        Vec3 measured_torque = Vec3::Zero();
        int child_label = -1;
        int parent_label = -1;
    };
    std::vector<SensorDelta> deltas;
    for (const auto& sensor : sensors) {
        const auto it = measurements.find(sensor.name);
        if (it == measurements.end()) throw Error("missing measurement for sensor '" + sensor.name + "'");
        SensorDelta delta;
        delta.spec = &sensor;
        delta.geo = sensor_geometry(kin, sensor);
        const Vec3 child_origin = kin.link(delta.geo.child_link).origin;
        measurement_to_world(delta.geo, child_origin, it->second, delta.measured_force,
                             delta.measured_torque);
        delta.dforce = delta.measured_force - predicted.force[delta.geo.child_link];
        delta.dtorque = delta.measured_torque - predicted.torque[delta.geo.child_link];
        delta.child_label = labels[delta.geo.child_link];
        const int parent_link = model.link_index(model.joints()[delta.geo.joint].parent);
        delta.parent_label = labels[parent_link];
        deltas.push_back(std::move(delta));
    }

    // Sub-model balance: the external wrench at the hypothesis equals minus the signed sum of
    // the measurement mismatches flowing across the sub-model boundary.
    auto boundary_mismatch = [&](int label, const Vec3& about) {
        Vec6 mismatch = Vec6::Zero();
        for (const auto& delta : deltas) {
            double sign = 0.0;
            if (delta.child_label == label) sign = 1.0;      // wrench flows into this sub-model
            else if (delta.parent_label == label) sign = -1.0; // reaction on the parent side
            if (sign == 0.0) continue;
            const Vec3 child_origin = kin.link(delta.geo.child_link).origin;
            mismatch.head<3>() += sign * delta.dforce;
            mismatch.tail<3>() += sign * (delta.dtorque + (child_origin - about).cross(delta.dforce));
        }
        return mismatch;
    };

    EstimationResult result;
    std::map<std::string, SpatialWrench> estimated_externals;
    for (const auto& info : infos) {
        bool bounded = false;
        for (const auto& delta : deltas)
            if (delta.child_label == info.label || delta.parent_label == info.label) bounded = true;
        if (!bounded)
            throw Error("hypothesis '" + info.spec->frame + "' lies outside every sensor-bounded sub-model");

        const Vec6 mismatch = -boundary_mismatch(info.label, info.point);
        WrenchEstimate estimate_out;
        estimate_out.frame = info.spec->frame;
        estimate_out.kind = info.spec->kind;
        estimate_out.wrench.frame = info.spec->frame;
        estimate_out.wrench.force = mismatch.head<3>();
        // Referencing moments at the hypothesis point decouples the force rows from the torque
        // rows, so the pure-force least squares reduces to reading the force block and leaving
        // the torque block as residual.
        estimate_out.wrench.torque =
            info.spec->kind == HypothesisKind::kFullWrench ? Vec3(mismatch.tail<3>()) : Vec3::Zero();
        estimated_externals[info.spec->frame] = estimate_out.wrench;
        result.wrenches.push_back(std::move(estimate_out));
    }

    // Residual per sensor: child-side sub-model mismatch left after the hypothesis explains its
    // share (zero for full-wrench, unmodeled torque for pure-force, everything when no
    // hypothesis exists in that sub-model).
    for (const auto& delta : deltas) {
        const int label = delta.child_label;
        const HypothesisInfo* owner = nullptr;
        for (const auto& info : infos)
            if (info.label == label) owner = &info;
        Vec6 residual;
        if (owner) {
            const Vec6 mismatch = -boundary_mismatch(label, owner->point);
            residual = mismatch;
            residual.head<3>().setZero();
            if (owner->spec->kind == HypothesisKind::kFullWrench) residual.setZero();
        } else {
            residual = -boundary_mismatch(label, kin.link(delta.geo.child_link).origin);
        }
        result.residuals[delta.spec->name] = residual;
    }

    // Final inward recursion: joint torques with the estimated externals applied, measured
    // wrenches substituted at every sensor cut.
    const RneaDetail with_estimates = rnea_detailed(model, state, nudot, estimated_externals, gravity);
    const int nl = model.link_count();
    std::vector<Vec3> force(nl), torque(nl);
    for (int li = 0; li < nl; ++li) {
        force[li] = with_estimates.force[li];
        torque[li] = with_estimates.torque[li];
    }

    // Re-run the accumulation from leaves, replacing cut wrenches by measurements.
    std::vector<Vec3> own_force(nl), own_torque(nl);
    {
        // Recover per-link own contributions: transmitted minus the children's transmitted
        // wrenches shifted to this link's origin.
        for (int li = 0; li < nl; ++li) {
            own_force[li] = with_estimates.force[li];
            own_torque[li] = with_estimates.torque[li];
        }
        for (int li : model.topological_order()) {
            const int j = model.parent_joint_of_link(li);
            if (j < 0) continue;
            const int parent = model.link_index(model.joints()[j].parent);
            own_force[parent] -= with_estimates.force[li];
            own_torque[parent] -= with_estimates.torque[li] +
                                  (kin.link(li).origin - kin.link(parent).origin)
                                      .cross(with_estimates.force[li]);
        }
    }
    const auto& order = model.topological_order();
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const int li = *it;
        force[li] = own_force[li];
        torque[li] = own_torque[li];
    }
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const int li = *it;
        const int j = model.parent_joint_of_link(li);
        if (j < 0) continue;
        const auto cut = std::find(sensor_joints.begin(), sensor_joints.end(), j);
        if (cut != sensor_joints.end()) {
            const auto& delta = deltas[cut - sensor_joints.begin()];
            force[li] = delta.measured_force;
            torque[li] = delta.measured_torque;
        }
        const int parent = model.link_index(model.joints()[j].parent);
        force[parent] += force[li];
        torque[parent] += torque[li] + (kin.link(li).origin - kin.link(parent).origin).cross(force[li]);
    }

    result.tau_hat = VecX::Zero(model.n());
    for (int j : model.actuated_joints()) {
        const int child = model.link_index(model.joints()[j].child);
        result.tau_hat[model.joint_q_index(j)] = kin.link(child).axis_world.dot(torque[child]);
    }
    return result;
}

} // namespace fbdyn
