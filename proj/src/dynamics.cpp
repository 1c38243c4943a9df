#include "fbdyn/dynamics.hpp"

#include <cmath>

namespace fbdyn {

namespace {

// Link accelerations for one (state, nudot) pair, world axes: material acceleration of the frame
// origin and angular acceleration. With the mixed convention these are exactly the rows of
// J*nudot + Jdot*nu for the link frame.
struct LinkAcceleration {
    Vec3 domega;
    Vec3 a_origin;
    Vec3 a_com;
};

std::vector<LinkAcceleration> forward_accelerations(const Kinematics& kin, const VecX& nudot) {
    const RobotModel& model = kin.model();
    std::vector<LinkAcceleration> acc(model.link_count());
    for (int li : model.topological_order()) {
        const LinkKinematics& lk = kin.link(li);
        const int j = model.parent_joint_of_link(li);
        if (j < 0) {
            acc[li].a_origin = nudot.head<3>();
            acc[li].domega = nudot.segment<3>(3);
        } else {
            const auto& joint = model.joints()[j];
            const int parent = model.link_index(joint.parent);
            const LinkKinematics& pk = kin.link(parent);
            const LinkAcceleration& pa = acc[parent];
            const Vec3 r = lk.origin - pk.origin;
            acc[li].a_origin = pa.a_origin + pa.domega.cross(r) + pk.omega.cross(pk.omega.cross(r));
            acc[li].domega = pa.domega;
            const int qi = model.joint_q_index(j);
            if (qi >= 0) {
                const double qdd = nudot[6 + qi];
                const double qd = kin.state().nu[6 + qi];
                acc[li].domega += lk.axis_world * qdd + pk.omega.cross(lk.axis_world * qd);
            }
        }
        const Vec3 rc = lk.com - lk.origin;
        acc[li].a_com = acc[li].a_origin + acc[li].domega.cross(rc) + lk.omega.cross(lk.omega.cross(rc));
    }
    return acc;
}

struct ExternalAtLink {
    Vec3 force = Vec3::Zero();
    Vec3 torque = Vec3::Zero(); // about the link frame origin
};

std::vector<ExternalAtLink> gather_externals(const Kinematics& kin,
                                             const std::map<std::string, SpatialWrench>& external) {
    const RobotModel& model = kin.model();
    std::vector<ExternalAtLink> per_link(model.link_count());
    for (const auto& [frame, wrench] : external) {
        const auto [link, local] = kin.resolve_frame(frame);
        const LinkKinematics& lk = kin.link(link);
        const Vec3 p = lk.rotation * local.translation + lk.origin;
        per_link[link].force += wrench.force;
        per_link[link].torque += wrench.torque + (p - lk.origin).cross(wrench.force);
    }
    return per_link;
}

} // namespace

Kinematics::Kinematics(const RobotModel& model, const FloatingBaseState& state)
    : model_(&model), state_(state) {
    if (state_.q.size() != model.n() || state_.nu.size() != 6 + model.n())
        throw Error("state dimensions do not match the model");
    links_.resize(model.link_count());
    const Mat3 base_rotation = state_.base_orientation.normalized().toRotationMatrix();

    Vec3 weighted_com = Vec3::Zero();
    Vec3 weighted_vcom = Vec3::Zero();
    for (int li : model.topological_order()) {
        LinkKinematics& lk = links_[li];
        const int j = model.parent_joint_of_link(li);
        if (j < 0) {
            lk.rotation = base_rotation;
            lk.origin = state_.base_position;
            lk.omega = state_.nu.segment<3>(3);
            lk.v_origin = state_.nu.head<3>();
            lk.axis_world = Vec3::Zero();
        } else {
            const auto& joint = model.joints()[j];
            const LinkKinematics& pk = links_[model.link_index(joint.parent)];
            const Pose origin = joint.origin();
            lk.origin = pk.rotation * origin.translation + pk.origin;
            Mat3 rotation = pk.rotation * origin.rotation;
            lk.omega = pk.omega;
            lk.v_origin = pk.v_origin + pk.omega.cross(lk.origin - pk.origin);
            lk.axis_world = Vec3::Zero();
            const int qi = model.joint_q_index(j);
            if (qi >= 0) {
                rotation = rotation * Eigen::AngleAxisd(state_.q[qi], joint.axis).toRotationMatrix();
                lk.axis_world = rotation * joint.axis;
                lk.omega += lk.axis_world * state_.nu[6 + qi];
            }
            lk.rotation = rotation;
        }
        const auto& spec = model.links()[li];
        lk.com = lk.rotation * spec.com + lk.origin;
        lk.v_com = lk.v_origin + lk.omega.cross(lk.com - lk.origin);
        total_mass_ += spec.mass;
        weighted_com += spec.mass * lk.com;
        weighted_vcom += spec.mass * lk.v_com;
    }
    if (total_mass_ > 0.0) {
        com_ = weighted_com / total_mass_;
        com_velocity_ = weighted_vcom / total_mass_;
    }
}

std::pair<int, Pose> Kinematics::resolve_frame(const std::string& frame) const {
    const int link = model_->link_index(frame);
    if (link >= 0) return {link, Pose{}};
    const int ci = model_->contact_index(frame);
    if (ci >= 0) {
        const auto& contact = model_->contacts()[ci];
        return {model_->link_index(contact.link), contact.origin()};
    }
    throw Error("unknown frame '" + frame + "'");
}

Pose Kinematics::frame_pose(const std::string& frame) const {
    const auto [link, local] = resolve_frame(frame);
    const LinkKinematics& lk = links_[link];
    return Pose{lk.rotation * local.rotation, lk.rotation * local.translation + lk.origin};
}

Pose forward_kinematics(const RobotModel& model, const FloatingBaseState& state,
                        const std::string& frame) {
    return Kinematics(model, state).frame_pose(frame);
}

MatX frame_jacobian(const RobotModel& model, const FloatingBaseState& state,
                    const std::string& frame) {
    const Kinematics kin(model, state);
    const auto [link, local] = kin.resolve_frame(frame);
    const LinkKinematics& target = kin.link(link);
    const Vec3 p = target.rotation * local.translation + target.origin;

    MatX jac = MatX::Zero(6, 6 + model.n());
    jac.block<3, 3>(0, 0) = Mat3::Identity();
    jac.block<3, 3>(0, 3) = -skew(p - state.base_position);
    jac.block<3, 3>(3, 3) = Mat3::Identity();

    // Walk the root path: every revolute joint between base and the target link contributes.
    int li = link;
    while (true) {
        const int j = model.parent_joint_of_link(li);
        if (j < 0) break;
        const int qi = model.joint_q_index(j);
        if (qi >= 0) {
            const LinkKinematics& lk = kin.link(li);
            jac.block<3, 1>(0, 6 + qi) = lk.axis_world.cross(p - lk.origin);
            jac.block<3, 1>(3, 6 + qi) = lk.axis_world;
        }
        li = model.link_index(model.joints()[j].parent);
    }
    return jac;
}

Vec6 bias_acceleration(const RobotModel& model, const FloatingBaseState& state,
                       const std::string& frame) {
    const Kinematics kin(model, state);
    const auto acc = forward_accelerations(kin, VecX::Zero(6 + model.n()));
    const auto [link, local] = kin.resolve_frame(frame);
    const LinkKinematics& lk = kin.link(link);
    const Vec3 p = lk.rotation * local.translation + lk.origin;
    const Vec3 r = p - lk.origin;
    Vec6 out;
    out.head<3>() = acc[link].a_origin + acc[link].domega.cross(r) + lk.omega.cross(lk.omega.cross(r));
    out.tail<3>() = acc[link].domega;
    return out;
}

RneaDetail rnea_detailed(const RobotModel& model, const FloatingBaseState& state, const VecX& nudot,
                         const std::map<std::string, SpatialWrench>& external, const Vec3& gravity) {
    if (nudot.size() != 6 + model.n()) throw Error("nudot dimension mismatch");
    const Kinematics kin(model, state);
    const auto acc = forward_accelerations(kin, nudot);
    const auto externals = gather_externals(kin, external);

    const int nl = model.link_count();
    RneaDetail detail;
    detail.force.assign(nl, Vec3::Zero());  // transmitted from parent, world
    detail.torque.assign(nl, Vec3::Zero()); // about the link frame origin

    const auto& order = model.topological_order();
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const int li = *it;
        const auto& spec = model.links()[li];
        const LinkKinematics& lk = kin.link(li);
        const Mat3 inertia_world = lk.rotation * spec.inertia * lk.rotation.transpose();

        Vec3 f = spec.mass * (acc[li].a_com - gravity);
        Vec3 n = inertia_world * acc[li].domega + lk.omega.cross(inertia_world * lk.omega) +
                 (lk.com - lk.origin).cross(f);
        f -= externals[li].force;
        n -= externals[li].torque;
        detail.force[li] += f;
        detail.torque[li] += n;

        const int j = model.parent_joint_of_link(li);
        if (j >= 0) {
            const int parent = model.link_index(model.joints()[j].parent);
            const LinkKinematics& pk = kin.link(parent);
            detail.force[parent] += detail.force[li];
            detail.torque[parent] += detail.torque[li] + (lk.origin - pk.origin).cross(detail.force[li]);
        }
    }

    detail.generalized = VecX::Zero(6 + model.n());
    const int base = order.front();
    detail.generalized.head<3>() = detail.force[base];
    detail.generalized.segment<3>(3) = detail.torque[base];
    for (int j : model.actuated_joints()) {
        const int child = model.link_index(model.joints()[j].child);
        detail.generalized[6 + model.joint_q_index(j)] =
            kin.link(child).axis_world.dot(detail.torque[child]);
    }
    return detail;
}

VecX rnea(const RobotModel& model, const FloatingBaseState& state, const VecX& nudot,
          const std::map<std::string, SpatialWrench>& external, const Vec3& gravity) {
    return rnea_detailed(model, state, nudot, external, gravity).generalized;
}

MatX mass_matrix(const RobotModel& model, const FloatingBaseState& state) {
    const Kinematics kin(model, state);
    const int n = model.n();
    MatX m = MatX::Zero(6 + n, 6 + n);

    // Composite inertia per subtree: mass, CoM, rotational inertia about that CoM (world axes).
    const int nl = model.link_count();
    std::vector<double> cmass(nl);
    std::vector<Vec3> ccom(nl);
    std::vector<Mat3> cinertia(nl);
    const auto& order = model.topological_order();
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const int li = *it;
        const auto& spec = model.links()[li];
        const LinkKinematics& lk = kin.link(li);
        cmass[li] = spec.mass;
        ccom[li] = lk.com;
        cinertia[li] = lk.rotation * spec.inertia * lk.rotation.transpose();
    }
    auto merge = [&](int into, int from) {
        const double total = cmass[into] + cmass[from];
        if (total <= 0.0) return;
        const Vec3 c = (cmass[into] * ccom[into] + cmass[from] * ccom[from]) / total;
        auto steiner = [](double mass, const Vec3& d) {
            return mass * (d.squaredNorm() * Mat3::Identity() - d * d.transpose());
        };
        cinertia[into] = cinertia[into] + steiner(cmass[into], ccom[into] - c) + cinertia[from] +
                         steiner(cmass[from], ccom[from] - c);
        cmass[into] = total;
        ccom[into] = c;
    };
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const int li = *it;
        const int j = model.parent_joint_of_link(li);
        if (j >= 0) merge(model.link_index(model.joints()[j].parent), li);
    }

    const int base = order.front();
    const Vec3 base_origin = kin.link(base).origin;
    const double total_mass = cmass[base];
    const Vec3 total_com = ccom[base];

    m.block<3, 3>(0, 0) = total_mass * Mat3::Identity();
    const Mat3 lever = skew(total_com - base_origin);
    m.block<3, 3>(3, 0) = total_mass * lever;
    m.block<3, 3>(0, 3) = total_mass * lever.transpose();
    m.block<3, 3>(3, 3) = cinertia[base] + total_mass * lever * lever.transpose();

    // Recompute subtree composites per joint. Walking the order again keeps the merge results:
    // cinertia[li] above already holds the full subtree of li.
    for (int j : model.actuated_joints()) {
        const int child = model.link_index(model.joints()[j].child);
        const int col = 6 + model.joint_q_index(j);
        const LinkKinematics& lk = kin.link(child);
        const Vec3 axis = lk.axis_world;
        const Vec3 joint_origin = lk.origin;

        const double sub_mass = cmass[child];
        const Vec3 sub_com = ccom[child];
        const Vec3 f_col = sub_mass * axis.cross(sub_com - joint_origin);
        const Vec3 n_com = cinertia[child] * axis;

        m.block<3, 1>(0, col) = f_col;
        m.block<3, 1>(3, col) = n_com + (sub_com - base_origin).cross(f_col);
        m.block<1, 3>(col, 0) = f_col.transpose();
        m.block<1, 3>(col, 3) = m.block<3, 1>(3, col).transpose();

        // Ancestor revolute joints, including j itself.
        int li = child;
        while (true) {
            const int pj = model.parent_joint_of_link(li);
            if (pj < 0) break;
            const int qi = model.joint_q_index(pj);
            if (qi >= 0) {
                const LinkKinematics& ak = kin.link(li);
                const double value =
                    ak.axis_world.dot(n_com + (sub_com - ak.origin).cross(f_col));
                m(6 + qi, col) = value;
                m(col, 6 + qi) = value;
            }
            li = model.link_index(model.joints()[pj].parent);
        }
    }
    return m;
}

VecX bias_forces(const RobotModel& model, const FloatingBaseState& state, const Vec3& gravity) {
    return rnea(model, state, VecX::Zero(6 + model.n()), {}, gravity);
}

VecX gravity_forces(const RobotModel& model, const FloatingBaseState& state, const Vec3& gravity) {
    FloatingBaseState rest = state;
    rest.nu.setZero();
    return rnea(model, rest, VecX::Zero(6 + model.n()), {}, gravity);
}

CentroidalMomentum centroidal_momentum(const RobotModel& model, const FloatingBaseState& state) {
    const Kinematics kin(model, state);
    CentroidalMomentum momentum;
    const Vec3 com = kin.com();
    for (int li : model.topological_order()) {
        const auto& spec = model.links()[li];
        if (spec.mass <= 0.0) continue;
        const LinkKinematics& lk = kin.link(li);
        const Mat3 inertia_world = lk.rotation * spec.inertia * lk.rotation.transpose();
        momentum.h.head<3>() += spec.mass * lk.v_com;
        momentum.h.tail<3>() += inertia_world * lk.omega + (lk.com - com).cross(spec.mass * lk.v_com);
    }
    return momentum;
}

MatX contact_map(const std::vector<Vec3>& points, const Vec3& com) {
    MatX x(6, 3 * points.size());
    for (size_t i = 0; i < points.size(); ++i) {
        x.block<3, 3>(0, 3 * i) = Mat3::Identity();
        x.block<3, 3>(3, 3 * i) = skew(points[i] - com);
    }
    return x;
}

ContactSet::ContactSet(const Kinematics& kin, const std::vector<std::string>& active_contact_names) {
    const RobotModel& model = kin.model();
    for (const auto& name : active_contact_names) {
        const int ci = model.contact_index(name);
        if (ci < 0) throw Error("unknown contact frame '" + name + "'");
        const auto& spec = model.contacts()[ci];
        const int link = model.link_index(spec.link);
        const LinkKinematics& lk = kin.link(link);
        const Pose local = spec.origin();
        const Mat3 frame_world = lk.rotation * local.rotation;
        const Vec3 normal = frame_world.col(2);

        auto add_point = [&](const Vec3& local_point, const std::string& point_name) {
            ContactPoint point;
            point.name = point_name;
            point.link = link;
            point.local_point = local_point;
            point.position = lk.rotation * local_point + lk.origin;
            point.normal = normal;
            // Deterministic tangent basis around the normal.
            Vec3 seed = std::abs(normal.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
            point.tangent1 = normal.cross(seed).normalized();
            point.tangent2 = normal.cross(point.tangent1);
            point.mu = spec.mu;
            point.cone_facets = spec.cone_facets;
            points_.push_back(std::move(point));
        };

        if (spec.kind == ContactKind::kPoint) {
            add_point(local.translation, spec.name);
        } else {
            for (size_t v = 0; v < spec.vertices.size(); ++v)
                add_point(local * spec.vertices[v], spec.name + "#" + std::to_string(v));
        }
    }

    const int n = model.n();
    const int c = point_count();
    jacobian_.resize(3 * c, 6 + n);
    bias_.resize(3 * c);
    map_com_.resize(6, 3 * c);
    int facet_rows = 0;
    for (const auto& point : points_) facet_rows += point.cone_facets + 1;
    cone_rows_ = MatX::Zero(facet_rows, 3 * c);

    const Vec3 com = kin.com();
    int row = 0;
    for (int i = 0; i < c; ++i) {
        const ContactPoint& point = points_[i];
        // Point Jacobian: linear rows of the frame Jacobian evaluated at the point.
        MatX jac = MatX::Zero(3, 6 + n);
        jac.block<3, 3>(0, 0) = Mat3::Identity();
        jac.block<3, 3>(0, 3) = -skew(point.position - kin.state().base_position);
        int li = point.link;
        while (true) {
            const int j = model.parent_joint_of_link(li);
            if (j < 0) break;
            const int qi = model.joint_q_index(j);
            if (qi >= 0) {
                const LinkKinematics& ak = kin.link(li);
                jac.block<3, 1>(0, 6 + qi) = ak.axis_world.cross(point.position - ak.origin);
            }
            li = model.link_index(model.joints()[j].parent);
        }
        jacobian_.middleRows<3>(3 * i) = jac;

        map_com_.block<3, 3>(0, 3 * i) = Mat3::Identity();
        map_com_.block<3, 3>(3, 3 * i) = skew(point.position - com);

        const double mu_eff = point.mu * std::cos(M_PI / point.cone_facets);
        for (int k = 0; k < point.cone_facets; ++k) {
            const double angle = 2.0 * M_PI * k / point.cone_facets;
            const Vec3 u = std::cos(angle) * point.tangent1 + std::sin(angle) * point.tangent2;
            cone_rows_.block<1, 3>(row++, 3 * i) = (u - mu_eff * point.normal).transpose();
        }
        cone_rows_.block<1, 3>(row++, 3 * i) = -point.normal.transpose();
    }

    // Jdot*nu at each point from the zero-acceleration forward pass.
    const auto acc = forward_accelerations(kin, VecX::Zero(6 + n));
    for (int i = 0; i < c; ++i) {
        const ContactPoint& point = points_[i];
        const LinkKinematics& lk = kin.link(point.link);
        const Vec3 r = point.position - lk.origin;
        bias_.segment<3>(3 * i) =
            acc[point.link].a_origin + acc[point.link].domega.cross(r) + lk.omega.cross(lk.omega.cross(r));
    }
}

double ContactSet::cone_margin(const VecX& forces) const {
    if (point_count() == 0 || forces.size() != force_dim()) return 0.0;
    return -(cone_rows_ * forces).maxCoeff();
}

VecX ContactSet::interior_forces() const {
    VecX f = VecX::Zero(force_dim());
    for (int i = 0; i < point_count(); ++i) f.segment<3>(3 * i) = points_[i].normal;
    return f;
}

} // namespace fbdyn
