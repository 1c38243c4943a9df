#include "fbdyn/model.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

namespace fbdyn {

RobotModel::RobotModel(std::string name, std::vector<LinkSpec> links, std::vector<JointSpec> joints,
                       std::vector<ContactFrameSpec> contacts)
    : name_(std::move(name)), links_(std::move(links)), joints_(std::move(joints)),
      contacts_(std::move(contacts)) {
    const int nl = static_cast<int>(links_.size());
    parent_joint_of_link_.assign(nl, -1);
    joint_q_index_.assign(joints_.size(), -1);

    bool structure_ok = true;
    for (int j = 0; j < static_cast<int>(joints_.size()); ++j) {
        const int child = link_index(joints_[j].child);
        if (child < 0 || link_index(joints_[j].parent) < 0) {
            structure_ok = false;
            continue;
        }
        if (parent_joint_of_link_[child] != -1) structure_ok = false; // double parent
        parent_joint_of_link_[child] = j;
    }

    // Root detection: exactly one link without a parent joint.
    int root = -1;
    for (int i = 0; i < nl; ++i) {
        if (parent_joint_of_link_[i] == -1) {
            if (root != -1) structure_ok = false;
            if (root == -1) root = i;
        }
    }
    if (root < 0) structure_ok = false;
    if (root >= 0) base_link_ = links_[root].name;

    // Topological order by breadth-first traversal from the root; cycles and orphans leave
    // links unvisited.
    if (structure_ok) {
        std::vector<std::vector<int>> children(nl);
        for (int j = 0; j < static_cast<int>(joints_.size()); ++j) {
            const int p = link_index(joints_[j].parent);
            const int c = link_index(joints_[j].child);
            if (p >= 0 && c >= 0) children[p].push_back(c);
        }
        topo_order_.reserve(nl);
        std::vector<int> stack{root};
        std::vector<bool> visited(nl, false);
        while (!stack.empty()) {
            const int i = stack.back();
            stack.pop_back();
            if (visited[i]) {
                structure_ok = false;
                break;
            }
            visited[i] = true;
            topo_order_.push_back(i);
            for (auto it = children[i].rbegin(); it != children[i].rend(); ++it) stack.push_back(*it);
        }
        if (static_cast<int>(topo_order_.size()) != nl) structure_ok = false;
    }
    tree_valid_ = structure_ok;

    if (tree_valid_) {
        for (int i : topo_order_) {
            const int j = parent_joint_of_link_[i];
            if (j >= 0 && joints_[j].type == JointType::kRevolute) {
                joint_q_index_[j] = n_++;
                actuated_joints_.push_back(j);
            }
        }
    } else {
        topo_order_.clear();
    }
}

int RobotModel::link_index(const std::string& name) const {
    for (int i = 0; i < static_cast<int>(links_.size()); ++i)
        if (links_[i].name == name) return i;
    return -1;
}

int RobotModel::joint_index(const std::string& name) const {
    for (int i = 0; i < static_cast<int>(joints_.size()); ++i)
        if (joints_[i].name == name) return i;
    return -1;
}

int RobotModel::contact_index(const std::string& name) const {
    for (int i = 0; i < static_cast<int>(contacts_.size()); ++i)
        if (contacts_[i].name == name) return i;
    return -1;
}

namespace {

void add_error(std::vector<Diagnostic>& diags, const std::string& entity, const std::string& msg) {
    diags.push_back({Diagnostic::Severity::kError, entity, msg});
}

bool is_leaf(const RobotModel& model, const std::string& link) {
    for (const auto& j : model.joints())
        if (j.parent == link) return false;
    return true;
}

} // namespace

std::vector<Diagnostic> validate_model(const RobotModel& model) {
    std::vector<Diagnostic> diags;

    std::set<std::string> link_names;
    for (const auto& link : model.links()) {
        if (!link_names.insert(link.name).second)
            add_error(diags, link.name, "duplicate link name");

        if (link.mass < 0.0) add_error(diags, link.name, "mass must be non-negative");
        if (link.mass == 0.0 && !is_leaf(model, link.name))
            add_error(diags, link.name, "massless link allowed only as a leaf frame");

        if ((link.inertia - link.inertia.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
            add_error(diags, link.name, "inertia not symmetric");
        } else if (link.mass > 0.0) {
            Eigen::SelfAdjointEigenSolver<Mat3> eig(link.inertia);
            const Vec3 moments = eig.eigenvalues();
            if (moments.minCoeff() < -1e-12)
                add_error(diags, link.name, "inertia not positive semidefinite");
            const double a = moments[0], b = moments[1], c = moments[2];
            if (a + b < c - 1e-12 || a + c < b - 1e-12 || b + c < a - 1e-12)
                add_error(diags, link.name, "triangle inequality violated on principal moments");
        }
    }

    std::set<std::string> joint_names;
    std::set<std::string> children_seen;
    for (const auto& joint : model.joints()) {
        if (!joint_names.insert(joint.name).second)
            add_error(diags, joint.name, "duplicate joint name");
        if (model.link_index(joint.parent) < 0)
            add_error(diags, joint.name, "unknown parent link '" + joint.parent + "'");
        if (model.link_index(joint.child) < 0)
            add_error(diags, joint.name, "unknown child link '" + joint.child + "'");
        if (!children_seen.insert(joint.child).second)
            add_error(diags, joint.child, "link has more than one parent joint");
        if (joint.type == JointType::kRevolute) {
            if (std::abs(joint.axis.norm() - 1.0) > 1e-9)
                add_error(diags, joint.name, "axis not unit");
            if (joint.limits.lower > joint.limits.upper)
                add_error(diags, joint.name, "limits.lower exceeds limits.upper");
        }
        if (joint.sea) {
            if (joint.sea->stiffness <= 0.0) add_error(diags, joint.name, "sea stiffness must be > 0");
            if (joint.sea->damping < 0.0) add_error(diags, joint.name, "sea damping must be >= 0");
            if (joint.sea->motor_inertia <= 0.0)
                add_error(diags, joint.name, "sea motor_inertia must be > 0");
        }
        if (joint.motor) {
            if (joint.motor->params.k_t <= 0.0) add_error(diags, joint.name, "motor k_t must be > 0");
            if (joint.motor->params.k_vp < 0.0 || joint.motor->params.k_vn < 0.0 ||
                joint.motor->params.k_cp < 0.0 || joint.motor->params.k_cn < 0.0)
                add_error(diags, joint.name, "motor friction coefficients must be >= 0");
        }
    }

    if (!model.tree_valid())
        add_error(diags, model.name(), "kinematic graph has cycle or is not a tree rooted at one base link");

    std::set<std::string> contact_names;
    for (const auto& contact : model.contacts()) {
        if (!contact_names.insert(contact.name).second)
            add_error(diags, contact.name, "duplicate contact name");
        if (model.link_index(contact.link) < 0)
            add_error(diags, contact.name, "unknown link '" + contact.link + "'");
        if (contact.mu <= 0.0) add_error(diags, contact.name, "mu must be > 0");
        if (contact.cone_facets < 4) add_error(diags, contact.name, "cone_facets must be >= 4");
        if (contact.kind == ContactKind::kSurface) {
            if (contact.vertices.size() < 3) {
                add_error(diags, contact.name, "surface contact needs >= 3 vertices");
            } else {
                // Vertices live in the contact frame whose z-axis is the normal; coplanarity
                // means equal z within tolerance.
                double zmin = contact.vertices[0].z(), zmax = zmin;
                for (const auto& v : contact.vertices) {
                    zmin = std::min(zmin, v.z());
                    zmax = std::max(zmax, v.z());
                }
                if (zmax - zmin > 1e-9)
                    add_error(diags, contact.name, "surface vertices not coplanar");
                Vec3 e1 = contact.vertices[1] - contact.vertices[0];
                bool collinear = true;
                for (size_t k = 2; k < contact.vertices.size(); ++k) {
                    const Vec3 e2 = contact.vertices[k] - contact.vertices[0];
                    if (e1.cross(e2).norm() > 1e-12) collinear = false;
                }
                if (collinear) add_error(diags, contact.name, "surface vertices collinear");
            }
        }
    }

    return diags;
}

FloatingBaseState neutral_state(const RobotModel& model) {
    FloatingBaseState state;
    state.q = VecX::Zero(model.n());
    state.nu = VecX::Zero(6 + model.n());
    for (int j : model.actuated_joints()) {
        const auto& limits = model.joints()[j].limits;
        if (limits.bounded()) state.q[model.joint_q_index(j)] = 0.5 * (limits.lower + limits.upper);
    }
    return state;
}

bool models_equal(const RobotModel& a, const RobotModel& b, double tol) {
    auto near = [tol](double x, double y) {
        if (std::isinf(x) || std::isinf(y)) return x == y;
        return std::abs(x - y) <= tol;
    };
    auto near3 = [&](const Vec3& x, const Vec3& y) {
        return near(x.x(), y.x()) && near(x.y(), y.y()) && near(x.z(), y.z());
    };
    if (a.name() != b.name() || a.links().size() != b.links().size() ||
        a.joints().size() != b.joints().size() || a.contacts().size() != b.contacts().size())
        return false;
    for (size_t i = 0; i < a.links().size(); ++i) {
        const auto& la = a.links()[i];
        const auto& lb = b.links()[i];
        if (la.name != lb.name || !near(la.mass, lb.mass) || !near3(la.com, lb.com)) return false;
        if ((la.inertia - lb.inertia).cwiseAbs().maxCoeff() > tol) return false;
    }
    for (size_t i = 0; i < a.joints().size(); ++i) {
        const auto& ja = a.joints()[i];
        const auto& jb = b.joints()[i];
        if (ja.name != jb.name || ja.type != jb.type || ja.parent != jb.parent ||
            ja.child != jb.child || !near3(ja.origin_xyz, jb.origin_xyz) ||
            !near3(ja.origin_rpy, jb.origin_rpy) || !near3(ja.axis, jb.axis))
            return false;
        if (!near(ja.limits.lower, jb.limits.lower) || !near(ja.limits.upper, jb.limits.upper) ||
            !near(ja.limits.velocity, jb.limits.velocity) || !near(ja.limits.effort, jb.limits.effort))
            return false;
        if (ja.motor.has_value() != jb.motor.has_value() || ja.sea.has_value() != jb.sea.has_value())
            return false;
        if (ja.motor) {
            const auto& ma = ja.motor->params;
            const auto& mb = jb.motor->params;
            if (!near(ma.k_t, mb.k_t) || !near(ma.k_vp, mb.k_vp) || !near(ma.k_vn, mb.k_vn) ||
                !near(ma.k_cp, mb.k_cp) || !near(ma.k_cn, mb.k_cn) ||
                !near(ja.motor->gear, jb.motor->gear))
                return false;
        }
        if (ja.sea) {
            if (!near(ja.sea->stiffness, jb.sea->stiffness) || !near(ja.sea->damping, jb.sea->damping) ||
                !near(ja.sea->motor_inertia, jb.sea->motor_inertia))
                return false;
        }
    }
    for (size_t i = 0; i < a.contacts().size(); ++i) {
        const auto& ca = a.contacts()[i];
        const auto& cb = b.contacts()[i];
        if (ca.name != cb.name || ca.link != cb.link || ca.kind != cb.kind ||
            !near3(ca.origin_xyz, cb.origin_xyz) || !near3(ca.origin_rpy, cb.origin_rpy) ||
            !near(ca.mu, cb.mu) || ca.cone_facets != cb.cone_facets ||
            ca.vertices.size() != cb.vertices.size())
            return false;
        for (size_t k = 0; k < ca.vertices.size(); ++k)
            if (!near3(ca.vertices[k], cb.vertices[k])) return false;
    }
    return true;
}

} // namespace fbdyn
