#include "fbdyn/model.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace fbdyn {
namespace {

// Minimal XML subset: elements, double-quoted attributes, comments, one text-bearing element
// (<vertices>). Enough for the model grammar; not a general XML parser.
struct XmlElement {
    std::string tag;
    std::vector<std::pair<std::string, std::string>> attributes;
    std::vector<XmlElement> children;
    std::string text;
    int line = 0;

    const std::string* attribute(const std::string& name) const {
        for (const auto& [k, v] : attributes)
            if (k == name) return &v;
        return nullptr;
    }
    const XmlElement* child(const std::string& name) const {
        for (const auto& c : children)
            if (c.tag == name) return &c;
        return nullptr;
    }
};

class XmlParser {
public:
    explicit XmlParser(const std::string& text) : text_(text) {}

    XmlElement parse_document() {
        skip_misc();
        XmlElement root = parse_element();
        skip_misc();
        if (pos_ != text_.size()) fail("trailing content after root element");
        return root;
    }

private:
    const std::string& text_;
    size_t pos_ = 0;
    int line_ = 1;

    [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, line_); }

    char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }

    char advance() {
        if (pos_ >= text_.size()) fail("unexpected end of input");
        const char c = text_[pos_++];
        if (c == '\n') ++line_;
        return c;
    }

    bool consume(const std::string& token) {
        if (text_.compare(pos_, token.size(), token) != 0) return false;
        for (size_t i = 0; i < token.size(); ++i) advance();
        return true;
    }

    void skip_whitespace() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) advance();
    }

    void skip_misc() {
        while (true) {
            skip_whitespace();
            if (consume("<?")) {
                while (!consume("?>")) advance();
            } else if (consume("<!--")) {
                while (!consume("-->")) advance();
            } else {
                break;
            }
        }
    }

    std::string parse_name() {
        skip_whitespace();
        std::string name;
        while (pos_ < text_.size()) {
            const char c = text_[pos_];
            if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')
                name += advance();
            else
                break;
        }
        if (name.empty()) fail("expected a name");
        return name;
    }

    XmlElement parse_element() {
        skip_misc();
        if (!consume("<")) fail("expected '<'");
        XmlElement element;
        element.line = line_;
        element.tag = parse_name();

        while (true) {
            skip_whitespace();
            if (consume("/>")) return element;
            if (consume(">")) break;
            std::string key = parse_name();
            skip_whitespace();
            if (!consume("=")) fail("expected '=' after attribute '" + key + "'");
            skip_whitespace();
            if (!consume("\"")) fail("expected '\"' opening attribute value");
            std::string value;
            while (peek() != '"') value += advance();
            advance(); // closing quote
            element.attributes.emplace_back(std::move(key), std::move(value));
        }

        // Content: child elements and raw text (kept for <vertices>).
        while (true) {
            const size_t before = pos_;
            skip_misc();
            if (consume("</")) {
                const std::string closing = parse_name();
                if (closing != element.tag)
                    fail("mismatched closing tag '" + closing + "' for '" + element.tag + "'");
                skip_whitespace();
                if (!consume(">")) fail("expected '>'");
                return element;
            }
            if (peek() == '<') {
                element.children.push_back(parse_element());
            } else {
                pos_ = before; // keep leading whitespace out of line counting twice
                while (peek() != '<') element.text += advance();
            }
        }
    }
};

double parse_double(const std::string& text, int line, const std::string& what) {
    try {
        size_t used = 0;
        const double v = std::stod(text, &used);
        while (used < text.size() && std::isspace(static_cast<unsigned char>(text[used]))) ++used;
        if (used != text.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ParseError("invalid number '" + text + "' in " + what, line);
    }
}

Vec3 parse_vec3(const std::string& text, int line, const std::string& what) {
    std::istringstream in(text);
    Vec3 v;
    if (!(in >> v.x() >> v.y() >> v.z())) throw ParseError("expected 3 numbers in " + what, line);
    std::string rest;
    if (in >> rest) throw ParseError("expected exactly 3 numbers in " + what, line);
    return v;
}

double attr_double(const XmlElement& e, const std::string& name, const std::string& what) {
    const std::string* raw = e.attribute(name);
    if (!raw) throw ParseError("missing attribute '" + name + "' in " + what, e.line);
    return parse_double(*raw, e.line, what + "." + name);
}

double attr_double_or(const XmlElement& e, const std::string& name, double fallback) {
    const std::string* raw = e.attribute(name);
    return raw ? parse_double(*raw, e.line, e.tag + "." + name) : fallback;
}

std::string attr_string(const XmlElement& e, const std::string& name, const std::string& what) {
    const std::string* raw = e.attribute(name);
    if (!raw) throw ParseError("missing attribute '" + name + "' in " + what, e.line);
    return *raw;
}

void read_origin(const XmlElement& parent, Vec3& xyz, Vec3& rpy) {
    if (const XmlElement* origin = parent.child("origin")) {
        if (const std::string* s = origin->attribute("xyz")) xyz = parse_vec3(*s, origin->line, "origin.xyz");
        if (const std::string* s = origin->attribute("rpy")) rpy = parse_vec3(*s, origin->line, "origin.rpy");
    }
}

LinkSpec parse_link(const XmlElement& e) {
    LinkSpec link;
    link.name = attr_string(e, "name", "link");
    if (const XmlElement* inertial = e.child("inertial")) {
        Vec3 rpy = Vec3::Zero();
        read_origin(*inertial, link.com, rpy);
        if (const XmlElement* mass = inertial->child("mass"))
            link.mass = attr_double(*mass, "value", "mass");
        if (const XmlElement* inertia = inertial->child("inertia")) {
            const double ixx = attr_double(*inertia, "ixx", "inertia");
            const double iyy = attr_double(*inertia, "iyy", "inertia");
            const double izz = attr_double(*inertia, "izz", "inertia");
            const double ixy = attr_double_or(*inertia, "ixy", 0.0);
            const double ixz = attr_double_or(*inertia, "ixz", 0.0);
            const double iyz = attr_double_or(*inertia, "iyz", 0.0);
            Mat3 inertia_local;
            inertia_local << ixx, ixy, ixz, ixy, iyy, iyz, ixz, iyz, izz;
            // Stored about the CoM in link axes; a non-zero inertial rpy rotates the tensor.
            const Mat3 r = rpy_to_rotation(rpy);
            link.inertia = r * inertia_local * r.transpose();
        }
    }
    return link;
}

JointSpec parse_joint(const XmlElement& e) {
    JointSpec joint;
    joint.name = attr_string(e, "name", "joint");
    const std::string type = attr_string(e, "type", "joint '" + joint.name + "'");
    if (type == "revolute") {
        joint.type = JointType::kRevolute;
    } else if (type == "fixed") {
        joint.type = JointType::kFixed;
    } else {
        throw ParseError("unsupported joint type '" + type + "' (revolute|fixed)", e.line);
    }

    const XmlElement* parent = e.child("parent");
    const XmlElement* child = e.child("child");
    if (!parent || !child)
        throw ParseError("joint '" + joint.name + "' needs <parent> and <child>", e.line);
    joint.parent = attr_string(*parent, "link", "parent");
    joint.child = attr_string(*child, "link", "child");
    read_origin(e, joint.origin_xyz, joint.origin_rpy);
    if (const XmlElement* axis = e.child("axis"))
        joint.axis = parse_vec3(attr_string(*axis, "xyz", "axis"), axis->line, "axis.xyz");
    if (const XmlElement* limit = e.child("limit")) {
        joint.limits.lower = attr_double_or(*limit, "lower", joint.limits.lower);
        joint.limits.upper = attr_double_or(*limit, "upper", joint.limits.upper);
        joint.limits.velocity = attr_double_or(*limit, "velocity", joint.limits.velocity);
        joint.limits.effort = attr_double_or(*limit, "effort", joint.limits.effort);
    }
    if (const XmlElement* motor = e.child("motor")) {
        MotorAttachment attachment;
        attachment.params.k_t = attr_double(*motor, "kt", "motor");
        attachment.params.k_vp = attr_double_or(*motor, "kvp", 0.0);
        attachment.params.k_vn = attr_double_or(*motor, "kvn", 0.0);
        attachment.params.k_cp = attr_double_or(*motor, "kcp", 0.0);
        attachment.params.k_cn = attr_double_or(*motor, "kcn", 0.0);
        attachment.gear = attr_double_or(*motor, "gear", 1.0);
        joint.motor = attachment;
    }
    if (const XmlElement* sea = e.child("sea")) {
        SeaSpec spec;
        spec.stiffness = attr_double(*sea, "stiffness", "sea");
        spec.damping = attr_double_or(*sea, "damping", 0.0);
        spec.motor_inertia = attr_double(*sea, "motor_inertia", "sea");
        joint.sea = spec;
    }
    return joint;
}

ContactFrameSpec parse_contact(const XmlElement& e) {
    ContactFrameSpec contact;
    contact.name = attr_string(e, "name", "contact");
    contact.link = attr_string(e, "link", "contact '" + contact.name + "'");
    contact.mu = attr_double(e, "mu", "contact '" + contact.name + "'");
    contact.cone_facets = static_cast<int>(attr_double_or(e, "facets", 8));
    read_origin(e, contact.origin_xyz, contact.origin_rpy);
    const std::string* kind = e.attribute("kind");
    if (kind && *kind == "surface")
        contact.kind = ContactKind::kSurface;
    else if (kind && *kind != "point")
        throw ParseError("unknown contact kind '" + *kind + "' (point|surface)", e.line);

    if (const XmlElement* vertices = e.child("vertices")) {
        std::string token;
        std::stringstream in(vertices->text);
        std::vector<double> values;
        while (std::getline(in, token, ';')) {
            std::istringstream vs(token);
            double x;
            while (vs >> x) values.push_back(x);
        }
        if (values.size() % 3 != 0)
            throw ParseError("vertices must be ';'-separated triplets", vertices->line);
        for (size_t i = 0; i + 2 < values.size(); i += 3)
            contact.vertices.push_back(Vec3(values[i], values[i + 1], values[i + 2]));
        if (!kind) contact.kind = ContactKind::kSurface;
    }
    return contact;
}

void append_vec3(std::string& out, const Vec3& v) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g", v.x(), v.y(), v.z());
    out += buf;
}

std::string number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

RobotModel load_model(const std::string& source) {
    XmlParser parser(source);
    const XmlElement root = parser.parse_document();
    if (root.tag != "robot") throw ParseError("root element must be <robot>", root.line);

    std::string name = root.attribute("name") ? *root.attribute("name") : "robot";
    std::vector<LinkSpec> links;
    std::vector<JointSpec> joints;
    std::vector<ContactFrameSpec> contacts;
    for (const auto& child : root.children) {
        if (child.tag == "link")
            links.push_back(parse_link(child));
        else if (child.tag == "joint")
            joints.push_back(parse_joint(child));
        else if (child.tag == "contact")
            contacts.push_back(parse_contact(child));
        else
            throw ParseError("unexpected element <" + child.tag + "> under <robot>", child.line);
    }
    if (links.empty()) throw ParseError("model declares no links", root.line);

    RobotModel model(std::move(name), std::move(links), std::move(joints), std::move(contacts));
    auto diags = validate_model(model);
    std::vector<Diagnostic> errors;
    for (auto& d : diags)
        if (d.severity == Diagnostic::Severity::kError) errors.push_back(d);
    if (!errors.empty()) throw ValidationError(std::move(errors));
    return model;
}

RobotModel load_model_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open model file '" + path + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return load_model(buffer.str());
}

std::string serialize_model(const RobotModel& model) {
    std::string out = "<robot name=\"" + model.name() + "\">\n";
    for (const auto& link : model.links()) {
        out += "  <link name=\"" + link.name + "\">\n";
        out += "    <inertial>\n";
        out += "      <origin xyz=\"";
        append_vec3(out, link.com);
        out += "\" rpy=\"0 0 0\"/>\n";
        out += "      <mass value=\"" + number(link.mass) + "\"/>\n";
        out += "      <inertia ixx=\"" + number(link.inertia(0, 0)) + "\" ixy=\"" +
               number(link.inertia(0, 1)) + "\" ixz=\"" + number(link.inertia(0, 2)) + "\" iyy=\"" +
               number(link.inertia(1, 1)) + "\" iyz=\"" + number(link.inertia(1, 2)) + "\" izz=\"" +
               number(link.inertia(2, 2)) + "\"/>\n";
        out += "    </inertial>\n";
        out += "  </link>\n";
    }
    for (const auto& joint : model.joints()) {
        out += "  <joint name=\"" + joint.name + "\" type=\"";
        out += joint.type == JointType::kRevolute ? "revolute" : "fixed";
        out += "\">\n";
        out += "    <parent link=\"" + joint.parent + "\"/>\n";
        out += "    <child link=\"" + joint.child + "\"/>\n";
        out += "    <origin xyz=\"";
        append_vec3(out, joint.origin_xyz);
        out += "\" rpy=\"";
        append_vec3(out, joint.origin_rpy);
        out += "\"/>\n";
        if (joint.type == JointType::kRevolute) {
            out += "    <axis xyz=\"";
            append_vec3(out, joint.axis);
            out += "\"/>\n";
            const auto& l = joint.limits;
            if (l.bounded() || std::isfinite(l.velocity) || std::isfinite(l.effort)) {
                out += "    <limit";
                if (std::isfinite(l.lower)) out += " lower=\"" + number(l.lower) + "\"";
                if (std::isfinite(l.upper)) out += " upper=\"" + number(l.upper) + "\"";
                if (std::isfinite(l.velocity)) out += " velocity=\"" + number(l.velocity) + "\"";
                if (std::isfinite(l.effort)) out += " effort=\"" + number(l.effort) + "\"";
                out += "/>\n";
            }
        }
        if (joint.motor) {
            const auto& m = joint.motor->params;
            out += "    <motor kt=\"" + number(m.k_t) + "\" kvp=\"" + number(m.k_vp) + "\" kvn=\"" +
                   number(m.k_vn) + "\" kcp=\"" + number(m.k_cp) + "\" kcn=\"" + number(m.k_cn) +
                   "\" gear=\"" + number(joint.motor->gear) + "\"/>\n";
        }
        if (joint.sea) {
            out += "    <sea stiffness=\"" + number(joint.sea->stiffness) + "\" damping=\"" +
                   number(joint.sea->damping) + "\" motor_inertia=\"" +
                   number(joint.sea->motor_inertia) + "\"/>\n";
        }
        out += "  </joint>\n";
    }
    for (const auto& contact : model.contacts()) {
        out += "  <contact name=\"" + contact.name + "\" link=\"" + contact.link + "\" mu=\"" +
               number(contact.mu) + "\" facets=\"" + std::to_string(contact.cone_facets) +
               "\" kind=\"";
        out += contact.kind == ContactKind::kPoint ? "point" : "surface";
        out += "\">\n";
        out += "    <origin xyz=\"";
        append_vec3(out, contact.origin_xyz);
        out += "\" rpy=\"";
        append_vec3(out, contact.origin_rpy);
        out += "\"/>\n";
        if (!contact.vertices.empty()) {
            out += "    <vertices>";
            for (size_t i = 0; i < contact.vertices.size(); ++i) {
                if (i) out += "; ";
                append_vec3(out, contact.vertices[i]);
            }
            out += "</vertices>\n";
        }
        out += "  </contact>\n";
    }
    out += "</robot>\n";
    return out;
}

} // namespace fbdyn
