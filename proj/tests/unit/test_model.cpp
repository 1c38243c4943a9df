#include "fbdyn/model.hpp"

#include "fixtures.hpp"

#include <doctest.h>

#include <algorithm>

using namespace fbdyn;

namespace {

const char* kMiniPendulum = R"(<robot name="mini">
  <link name="base">
    <inertial><mass value="1.0"/><inertia ixx="0.01" iyy="0.01" izz="0.01"/></inertial>
  </link>
  <link name="rod">
    <inertial>
      <origin xyz="0 0 -0.5"/>
      <mass value="0.7"/>
      <inertia ixx="0.01" iyy="0.01" izz="0.001"/>
    </inertial>
  </link>
  <joint name="pin" type="revolute">
    <parent link="base"/>
    <child link="rod"/>
    <axis xyz="0 1 0"/>
  </joint>
</robot>)";

} // namespace

TEST_CASE("single-link pendulum loads with n = 1") {
    const RobotModel model = load_model(kMiniPendulum);
    CHECK(model.n() == 1);
    CHECK(model.links().size() == 2);
    CHECK(model.base_link() == "base");
    CHECK(model.contacts().empty());
    CHECK(validate_model(model).empty());
}

TEST_CASE("non-unit axis is rejected") {
    std::string bad = kMiniPendulum;
    const auto pos = bad.find("0 1 0");
    bad.replace(pos, 5, "0 0.9 0");
    CHECK_THROWS_WITH_AS(load_model(bad), doctest::Contains("axis not unit"), ValidationError);
}

TEST_CASE("biped fixture: 5 links, n = 4, two contact frames") {
    const RobotModel model = load_model_file(fixture_path("models/biped5.xml"));
    CHECK(model.links().size() == 5);
    CHECK(model.n() == 4);
    CHECK(model.contacts().size() == 2);
    CHECK(validate_model(model).empty());
}

TEST_CASE("cycle in the joint graph is diagnosed") {
    std::vector<LinkSpec> links(2);
    links[0].name = "a";
    links[0].mass = 1.0;
    links[0].inertia = Mat3::Identity() * 0.01;
    links[1].name = "b";
    links[1].mass = 1.0;
    links[1].inertia = Mat3::Identity() * 0.01;
    std::vector<JointSpec> joints(2);
    joints[0].name = "j1";
    joints[0].parent = "a";
    joints[0].child = "b";
    joints[0].axis = Vec3::UnitY();
    joints[1].name = "j2";
    joints[1].parent = "b";
    joints[1].child = "a";
    joints[1].axis = Vec3::UnitY();
    const RobotModel model("cyclic", links, joints, {});
    const auto diags = validate_model(model);
    const bool has_cycle = std::any_of(diags.begin(), diags.end(), [](const Diagnostic& d) {
        return d.message.find("cycle") != std::string::npos;
    });
    CHECK(has_cycle);
}

TEST_CASE("triangle inequality on principal moments") {
    std::string bad = kMiniPendulum;
    const std::string needle = "ixx=\"0.01\" iyy=\"0.01\" izz=\"0.001\"";
    const auto pos = bad.find(needle);
    REQUIRE(pos != std::string::npos);
    bad.replace(pos, needle.size(), "ixx=\"1\" iyy=\"1\" izz=\"5\"");
    CHECK_THROWS_WITH_AS(load_model(bad), doctest::Contains("triangle inequality"), ValidationError);
}

TEST_CASE("massless links only as leaves") {
    const char* bad = R"(<robot name="m">
      <link name="base"><inertial><mass value="0"/><inertia ixx="0" iyy="0" izz="0"/></inertial></link>
      <link name="tip"><inertial><mass value="1"/><inertia ixx="0.01" iyy="0.01" izz="0.01"/></inertial></link>
      <joint name="j" type="revolute">
        <parent link="base"/><child link="tip"/><axis xyz="0 0 1"/>
      </joint>
    </robot>)";
    CHECK_THROWS_WITH_AS(load_model(bad), doctest::Contains("massless"), ValidationError);
}

TEST_CASE("neutral state: identity pose, limit midpoints, zero velocity") {
    const RobotModel pendulum = load_model_file(fixture_path("models/pendulum.xml"));
    const FloatingBaseState state = neutral_state(pendulum);
    CHECK(state.base_orientation.w() == doctest::Approx(1.0));
    CHECK(state.base_position.norm() == 0.0);
    CHECK(state.q.size() == 1);
    CHECK(state.q[0] == doctest::Approx(0.0)); // limits are symmetric
    CHECK(state.nu.size() == 7);
    CHECK(state.nu.norm() == 0.0);

    const RobotModel biped = load_model_file(fixture_path("models/biped5.xml"));
    CHECK(neutral_state(biped).nu.size() == 6 + 4);
}

TEST_CASE("neutral state uses limit midpoints") {
    std::string bounded = kMiniPendulum;
    const std::string needle = "<axis xyz=\"0 1 0\"/>";
    const auto pos = bounded.find(needle);
    REQUIRE(pos != std::string::npos);
    bounded.replace(pos, needle.size(), "<axis xyz=\"0 1 0\"/><limit lower=\"0.2\" upper=\"0.8\"/>");
    const RobotModel limited = load_model(bounded);
    CHECK(neutral_state(limited).q[0] == doctest::Approx(0.5));
}

TEST_CASE("serialize/load round trip is field-exact") {
    for (const char* file :
         {"models/pendulum.xml", "models/biped5.xml", "models/arm3.xml", "models/sea_joint.xml"}) {
        const RobotModel original = load_model_file(fixture_path(file));
        const RobotModel reloaded = load_model(serialize_model(original));
        CHECK_MESSAGE(models_equal(original, reloaded), file);
    }
}

TEST_CASE("topological order lists every link once, parents first") {
    const RobotModel model = load_model_file(fixture_path("models/biped5.xml"));
    const auto& order = model.topological_order();
    CHECK(order.size() == model.links().size());
    std::vector<int> position(model.links().size());
    for (size_t i = 0; i < order.size(); ++i) position[order[i]] = static_cast<int>(i);
    for (const auto& joint : model.joints()) {
        const int p = model.link_index(joint.parent);
        const int c = model.link_index(joint.child);
        CHECK(position[p] < position[c]);
    }
}

TEST_CASE("parse errors carry line numbers") {
    try {
        load_model("<robot name=\"x\">\n  <link name=\"a\">\n  <oops");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("line") != std::string::npos);
    }
}

TEST_CASE("surface contact validation: coplanar and non-collinear vertices") {
    const char* surface = R"(<robot name="s">
      <link name="base"><inertial><mass value="1"/><inertia ixx="0.01" iyy="0.01" izz="0.01"/></inertial></link>
      <contact name="sole" link="base" mu="0.7" facets="8" kind="surface">
        <origin xyz="0 0 -0.1"/>
        <vertices>0.1 0.05 0; -0.1 0.05 0; -0.1 -0.05 0; 0.1 -0.05 0</vertices>
      </contact>
    </robot>)";
    CHECK(validate_model(load_model(surface)).empty());

    std::string bad = surface;
    const std::string needle = "-0.1 0.05 0;";
    const auto pos = bad.find(needle);
    REQUIRE(pos != std::string::npos);
    bad.replace(pos, needle.size(), "-0.1 0.05 0.5;");
    CHECK_THROWS_WITH_AS(load_model(bad), doctest::Contains("coplanar"), ValidationError);
}
