#include <catch2/catch_amalgamated.hpp>

#include "perspact/scene.hpp"
#include "perspact/prng.hpp"

#include "support/helpers.hpp"
#include "support/oracles.hpp"

using namespace perspact;
using testsupport::load_bundled;

TEST_CASE("wardrobe: director cannot see the drawer") {
    const Scene scene = load_bundled("wardrobe").scene;

    auto director_view = visible_entities(scene, Viewpoint::director());
    REQUIRE(director_view == std::set<std::string>{"blue_tie", "shirt", "red_tie"});

    auto matcher_view = visible_entities(scene, Viewpoint::matcher("front"));
    REQUIRE(matcher_view == std::set<std::string>{"blue_tie", "shirt", "red_tie", "drawer"});
}

TEST_CASE("scene with zero entities yields empty sets") {
    Scene scene;
    scene.id = "empty";
    scene.family = Family::classic;
    scene.objective_description = "An empty corner of a room.";
    scene.slots.push_back(Slot{"floor", false, std::nullopt});
    scene.waypoints.push_back(Waypoint{"spot", {}});
    scene.validate();

    REQUIRE(visible_entities(scene, Viewpoint::director()).empty());
    REQUIRE(visible_entities(scene, Viewpoint::matcher("spot")).empty());
}

TEST_CASE("unknown waypoint raises invalid-viewpoint") {
    const Scene scene = load_bundled("wardrobe").scene;
    try {
        visible_entities(scene, Viewpoint::matcher("balcony"));
        FAIL("expected invalid-viewpoint error");
    } catch (const Error& e) {
        REQUIRE(e.kind() == ErrorKind::invalid_viewpoint);
    }
}

TEST_CASE("closed containers hide contents from everyone, open ones do not") {
    const Scene kitchen = load_bundled("kitchen").scene;
    REQUIRE_FALSE(visible_entities(kitchen, Viewpoint::director()).count("biscuit_tin"));
    REQUIRE_FALSE(visible_entities(kitchen, Viewpoint::matcher("sink_side")).count("biscuit_tin"));

    const Scene shed = load_bundled("garden_shed").scene; // crate is open
    REQUIRE(visible_entities(shed, Viewpoint::director()).count("twine"));
}

TEST_CASE("visibility equals the brute-force slot-walk oracle on random scenes") {
    SplitMix64 rng(0x5ce11e5u);
    for (int i = 0; i < 80; ++i) {
        const Scene scene = oracles::random_scene(rng);
        REQUIRE(visible_entities(scene, Viewpoint::director()) ==
                oracles::visible_entities_oracle(scene, Viewpoint::director()));
        for (const auto& w : scene.waypoints) {
            REQUIRE(visible_entities(scene, Viewpoint::matcher(w.id)) ==
                    oracles::visible_entities_oracle(scene, Viewpoint::matcher(w.id)));
        }
    }
}

TEST_CASE("matcher view contains director view on bundled classic scenes") {
    for (const auto& name : testsupport::bundled_scenario_names()) {
        const Scene scene = load_bundled(name).scene;
        if (scene.family != Family::classic) continue;
        auto director_view = visible_entities(scene, Viewpoint::director());
        auto matcher_view = visible_entities(scene, Viewpoint::matcher(scene.initial_waypoint()));
        for (const auto& id : director_view) {
            INFO(name << ": " << id);
            REQUIRE(matcher_view.count(id));
        }
    }
}

TEST_CASE("removing an occlusion flag never shrinks any view") {
    SplitMix64 rng(0xb1a5u);
    for (int i = 0; i < 40; ++i) {
        Scene scene = oracles::random_scene(rng);

        auto all_views = [](const Scene& s) {
            std::vector<std::set<std::string>> views;
            views.push_back(visible_entities(s, Viewpoint::director()));
            for (const auto& w : s.waypoints)
                views.push_back(visible_entities(s, Viewpoint::matcher(w.id)));
            return views;
        };

        const auto before = all_views(scene);

        Scene relaxed = scene;
        bool changed = false;
        for (auto& slot : relaxed.slots) {
            if (slot.occluded_from_director) {
                slot.occluded_from_director = false;
                changed = true;
                break;
            }
        }
        if (!changed) {
            for (auto& w : relaxed.waypoints) {
                if (!w.hidden_slots.empty()) {
                    w.hidden_slots.pop_back();
                    changed = true;
                    break;
                }
            }
        }
        if (!changed) continue;

        const auto after = all_views(relaxed);
        for (size_t v = 0; v < before.size(); ++v) {
            for (const auto& id : before[v]) {
                INFO("view " << v << " lost " << id);
                REQUIRE(after[v].count(id));
            }
        }
    }
}

TEST_CASE("visible_entities is pure") {
    const Scene scene = load_bundled("workshop").scene;
    const auto a = visible_entities(scene, Viewpoint::matcher("entry"));
    const auto b = visible_entities(scene, Viewpoint::matcher("entry"));
    const auto c = visible_entities(scene, Viewpoint::matcher("entry"));
    REQUIRE(a == b);
    REQUIRE(b == c);
}

TEST_CASE("bundled wardrobe loads with 4 entities and 1 occluded slot") {
    const Scene scene = load_bundled("wardrobe").scene;
    REQUIRE(scene.entities.size() == 4);
    int occluded = 0;
    for (const auto& s : scene.slots)
        if (s.occluded_from_director) ++occluded;
    REQUIRE(occluded == 1);
}

TEST_CASE("load_scene rejects entities at unknown slots") {
    const std::string doc = R"({
      "id": "bad", "family": "classic", "objective_description": "x",
      "slots": [{"id": "a", "occluded_from_director": false}],
      "entities": [{"id": "e", "kind": "cup", "attributes": {}, "location": "nowhere"}],
      "waypoints": [{"id": "w", "hidden_slots": []}]
    })";
    try {
        load_scene(doc);
        FAIL("expected validation error");
    } catch (const Error& e) {
        REQUIRE(e.kind() == ErrorKind::validation);
        REQUIRE(std::string(e.what()).find("nowhere") != std::string::npos);
    }
}

TEST_CASE("load_scene names the offending field on parse errors") {
    const std::string doc = R"({
      "id": "bad", "family": "classic", "objective_description": "x",
      "slots": [{"id": 3, "occluded_from_director": false}],
      "entities": [], "waypoints": [{"id": "w", "hidden_slots": []}]
    })";
    try {
        load_scene(doc);
        FAIL("expected parse error");
    } catch (const Error& e) {
        REQUIRE(e.kind() == ErrorKind::parse);
        REQUIRE(std::string(e.what()).find("slots[0].id") != std::string::npos);
    }
    REQUIRE_THROWS_AS(load_scene("{not json"), Error);
}

TEST_CASE("classic scenes admit exactly one waypoint") {
    const std::string doc = R"({
      "id": "bad", "family": "classic", "objective_description": "x",
      "slots": [{"id": "a", "occluded_from_director": false}],
      "entities": [],
      "waypoints": [{"id": "w1", "hidden_slots": []}, {"id": "w2", "hidden_slots": []}]
    })";
    try {
        load_scene(doc);
        FAIL("expected validation error");
    } catch (const Error& e) {
        REQUIRE(e.kind() == ErrorKind::validation);
    }
}

TEST_CASE("container cycles are rejected") {
    const std::string doc = R"({
      "id": "bad", "family": "classic", "objective_description": "x",
      "slots": [
        {"id": "a", "occluded_from_director": false, "container": "b"},
        {"id": "b", "occluded_from_director": false, "container": "a"}
      ],
      "entities": [], "waypoints": [{"id": "w", "hidden_slots": []}]
    })";
    try {
        load_scene(doc);
        FAIL("expected validation error");
    } catch (const Error& e) {
        REQUIRE(e.kind() == ErrorKind::validation);
        REQUIRE(std::string(e.what()).find("cycle") != std::string::npos);
    }
}

TEST_CASE("scene serialization round-trips") {
    SplitMix64 rng(0x10ad5u);
    for (int i = 0; i < 40; ++i) {
        const Scene original = oracles::random_scene(rng);
        const Scene reloaded = load_scene(serialize_scene(original));
        REQUIRE(reloaded == original);
        REQUIRE(load_scene(serialize_scene(reloaded)) == reloaded);
    }
    for (const auto& name : testsupport::bundled_scenario_names()) {
        const Scene scene = load_bundled(name).scene;
        REQUIRE(load_scene(serialize_scene(scene)) == scene);
    }
}
