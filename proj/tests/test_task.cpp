#include <catch2/catch_amalgamated.hpp>

#include "perspact/matcher.hpp"
#include "perspact/task.hpp"

#include "support/helpers.hpp"
#include "support/oracles.hpp"

#include <fstream>

using namespace perspact;
using testsupport::load_bundled;

TEST_CASE("begin delivers the utterance and starts at zero steps") {
    const auto scenario = load_bundled("wardrobe");
    TaskState state = begin(scenario.scene, scenario.request);
    REQUIRE(state.step_count() == 0);
    REQUIRE_FALSE(state.terminal());
    REQUIRE_FALSE(state.outcome().has_value());
    REQUIRE(state.initial_observation() == "The director says: \"pick the blue tie\"");
    REQUIRE(state.waypoint() == "front");
}

TEST_CASE("begin rejects targets the director cannot see") {
    const auto scenario = load_bundled("wardrobe");
    Request bad{"pick the drawer", "drawer"}; // occluded from the director
    try {
        begin(scenario.scene, bad);
        FAIL("expected invalid-request error");
    } catch (const Error& e) {
        REQUIRE(e.kind() == ErrorKind::invalid_request);
    }
    Request missing{"pick the ghost", "ghost"};
    REQUIRE_THROWS_AS(begin(scenario.scene, missing), Error);
}

TEST_CASE("correct select terminates with success and costs nothing") {
    const auto scenario = load_bundled("wardrobe");
    TaskState state = begin(scenario.scene, scenario.request);
    auto [next, obs] = step(state, Action{ActionKind::select, "blue_tie"});
    REQUIRE(next.terminal());
    REQUIRE(next.outcome() == Outcome::success);
    REQUIRE(next.step_count() == 0);
    REQUIRE(obs == "The director nods. That is the one.");
}

TEST_CASE("wrong select fails; nonexistent select fails as invalid referent") {
    const auto scenario = load_bundled("wardrobe");
    {
        TaskState state = begin(scenario.scene, scenario.request);
        auto [next, obs] = step(state, Action{ActionKind::select, "red_tie"});
        REQUIRE(next.outcome() == Outcome::failure);
        REQUIRE(next.failure_reason() == "wrong selection");
        REQUIRE(next.step_count() == 1);
    }
    {
        TaskState state = begin(scenario.scene, scenario.request);
        auto [next, obs] = step(state, Action{ActionKind::select, "unicorn"});
        REQUIRE(next.outcome() == Outcome::failure);
        REQUIRE(next.failure_reason() == "invalid referent");
    }
}

TEST_CASE("move is illegal in classic scenes and to unknown waypoints") {
    const auto classic = load_bundled("wardrobe");
    TaskState state = begin(classic.scene, classic.request);
    try {
        step(state, Action{ActionKind::move, "front"});
        FAIL("expected illegal-action error");
    } catch (const Error& e) {
        REQUIRE(e.kind() == ErrorKind::illegal_action);
    }

    const auto eco = load_bundled("garden_shed");
    TaskState eco_state = begin(eco.scene, eco.request);
    try {
        step(eco_state, Action{ActionKind::move, "attic"});
        FAIL("expected illegal-action error");
    } catch (const Error& e) {
        REQUIRE(e.kind() == ErrorKind::illegal_action);
    }
}

TEST_CASE("move updates the waypoint and reports newly visible entities") {
    const auto eco = load_bundled("garden_shed");
    TaskState state = begin(eco.scene, eco.request);
    auto [at_middle, obs1] = step(state, Action{ActionKind::move, "middle"});
    REQUIRE(at_middle.waypoint() == "middle");
    REQUIRE(obs1.find("You move to the middle.") == 0);
    REQUIRE(obs1.find("flower_pot") != std::string::npos); // high shelf becomes visible
    auto [at_back, obs2] = step(at_middle, Action{ActionKind::move, "back_wall"});
    REQUIRE(obs2.find("watering_can") != std::string::npos);
    REQUIRE(at_back.step_count() == 2);
}

TEST_CASE("actions after the terminal state are protocol errors") {
    const auto scenario = load_bundled("wardrobe");
    TaskState state = begin(scenario.scene, scenario.request);
    auto [done, obs] = step(state, Action{ActionKind::select, "blue_tie"});
    try {
        step(done, Action{ActionKind::observe, ""});
        FAIL("expected protocol error");
    } catch (const Error& e) {
        REQUIRE(e.kind() == ErrorKind::protocol);
    }
}

TEST_CASE("episode outcome requires a terminal episode") {
    Episode open;
    REQUIRE_THROWS_AS(episode_outcome(open), Error);
    open.outcome = Outcome::failure;
    REQUIRE(episode_outcome(open) == Outcome::failure);
}

TEST_CASE("step budget exhaustion fails the episode") {
    const auto scenario = load_bundled("wardrobe");
    TaskConfig config;
    config.max_steps = 12;
    TaskState state = begin(scenario.scene, scenario.request, config);
    std::string last_obs;
    while (!state.terminal()) {
        auto [next, obs] = step(state, Action{ActionKind::observe, ""});
        state = next;
        last_obs = obs;
    }
    REQUIRE(state.outcome() == Outcome::failure);
    REQUIRE(state.failure_reason() == "step limit");
    REQUIRE(state.step_count() == 12);
}

TEST_CASE("episodes terminate within max_steps + 1 transitions, counts monotone") {
    const auto eco = load_bundled("workshop");
    SplitMix64 rng(0xfadeu);
    for (int trial = 0; trial < 25; ++trial) {
        TaskConfig config;
        config.max_steps = 6;
        TaskState state = begin(eco.scene, eco.request, config);
        int transitions = 0;
        int last_count = 0;
        while (!state.terminal()) {
            Action action;
            switch (rng.range(0, 3)) {
                case 0: action = Action{ActionKind::observe, ""}; break;
                case 1: action = Action{ActionKind::ask, "can you see the saw?"}; break;
                case 2:
                    action = Action{ActionKind::move,
                                    eco.scene.waypoints[static_cast<size_t>(rng.range(0, 2))].id};
                    break;
                case 3: action = Action{ActionKind::select, "pencil"}; break;
            }
            auto [next, obs] = step(state, action);
            ++transitions;
            REQUIRE(next.step_count() >= last_count);
            REQUIRE(next.step_count() <= config.max_steps);
            last_count = next.step_count();
            state = next;
        }
        REQUIRE(transitions <= config.max_steps + 1);
    }
}

TEST_CASE("scripted ask-then-select matches the hand-traced golden transcript") {
    const auto scenario =
        load_scenario(read_text_file(testsupport::golden_dir() / "two_ties.json"));
    const auto golden = nlohmann::json::parse(
        read_text_file(testsupport::golden_dir() / "ask_then_select.json"));

    TaskState state = begin(scenario.scene, scenario.request);
    REQUIRE(state.initial_observation() == golden.at("initial_observation").get<std::string>());

    for (const auto& gs : golden.at("steps")) {
        Action action{action_kind_from_string(gs.at("action").get<std::string>()),
                      gs.at("argument").get<std::string>()};
        auto [next, obs] = step(state, action);
        REQUIRE(obs == gs.at("observation").get<std::string>());
        state = next;
    }
    REQUIRE(state.terminal());
    REQUIRE(to_string(*state.outcome()) == golden.at("outcome").get<std::string>());
    REQUIRE(state.step_count() == golden.at("step_count").get<int>());
}

TEST_CASE("replaying a recorded action sequence reproduces the episode") {
    const auto scenario = load_bundled("workshop");
    ConditionContext ctx = build_condition_context(
        Condition::blind, template_narrative(scenario.scene, Stage::stage1), scenario.scene);
    PolicyBackend backend;
    backend.kind = PolicyBackend::Kind::scripted_differentiated;
    const Episode recorded =
        run_episode(scenario.scene, scenario.request, ctx, backend, 99, Stage::stage1);

    TaskState state = begin(scenario.scene, scenario.request);
    for (const auto& s : recorded.steps) {
        auto [next, obs] = step(state, s.action);
        REQUIRE(obs == s.observation);
        state = next;
    }
    REQUIRE(state.terminal());
    REQUIRE(*state.outcome() == *recorded.outcome);
    REQUIRE(state.step_count() == recorded.step_count);
}

TEST_CASE("union of waypoint views covers everything outside closed containers") {
    for (const auto& name : testsupport::bundled_scenario_names()) {
        const Scene scene = load_bundled(name).scene;
        if (scene.family != Family::ecological) continue;

        std::set<std::string> expected;
        for (const auto& e : scene.entities) {
            bool sealed = false;
            for (const auto* slot : oracles::chain_of(scene, e.location))
                if (slot->container && oracles::parent_holds_closed(scene, *slot->container))
                    sealed = true;
            if (!sealed) expected.insert(e.id);
        }
        REQUIRE(matcher_reachable_entities(scene) == expected);
    }
}

TEST_CASE("scripted director answers its closed question grammar") {
    const auto scenario = load_bundled("wardrobe");
    const Scene& scene = scenario.scene;
    const Request& request = scenario.request;

    REQUIRE(director_answer(scene, request, "can you see the red tie?") == "Yes, I can see it.");
    REQUIRE(director_answer(scene, request, "can you see the drawer?") == "No, I cannot see it.");
    REQUIRE(director_answer(scene, request, "is it blue?") == "Yes, it is.");
    REQUIRE(director_answer(scene, request, "is it red?") == "No, it is not.");
    REQUIRE(director_answer(scene, request, "which one do you mean?") ==
            "I mean the blue hanging tie.");
    REQUIRE(director_answer(scene, request, "where is it?") == "It is at the left rail.");
    REQUIRE(director_answer(scene, request, "what's your favourite colour?") ==
            "The director does not understand.");
}

TEST_CASE("episode transcripts round-trip through their line format") {
    const auto scenario = load_bundled("garden_shed");
    ConditionContext ctx = build_condition_context(
        Condition::informed, template_narrative(scenario.scene, Stage::stage1), scenario.scene);
    PolicyBackend backend;
    backend.kind = PolicyBackend::Kind::scripted_differentiated;
    const Episode episode =
        run_episode(scenario.scene, scenario.request, ctx, backend, 5, Stage::stage1);

    const std::string serialized = episode_to_jsonl(episode);
    const Episode reloaded = episode_from_jsonl(serialized);
    REQUIRE(reloaded == episode);
    REQUIRE(episode_to_jsonl(reloaded) == serialized);
}
