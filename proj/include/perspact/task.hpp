/*
 * Copyright 2025 The perspact-bench Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "perspact/errors.hpp"
#include "perspact/scene.hpp"
#include "perspact/stage.hpp"
#include "perspact/text.hpp"

namespace perspact {

// ---------------------------------------------------------------------------
// The director task: the director issues one referential request, resolved
// against the director's own visible set; the matcher acts until it selects
// the right entity, selects a wrong one, or runs out of steps.
// ---------------------------------------------------------------------------

struct Request {
    std::string utterance;
    std::string target_entity; // ground truth, never shown to the matcher
};

enum class ActionKind { ask, select, move, observe };

inline const char* to_string(ActionKind k) {
    switch (k) {
        case ActionKind::ask: return "ask";
        case ActionKind::select: return "select";
        case ActionKind::move: return "move";
        case ActionKind::observe: return "observe";
    }
    return "unknown";
}

inline ActionKind action_kind_from_string(std::string_view s) {
    if (s == "ask") return ActionKind::ask;
    if (s == "select") return ActionKind::select;
    if (s == "move") return ActionKind::move;
    if (s == "observe") return ActionKind::observe;
    throw Error(ErrorKind::parse, "action: unknown kind \"" + std::string(s) + "\"");
}

struct Action {
    ActionKind kind = ActionKind::observe;
    std::string argument; // question text (ask), entity id (select), waypoint id (move)

    bool operator==(const Action&) const = default;

    std::string render() const {
        switch (kind) {
            case ActionKind::ask: return "ask(\"" + argument + "\")";
            case ActionKind::select: return "select(" + argument + ")";
            case ActionKind::move: return "move(" + argument + ")";
            case ActionKind::observe: return "observe()";
        }
        return {};
    }
};

enum class Outcome { success, failure };

inline const char* to_string(Outcome o) { return o == Outcome::success ? "success" : "failure"; }

inline Outcome outcome_from_string(std::string_view s) {
    if (s == "success") return Outcome::success;
    if (s == "failure") return Outcome::failure;
    throw Error(ErrorKind::parse, "outcome: expected \"success\" or \"failure\"");
}

struct EpisodeStep {
    std::string thought;
    Action action;
    std::string observation;

    bool operator==(const EpisodeStep&) const = default;
};

struct Episode {
    std::string scene_id;
    Condition condition = Condition::blind;
    Stage stage = Stage::stage0;
    uint64_t seed = 0;
    std::string policy; // backend that produced it
    std::string initial_observation;
    std::string prompt_material; // everything shown (or showable) to the matcher
    std::vector<EpisodeStep> steps;
    std::optional<Outcome> outcome;
    int step_count = 0;
    std::string failure_reason;

    bool operator==(const Episode&) const = default;

    // Thought strings joined into one document for post-task scoring.
    std::string thoughts_document() const {
        std::string out;
        for (const auto& s : steps) {
            if (s.thought.empty()) continue;
            if (!out.empty()) out += " ";
            out += s.thought;
        }
        return out;
    }
};

// Recorded outcome of a finished episode; non-terminal input is a protocol error.
inline Outcome episode_outcome(const Episode& e) {
    if (!e.outcome) throw Error(ErrorKind::protocol, "episode is not terminal");
    return *e.outcome;
}

struct TaskConfig {
    int max_steps = 12;
};

// ---------------------------------------------------------------------------
// Referential descriptions. Requests and director replies describe entities
// by kind and attribute words; these helpers extract and match them.
// ---------------------------------------------------------------------------

namespace refexp {

inline const std::set<std::string>& filler_words() {
    static const std::set<std::string> words = {
        "pick",  "choose", "select", "take", "get",  "grab", "give", "hand", "find",
        "fetch", "pass",   "bring",  "the",  "a",    "an",   "one",  "that", "this",
        "me",    "my",     "please", "up",   "i",    "mean", "it",   "is"};
    return words;
}

// Content tokens of a request utterance or reply, filler stripped.
inline std::vector<std::string> description_tokens(std::string_view utterance) {
    std::vector<std::string> out;
    for (const auto& tok : text::tokenize(utterance)) {
        if (!tok.word) continue;
        if (filler_words().count(tok.text)) continue;
        out.push_back(tok.text);
    }
    return out;
}

// Words an entity can be referred to by: kind, attribute values, id parts.
inline std::set<std::string> surface_tokens(const Entity& e) {
    std::set<std::string> out;
    for (const auto& tok : text::tokenize(e.kind))
        if (tok.word) out.insert(tok.text);
    for (const auto& [key, value] : e.attributes) {
        (void)key;
        for (const auto& tok : text::tokenize(value))
            if (tok.word) out.insert(tok.text);
    }
    for (const auto& tok : text::tokenize(e.id))
        if (tok.word) out.insert(tok.text);
    return out;
}

inline bool matches(const Entity& e, const std::vector<std::string>& description) {
    if (description.empty()) return false;
    auto surface = surface_tokens(e);
    for (const auto& d : description)
        if (!surface.count(d)) return false;
    return true;
}

// Deterministic human phrase for an entity: attribute values in key order,
// then kind ("red folded tie"). Never uses the id.
inline std::string describe(const Entity& e) {
    std::vector<std::string> parts;
    for (const auto& [key, value] : e.attributes) {
        (void)key;
        parts.push_back(value);
    }
    parts.push_back(text::humanize(e.kind));
    return text::join(parts, " ");
}

} // namespace refexp

// ---------------------------------------------------------------------------
// Scripted director. Answers a closed grammar of questions about visibility
// and the target's attributes; never names the target id.
// ---------------------------------------------------------------------------

inline std::string director_answer(const Scene& scene, const Request& request,
                                   const std::string& question) {
    std::vector<std::string> words;
    for (const auto& tok : text::tokenize(question))
        if (tok.word) words.push_back(tok.text);

    const Entity* target = scene.find_entity(request.target_entity);
    if (!target) return "The director does not understand.";

    // "which (one|<word>) do you mean?"
    if (words.size() >= 4 && words.front() == "which" && words[words.size() - 3] == "do" &&
        words[words.size() - 2] == "you" && words.back() == "mean") {
        return "I mean the " + refexp::describe(*target) + ".";
    }

    // "can you see (the)? <description>?"
    if (words.size() >= 4 && words[0] == "can" && words[1] == "you" && words[2] == "see") {
        std::vector<std::string> desc;
        for (size_t i = 3; i < words.size(); ++i)
            if (!refexp::filler_words().count(words[i])) desc.push_back(words[i]);
        if (!desc.empty()) {
            auto visible = visible_entities(scene, Viewpoint::director());
            for (const auto& e : scene.entities) {
                if (visible.count(e.id) && refexp::matches(e, desc)) return "Yes, I can see it.";
            }
            return "No, I cannot see it.";
        }
    }

    // "is it <description>?"
    if (words.size() >= 3 && words[0] == "is" && words[1] == "it") {
        std::vector<std::string> desc;
        for (size_t i = 2; i < words.size(); ++i)
            if (!refexp::filler_words().count(words[i])) desc.push_back(words[i]);
        if (!desc.empty())
            return refexp::matches(*target, desc) ? "Yes, it is." : "No, it is not.";
    }

    // "where is it?"
    if (words.size() == 3 && words[0] == "where" && words[1] == "is" && words[2] == "it") {
        return "It is at the " + text::humanize(target->location) + ".";
    }

    return "The director does not understand.";
}

// ---------------------------------------------------------------------------
// Task state machine.
// ---------------------------------------------------------------------------

class TaskState;
struct StepResult;
inline StepResult step(const TaskState& state, const Action& action);

class TaskState {
public:
    TaskState(const Scene& scene, Request request, TaskConfig config, std::string waypoint,
              std::string initial_observation)
        : scene_(&scene),
          request_(std::move(request)),
          config_(config),
          waypoint_(std::move(waypoint)),
          initial_observation_(std::move(initial_observation)) {}

    const Scene& scene() const { return *scene_; }
    const Request& request() const { return request_; }
    const TaskConfig& config() const { return config_; }
    const std::string& waypoint() const { return waypoint_; }
    const std::string& initial_observation() const { return initial_observation_; }
    int step_count() const { return step_count_; }
    bool terminal() const { return outcome_.has_value(); }
    std::optional<Outcome> outcome() const { return outcome_; }
    const std::string& failure_reason() const { return failure_reason_; }

    std::set<std::string> visible_now() const {
        return visible_entities(*scene_, Viewpoint::matcher(waypoint_));
    }

private:
    friend StepResult step(const TaskState&, const Action&);

    const Scene* scene_;
    Request request_;
    TaskConfig config_;
    std::string waypoint_;
    std::string initial_observation_;
    int step_count_ = 0;
    std::optional<Outcome> outcome_;
    std::string failure_reason_;
};

inline TaskState begin(const Scene& scene, const Request& request, TaskConfig config = {}) {
    scene.validate();
    if (!scene.find_entity(request.target_entity))
        throw Error(ErrorKind::invalid_request,
                    "request target \"" + request.target_entity + "\" does not exist in scene \"" + scene.id + "\"");
    auto director_view = visible_entities(scene, Viewpoint::director());
    if (!director_view.count(request.target_entity))
        throw Error(ErrorKind::invalid_request,
                    "request target \"" + request.target_entity + "\" is not visible to the director");
    std::string initial = "The director says: \"" + request.utterance + "\"";
    return TaskState(scene, request, config, scene.initial_waypoint(), std::move(initial));
}

struct StepResult {
    TaskState state;
    std::string observation;
};

namespace detail {

inline std::string list_entities(const Scene& scene, const std::set<std::string>& ids) {
    std::vector<std::string> ordered;
    for (const auto& e : scene.entities)
        if (ids.count(e.id)) ordered.push_back(e.id);
    return text::join(ordered, ", ");
}

} // namespace detail

inline StepResult step(const TaskState& state, const Action& action) {
    if (state.terminal()) throw Error(ErrorKind::protocol, "step on a terminal episode");

    TaskState next = state;
    std::string observation;
    bool counted = true;

    switch (action.kind) {
        case ActionKind::ask: {
            observation = "The director says: \"" +
                          director_answer(state.scene(), state.request(), action.argument) + "\"";
            break;
        }
        case ActionKind::observe: {
            auto visible = state.visible_now();
            observation = visible.empty() ? "You see nothing notable."
                                          : "You see: " + detail::list_entities(state.scene(), visible) + ".";
            break;
        }
        case ActionKind::move: {
            if (state.scene().family == Family::classic)
                throw Error(ErrorKind::illegal_action, "move is not available in a classic scene");
            if (!state.scene().find_waypoint(action.argument))
                throw Error(ErrorKind::illegal_action,
                            "unknown waypoint \"" + action.argument + "\"");
            auto before = state.visible_now();
            next.waypoint_ = action.argument;
            auto after = next.visible_now();
            std::set<std::string> fresh;
            for (const auto& id : after)
                if (!before.count(id)) fresh.insert(id);
            observation = "You move to the " + text::humanize(action.argument) + ". ";
            observation += fresh.empty() ? "Nothing new is visible."
                                         : "Newly visible: " + detail::list_entities(state.scene(), fresh) + ".";
            break;
        }
        case ActionKind::select: {
            const Entity* chosen = state.scene().find_entity(action.argument);
            if (!chosen) {
                next.outcome_ = Outcome::failure;
                next.failure_reason_ = "invalid referent";
                observation = "There is no such thing here.";
            } else if (action.argument == state.request().target_entity) {
                next.outcome_ = Outcome::success;
                observation = "The director nods. That is the one.";
                counted = false; // terminal correct selection costs nothing
            } else {
                next.outcome_ = Outcome::failure;
                next.failure_reason_ = "wrong selection";
                observation = "The director shakes their head. That is not it.";
            }
            break;
        }
    }

    if (counted) next.step_count_ += 1;
    if (!next.outcome_ && next.step_count_ >= next.config_.max_steps) {
        next.outcome_ = Outcome::failure;
        next.failure_reason_ = "step limit";
    }
    return StepResult{std::move(next), std::move(observation)};
}

// ---------------------------------------------------------------------------
// Scenario documents: a scene plus the director's request for it.
// ---------------------------------------------------------------------------

struct Scenario {
    Scene scene;
    Request request;

    bool operator==(const Scenario&) const = default;
};

inline Scenario scenario_from_json(const nlohmann::json& j) {
    Scenario sc;
    sc.scene = scene_from_json(j);
    const auto& rj = detail::require_field(j, "request", "scenario");
    sc.request.utterance = detail::require_string(rj, "utterance", "request");
    sc.request.target_entity = detail::require_string(rj, "target_entity", "request");
    if (!sc.scene.find_entity(sc.request.target_entity))
        throw Error(ErrorKind::validation,
                    "request.target_entity: unknown entity \"" + sc.request.target_entity + "\"");
    if (!visible_entities(sc.scene, Viewpoint::director()).count(sc.request.target_entity))
        throw Error(ErrorKind::validation,
                    "request.target_entity: \"" + sc.request.target_entity + "\" is not visible to the director");
    return sc;
}

inline nlohmann::json scenario_to_json(const Scenario& sc) {
    nlohmann::json j = scene_to_json(sc.scene);
    j["request"] = {{"utterance", sc.request.utterance}, {"target_entity", sc.request.target_entity}};
    return j;
}

inline Scenario load_scenario(const std::string& document) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(document);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorKind::parse, std::string("scenario document is not valid JSON: ") + e.what());
    }
    return scenario_from_json(j);
}

// ---------------------------------------------------------------------------
// Episode transcripts as line-delimited records. Field names are stable.
// ---------------------------------------------------------------------------

inline std::string episode_to_jsonl(const Episode& e) {
    std::string out;
    nlohmann::json meta{{"type", "meta"},
                        {"scene_id", e.scene_id},
                        {"condition", to_string(e.condition)},
                        {"stage", to_string(e.stage)},
                        {"seed", e.seed},
                        {"policy", e.policy},
                        {"initial_observation", e.initial_observation},
                        {"prompt_material", e.prompt_material}};
    out += meta.dump() + "\n";
    for (size_t i = 0; i < e.steps.size(); ++i) {
        const auto& s = e.steps[i];
        nlohmann::json sj{{"type", "step"},
                          {"index", i},
                          {"thought", s.thought},
                          {"action", to_string(s.action.kind)},
                          {"argument", s.action.argument},
                          {"observation", s.observation}};
        out += sj.dump() + "\n";
    }
    nlohmann::json result{{"type", "result"},
                          {"outcome", e.outcome ? to_string(*e.outcome) : "undecided"},
                          {"step_count", e.step_count},
                          {"failure_reason", e.failure_reason}};
    out += result.dump() + "\n";
    return out;
}

inline Episode episode_from_jsonl(const std::string& document) {
    Episode e;
    bool saw_meta = false, saw_result = false;
    size_t pos = 0;
    while (pos < document.size()) {
        size_t nl = document.find('\n', pos);
        if (nl == std::string::npos) nl = document.size();
        std::string line = document.substr(pos, nl - pos);
        pos = nl + 1;
        if (text::trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& ex) {
            throw Error(ErrorKind::parse, std::string("episode record is not valid JSON: ") + ex.what());
        }
        const std::string type = j.value("type", "");
        if (type == "meta") {
            e.scene_id = j.at("scene_id").get<std::string>();
            e.condition = condition_from_string(j.at("condition").get<std::string>());
            e.stage = stage_from_string(j.at("stage").get<std::string>());
            e.seed = j.at("seed").get<uint64_t>();
            e.policy = j.at("policy").get<std::string>();
            e.initial_observation = j.at("initial_observation").get<std::string>();
            e.prompt_material = j.value("prompt_material", "");
            saw_meta = true;
        } else if (type == "step") {
            EpisodeStep s;
            s.thought = j.at("thought").get<std::string>();
            s.action.kind = action_kind_from_string(j.at("action").get<std::string>());
            s.action.argument = j.at("argument").get<std::string>();
            s.observation = j.at("observation").get<std::string>();
            e.steps.push_back(std::move(s));
        } else if (type == "result") {
            const std::string o = j.at("outcome").get<std::string>();
            if (o != "undecided") e.outcome = outcome_from_string(o);
            e.step_count = j.at("step_count").get<int>();
            e.failure_reason = j.at("failure_reason").get<std::string>();
            saw_result = true;
        } else {
            throw Error(ErrorKind::parse, "episode record has unknown type \"" + type + "\"");
        }
    }
    if (!saw_meta || !saw_result)
        throw Error(ErrorKind::parse, "episode document is missing meta or result record");
    return e;
}

} // namespace perspact
