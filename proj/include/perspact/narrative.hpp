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

#include <string>
#include <vector>

#include <json.hpp>

#include "perspact/errors.hpp"
#include "perspact/gateway.hpp"
#include "perspact/prompts.hpp"
#include "perspact/scene.hpp"
#include "perspact/stage.hpp"
#include "perspact/task.hpp"
#include "perspact/text.hpp"

namespace perspact {

// First-person scene descriptions conditioned on a developmental level.
// Two backends: a deterministic template renderer (keeps the whole pipeline
// runnable offline) and a model call through the gateway.

enum class NarrativeBackend { templated, llm };

inline const char* to_string(NarrativeBackend b) {
    return b == NarrativeBackend::templated ? "template" : "llm";
}

inline NarrativeBackend narrative_backend_from_string(std::string_view s) {
    if (s == "template") return NarrativeBackend::templated;
    if (s == "llm") return NarrativeBackend::llm;
    throw Error(ErrorKind::parse, "backend: expected \"template\" or \"llm\", got \"" + std::string(s) + "\"");
}

struct Narrative {
    std::string text;
    Stage stage = Stage::stage0;
    std::string scene_id;
    NarrativeBackend backend = NarrativeBackend::templated;
    std::string prompt_record; // full prompt (llm) or template id (template)

    bool operator==(const Narrative&) const = default;
};

namespace narrative_detail {

inline std::string article_for(const std::string& phrase) {
    if (phrase.empty()) return "a";
    switch (phrase.front()) {
        case 'a': case 'e': case 'i': case 'o': case 'u': return "an";
        default: return "a";
    }
}

inline std::string noun_phrase(const Entity& e) {
    const std::string described = refexp::describe(e);
    return article_for(described) + " " + described;
}

// Entities visible from the matcher's starting waypoint, in scene order.
inline std::vector<const Entity*> initial_view(const Scene& scene) {
    auto visible = visible_entities(scene, Viewpoint::matcher(scene.initial_waypoint()));
    std::vector<const Entity*> out;
    for (const auto& e : scene.entities)
        if (visible.count(e.id)) out.push_back(&e);
    return out;
}

// Entities the matcher sees from the start that the director cannot see.
inline std::vector<const Entity*> director_blind_spots(const Scene& scene) {
    auto matcher_view = visible_entities(scene, Viewpoint::matcher(scene.initial_waypoint()));
    auto director_view = visible_entities(scene, Viewpoint::director());
    std::vector<const Entity*> out;
    for (const auto& e : scene.entities)
        if (matcher_view.count(e.id) && !director_view.count(e.id)) out.push_back(&e);
    return out;
}

// Closed containers in the matcher's initial view.
inline std::vector<const Entity*> closed_containers_in_view(const Scene& scene) {
    auto matcher_view = visible_entities(scene, Viewpoint::matcher(scene.initial_waypoint()));
    std::vector<const Entity*> out;
    for (const auto& e : scene.entities) {
        if (!matcher_view.count(e.id)) continue;
        auto it = e.attributes.find("state");
        if (it != e.attributes.end() && it->second == "closed") out.push_back(&e);
    }
    return out;
}

} // namespace narrative_detail

// Deterministic first-person rendering of the matcher's initial view.
// stage0 speaks only of itself; stage1 additionally names the other person,
// their visibility limits, and the speaker's own limits at closed containers.
inline Narrative template_narrative(const Scene& scene, Stage stage) {
    using namespace narrative_detail;
    scene.validate();

    std::vector<std::string> sentences;
    const auto view = initial_view(scene);
    if (view.empty()) {
        sentences.push_back("I am here. There is nothing around me.");
    } else {
        for (const Entity* e : view) sentences.push_back("I see " + noun_phrase(*e) + ".");
    }

    if (stage == Stage::stage0) {
        sentences.push_back("That's all I see.");
    } else {
        for (const Entity* e : closed_containers_in_view(scene))
            sentences.push_back("I don't know what's inside the " + text::humanize(e->kind) + ".");
        sentences.push_back("The other person is here too.");
        sentences.push_back("They can see some of the things I see.");
        const auto blind_spots = director_blind_spots(scene);
        for (const Entity* e : blind_spots)
            sentences.push_back("But they can't see the " + refexp::describe(*e) +
                                ", so they don't know about it.");
        if (blind_spots.empty()) {
            // An occluded slot may hold nothing visible; still state the limit.
            for (const auto& slot : scene.slots) {
                if (slot.occluded_from_director) {
                    sentences.push_back("But they can't see the " + text::humanize(slot.id) +
                                        " from where they are.");
                    break;
                }
            }
        }
    }

    Narrative n;
    n.text = text::join(sentences, " ");
    n.stage = stage;
    n.scene_id = scene.id;
    n.backend = NarrativeBackend::templated;
    n.prompt_record = std::string("template:") + to_string(stage) + ":v1";
    return n;
}

struct LlmNarrativeOptions {
    std::string model = "gpt-4o";
    double temperature = 1.0;
    int max_tokens = 512;
    std::optional<uint64_t> nonce; // set to draw a fresh sample at temperature > 0
};

inline ChatRequest narrative_chat_request(const PromptLibrary& prompts, const Scene& scene,
                                          Stage stage, const LlmNarrativeOptions& options = {}) {
    ChatRequest req;
    req.model = options.model;
    req.temperature = options.temperature;
    req.max_tokens = options.max_tokens;
    req.messages.push_back({"user", prompts.render_stage_prompt(stage, scene.objective_description)});
    return req;
}

inline Narrative llm_narrative(const Scene& scene, Stage stage, Gateway& gateway,
                               const PromptLibrary& prompts, const LlmNarrativeOptions& options = {}) {
    scene.validate();
    const ChatRequest req = narrative_chat_request(prompts, scene, stage, options);
    const std::string response = gateway.complete(req, options.nonce);
    if (text::trim(response).empty())
        throw Error(ErrorKind::generation, "model returned an empty narrative for scene \"" + scene.id + "\"");
    Narrative n;
    n.text = response;
    n.stage = stage;
    n.scene_id = scene.id;
    n.backend = NarrativeBackend::llm;
    n.prompt_record = req.messages.front().content;
    return n;
}

inline nlohmann::json narrative_to_json(const Narrative& n) {
    return nlohmann::json{{"text", n.text},
                          {"stage", to_string(n.stage)},
                          {"scene_id", n.scene_id},
                          {"backend", to_string(n.backend)},
                          {"prompt_record", n.prompt_record}};
}

inline Narrative narrative_from_json(const nlohmann::json& j) {
    Narrative n;
    n.text = j.at("text").get<std::string>();
    n.stage = stage_from_string(j.at("stage").get<std::string>());
    n.scene_id = j.at("scene_id").get<std::string>();
    n.backend = narrative_backend_from_string(j.at("backend").get<std::string>());
    n.prompt_record = j.at("prompt_record").get<std::string>();
    if (n.text.empty()) throw Error(ErrorKind::validation, "narrative text must be non-empty");
    if (n.prompt_record.empty()) throw Error(ErrorKind::validation, "narrative prompt record must be non-empty");
    return n;
}

} // namespace perspact
