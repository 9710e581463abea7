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

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "perspact/errors.hpp"

namespace perspact {

// Scenes are relational, not geometric: entities occupy named slots, and
// asymmetric visibility is expressed as per-agent occlusion flags on slots.
// Slots may nest (a drawer's interior is a slot contained in the drawer's
// slot); contents of a closed container are invisible to everyone.

struct Entity {
    std::string id;
    std::string kind;
    std::map<std::string, std::string> attributes;
    std::string location;

    bool operator==(const Entity&) const = default;
};

struct Slot {
    std::string id;
    bool occluded_from_director = false;
    std::optional<std::string> container;

    bool operator==(const Slot&) const = default;
};

struct Waypoint {
    std::string id;
    std::vector<std::string> hidden_slots;

    bool operator==(const Waypoint&) const = default;
};

enum class Family { classic, ecological };

inline const char* to_string(Family f) {
    return f == Family::classic ? "classic" : "ecological";
}

inline Family family_from_string(std::string_view s) {
    if (s == "classic") return Family::classic;
    if (s == "ecological") return Family::ecological;
    throw Error(ErrorKind::parse, "family: expected \"classic\" or \"ecological\", got \"" + std::string(s) + "\"");
}

enum class Agent { matcher, director };

struct Viewpoint {
    Agent agent = Agent::matcher;
    std::string position; // waypoint id; ignored for the director, whose position is fixed

    static Viewpoint director() { return Viewpoint{Agent::director, {}}; }
    static Viewpoint matcher(std::string waypoint) { return Viewpoint{Agent::matcher, std::move(waypoint)}; }
};

struct Scene {
    std::string id;
    Family family = Family::classic;
    std::vector<Slot> slots;
    std::vector<Entity> entities;
    std::vector<Waypoint> waypoints;
    std::string objective_description;

    bool operator==(const Scene&) const = default;

    const Slot* find_slot(std::string_view slot_id) const {
        for (const auto& s : slots)
            if (s.id == slot_id) return &s;
        return nullptr;
    }

    const Entity* find_entity(std::string_view entity_id) const {
        for (const auto& e : entities)
            if (e.id == entity_id) return &e;
        return nullptr;
    }

    const Waypoint* find_waypoint(std::string_view waypoint_id) const {
        for (const auto& w : waypoints)
            if (w.id == waypoint_id) return &w;
        return nullptr;
    }

    const std::string& initial_waypoint() const {
        if (waypoints.empty()) throw Error(ErrorKind::validation, "scene has no waypoints");
        return waypoints.front().id;
    }

    // Entities located at `slot_id`, in declaration order.
    std::vector<const Entity*> entities_at(std::string_view slot_id) const {
        std::vector<const Entity*> out;
        for (const auto& e : entities)
            if (e.location == slot_id) out.push_back(&e);
        return out;
    }

    // A container slot is sealed when an entity occupying it is in the
    // closed state (e.g. the drawer entity sitting in the drawer's slot).
    bool slot_holds_closed_entity(std::string_view slot_id) const {
        for (const auto& e : entities) {
            if (e.location != slot_id) continue;
            auto it = e.attributes.find("state");
            if (it != e.attributes.end() && it->second == "closed") return true;
        }
        return false;
    }

    void validate() const;
};

inline void Scene::validate() const {
    if (id.empty()) throw Error(ErrorKind::validation, "id: must be non-empty");
    if (objective_description.empty())
        throw Error(ErrorKind::validation, "objective_description: must be non-empty in scene \"" + id + "\"");

    std::set<std::string> slot_ids;
    for (const auto& s : slots) {
        if (!slot_ids.insert(s.id).second)
            throw Error(ErrorKind::validation, "slots: duplicate slot id \"" + s.id + "\"");
    }
    for (const auto& s : slots) {
        if (s.container && !slot_ids.count(*s.container))
            throw Error(ErrorKind::validation,
                        "slots: slot \"" + s.id + "\" has unknown container \"" + *s.container + "\"");
    }
    // Container chains must be acyclic.
    for (const auto& s : slots) {
        std::set<std::string> seen;
        const Slot* cur = &s;
        while (cur->container) {
            if (!seen.insert(cur->id).second)
                throw Error(ErrorKind::validation, "slots: container cycle through \"" + s.id + "\"");
            cur = find_slot(*cur->container);
        }
        if (seen.count(cur->id))
            throw Error(ErrorKind::validation, "slots: container cycle through \"" + s.id + "\"");
    }

    std::set<std::string> entity_ids;
    for (const auto& e : entities) {
        if (!entity_ids.insert(e.id).second)
            throw Error(ErrorKind::validation, "entities: duplicate entity id \"" + e.id + "\"");
        if (!slot_ids.count(e.location))
            throw Error(ErrorKind::validation,
                        "entities: entity \"" + e.id + "\" located at unknown slot \"" + e.location + "\"");
    }

    if (waypoints.empty())
        throw Error(ErrorKind::validation, "waypoints: at least one waypoint required");
    if (family == Family::classic && waypoints.size() != 1)
        throw Error(ErrorKind::validation, "waypoints: classic scenes admit exactly one matcher waypoint");
    std::set<std::string> waypoint_ids;
    for (const auto& w : waypoints) {
        if (!waypoint_ids.insert(w.id).second)
            throw Error(ErrorKind::validation, "waypoints: duplicate waypoint id \"" + w.id + "\"");
        for (const auto& hs : w.hidden_slots) {
            if (!slot_ids.count(hs))
                throw Error(ErrorKind::validation,
                            "waypoints: waypoint \"" + w.id + "\" hides unknown slot \"" + hs + "\"");
        }
    }
}

namespace detail {

// Whether `slot_id` is hidden from a viewpoint whose directly-hidden set is
// `base_hidden`. A slot is hidden if it, or any container ancestor, is in the
// base set, or if any containment edge on the way up crosses into a sealed
// (closed) container.
inline bool slot_hidden(const Scene& scene, std::string_view slot_id,
                        const std::set<std::string>& base_hidden) {
    const Slot* cur = scene.find_slot(slot_id);
    size_t guard = scene.slots.size() + 1;
    while (cur && guard-- > 0) {
        if (base_hidden.count(cur->id)) return true;
        if (cur->container) {
            if (scene.slot_holds_closed_entity(*cur->container)) return true;
            cur = scene.find_slot(*cur->container);
        } else {
            cur = nullptr;
        }
    }
    return false;
}

inline std::set<std::string> base_hidden_for(const Scene& scene, const Viewpoint& vp) {
    std::set<std::string> base;
    if (vp.agent == Agent::director) {
        for (const auto& s : scene.slots)
            if (s.occluded_from_director) base.insert(s.id);
    } else {
        const Waypoint* w = scene.find_waypoint(vp.position);
        if (!w)
            throw Error(ErrorKind::invalid_viewpoint,
                        "unknown waypoint \"" + vp.position + "\" in scene \"" + scene.id + "\"");
        base.insert(w->hidden_slots.begin(), w->hidden_slots.end());
    }
    return base;
}

} // namespace detail

inline std::set<std::string> visible_slots(const Scene& scene, const Viewpoint& vp) {
    auto base = detail::base_hidden_for(scene, vp);
    std::set<std::string> out;
    for (const auto& s : scene.slots)
        if (!detail::slot_hidden(scene, s.id, base)) out.insert(s.id);
    return out;
}

inline std::set<std::string> visible_entities(const Scene& scene, const Viewpoint& vp) {
    auto base = detail::base_hidden_for(scene, vp);
    std::set<std::string> out;
    for (const auto& e : scene.entities)
        if (!detail::slot_hidden(scene, e.location, base)) out.insert(e.id);
    return out;
}

// Union of matcher views over all waypoints.
inline std::set<std::string> matcher_reachable_entities(const Scene& scene) {
    std::set<std::string> out;
    for (const auto& w : scene.waypoints) {
        auto v = visible_entities(scene, Viewpoint::matcher(w.id));
        out.insert(v.begin(), v.end());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Serialization. One scene per document; field names are part of the format.
// ---------------------------------------------------------------------------

namespace detail {

inline const nlohmann::json& require_field(const nlohmann::json& j, const char* field,
                                           const std::string& where) {
    auto it = j.find(field);
    if (it == j.end())
        throw Error(ErrorKind::parse, where + "." + field + ": missing required field");
    return *it;
}

inline std::string require_string(const nlohmann::json& j, const char* field,
                                  const std::string& where) {
    const auto& v = require_field(j, field, where);
    if (!v.is_string())
        throw Error(ErrorKind::parse, where + "." + field + ": expected a string");
    return v.get<std::string>();
}

} // namespace detail

inline Scene scene_from_json(const nlohmann::json& j) {
    using detail::require_field;
    using detail::require_string;
    if (!j.is_object()) throw Error(ErrorKind::parse, "scene: expected an object");

    Scene scene;
    scene.id = require_string(j, "id", "scene");
    scene.family = family_from_string(require_string(j, "family", "scene"));
    scene.objective_description = require_string(j, "objective_description", "scene");

    const auto& slots = require_field(j, "slots", "scene");
    if (!slots.is_array()) throw Error(ErrorKind::parse, "scene.slots: expected an array");
    for (size_t i = 0; i < slots.size(); ++i) {
        const std::string where = "slots[" + std::to_string(i) + "]";
        const auto& sj = slots[i];
        Slot s;
        s.id = require_string(sj, "id", where);
        const auto& occ = require_field(sj, "occluded_from_director", where);
        if (!occ.is_boolean())
            throw Error(ErrorKind::parse, where + ".occluded_from_director: expected a boolean");
        s.occluded_from_director = occ.get<bool>();
        if (sj.contains("container")) {
            if (!sj["container"].is_string())
                throw Error(ErrorKind::parse, where + ".container: expected a string");
            s.container = sj["container"].get<std::string>();
        }
        scene.slots.push_back(std::move(s));
    }

    const auto& entities = require_field(j, "entities", "scene");
    if (!entities.is_array()) throw Error(ErrorKind::parse, "scene.entities: expected an array");
    for (size_t i = 0; i < entities.size(); ++i) {
        const std::string where = "entities[" + std::to_string(i) + "]";
        const auto& ej = entities[i];
        Entity e;
        e.id = require_string(ej, "id", where);
        e.kind = require_string(ej, "kind", where);
        e.location = require_string(ej, "location", where);
        const auto& attrs = require_field(ej, "attributes", where);
        if (!attrs.is_object())
            throw Error(ErrorKind::parse, where + ".attributes: expected an object");
        for (auto it = attrs.begin(); it != attrs.end(); ++it) {
            if (!it.value().is_string())
                throw Error(ErrorKind::parse, where + ".attributes." + it.key() + ": expected a string");
            e.attributes[it.key()] = it.value().get<std::string>();
        }
        scene.entities.push_back(std::move(e));
    }

    const auto& waypoints = require_field(j, "waypoints", "scene");
    if (!waypoints.is_array()) throw Error(ErrorKind::parse, "scene.waypoints: expected an array");
    for (size_t i = 0; i < waypoints.size(); ++i) {
        const std::string where = "waypoints[" + std::to_string(i) + "]";
        const auto& wj = waypoints[i];
        Waypoint w;
        w.id = require_string(wj, "id", where);
        const auto& hidden = require_field(wj, "hidden_slots", where);
        if (!hidden.is_array())
            throw Error(ErrorKind::parse, where + ".hidden_slots: expected an array");
        for (const auto& h : hidden) {
            if (!h.is_string())
                throw Error(ErrorKind::parse, where + ".hidden_slots: expected strings");
            w.hidden_slots.push_back(h.get<std::string>());
        }
        scene.waypoints.push_back(std::move(w));
    }

    scene.validate();
    return scene;
}

inline nlohmann::json scene_to_json(const Scene& scene) {
    nlohmann::json j;
    j["id"] = scene.id;
    j["family"] = to_string(scene.family);
    j["objective_description"] = scene.objective_description;
    j["slots"] = nlohmann::json::array();
    for (const auto& s : scene.slots) {
        nlohmann::json sj;
        sj["id"] = s.id;
        sj["occluded_from_director"] = s.occluded_from_director;
        if (s.container) sj["container"] = *s.container;
        j["slots"].push_back(std::move(sj));
    }
    j["entities"] = nlohmann::json::array();
    for (const auto& e : scene.entities) {
        nlohmann::json ej;
        ej["id"] = e.id;
        ej["kind"] = e.kind;
        ej["location"] = e.location;
        ej["attributes"] = nlohmann::json::object();
        for (const auto& [k, v] : e.attributes) ej["attributes"][k] = v;
        j["entities"].push_back(std::move(ej));
    }
    j["waypoints"] = nlohmann::json::array();
    for (const auto& w : scene.waypoints) {
        nlohmann::json wj;
        wj["id"] = w.id;
        wj["hidden_slots"] = w.hidden_slots;
        j["waypoints"].push_back(std::move(wj));
    }
    return j;
}

inline Scene load_scene(const std::string& document) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(document);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorKind::parse, std::string("scene document is not valid JSON: ") + e.what());
    }
    return scene_from_json(j);
}

inline std::string serialize_scene(const Scene& scene) {
    return scene_to_json(scene).dump(2) + "\n";
}

} // namespace perspact
