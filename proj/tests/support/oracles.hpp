#pragma once

// Independent reference implementations ("oracles") used to cross-check the
// library. Each is written from the rules directly, structured differently
// from the production code, and must stay independent of it.

#include <map>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include "perspact/prng.hpp"
#include "perspact/scene.hpp"
#include "perspact/task.hpp"

namespace oracles {

// ---------------------------------------------------------------------------
// Visibility: walk every entity's container chain and apply each rule on its
// own. Rules: (a) a slot directly hidden from the viewpoint hides everything
// at or below it; (b) contents of a slot whose parent holds a closed entity
// are hidden from everyone.
// ---------------------------------------------------------------------------

inline std::vector<const perspact::Slot*> chain_of(const perspact::Scene& scene,
                                                   const std::string& slot_id) {
    std::vector<const perspact::Slot*> chain;
    const perspact::Slot* cur = scene.find_slot(slot_id);
    size_t guard = scene.slots.size() + 2;
    while (cur && guard-- > 0) {
        chain.push_back(cur);
        cur = cur->container ? scene.find_slot(*cur->container) : nullptr;
    }
    return chain;
}

inline bool parent_holds_closed(const perspact::Scene& scene, const std::string& parent_id) {
    for (const auto& e : scene.entities) {
        if (e.location != parent_id) continue;
        auto it = e.attributes.find("state");
        if (it != e.attributes.end() && it->second == "closed") return true;
    }
    return false;
}

inline std::set<std::string> visible_entities_oracle(const perspact::Scene& scene,
                                                     const perspact::Viewpoint& vp) {
    std::set<std::string> directly_hidden;
    if (vp.agent == perspact::Agent::director) {
        for (const auto& s : scene.slots)
            if (s.occluded_from_director) directly_hidden.insert(s.id);
    } else {
        const perspact::Waypoint* w = scene.find_waypoint(vp.position);
        if (!w) throw perspact::Error(perspact::ErrorKind::invalid_viewpoint, "oracle: unknown waypoint");
        for (const auto& h : w->hidden_slots) directly_hidden.insert(h);
    }

    std::set<std::string> out;
    for (const auto& e : scene.entities) {
        auto chain = chain_of(scene, e.location);
        bool hidden = false;
        for (const auto* slot : chain)
            if (directly_hidden.count(slot->id)) hidden = true;
        for (const auto* slot : chain)
            if (slot->container && parent_holds_closed(scene, *slot->container)) hidden = true;
        if (!hidden) out.insert(e.id);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Metric tallies.
// ---------------------------------------------------------------------------

inline double failure_rate_oracle(const std::vector<perspact::Outcome>& outcomes) {
    int successes = 0;
    for (auto o : outcomes)
        if (o == perspact::Outcome::success) ++successes;
    return 100.0 - 100.0 * static_cast<double>(successes) / static_cast<double>(outcomes.size());
}

inline std::optional<double> avg_steps_oracle(const std::vector<perspact::Episode>& episodes) {
    std::vector<int> steps;
    for (const auto& e : episodes)
        if (e.outcome == perspact::Outcome::success) steps.push_back(e.step_count);
    if (steps.empty()) return std::nullopt;
    double total = 0;
    for (int s : steps) total += s;
    return total / static_cast<double>(steps.size());
}

inline std::optional<double> weighted_steps_oracle(
    const std::vector<std::pair<double, double>>& cells) {
    std::vector<double> weights, values;
    for (const auto& [rate, steps] : cells) {
        if (rate > 0.0) {
            weights.push_back(rate);
            values.push_back(steps);
        }
    }
    if (weights.empty()) return std::nullopt;
    double numer = 0, denom = 0;
    for (size_t i = 0; i < weights.size(); ++i) {
        numer += weights[i] * values[i];
        denom += weights[i];
    }
    return numer / denom;
}

// Success/failure counts recovered by scanning persisted transcripts.
inline int count_successes_in_jsonl(const std::vector<std::string>& documents) {
    int successes = 0;
    for (const auto& doc : documents) {
        size_t pos = 0;
        while (pos < doc.size()) {
            size_t nl = doc.find('\n', pos);
            if (nl == std::string::npos) nl = doc.size();
            const std::string line = doc.substr(pos, nl - pos);
            pos = nl + 1;
            if (line.find("\"type\":\"result\"") != std::string::npos &&
                line.find("\"outcome\":\"success\"") != std::string::npos)
                ++successes;
        }
    }
    return successes;
}

// ---------------------------------------------------------------------------
// Confusion tally.
// ---------------------------------------------------------------------------

inline std::map<std::pair<int, int>, int> confusion_oracle(
    const std::vector<std::pair<perspact::Stage, perspact::VerdictStage>>& labeled) {
    std::map<std::pair<int, int>, int> cells;
    for (const auto& [intended, classified] : labeled)
        cells[{static_cast<int>(intended), static_cast<int>(classified)}] += 1;
    return cells;
}

// ---------------------------------------------------------------------------
// Action grammar, as one regular expression.
// ---------------------------------------------------------------------------

inline std::optional<perspact::Action> parse_action_oracle(const std::string& s) {
    static const std::regex re(
        R"(action\s*:\s*(?:(ask)\s*\(\s*"([^"]*)"\s*\)|(select)\s*\(\s*([A-Za-z0-9_\-]+)\s*\)|(move)\s*\(\s*([A-Za-z0-9_\-]+)\s*\)|(observe)\s*\(\s*\)))",
        std::regex::icase);
    std::smatch m;
    if (!std::regex_search(s, m, re)) return std::nullopt;
    if (m[1].matched) return perspact::Action{perspact::ActionKind::ask, m[2].str()};
    if (m[3].matched) return perspact::Action{perspact::ActionKind::select, m[4].str()};
    if (m[5].matched) return perspact::Action{perspact::ActionKind::move, m[6].str()};
    return perspact::Action{perspact::ActionKind::observe, ""};
}

// ---------------------------------------------------------------------------
// Canonical chat-request serialization, written by hand.
// ---------------------------------------------------------------------------

inline std::string json_escape_oracle(const std::string& s) {
    std::string out;
    for (unsigned char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            case '\t': out += "\\t"; break;
            default:
                if (c < 0x20) {
                    char buf[8];
                    std::snprintf(buf, sizeof(buf), "\\u%04x", c);
                    out += buf;
                } else {
                    out += static_cast<char>(c);
                }
        }
    }
    return out;
}

// Distinct canonical string per distinct request content; key order fixed.
inline std::string canonical_request_oracle(const perspact::ChatRequest& req,
                                            std::optional<uint64_t> nonce = {}) {
    std::string out = "max_tokens=" + std::to_string(req.max_tokens) + ";messages=[";
    for (const auto& m : req.messages)
        out += "(" + json_escape_oracle(m.role) + "|" + json_escape_oracle(m.content) + ")";
    out += "];model=" + json_escape_oracle(req.model);
    char temp[64];
    std::snprintf(temp, sizeof(temp), ";temperature=%.17g", req.temperature);
    out += temp;
    if (nonce) out += ";nonce=" + std::to_string(*nonce);
    return out;
}

// ---------------------------------------------------------------------------
// Random scene generation for visibility property tests: a grid of base
// slots (<= 4x4) with up to two container levels.
// ---------------------------------------------------------------------------

inline perspact::Scene random_scene(perspact::SplitMix64& rng) {
    perspact::Scene scene;
    scene.id = "generated";
    scene.objective_description = "A generated test scene with several objects.";

    const int base_count = rng.range(3, 10);
    for (int i = 0; i < base_count; ++i) {
        perspact::Slot s;
        s.id = "s" + std::to_string(i);
        s.occluded_from_director = rng.range(0, 9) < 3;
        scene.slots.push_back(s);
    }
    const int containers = rng.range(0, 3);
    for (int i = 0; i < containers; ++i) {
        perspact::Slot inner;
        inner.id = "c" + std::to_string(i);
        inner.occluded_from_director = rng.range(0, 9) < 2;
        inner.container = "s" + std::to_string(rng.range(0, base_count - 1));
        scene.slots.push_back(inner);
        if (rng.range(0, 1) == 0) {
            perspact::Slot deep;
            deep.id = "g" + std::to_string(i);
            deep.occluded_from_director = rng.range(0, 9) < 2;
            deep.container = inner.id;
            scene.slots.push_back(deep);
        }
    }

    const char* kinds[] = {"tie", "mug", "book", "ball", "pen", "box"};
    const char* colors[] = {"red", "blue", "green", "white", "black"};
    const int entity_count = rng.range(2, 9);
    for (int i = 0; i < entity_count; ++i) {
        perspact::Entity e;
        e.id = "e" + std::to_string(i);
        e.kind = kinds[rng.range(0, 5)];
        e.attributes["color"] = colors[rng.range(0, 4)];
        const int state_roll = rng.range(0, 7);
        if (state_roll == 0) e.attributes["state"] = "closed";
        else if (state_roll == 1) e.attributes["state"] = "open";
        e.location = scene.slots[static_cast<size_t>(rng.range(0, static_cast<int>(scene.slots.size()) - 1))].id;
        scene.entities.push_back(e);
    }

    const bool ecological = rng.range(0, 2) == 0;
    scene.family = ecological ? perspact::Family::ecological : perspact::Family::classic;
    const int waypoint_count = ecological ? rng.range(2, 3) : 1;
    for (int i = 0; i < waypoint_count; ++i) {
        perspact::Waypoint w;
        w.id = "w" + std::to_string(i);
        for (const auto& s : scene.slots)
            if (rng.range(0, 9) < 2) w.hidden_slots.push_back(s.id);
        scene.waypoints.push_back(w);
    }

    scene.validate();
    return scene;
}

} // namespace oracles
