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

#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "perspact/errors.hpp"
#include "perspact/gateway.hpp"
#include "perspact/narrative.hpp"
#include "perspact/prng.hpp"
#include "perspact/prompts.hpp"
#include "perspact/scene.hpp"
#include "perspact/stage.hpp"
#include "perspact/task.hpp"
#include "perspact/text.hpp"

namespace perspact {

// ---------------------------------------------------------------------------
// Information conditions. The matcher receives either the child narrative
// (blind, informed) or the allocentric description (objective-informed);
// a developmental framing line is present in every condition except blind.
// ---------------------------------------------------------------------------

struct ConditionContext {
    Condition condition = Condition::blind;
    Stage stage = Stage::stage0; // experimental cell bookkeeping, never shown in blind prompts
    std::string body;            // narrative text or objective description
    std::string stage_disclosure;
};

inline const std::vector<std::string>& blind_banned_substrings() {
    static const std::vector<std::string> banned = {"stage", "egocentric", "differentiated"};
    return banned;
}

inline std::string stage_framing(Stage stage) {
    if (stage == Stage::stage0)
        return "Developmental framing: reason at the egocentric level (stage 0), where a "
               "speaker attends only to their own view.";
    return "Developmental framing: reason at the differentiated level (stage 1), where a "
           "speaker distinguishes their own view from the other person's.";
}

inline ConditionContext build_condition_context(Condition condition, const Narrative& narrative,
                                                const Scene& scene) {
    ConditionContext ctx;
    ctx.condition = condition;
    ctx.stage = narrative.stage;
    switch (condition) {
        case Condition::blind:
            ctx.body = narrative.text;
            for (const auto& banned : blind_banned_substrings()) {
                if (text::contains_ci(ctx.body, banned))
                    throw Error(ErrorKind::validation,
                                "blind context would leak \"" + banned + "\" via the narrative text");
            }
            break;
        case Condition::informed:
            ctx.body = narrative.text;
            ctx.stage_disclosure = stage_framing(narrative.stage);
            break;
        case Condition::objective_informed:
            ctx.body = scene.objective_description;
            ctx.stage_disclosure = stage_framing(narrative.stage);
            break;
    }
    return ctx;
}

inline std::string render_context_block(const ConditionContext& ctx) {
    std::string out;
    if (ctx.condition == Condition::objective_informed)
        out = "Objective description of the scene:\n" + ctx.body;
    else
        out = "Notes from your inner voice about the scene:\n" + ctx.body;
    if (!ctx.stage_disclosure.empty()) out += "\n\n" + ctx.stage_disclosure;
    return out;
}

inline std::string render_actions_help(const Scene& scene) {
    std::string out;
    out += "- ask(\"question\"): ask the director one question\n";
    out += "- select(entity_id): commit to an object; this ends the task\n";
    out += "- observe(): look around from where you stand\n";
    if (scene.family == Family::ecological)
        out += "- move(waypoint_id): walk to another spot; places: " +
               text::join([&] {
                   std::vector<std::string> ids;
                   for (const auto& w : scene.waypoints) ids.push_back(w.id);
                   return ids;
               }(), ", ") + "\n";
    return out;
}

// ---------------------------------------------------------------------------
// Action grammar: `Action: ask("...") | select(id) | move(id) | observe()`.
// Keyword match is case-insensitive and whitespace-tolerant; the first
// parseable occurrence wins.
// ---------------------------------------------------------------------------

namespace action_grammar {

inline void skip_ws(const std::string& s, size_t& i) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
}

inline std::optional<Action> try_parse_at(const std::string& s, size_t pos) {
    size_t i = pos;
    skip_ws(s, i);
    size_t kw_begin = i;
    while (i < s.size() && std::isalpha(static_cast<unsigned char>(s[i]))) ++i;
    std::string keyword = text::lower(s.substr(kw_begin, i - kw_begin));
    skip_ws(s, i);
    if (i >= s.size() || s[i] != '(') return std::nullopt;
    ++i;
    skip_ws(s, i);

    if (keyword == "observe") {
        if (i < s.size() && s[i] == ')') return Action{ActionKind::observe, ""};
        return std::nullopt;
    }
    if (keyword == "ask") {
        if (i >= s.size() || s[i] != '"') return std::nullopt;
        ++i;
        size_t close = s.find('"', i);
        if (close == std::string::npos) return std::nullopt;
        std::string question = s.substr(i, close - i);
        i = close + 1;
        skip_ws(s, i);
        if (i >= s.size() || s[i] != ')') return std::nullopt;
        return Action{ActionKind::ask, question};
    }
    if (keyword == "select" || keyword == "move") {
        size_t arg_begin = i;
        while (i < s.size() &&
               (std::isalnum(static_cast<unsigned char>(s[i])) || s[i] == '_' || s[i] == '-'))
            ++i;
        std::string arg = s.substr(arg_begin, i - arg_begin);
        skip_ws(s, i);
        if (arg.empty() || i >= s.size() || s[i] != ')') return std::nullopt;
        return Action{keyword == "select" ? ActionKind::select : ActionKind::move, arg};
    }
    return std::nullopt;
}

} // namespace action_grammar

struct ParsedAction {
    Action action;
    size_t match_begin = 0; // offset of the "action" keyword in the source text
};

inline ParsedAction parse_action_at(const std::string& output) {
    const std::string lowered = text::lower(output);
    size_t search = 0;
    while (true) {
        size_t hit = lowered.find("action", search);
        if (hit == std::string::npos) break;
        size_t i = hit + 6;
        action_grammar::skip_ws(output, i);
        if (i < output.size() && output[i] == ':') {
            if (auto parsed = action_grammar::try_parse_at(output, i + 1))
                return ParsedAction{*parsed, hit};
        }
        search = hit + 1;
    }
    throw Error(ErrorKind::parse, "no action found in model output");
}

inline Action parse_action(const std::string& output) { return parse_action_at(output).action; }

// ---------------------------------------------------------------------------
// Policies.
// ---------------------------------------------------------------------------

struct PolicyView {
    const Scene& scene;
    const std::string& utterance;
    const ConditionContext& context;
    const std::string& current_waypoint;
    const std::set<std::string>& visible;
    const std::string& initial_observation;
    const std::vector<EpisodeStep>& transcript;
};

struct Decision {
    std::string thought;
    Action action;
};

class MatcherPolicy {
public:
    virtual ~MatcherPolicy() = default;
    virtual std::string name() const = 0;
    virtual Decision decide(const PolicyView& view, SplitMix64& rng) = 0;
};

namespace policy_detail {

inline std::vector<const Entity*> matching_visible(const Scene& scene,
                                                   const std::set<std::string>& visible,
                                                   const std::vector<std::string>& desc,
                                                   const std::vector<size_t>& order) {
    std::vector<const Entity*> out;
    for (size_t idx : order) {
        const Entity& e = scene.entities[idx];
        if (visible.count(e.id) && refexp::matches(e, desc)) out.push_back(&e);
    }
    return out;
}

inline std::string quoted_segment(const std::string& s) {
    size_t first = s.find('"');
    if (first == std::string::npos) return s;
    size_t last = s.rfind('"');
    if (last <= first) return s;
    return s.substr(first + 1, last - first - 1);
}

} // namespace policy_detail

// Reference behavior for the egocentric level: scans the scene for a while,
// then grabs the first thing in its own view that fits the request. Never
// asks, never moves, never considers what the director can see.
class EgocentricPolicy : public MatcherPolicy {
public:
    EgocentricPolicy(const Scene& scene, const std::string& utterance, TaskConfig config,
                     SplitMix64& rng)
        : desc_(refexp::description_tokens(utterance)) {
        for (size_t i = 0; i < scene.entities.size(); ++i) order_.push_back(i);
        rng.shuffle(order_);
        const int nslots = static_cast<int>(scene.slots.size());
        const int lo = std::max(1, nslots / 3);
        const int hi = std::max(lo, std::min((2 * nslots) / 3, config.max_steps - 3));
        scan_steps_ = rng.range(lo, hi);
    }

    std::string name() const override { return "egocentric"; }

    Decision decide(const PolicyView& view, SplitMix64&) override {
        const size_t turn = view.transcript.size();
        const std::string wanted = text::join(desc_, " ");

        std::string thought;
        if (turn == 0)
            thought = "They want the " + wanted +
                      ". I don't know exactly which one they mean, but I trust what I see.";

        if (static_cast<int>(turn) < scan_steps_) {
            if (thought.empty()) thought = "I keep looking at what is in front of me.";
            return {thought, Action{ActionKind::observe, ""}};
        }

        auto matches = policy_detail::matching_visible(view.scene, view.visible, desc_, order_);
        if (!matches.empty()) {
            const Entity* pick = matches.front();
            if (thought.empty())
                thought = "I see one that fits. I will take the " + refexp::describe(*pick) + ".";
            return {thought, Action{ActionKind::select, pick->id}};
        }
        if (thought.empty())
            thought = "I still do not see the " + wanted + ". I keep looking.";
        return {thought, Action{ActionKind::observe, ""}};
    }

private:
    std::vector<std::string> desc_;
    std::vector<size_t> order_;
    int scan_steps_ = 1;
};

// Reference behavior for the differentiated level: filters request matches by
// what the director can see, asks when that leaves ambiguity, and walks to
// other waypoints when the referent is not in view yet.
class DifferentiatedPolicy : public MatcherPolicy {
public:
    DifferentiatedPolicy(const Scene& scene, const std::string& utterance, TaskConfig,
                         SplitMix64&)
        : desc_(refexp::description_tokens(utterance)) {
        auto director_view = visible_entities(scene, Viewpoint::director());
        for (const auto& e : scene.entities) {
            if (!refexp::matches(e, desc_)) continue;
            if (director_view.count(e.id)) candidates_.push_back(e.id);
            else own_only_matches_.push_back(e.id);
        }
        for (size_t i = 1; i < scene.waypoints.size(); ++i)
            unvisited_.push_back(scene.waypoints[i].id);
    }

    std::string name() const override { return "differentiated"; }

    Decision decide(const PolicyView& view, SplitMix64&) override {
        const size_t turn = view.transcript.size();
        const std::string wanted = text::join(desc_, " ");

        // Fold the director's answer into the candidate set.
        if (!view.transcript.empty()) {
            const auto& last = view.transcript.back();
            if (last.action.kind == ActionKind::ask) {
                auto reply_desc =
                    refexp::description_tokens(policy_detail::quoted_segment(last.observation));
                std::vector<std::string> narrowed;
                for (const auto& id : candidates_) {
                    const Entity* e = view.scene.find_entity(id);
                    if (e && refexp::matches(*e, reply_desc)) narrowed.push_back(id);
                }
                if (!narrowed.empty()) candidates_ = narrowed;
            }
        }

        std::string thought;
        if (turn == 0)
            thought = "The other person asked for the " + wanted +
                      ". They might not see everything from where they are, so I will think "
                      "about what they can see.";

        if (candidates_.size() > 1 && !asked_) {
            asked_ = true;
            if (thought.empty())
                thought = "More than one thing fits what they said. I will ask them about it.";
            return {thought, Action{ActionKind::ask, "which one do you mean?"}};
        }

        if (!candidates_.empty()) {
            const std::string& target = candidates_.front();
            if (view.visible.count(target)) {
                const Entity* e = view.scene.find_entity(target);
                if (thought.empty()) {
                    if (!own_only_matches_.empty()) {
                        const Entity* hidden = view.scene.find_entity(own_only_matches_.front());
                        thought = "They can't see the " + refexp::describe(*hidden) +
                                  ", so they don't mean that one. I will take the " +
                                  refexp::describe(*e) + ".";
                    } else {
                        thought = "Now I know which one they mean. I will take the " +
                                  refexp::describe(*e) + ".";
                    }
                }
                return {thought, Action{ActionKind::select, target}};
            }
            if (view.scene.family == Family::ecological) {
                if (scan_after_move_) {
                    scan_after_move_ = false;
                    if (thought.empty()) thought = "Let me look around carefully from here.";
                    return {thought, Action{ActionKind::observe, ""}};
                }
                if (!unvisited_.empty()) {
                    std::string next = unvisited_.front();
                    unvisited_.erase(unvisited_.begin());
                    scan_after_move_ = true;
                    if (thought.empty())
                        thought = "I do not see it from here yet. I will move to the " +
                                  text::humanize(next) + " and look.";
                    return {thought, Action{ActionKind::move, next}};
                }
            }
            if (thought.empty()) thought = "I do not see it yet. I keep looking.";
            return {thought, Action{ActionKind::observe, ""}};
        }

        // Nothing the director can see fits; fall back to own view.
        auto surface_order = [&] {
            std::vector<size_t> order;
            for (size_t i = 0; i < view.scene.entities.size(); ++i) order.push_back(i);
            return order;
        }();
        auto matches = policy_detail::matching_visible(view.scene, view.visible, desc_, surface_order);
        if (!matches.empty()) {
            if (thought.empty())
                thought = "Only I can see something that fits. I will take the " +
                          refexp::describe(*matches.front()) + ".";
            return {thought, Action{ActionKind::select, matches.front()->id}};
        }
        if (thought.empty()) thought = "I do not see anything that fits yet. I keep looking.";
        return {thought, Action{ActionKind::observe, ""}};
    }

private:
    std::vector<std::string> desc_;
    std::vector<std::string> candidates_;       // director-visible request matches
    std::vector<std::string> own_only_matches_; // matches the director cannot see
    std::vector<std::string> unvisited_;
    bool asked_ = false;
    bool scan_after_move_ = false;
};

// ---------------------------------------------------------------------------
// Backend selection and the episode runner.
// ---------------------------------------------------------------------------

struct PolicyBackend {
    enum class Kind { scripted_egocentric, scripted_differentiated, llm };
    Kind kind = Kind::scripted_differentiated;

    // llm backend only:
    Gateway* gateway = nullptr;
    const PromptLibrary* prompts = nullptr;
    std::string model = "gpt-o3-mini";
    double temperature = 1.0;
    int max_tokens = 512;
    std::optional<uint64_t> nonce_base; // mixed per turn when fresh samples are wanted
};

inline PolicyBackend::Kind policy_kind_from_string(std::string_view s) {
    if (s == "egocentric") return PolicyBackend::Kind::scripted_egocentric;
    if (s == "differentiated") return PolicyBackend::Kind::scripted_differentiated;
    if (s == "llm") return PolicyBackend::Kind::llm;
    throw Error(ErrorKind::parse,
                "policy: expected \"egocentric\", \"differentiated\" or \"llm\", got \"" +
                    std::string(s) + "\"");
}

// Scripted policy for the stage a cell intends: the egocentric policy stands
// in for stage0 behavior and the differentiated policy for stage1.
inline PolicyBackend::Kind scripted_kind_for(Stage stage) {
    return stage == Stage::stage0 ? PolicyBackend::Kind::scripted_egocentric
                                  : PolicyBackend::Kind::scripted_differentiated;
}

class LlmPolicy : public MatcherPolicy {
public:
    LlmPolicy(const PolicyBackend& backend, std::string actions_help, std::string context_block,
              std::vector<std::string>* prompt_log)
        : backend_(backend),
          actions_help_(std::move(actions_help)),
          context_block_(std::move(context_block)),
          prompt_log_(prompt_log) {
        if (!backend_.gateway || !backend_.prompts)
            throw Error(ErrorKind::config, "llm policy requires a gateway and prompt library");
    }

    std::string name() const override { return "llm:" + backend_.model; }

    Decision decide(const PolicyView& view, SplitMix64&) override {
        const std::string transcript = render_transcript(view);
        const std::string prompt =
            backend_.prompts->render_matcher_prompt(context_block_, actions_help_, transcript);
        if (prompt_log_) prompt_log_->push_back(prompt);

        ChatRequest req;
        req.model = backend_.model;
        req.temperature = backend_.temperature;
        req.max_tokens = backend_.max_tokens;
        req.messages.push_back({"user", prompt});

        std::string output = backend_.gateway->complete(req, turn_nonce(view));
        try {
            return to_decision(output);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::parse) throw;
        }

        // One reformat retry, then the episode fails as malformed.
        ChatRequest retry = req;
        retry.messages.push_back({"assistant", output});
        retry.messages.push_back(
            {"user", "Your reply did not contain a valid action. Answer again and finish with "
                     "exactly one line of the form:\nAction: <one of the actions listed above>"});
        if (prompt_log_) prompt_log_->push_back(retry.messages.back().content);
        output = backend_.gateway->complete(retry, turn_nonce(view));
        return to_decision(output); // a parse error here propagates
    }

private:
    std::optional<uint64_t> turn_nonce(const PolicyView& view) const {
        if (!backend_.nonce_base) return std::nullopt;
        return *backend_.nonce_base + view.transcript.size();
    }

    Decision to_decision(const std::string& output) const {
        ParsedAction parsed = parse_action_at(output);
        std::string thought = text::trim(output.substr(0, parsed.match_begin));
        return Decision{std::move(thought), parsed.action};
    }

    std::string render_transcript(const PolicyView& view) const {
        std::string out = view.initial_observation + "\n";
        for (const auto& s : view.transcript) {
            out += "Thought: " + s.thought + "\n";
            out += "Action: " + s.action.render() + "\n";
            out += "Observation: " + s.observation + "\n";
        }
        return out;
    }

    PolicyBackend backend_;
    std::string actions_help_;
    std::string context_block_;
    std::vector<std::string>* prompt_log_;
};

inline Episode run_episode(const Scene& scene, const Request& request,
                           const ConditionContext& context, const PolicyBackend& backend,
                           uint64_t seed, Stage stage, TaskConfig config = {}) {
    TaskState state = begin(scene, request, config);
    SplitMix64 rng(seed);

    Episode episode;
    episode.scene_id = scene.id;
    episode.condition = context.condition;
    episode.stage = stage;
    episode.seed = seed;
    episode.initial_observation = state.initial_observation();

    const std::string context_block = render_context_block(context);
    const std::string actions_help = render_actions_help(scene);
    std::vector<std::string> prompt_log;

    std::unique_ptr<MatcherPolicy> policy;
    switch (backend.kind) {
        case PolicyBackend::Kind::scripted_egocentric:
            policy = std::make_unique<EgocentricPolicy>(scene, request.utterance, config, rng);
            break;
        case PolicyBackend::Kind::scripted_differentiated:
            policy = std::make_unique<DifferentiatedPolicy>(scene, request.utterance, config, rng);
            break;
        case PolicyBackend::Kind::llm:
            policy = std::make_unique<LlmPolicy>(backend, actions_help, context_block, &prompt_log);
            break;
    }
    episode.policy = policy->name();

    const bool llm_backend = backend.kind == PolicyBackend::Kind::llm;
    while (!state.terminal()) {
        auto visible = state.visible_now();
        PolicyView view{scene,           request.utterance, context,
                        state.waypoint(), visible,          episode.initial_observation,
                        episode.steps};
        try {
            Decision decision = policy->decide(view, rng);
            StepResult result = step(state, decision.action);
            episode.steps.push_back(
                EpisodeStep{std::move(decision.thought), decision.action, result.observation});
            state = std::move(result.state);
        } catch (const Error& e) {
            // An llm that cannot produce a usable action ends the episode.
            if (llm_backend &&
                (e.kind() == ErrorKind::parse || e.kind() == ErrorKind::illegal_action)) {
                episode.outcome = Outcome::failure;
                episode.failure_reason = "malformed action";
                episode.step_count = state.step_count();
                episode.prompt_material = text::join(prompt_log, "\n----\n");
                return episode;
            }
            throw;
        }
    }

    episode.outcome = state.outcome();
    episode.step_count = state.step_count();
    episode.failure_reason = state.failure_reason();

    // Everything the matcher was (or would have been) shown, for audit and
    // the leakage checks: context, action help, and the final transcript.
    if (llm_backend) {
        episode.prompt_material = text::join(prompt_log, "\n----\n");
    } else {
        std::string transcript = episode.initial_observation + "\n";
        for (const auto& s : episode.steps) {
            transcript += "Thought: " + s.thought + "\n";
            transcript += "Action: " + s.action.render() + "\n";
            transcript += "Observation: " + s.observation + "\n";
        }
        episode.prompt_material = context_block + "\n" + actions_help + "\n" + transcript;
    }
    return episode;
}

} // namespace perspact
