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

#include <array>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "perspact/errors.hpp"
#include "perspact/stage.hpp"
#include "perspact/text.hpp"

namespace perspact {

// ---------------------------------------------------------------------------
// Six-criterion scoring of a first-person scene description:
//   Pron     pronoun pattern (first-person only vs. first+third mixed)
//   Actors   which agents the text acknowledges
//   SelfArt  explicit articulation of the speaker's own perspective
//   DirArt   explicit articulation of the other agent's perspective
//   SelfLim  stated limits of the speaker's own viewpoint
//   DirLim   stated limits of the other agent's viewpoint
//
// The scorer is a deterministic lexicon/pattern matcher. Verbs of perception
// and knowledge anchor articulation; negated ones anchor limit statements;
// both are attributed to the nearest preceding subject in the sentence.
// ---------------------------------------------------------------------------

enum class PronPattern { stage0_pattern, stage1_pattern, neither };
enum class ActorsPattern { self_only, self_and_other, neither };

inline const char* to_string(PronPattern p) {
    switch (p) {
        case PronPattern::stage0_pattern: return "stage0-pattern";
        case PronPattern::stage1_pattern: return "stage1-pattern";
        case PronPattern::neither: return "neither";
    }
    return "unknown";
}

inline const char* to_string(ActorsPattern a) {
    switch (a) {
        case ActorsPattern::self_only: return "self-only";
        case ActorsPattern::self_and_other: return "self-and-other";
        case ActorsPattern::neither: return "neither";
    }
    return "unknown";
}

inline PronPattern pron_pattern_from_string(std::string_view s) {
    if (s == "stage0-pattern") return PronPattern::stage0_pattern;
    if (s == "stage1-pattern") return PronPattern::stage1_pattern;
    if (s == "neither") return PronPattern::neither;
    throw Error(ErrorKind::parse, "pron: unknown pattern \"" + std::string(s) + "\"");
}

inline ActorsPattern actors_pattern_from_string(std::string_view s) {
    if (s == "self-only") return ActorsPattern::self_only;
    if (s == "self-and-other") return ActorsPattern::self_and_other;
    if (s == "neither") return ActorsPattern::neither;
    throw Error(ErrorKind::parse, "actors: unknown pattern \"" + std::string(s) + "\"");
}

struct CriteriaScores {
    PronPattern pron = PronPattern::neither;
    ActorsPattern actors = ActorsPattern::neither;
    bool self_art = false;
    bool dir_art = false;
    bool self_lim = false;
    bool dir_lim = false;

    bool operator==(const CriteriaScores&) const = default;
};

struct EvidenceSpan {
    std::string criterion; // "pron", "actors", "self_art", "dir_art", "self_lim", "dir_lim"
    size_t begin = 0;      // byte offsets into the scored text
    size_t end = 0;
    std::string excerpt;

    bool operator==(const EvidenceSpan&) const = default;
};

enum class VerdictStage { stage0, stage1, unclassified };

inline const char* to_string(VerdictStage v) {
    switch (v) {
        case VerdictStage::stage0: return "stage0";
        case VerdictStage::stage1: return "stage1";
        case VerdictStage::unclassified: return "unclassified";
    }
    return "unknown";
}

inline VerdictStage verdict_stage_from_string(std::string_view s) {
    if (s == "stage0") return VerdictStage::stage0;
    if (s == "stage1") return VerdictStage::stage1;
    if (s == "unclassified") return VerdictStage::unclassified;
    throw Error(ErrorKind::parse, "verdict: unknown stage \"" + std::string(s) + "\"");
}

struct StageVerdict {
    VerdictStage stage = VerdictStage::unclassified;
    CriteriaScores scores;
    std::vector<EvidenceSpan> evidence;

    bool operator==(const StageVerdict&) const = default;
};

struct RubricAnalysis {
    CriteriaScores scores;
    std::vector<EvidenceSpan> evidence;
};

namespace rubric_detail {

inline const std::set<std::string>& first_person() {
    static const std::set<std::string> s = {"i", "me", "my", "mine", "myself"};
    return s;
}

// Always-personal third-person pronouns.
inline const std::set<std::string>& third_person_base() {
    static const std::set<std::string> s = {"he",  "she",  "him",    "her",     "his",
                                            "hers", "himself", "herself"};
    return s;
}

// Personal only with an animate antecedent in the text, or as the subject of
// a perception/knowledge verb (objects do not see or know).
inline const std::set<std::string>& they_family() {
    static const std::set<std::string> s = {"they", "them", "their", "theirs", "themselves"};
    return s;
}

inline const std::set<std::string>& animate_nouns() {
    static const std::set<std::string> s = {"person", "director"};
    return s;
}

inline const std::set<std::string>& mental_verbs() {
    static const std::set<std::string> s = {
        "see",     "sees",    "saw",     "look",   "looks",   "looked",  "know",  "knows",
        "knew",    "think",   "thinks",  "believe", "believes", "notice", "notices",
        "noticed", "want",    "wants",   "wanted", "mean",    "means",   "meant", "feel",
        "feels",   "ask",     "asks",    "asked",  "tell",    "tells",   "understand",
        "understands", "wonder", "wonders", "trust", "trusts"};
    return s;
}

inline const std::set<std::string>& negations() {
    static const std::set<std::string> s = {"not",    "no",      "never",  "cannot", "can't",
                                            "cant",   "don't",   "dont",   "doesn't", "doesnt",
                                            "won't",  "wont",    "didn't", "didnt",  "isn't",
                                            "isnt",   "couldn't", "couldnt"};
    return s;
}

// Complement extension stops at clause joins and punctuation.
inline const std::set<std::string>& clause_breaks() {
    static const std::set<std::string> s = {"so", "but", "and", "because", "then", "though"};
    return s;
}

enum class SubjectClass { none, self, other };

struct VerbHit {
    size_t verb_index = 0;
    size_t subject_index = 0;
    SubjectClass subject = SubjectClass::none;
    bool negated = false;
};

} // namespace rubric_detail

inline RubricAnalysis analyze(const std::string& input) {
    using namespace rubric_detail;
    if (text::trim(input).empty()) throw Error(ErrorKind::empty_input, "cannot score empty text");

    const auto tokens = text::tokenize(input);
    const auto sentences = text::sentence_ranges(tokens);

    auto sentence_start_of = [&](size_t idx) {
        for (const auto& [b, e] : sentences)
            if (idx >= b && idx < e) return b;
        return size_t{0};
    };

    // Pass 1: verb occurrences with subject attribution and negation.
    std::vector<VerbHit> hits;
    std::set<size_t> they_subject_indices;
    for (size_t i = 0; i < tokens.size(); ++i) {
        if (!tokens[i].word) continue;
        bool anchored_might = false;
        if (tokens[i].text == "might" && i + 1 < tokens.size() && tokens[i + 1].word &&
            tokens[i + 1].text == "not") {
            anchored_might = true;
        }
        if (!mental_verbs().count(tokens[i].text) && !anchored_might) continue;

        VerbHit hit;
        hit.verb_index = i;
        const size_t sent_start = sentence_start_of(i);

        // Negation within a short window before the verb (and "might not" itself).
        hit.negated = anchored_might;
        for (size_t back = 1; back <= 3 && i >= sent_start + back; ++back) {
            const auto& t = tokens[i - back];
            if (t.word && negations().count(t.text)) {
                hit.negated = true;
                break;
            }
        }

        // Nearest preceding subject token in the sentence.
        for (size_t j = i; j-- > sent_start;) {
            const auto& t = tokens[j];
            if (!t.word) continue;
            if (first_person().count(t.text)) {
                hit.subject = SubjectClass::self;
                hit.subject_index = j;
                break;
            }
            if (third_person_base().count(t.text) || they_family().count(t.text) ||
                animate_nouns().count(t.text)) {
                hit.subject = SubjectClass::other;
                hit.subject_index = j;
                if (they_family().count(t.text)) they_subject_indices.insert(j);
                break;
            }
        }
        if (hit.subject != SubjectClass::none) hits.push_back(hit);
    }

    // Animate mentions: role nouns, or he/she pronouns.
    bool has_animate_noun = false;
    for (const auto& t : tokens) {
        if (t.word && (animate_nouns().count(t.text) || third_person_base().count(t.text))) {
            has_animate_noun = true;
            break;
        }
    }

    // Pass 2: pronoun counts.
    size_t first_count = 0, third_count = 0;
    std::optional<size_t> first_evidence, third_evidence, other_mention;
    for (size_t i = 0; i < tokens.size(); ++i) {
        const auto& t = tokens[i];
        if (!t.word) continue;
        if (first_person().count(t.text)) {
            ++first_count;
            if (!first_evidence) first_evidence = i;
        } else if (third_person_base().count(t.text)) {
            ++third_count;
            if (!third_evidence) third_evidence = i;
            if (!other_mention) other_mention = i;
        } else if (they_family().count(t.text)) {
            if (has_animate_noun || they_subject_indices.count(i)) {
                ++third_count;
                if (!third_evidence) third_evidence = i;
                if (!other_mention) other_mention = i;
            }
        } else if (animate_nouns().count(t.text)) {
            if (!other_mention) other_mention = i;
        }
    }

    RubricAnalysis out;
    auto& scores = out.scores;

    if (first_count >= 1 && third_count == 0) scores.pron = PronPattern::stage0_pattern;
    else if (first_count >= 1 && third_count >= 1) scores.pron = PronPattern::stage1_pattern;
    else scores.pron = PronPattern::neither;

    if (first_count == 0) scores.actors = ActorsPattern::neither;
    else if (other_mention) scores.actors = ActorsPattern::self_and_other;
    else scores.actors = ActorsPattern::self_only;

    // Evidence helpers.
    auto token_span = [&](size_t idx, const char* criterion) {
        EvidenceSpan span;
        span.criterion = criterion;
        span.begin = tokens[idx].begin;
        span.end = tokens[idx].end;
        span.excerpt = input.substr(span.begin, span.end - span.begin);
        return span;
    };
    auto phrase_span = [&](const VerbHit& hit, const char* criterion) {
        // From the subject (with leading determiners) through the verb's
        // complement, stopping at punctuation or a clause join.
        size_t begin_idx = hit.subject_index;
        static const std::set<std::string> determiners = {"the", "a", "an", "other", "another"};
        while (begin_idx > 0 && tokens[begin_idx - 1].word &&
               determiners.count(tokens[begin_idx - 1].text))
            --begin_idx;
        size_t end_idx = hit.verb_index;
        size_t extended = 0;
        for (size_t k = hit.verb_index + 1; k < tokens.size() && extended < 6; ++k, ++extended) {
            if (!tokens[k].word) break;
            if (clause_breaks().count(tokens[k].text)) break;
            end_idx = k;
        }
        EvidenceSpan span;
        span.criterion = criterion;
        span.begin = tokens[begin_idx].begin;
        span.end = tokens[end_idx].end;
        span.excerpt = input.substr(span.begin, span.end - span.begin);
        return span;
    };

    if (first_evidence) out.evidence.push_back(token_span(*first_evidence, "pron"));
    if (third_evidence) out.evidence.push_back(token_span(*third_evidence, "pron"));
    if (other_mention) out.evidence.push_back(token_span(*other_mention, "actors"));

    for (const auto& hit : hits) {
        const bool self = hit.subject == SubjectClass::self;
        if (hit.negated) {
            bool& flag = self ? scores.self_lim : scores.dir_lim;
            if (!flag) out.evidence.push_back(phrase_span(hit, self ? "self_lim" : "dir_lim"));
            flag = true;
        } else {
            bool& flag = self ? scores.self_art : scores.dir_art;
            if (!flag) out.evidence.push_back(phrase_span(hit, self ? "self_art" : "dir_art"));
            flag = true;
        }
    }

    return out;
}

inline CriteriaScores score(const std::string& input) { return analyze(input).scores; }

// Conjunctive classification; compliance is all-or-nothing.
inline VerdictStage classify_stage(const CriteriaScores& s) {
    if (s.pron == PronPattern::stage0_pattern && s.actors == ActorsPattern::self_only &&
        !s.dir_art && !s.dir_lim)
        return VerdictStage::stage0;
    if (s.pron == PronPattern::stage1_pattern && s.actors == ActorsPattern::self_and_other &&
        s.dir_art && (s.dir_lim || s.self_lim))
        return VerdictStage::stage1;
    return VerdictStage::unclassified;
}

inline StageVerdict classify(const RubricAnalysis& analysis) {
    StageVerdict v;
    v.stage = classify_stage(analysis.scores);
    v.scores = analysis.scores;
    v.evidence = analysis.evidence;
    return v;
}

inline StageVerdict classify(const CriteriaScores& scores) {
    StageVerdict v;
    v.stage = classify_stage(scores);
    v.scores = scores;
    return v;
}

// The deterministic judge backend: score then classify, evidence attached.
inline StageVerdict lexicon_judge(const std::string& input) { return classify(analyze(input)); }

// ---------------------------------------------------------------------------
// Confusion matrices over intended vs. classified stages.
// ---------------------------------------------------------------------------

enum class Phase { pre_task, post_task };

inline const char* to_string(Phase p) { return p == Phase::pre_task ? "pre-task" : "post-task"; }

struct ConfusionMatrix {
    Phase phase = Phase::pre_task;
    // cells[intended][classified]; classified columns: stage0, stage1, unclassified.
    std::array<std::array<int, 3>, 2> cells{};

    int total() const {
        int n = 0;
        for (const auto& row : cells)
            for (int c : row) n += c;
        return n;
    }

    int at(Stage intended, VerdictStage classified) const {
        return cells[static_cast<size_t>(intended)][static_cast<size_t>(classified)];
    }

    bool operator==(const ConfusionMatrix&) const = default;
};

inline ConfusionMatrix confusion(const std::vector<std::pair<Stage, VerdictStage>>& labeled,
                                 Phase phase) {
    if (labeled.empty()) throw Error(ErrorKind::empty_input, "confusion over an empty list");
    ConfusionMatrix m;
    m.phase = phase;
    for (const auto& [intended, classified] : labeled)
        m.cells[static_cast<size_t>(intended)][static_cast<size_t>(classified)] += 1;
    return m;
}

inline ConfusionMatrix confusion(const std::vector<std::pair<Stage, StageVerdict>>& labeled,
                                 Phase phase) {
    std::vector<std::pair<Stage, VerdictStage>> flat;
    flat.reserve(labeled.size());
    for (const auto& [intended, verdict] : labeled) flat.emplace_back(intended, verdict.stage);
    return confusion(flat, phase);
}

// ---------------------------------------------------------------------------
// Verdict records: one JSON object per line, offsets are byte offsets.
// ---------------------------------------------------------------------------

struct VerdictRecord {
    std::string text_id;
    std::optional<Stage> intended;
    StageVerdict verdict;

    bool operator==(const VerdictRecord&) const = default;
};

inline nlohmann::json verdict_to_json(const StageVerdict& v) {
    nlohmann::json evidence = nlohmann::json::array();
    for (const auto& span : v.evidence) {
        evidence.push_back({{"criterion", span.criterion},
                            {"begin", span.begin},
                            {"end", span.end},
                            {"excerpt", span.excerpt}});
    }
    return nlohmann::json{{"stage", to_string(v.stage)},
                          {"pron", to_string(v.scores.pron)},
                          {"actors", to_string(v.scores.actors)},
                          {"self_art", v.scores.self_art},
                          {"dir_art", v.scores.dir_art},
                          {"self_lim", v.scores.self_lim},
                          {"dir_lim", v.scores.dir_lim},
                          {"evidence", std::move(evidence)}};
}

inline StageVerdict verdict_from_json(const nlohmann::json& j) {
    StageVerdict v;
    v.stage = verdict_stage_from_string(j.at("stage").get<std::string>());
    v.scores.pron = pron_pattern_from_string(j.at("pron").get<std::string>());
    v.scores.actors = actors_pattern_from_string(j.at("actors").get<std::string>());
    v.scores.self_art = j.at("self_art").get<bool>();
    v.scores.dir_art = j.at("dir_art").get<bool>();
    v.scores.self_lim = j.at("self_lim").get<bool>();
    v.scores.dir_lim = j.at("dir_lim").get<bool>();
    if (j.contains("evidence")) {
        for (const auto& ej : j.at("evidence")) {
            EvidenceSpan span;
            span.criterion = ej.at("criterion").get<std::string>();
            span.begin = ej.at("begin").get<size_t>();
            span.end = ej.at("end").get<size_t>();
            span.excerpt = ej.at("excerpt").get<std::string>();
            v.evidence.push_back(std::move(span));
        }
    }
    return v;
}

inline std::string verdict_record_to_line(const VerdictRecord& r) {
    nlohmann::json j = verdict_to_json(r.verdict);
    j["text_id"] = r.text_id;
    j["intended"] = r.intended ? to_string(*r.intended) : "";
    return j.dump();
}

inline VerdictRecord verdict_record_from_line(const std::string& line) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorKind::parse, std::string("verdict record is not valid JSON: ") + e.what());
    }
    VerdictRecord r;
    r.text_id = j.at("text_id").get<std::string>();
    const std::string intended = j.at("intended").get<std::string>();
    if (!intended.empty()) r.intended = stage_from_string(intended);
    r.verdict = verdict_from_json(j);
    return r;
}

} // namespace perspact
