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
#include <string>

#include <json.hpp>

#include "perspact/errors.hpp"
#include "perspact/gateway.hpp"
#include "perspact/prompts.hpp"
#include "perspact/rubric.hpp"

namespace perspact {

// Model-backed stage judgement. The judge receives the six criteria and both
// stage pattern lists (in the prompt template) and must answer with a JSON
// verdict. One reformat retry, then a judge-format error.

struct LlmJudgeOptions {
    std::string model = "gpt-4o";
    double temperature = 0.0;
    int max_tokens = 512;
};

namespace judge_detail {

inline StageVerdict parse_judge_output(const std::string& raw, const std::string& scored_text) {
    const size_t open = raw.find('{');
    const size_t close = raw.rfind('}');
    if (open == std::string::npos || close == std::string::npos || close < open)
        throw Error(ErrorKind::parse, "judge output contains no JSON object");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(raw.substr(open, close - open + 1));
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorKind::parse, std::string("judge output is not valid JSON: ") + e.what());
    }
    StageVerdict v;
    try {
        v.stage = verdict_stage_from_string(j.at("stage").get<std::string>());
        v.scores.pron = pron_pattern_from_string(j.at("pron").get<std::string>());
        v.scores.actors = actors_pattern_from_string(j.at("actors").get<std::string>());
        v.scores.self_art = j.at("self_art").get<bool>();
        v.scores.dir_art = j.at("dir_art").get<bool>();
        v.scores.self_lim = j.at("self_lim").get<bool>();
        v.scores.dir_lim = j.at("dir_lim").get<bool>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::parse, std::string("judge verdict is missing fields: ") + e.what());
    } catch (const Error&) {
        throw Error(ErrorKind::parse, "judge verdict uses unknown labels");
    }
    if (j.contains("evidence")) {
        for (const auto& ej : j.at("evidence")) {
            EvidenceSpan span;
            span.criterion = ej.value("criterion", "");
            span.excerpt = ej.value("excerpt", "");
            const size_t at = scored_text.find(span.excerpt);
            if (!span.excerpt.empty() && at != std::string::npos) {
                span.begin = at;
                span.end = at + span.excerpt.size();
            }
            v.evidence.push_back(std::move(span));
        }
    }
    // A definite stage verdict must point at supporting text.
    if (v.stage != VerdictStage::unclassified && v.evidence.empty())
        throw Error(ErrorKind::parse, "judge gave a stage verdict without evidence");
    return v;
}

} // namespace judge_detail

inline StageVerdict llm_judge(const std::string& input, Gateway& gateway,
                              const PromptLibrary& prompts, const LlmJudgeOptions& options = {}) {
    if (text::trim(input).empty()) throw Error(ErrorKind::empty_input, "cannot judge empty text");

    ChatRequest req;
    req.model = options.model;
    req.temperature = options.temperature;
    req.max_tokens = options.max_tokens;
    req.messages.push_back({"user", prompts.render_judge_prompt(input)});

    std::string output = gateway.complete(req);
    try {
        return judge_detail::parse_judge_output(output, input);
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::parse) throw;
    }

    ChatRequest retry = req;
    retry.messages.push_back({"assistant", output});
    retry.messages.push_back({"user",
                              "Your reply was not a valid verdict. Respond with only the JSON "
                              "object described above, nothing else."});
    output = gateway.complete(retry);
    try {
        return judge_detail::parse_judge_output(output, input);
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::parse) throw;
        throw Error(ErrorKind::judge_format, "judge output unparseable after retry: " + std::string(e.what()));
    }
}

} // namespace perspact
