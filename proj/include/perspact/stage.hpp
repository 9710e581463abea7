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

#include <string_view>

#include "perspact/errors.hpp"

namespace perspact {

// The two developmental levels the harness models: stage0 (egocentric,
// undifferentiated) and stage1 (differentiated, subjective).
enum class Stage { stage0, stage1 };

inline const char* to_string(Stage s) {
    return s == Stage::stage0 ? "stage0" : "stage1";
}

inline Stage stage_from_string(std::string_view s) {
    if (s == "stage0") return Stage::stage0;
    if (s == "stage1") return Stage::stage1;
    throw Error(ErrorKind::parse, "stage: expected \"stage0\" or \"stage1\", got \"" + std::string(s) + "\"");
}

// Information conditions for the matcher agent.
enum class Condition { blind, informed, objective_informed };

inline const char* to_string(Condition c) {
    switch (c) {
        case Condition::blind: return "blind";
        case Condition::informed: return "informed";
        case Condition::objective_informed: return "objective-informed";
    }
    return "unknown";
}

inline Condition condition_from_string(std::string_view s) {
    if (s == "blind") return Condition::blind;
    if (s == "informed") return Condition::informed;
    if (s == "objective-informed" || s == "objective_informed") return Condition::objective_informed;
    throw Error(ErrorKind::parse,
                "condition: expected \"blind\", \"informed\" or \"objective-informed\", got \"" + std::string(s) + "\"");
}

} // namespace perspact
