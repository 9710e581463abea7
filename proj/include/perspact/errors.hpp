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

#include <stdexcept>
#include <string>

namespace perspact {

enum class ErrorKind {
    parse,             // malformed document or model output
    validation,        // structural invariant violated
    invalid_viewpoint, // unknown waypoint
    invalid_request,   // request target not visible to the director
    illegal_action,    // action not permitted in this scene/state
    protocol,          // operation on a state that does not admit it
    generation,        // narrative backend produced nothing usable
    judge_format,      // judge output unparseable after retry
    gateway,           // transport failure after retries
    replay_miss,       // replay mode with no cached response
    conflict,          // duplicate fixture name
    empty_input,       // operation requires non-empty input
    config             // bad experiment or CLI configuration
};

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::parse: return "parse";
        case ErrorKind::validation: return "validation";
        case ErrorKind::invalid_viewpoint: return "invalid-viewpoint";
        case ErrorKind::invalid_request: return "invalid-request";
        case ErrorKind::illegal_action: return "illegal-action";
        case ErrorKind::protocol: return "protocol";
        case ErrorKind::generation: return "generation";
        case ErrorKind::judge_format: return "judge-format";
        case ErrorKind::gateway: return "gateway";
        case ErrorKind::replay_miss: return "replay-miss";
        case ErrorKind::conflict: return "conflict";
        case ErrorKind::empty_input: return "empty-input";
        case ErrorKind::config: return "config";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

} // namespace perspact
