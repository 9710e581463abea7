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

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "perspact/errors.hpp"
#include "perspact/stage.hpp"
#include "perspact/text.hpp"

namespace perspact {

// Prompts are configuration, not code: plain-text files with named
// placeholders, loaded from a directory and rendered by substitution.
//
//   narrative_prompt.txt   {persona} {stage_rules} {objective_description}
//   child_persona.txt      persona block, included when the option is on
//   stage0_rules.txt       behavioral rules for the egocentric level
//   stage1_rules.txt       behavioral rules for the differentiated level
//   matcher_prompt.txt     {context_block} {actions_help} {transcript}
//   judge_prompt.txt       {narrative_text}

struct PromptOptions {
    bool include_child_persona = true;
};

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::config, "cannot read file: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::config, "cannot write file: " + path.string());
    out << content;
}

class PromptLibrary {
public:
    static PromptLibrary load(const std::filesystem::path& dir, PromptOptions options = {}) {
        PromptLibrary lib;
        lib.options_ = options;
        lib.narrative_prompt_ = read_text_file(dir / "narrative_prompt.txt");
        lib.child_persona_ = read_text_file(dir / "child_persona.txt");
        lib.stage0_rules_ = read_text_file(dir / "stage0_rules.txt");
        lib.stage1_rules_ = read_text_file(dir / "stage1_rules.txt");
        lib.matcher_prompt_ = read_text_file(dir / "matcher_prompt.txt");
        lib.judge_prompt_ = read_text_file(dir / "judge_prompt.txt");
        return lib;
    }

    const std::string& stage_rules(Stage stage) const {
        return stage == Stage::stage0 ? stage0_rules_ : stage1_rules_;
    }

    const PromptOptions& options() const { return options_; }

    // Persona instruction, the stage's behavioral rules, and the objective
    // description verbatim.
    std::string render_stage_prompt(Stage stage, const std::string& objective_description) const {
        if (objective_description.empty())
            throw Error(ErrorKind::empty_input, "objective description is empty");
        std::string out = narrative_prompt_;
        text::replace_all(out, "{persona}", options_.include_child_persona ? child_persona_ : "");
        text::replace_all(out, "{stage_rules}", stage_rules(stage));
        text::replace_all(out, "{objective_description}", objective_description);
        return out;
    }

    std::string render_matcher_prompt(const std::string& context_block,
                                      const std::string& actions_help,
                                      const std::string& transcript) const {
        std::string out = matcher_prompt_;
        text::replace_all(out, "{context_block}", context_block);
        text::replace_all(out, "{actions_help}", actions_help);
        text::replace_all(out, "{transcript}", transcript);
        return out;
    }

    std::string render_judge_prompt(const std::string& narrative_text) const {
        std::string out = judge_prompt_;
        text::replace_all(out, "{narrative_text}", narrative_text);
        return out;
    }

private:
    PromptOptions options_;
    std::string narrative_prompt_;
    std::string child_persona_;
    std::string stage0_rules_;
    std::string stage1_rules_;
    std::string matcher_prompt_;
    std::string judge_prompt_;
};

} // namespace perspact
