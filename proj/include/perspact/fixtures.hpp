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

#include "perspact/gateway.hpp"
#include "perspact/narrative.hpp"
#include "perspact/prompts.hpp"
#include "perspact/scene.hpp"

namespace perspact {

// Reference narratives for the bundled wardrobe scenario. These are the
// canonical level-0 and level-1 descriptions the rubric is golden-tested
// against, and they double as canned completions for replay mode.
// Byte content is load-bearing (note the typographic apostrophes in the
// second text); do not reflow.

namespace reference_narratives {

inline const std::string& wardrobe_stage0() {
    static const std::string text =
        "I see a blue_tie hanging from the wardrobe, just to the left. There is a shirt "
        "hanging next to it, next to the blue_tie. On the shelf, I also see a red_tie that "
        "is folded. And at the bottom, there is a closed drawer. That's all I see.";
    return text;
}

inline const std::string& wardrobe_stage1() {
    static const std::string text =
        "I see a wardrobe with a blue tie hanging on the left and a red tie folded on a "
        "shelf. There's also a closed drawer at the bottom, but I don’t know what’s "
        "inside. Next to the blue tie, there’s a shirt hanging. The other person sees "
        "the wardrobe too, and they can also see the blue tie and the shirt. But they "
        "can’t see the drawer, so they don’t know what’s inside. I can see "
        "everything, so I know more about what’s there.";
    return text;
}

} // namespace reference_narratives

// Seeds the gateway cache with the reference narratives keyed by the exact
// requests the llm backend would issue for the wardrobe scene, so
// `generate --backend llm` works fully offline in replay mode.
inline void install_reference_fixtures(Gateway& gateway, const PromptLibrary& prompts,
                                       const Scene& wardrobe,
                                       const LlmNarrativeOptions& options = {}) {
    gateway.record_fixture("wardrobe-stage0",
                           narrative_chat_request(prompts, wardrobe, Stage::stage0, options),
                           reference_narratives::wardrobe_stage0());
    gateway.record_fixture("wardrobe-stage1",
                           narrative_chat_request(prompts, wardrobe, Stage::stage1, options),
                           reference_narratives::wardrobe_stage1());
}

} // namespace perspact
