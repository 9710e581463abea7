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

#include "perspact/errors.hpp"
#include "perspact/experiment.hpp"
#include "perspact/fixtures.hpp"
#include "perspact/gateway.hpp"
#include "perspact/judge.hpp"
#include "perspact/matcher.hpp"
#include "perspact/narrative.hpp"
#include "perspact/prompts.hpp"
#include "perspact/rubric.hpp"
#include "perspact/scene.hpp"
#include "perspact/stage.hpp"
#include "perspact/task.hpp"
