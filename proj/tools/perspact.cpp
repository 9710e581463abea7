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

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "perspact/perspact.hpp"

namespace {

// Exit codes: 0 ok, 2 usage/config, 3 unclassified verdict, 4 backend/gateway.
constexpr int kOk = 0;
constexpr int kUsage = 2;
constexpr int kUnclassified = 3;
constexpr int kBackend = 4;

int exit_code_for(const perspact::Error& e) {
    switch (e.kind()) {
        case perspact::ErrorKind::gateway:
        case perspact::ErrorKind::replay_miss:
        case perspact::ErrorKind::generation:
        case perspact::ErrorKind::judge_format:
            return kBackend;
        default:
            return kUsage;
    }
}

perspact::Scenario load_scenario_file(const std::string& path) {
    if (!std::filesystem::exists(path))
        throw perspact::Error(perspact::ErrorKind::config, "scene file not found: " + path);
    return perspact::load_scenario(perspact::read_text_file(path));
}

perspact::Gateway make_gateway(const std::string& cache_dir, bool live) {
    perspact::GatewayConfig cfg;
    cfg.mode = live ? perspact::GatewayMode::live : perspact::GatewayMode::replay;
    cfg.cache_dir = cache_dir;
    return perspact::Gateway(cfg);
}

void print_verdict(const perspact::StageVerdict& verdict, std::optional<perspact::Stage> intended) {
    const auto& s = verdict.scores;
    std::cout << "pron:      " << perspact::to_string(s.pron) << "\n";
    std::cout << "actors:    " << perspact::to_string(s.actors) << "\n";
    std::cout << "self_art:  " << (s.self_art ? "yes" : "no") << "\n";
    std::cout << "dir_art:   " << (s.dir_art ? "yes" : "no") << "\n";
    std::cout << "self_lim:  " << (s.self_lim ? "yes" : "no") << "\n";
    std::cout << "dir_lim:   " << (s.dir_lim ? "yes" : "no") << "\n";
    std::cout << "verdict:   " << perspact::to_string(verdict.stage) << "\n";
    if (intended) {
        std::cout << "intended:  " << perspact::to_string(*intended);
        if ((verdict.stage == perspact::VerdictStage::stage0) !=
                (*intended == perspact::Stage::stage0) ||
            verdict.stage == perspact::VerdictStage::unclassified)
            std::cout << "  (mismatch)";
        std::cout << "\n";
    }
    if (!verdict.evidence.empty()) {
        std::cout << "evidence:\n";
        for (const auto& span : verdict.evidence) {
            std::cout << "  " << span.criterion << "  [" << span.begin << ".." << span.end
                      << ")  \"" << span.excerpt << "\"\n";
        }
    }
}

struct GenerateArgs {
    std::string scene_file;
    std::string stage = "stage0";
    std::string backend = "template";
    std::string out = "narrative.json";
    std::string prompts_dir = "assets/prompts";
    std::string cache_dir = "gateway-cache";
    std::string model = "gpt-4o";
    bool live = false;
    bool no_persona = false;
};

int cmd_generate(const GenerateArgs& args) {
    const auto scenario = load_scenario_file(args.scene_file);
    const auto stage = perspact::stage_from_string(args.stage);
    const auto backend = perspact::narrative_backend_from_string(args.backend);

    perspact::Narrative narrative;
    if (backend == perspact::NarrativeBackend::templated) {
        narrative = perspact::template_narrative(scenario.scene, stage);
    } else {
        auto prompts = perspact::PromptLibrary::load(args.prompts_dir,
                                                     perspact::PromptOptions{!args.no_persona});
        auto gateway = make_gateway(args.cache_dir, args.live);
        perspact::LlmNarrativeOptions options;
        options.model = args.model;
        narrative = perspact::llm_narrative(scenario.scene, stage, gateway, prompts, options);
    }

    perspact::write_text_file(args.out, perspact::narrative_to_json(narrative).dump(2) + "\n");
    std::cout << narrative.text << "\n";
    return kOk;
}

struct ScoreArgs {
    std::string text_file;
    std::string intended;
    std::string out;
};

int cmd_score(const ScoreArgs& args) {
    if (!std::filesystem::exists(args.text_file))
        throw perspact::Error(perspact::ErrorKind::config, "text file not found: " + args.text_file);
    const std::string content = perspact::read_text_file(args.text_file);
    if (perspact::text::trim(content).empty())
        throw perspact::Error(perspact::ErrorKind::empty_input, "text file is empty: " + args.text_file);

    std::optional<perspact::Stage> intended;
    if (!args.intended.empty()) intended = perspact::stage_from_string(args.intended);

    const auto verdict = perspact::lexicon_judge(content);
    print_verdict(verdict, intended);

    if (!args.out.empty()) {
        perspact::VerdictRecord record{args.text_file, intended, verdict};
        perspact::write_text_file(args.out, perspact::verdict_record_to_line(record) + "\n");
    }
    return verdict.stage == perspact::VerdictStage::unclassified ? kUnclassified : kOk;
}

struct RunEpisodeArgs {
    std::string scene_file;
    std::string stage = "stage0";
    std::string condition = "blind";
    std::string policy = "differentiated";
    std::string out;
    uint64_t seed = 0;
    int max_steps = 12;
};

int cmd_run_episode(const RunEpisodeArgs& args) {
    const auto scenario = load_scenario_file(args.scene_file);
    const auto stage = perspact::stage_from_string(args.stage);
    const auto condition = perspact::condition_from_string(args.condition);
    const auto kind = perspact::policy_kind_from_string(args.policy);
    if (kind == perspact::PolicyBackend::Kind::llm)
        throw perspact::Error(perspact::ErrorKind::config,
                              "run-episode drives scripted policies; use run-experiment for llm runs");

    const auto narrative = perspact::template_narrative(scenario.scene, stage);
    const auto ctx = perspact::build_condition_context(condition, narrative, scenario.scene);
    perspact::PolicyBackend backend;
    backend.kind = kind;
    perspact::TaskConfig task;
    task.max_steps = args.max_steps;
    const auto episode = perspact::run_episode(scenario.scene, scenario.request, ctx, backend,
                                               args.seed, stage, task);

    std::cout << episode.initial_observation << "\n";
    for (const auto& s : episode.steps) {
        std::cout << "Thought: " << s.thought << "\n";
        std::cout << "Action: " << s.action.render() << "\n";
        std::cout << "Observation: " << s.observation << "\n";
    }
    std::cout << "outcome: " << perspact::to_string(perspact::episode_outcome(episode))
              << "  steps: " << episode.step_count;
    if (!episode.failure_reason.empty()) std::cout << "  reason: " << episode.failure_reason;
    std::cout << "\n";

    if (!args.out.empty()) perspact::write_text_file(args.out, perspact::episode_to_jsonl(episode));
    return kOk;
}

struct RunExperimentArgs {
    std::string config_file;
    std::string output_override;
    std::optional<uint64_t> seed_override;
};

int cmd_run_experiment(const RunExperimentArgs& args) {
    auto config = perspact::load_experiment_config(args.config_file);
    if (!args.output_override.empty()) config.output_dir = args.output_override;
    if (args.seed_override) config.seed_base = *args.seed_override;
    config.validate();

    const auto report = perspact::run_experiment(config);

    std::cout << perspact::read_text_file(config.output_dir / "report" / "table1_classic_failures.txt") << "\n";
    std::cout << perspact::read_text_file(config.output_dir / "report" / "table2_classic_steps.txt") << "\n";
    std::cout << perspact::read_text_file(config.output_dir / "report" / "table3_ecological_failures.txt") << "\n";
    std::cout << perspact::read_text_file(config.output_dir / "report" / "table4_ecological_weighted_steps.txt") << "\n";
    std::cout << perspact::read_text_file(config.output_dir / "report" / "table5_confusion.txt");
    std::cout << "report written to " << (config.output_dir / "report").string() << "\n";
    (void)report;
    return kOk;
}

int cmd_report(const std::string& run_dir) {
    const auto report = perspact::recompute_report(run_dir);
    perspact::render_report(report, std::filesystem::path(run_dir) / "report");
    std::cout << perspact::read_text_file(std::filesystem::path(run_dir) / "report" /
                                          "table1_classic_failures.txt")
              << "\n";
    std::cout << perspact::read_text_file(std::filesystem::path(run_dir) / "report" /
                                          "table5_confusion.txt");
    std::cout << "report rebuilt under " << (std::filesystem::path(run_dir) / "report").string()
              << "\n";
    return kOk;
}

struct FixturesArgs {
    std::string cache_dir = "gateway-cache";
    std::string prompts_dir = "assets/prompts";
    std::string scene_file = "assets/scenarios/wardrobe.json";
};

int cmd_fixtures_install(const FixturesArgs& args) {
    const auto scenario = load_scenario_file(args.scene_file);
    auto prompts = perspact::PromptLibrary::load(args.prompts_dir);
    auto gateway = make_gateway(args.cache_dir, false);
    try {
        perspact::install_reference_fixtures(gateway, prompts, scenario.scene);
        std::cout << "installed fixtures: wardrobe-stage0, wardrobe-stage1\n";
    } catch (const perspact::Error& e) {
        if (e.kind() != perspact::ErrorKind::conflict) throw;
        std::cout << "fixtures already present in " << args.cache_dir << "\n";
    }
    return kOk;
}

int cmd_fixtures_list(const std::string& cache_dir) {
    auto gateway = make_gateway(cache_dir, false);
    for (const auto& name : gateway.list_fixtures()) std::cout << name << "\n";
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"director-task perspective-taking benchmark harness"};
    app.require_subcommand(1);

    GenerateArgs gen;
    auto* generate = app.add_subcommand("generate", "generate a narrative for a scene");
    generate->add_option("--scene", gen.scene_file, "scenario file")->required();
    generate->add_option("--stage", gen.stage, "stage0 | stage1");
    generate->add_option("--backend", gen.backend, "template | llm");
    generate->add_option("--out", gen.out, "output narrative file");
    generate->add_option("--prompts", gen.prompts_dir, "prompt template directory");
    generate->add_option("--cache", gen.cache_dir, "gateway cache directory");
    generate->add_option("--model", gen.model, "narrator model name (llm backend)");
    generate->add_flag("--live", gen.live, "allow live gateway calls (default replay)");
    generate->add_flag("--no-child-persona", gen.no_persona, "drop the child persona block");

    ScoreArgs score;
    auto* score_cmd = app.add_subcommand("score", "score a text against the six criteria");
    score_cmd->add_option("--text", score.text_file, "text file to score")->required();
    score_cmd->add_option("--intended", score.intended, "intended stage for comparison");
    score_cmd->add_option("--out", score.out, "write the verdict record here");

    RunEpisodeArgs ep;
    auto* run_ep = app.add_subcommand("run-episode", "run one scripted episode");
    run_ep->add_option("--scene", ep.scene_file, "scenario file")->required();
    run_ep->add_option("--stage", ep.stage, "stage0 | stage1");
    run_ep->add_option("--condition", ep.condition, "blind | informed | objective-informed");
    run_ep->add_option("--policy", ep.policy, "egocentric | differentiated");
    run_ep->add_option("--seed", ep.seed, "episode seed");
    run_ep->add_option("--max-steps", ep.max_steps, "step budget");
    run_ep->add_option("--out", ep.out, "write the episode transcript here");

    RunExperimentArgs rex;
    auto* run_ex = app.add_subcommand("run-experiment", "run the full grid from a config");
    run_ex->add_option("--config", rex.config_file, "experiment config file")->required();
    run_ex->add_option("--output", rex.output_override, "override the output directory");
    uint64_t seed_opt = 0;
    auto* seed_flag = run_ex->add_option("--seed", seed_opt, "override the seed base");

    std::string report_dir;
    auto* report_cmd = app.add_subcommand("report", "rebuild report tables from a run directory");
    report_cmd->add_option("--run", report_dir, "run directory")->required();

    auto* fixtures = app.add_subcommand("fixtures", "manage replay fixtures");
    fixtures->require_subcommand(1);
    FixturesArgs fix;
    auto* fix_install = fixtures->add_subcommand("install", "install the bundled reference fixtures");
    fix_install->add_option("--cache", fix.cache_dir, "gateway cache directory");
    fix_install->add_option("--prompts", fix.prompts_dir, "prompt template directory");
    fix_install->add_option("--scene", fix.scene_file, "wardrobe scenario file");
    std::string fix_list_cache = "gateway-cache";
    auto* fix_list = fixtures->add_subcommand("list", "list installed fixtures");
    fix_list->add_option("--cache", fix_list_cache, "gateway cache directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*generate) return cmd_generate(gen);
        if (*score_cmd) return cmd_score(score);
        if (*run_ep) return cmd_run_episode(ep);
        if (*run_ex) {
            if (seed_flag->count() > 0) rex.seed_override = seed_opt;
            return cmd_run_experiment(rex);
        }
        if (*report_cmd) return cmd_report(report_dir);
        if (*fix_install) return cmd_fixtures_install(fix);
        if (*fix_list) return cmd_fixtures_list(fix_list_cache);
    } catch (const perspact::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    }
    return kUsage;
}
