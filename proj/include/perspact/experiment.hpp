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

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "perspact/errors.hpp"
#include "perspact/judge.hpp"
#include "perspact/matcher.hpp"
#include "perspact/narrative.hpp"
#include "perspact/prng.hpp"
#include "perspact/rubric.hpp"
#include "perspact/scene.hpp"
#include "perspact/task.hpp"

namespace perspact {

// ---------------------------------------------------------------------------
// Metrics.
// ---------------------------------------------------------------------------

inline double failure_rate(const std::vector<Outcome>& outcomes) {
    if (outcomes.empty()) throw Error(ErrorKind::empty_input, "failure rate over no episodes");
    int failures = 0;
    for (Outcome o : outcomes)
        if (o == Outcome::failure) ++failures;
    return 100.0 * static_cast<double>(failures) / static_cast<double>(outcomes.size());
}

inline double failure_rate(const std::vector<Episode>& episodes) {
    std::vector<Outcome> outcomes;
    outcomes.reserve(episodes.size());
    for (const auto& e : episodes) outcomes.push_back(episode_outcome(e));
    return failure_rate(outcomes);
}

// Mean step count over successful episodes; no successes means undefined.
inline std::optional<double> avg_steps(const std::vector<Episode>& episodes) {
    int64_t total = 0;
    int successes = 0;
    for (const auto& e : episodes) {
        if (e.outcome && *e.outcome == Outcome::success) {
            total += e.step_count;
            ++successes;
        }
    }
    if (successes == 0) return std::nullopt;
    return static_cast<double>(total) / static_cast<double>(successes);
}

// Success-rate weighted mean of per-cell averages; cells with zero success
// rate carry no weight. All-zero input is undefined.
inline std::optional<double> weighted_steps(const std::vector<std::pair<double, double>>& cells) {
    double weight_sum = 0.0, value_sum = 0.0;
    for (const auto& [rate, steps] : cells) {
        if (rate <= 0.0) continue;
        weight_sum += rate;
        value_sum += rate * steps;
    }
    if (weight_sum <= 0.0) return std::nullopt;
    return value_sum / weight_sum;
}

// ---------------------------------------------------------------------------
// Configuration.
// ---------------------------------------------------------------------------

enum class MatcherBackendKind { scripted, llm };
enum class JudgeKind { lexicon, llm };

inline const char* to_string(MatcherBackendKind k) {
    return k == MatcherBackendKind::scripted ? "scripted" : "llm";
}
inline const char* to_string(JudgeKind k) { return k == JudgeKind::lexicon ? "lexicon" : "llm"; }

inline MatcherBackendKind matcher_backend_from_string(std::string_view s) {
    if (s == "scripted") return MatcherBackendKind::scripted;
    if (s == "llm") return MatcherBackendKind::llm;
    throw Error(ErrorKind::parse, "matcher backend: expected \"scripted\" or \"llm\"");
}

inline JudgeKind judge_kind_from_string(std::string_view s) {
    if (s == "lexicon") return JudgeKind::lexicon;
    if (s == "llm") return JudgeKind::llm;
    throw Error(ErrorKind::parse, "judge backend: expected \"lexicon\" or \"llm\"");
}

struct RoleModels {
    std::string narrator = "gpt-4o";
    std::string matcher = "gpt-o3-mini";
    std::string judge = "gpt-4o";
};

struct ExperimentConfig {
    std::vector<std::string> scenario_files; // as written in the config document
    std::filesystem::path base_dir;          // scenario paths resolve against this
    std::vector<Stage> stages = {Stage::stage0, Stage::stage1};
    std::vector<Condition> conditions = {Condition::blind, Condition::informed,
                                         Condition::objective_informed};
    int repetitions = 5;
    uint64_t seed_base = 24601;
    std::filesystem::path output_dir;
    NarrativeBackend narrator = NarrativeBackend::templated;
    MatcherBackendKind matcher = MatcherBackendKind::scripted;
    JudgeKind judge = JudgeKind::lexicon;
    std::filesystem::path prompts_dir;
    bool child_persona = true;
    GatewayConfig gateway;
    RoleModels models;
    double matcher_temperature = 1.0;
    bool fresh_samples = true; // distinct cache nonces across repetitions (llm matcher)
    int parallelism = 1;
    TaskConfig task;

    bool needs_gateway() const {
        return narrator == NarrativeBackend::llm || matcher == MatcherBackendKind::llm ||
               judge == JudgeKind::llm;
    }

    bool needs_prompts() const { return needs_gateway(); }

    void validate() const {
        if (scenario_files.empty())
            throw Error(ErrorKind::config, "at least one scenario is required");
        if (stages.empty()) throw Error(ErrorKind::config, "at least one stage is required");
        if (conditions.empty())
            throw Error(ErrorKind::config, "at least one condition is required");
        if (repetitions < 1) throw Error(ErrorKind::config, "repetitions must be >= 1");
        if (parallelism < 1) throw Error(ErrorKind::config, "parallelism must be >= 1");
        if (output_dir.empty()) throw Error(ErrorKind::config, "output_dir is required");
        if (needs_prompts() && prompts_dir.empty())
            throw Error(ErrorKind::config, "prompts_dir is required when an llm backend is selected");
        if (task.max_steps < 1) throw Error(ErrorKind::config, "max_steps must be >= 1");
    }

    std::filesystem::path resolve(const std::string& p) const {
        std::filesystem::path path(p);
        if (path.is_absolute() || base_dir.empty()) return path;
        return base_dir / path;
    }
};

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j,
                                                    const std::filesystem::path& base_dir) {
    ExperimentConfig cfg;
    cfg.base_dir = base_dir;
    if (!j.is_object()) throw Error(ErrorKind::config, "config: expected an object");
    try {
        for (const auto& s : j.at("scenarios")) cfg.scenario_files.push_back(s.get<std::string>());
        if (j.contains("stages")) {
            cfg.stages.clear();
            for (const auto& s : j.at("stages")) cfg.stages.push_back(stage_from_string(s.get<std::string>()));
        }
        if (j.contains("conditions")) {
            cfg.conditions.clear();
            for (const auto& c : j.at("conditions"))
                cfg.conditions.push_back(condition_from_string(c.get<std::string>()));
        }
        cfg.repetitions = j.value("repetitions", cfg.repetitions);
        cfg.seed_base = j.value("seed_base", cfg.seed_base);
        cfg.output_dir = j.value("output_dir", std::string{});
        cfg.parallelism = j.value("parallelism", cfg.parallelism);
        cfg.task.max_steps = j.value("max_steps", cfg.task.max_steps);
        cfg.fresh_samples = j.value("fresh_samples", cfg.fresh_samples);
        cfg.child_persona = j.value("child_persona", cfg.child_persona);
        cfg.matcher_temperature = j.value("matcher_temperature", cfg.matcher_temperature);
        if (j.contains("prompts_dir")) cfg.prompts_dir = cfg.resolve(j.at("prompts_dir").get<std::string>());
        if (j.contains("backends")) {
            const auto& b = j.at("backends");
            if (b.contains("narrator"))
                cfg.narrator = narrative_backend_from_string(b.at("narrator").get<std::string>());
            if (b.contains("matcher"))
                cfg.matcher = matcher_backend_from_string(b.at("matcher").get<std::string>());
            if (b.contains("judge")) cfg.judge = judge_kind_from_string(b.at("judge").get<std::string>());
        }
        if (j.contains("models")) {
            const auto& m = j.at("models");
            cfg.models.narrator = m.value("narrator", cfg.models.narrator);
            cfg.models.matcher = m.value("matcher", cfg.models.matcher);
            cfg.models.judge = m.value("judge", cfg.models.judge);
        }
        if (j.contains("gateway")) {
            const auto& g = j.at("gateway");
            const std::string mode = g.value("mode", "replay");
            if (mode == "live") cfg.gateway.mode = GatewayMode::live;
            else if (mode == "replay") cfg.gateway.mode = GatewayMode::replay;
            else throw Error(ErrorKind::config, "gateway.mode: expected \"live\" or \"replay\"");
            cfg.gateway.base_url = g.value("base_url", cfg.gateway.base_url);
            cfg.gateway.api_key_env = g.value("api_key_env", cfg.gateway.api_key_env);
            if (g.contains("cache_dir"))
                cfg.gateway.cache_dir = cfg.resolve(g.at("cache_dir").get<std::string>());
            cfg.gateway.timeout_seconds = g.value("timeout_seconds", cfg.gateway.timeout_seconds);
            cfg.gateway.retries = g.value("retries", cfg.gateway.retries);
            cfg.gateway.retry_backoff_ms = g.value("retry_backoff_ms", cfg.gateway.retry_backoff_ms);
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::config, std::string("config: ") + e.what());
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::parse) throw Error(ErrorKind::config, e.what());
        throw;
    }
    cfg.validate();
    return cfg;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw Error(ErrorKind::config, "cannot read config file: " + file.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorKind::config, std::string("config is not valid JSON: ") + e.what());
    }
    return experiment_config_from_json(j, file.has_parent_path() ? file.parent_path()
                                                                 : std::filesystem::path("."));
}

// ---------------------------------------------------------------------------
// Report structures.
// ---------------------------------------------------------------------------

struct CellKey {
    Family family = Family::classic;
    Condition condition = Condition::blind;
    Stage stage = Stage::stage0;

    auto operator<=>(const CellKey&) const = default;
};

struct CellMetrics {
    int episodes = 0;
    int failures = 0;
    double failure_rate = 0.0; // percent
    std::optional<double> avg_steps;
    std::optional<double> weighted_steps;

    bool operator==(const CellMetrics&) const = default;
};

struct MetricsReport {
    std::map<CellKey, CellMetrics> cells;
    ConfusionMatrix pre_task{Phase::pre_task, {}};
    ConfusionMatrix post_task{Phase::post_task, {}};

    bool operator==(const MetricsReport&) const = default;

    const CellMetrics* find(Family f, Condition c, Stage s) const {
        auto it = cells.find(CellKey{f, c, s});
        return it == cells.end() ? nullptr : &it->second;
    }
};

inline nlohmann::json report_to_json(const MetricsReport& report) {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& [key, m] : report.cells) {
        nlohmann::json cj{{"family", to_string(key.family)},
                          {"condition", to_string(key.condition)},
                          {"stage", to_string(key.stage)},
                          {"episodes", m.episodes},
                          {"failures", m.failures},
                          {"failure_rate", m.failure_rate}};
        cj["avg_steps"] = m.avg_steps ? nlohmann::json(*m.avg_steps) : nlohmann::json(nullptr);
        cj["weighted_steps"] =
            m.weighted_steps ? nlohmann::json(*m.weighted_steps) : nlohmann::json(nullptr);
        cells.push_back(std::move(cj));
    }
    auto matrix_json = [](const ConfusionMatrix& m) {
        return nlohmann::json{{"phase", to_string(m.phase)},
                              {"stage0", m.cells[0]},
                              {"stage1", m.cells[1]}};
    };
    return nlohmann::json{{"cells", std::move(cells)},
                          {"pre_task", matrix_json(report.pre_task)},
                          {"post_task", matrix_json(report.post_task)}};
}

inline MetricsReport report_from_json(const nlohmann::json& j) {
    MetricsReport report;
    for (const auto& cj : j.at("cells")) {
        CellKey key;
        key.family = family_from_string(cj.at("family").get<std::string>());
        key.condition = condition_from_string(cj.at("condition").get<std::string>());
        key.stage = stage_from_string(cj.at("stage").get<std::string>());
        CellMetrics m;
        m.episodes = cj.at("episodes").get<int>();
        m.failures = cj.at("failures").get<int>();
        m.failure_rate = cj.at("failure_rate").get<double>();
        if (!cj.at("avg_steps").is_null()) m.avg_steps = cj.at("avg_steps").get<double>();
        if (!cj.at("weighted_steps").is_null())
            m.weighted_steps = cj.at("weighted_steps").get<double>();
        report.cells[key] = m;
    }
    auto matrix_from = [](const nlohmann::json& mj, Phase phase) {
        ConfusionMatrix m;
        m.phase = phase;
        for (size_t c = 0; c < 3; ++c) {
            m.cells[0][c] = mj.at("stage0").at(c).get<int>();
            m.cells[1][c] = mj.at("stage1").at(c).get<int>();
        }
        return m;
    };
    report.pre_task = matrix_from(j.at("pre_task"), Phase::pre_task);
    report.post_task = matrix_from(j.at("post_task"), Phase::post_task);
    return report;
}

// ---------------------------------------------------------------------------
// Rendering: five tables, each as CSV (data) and aligned text (human).
// ---------------------------------------------------------------------------

namespace report_detail {

inline std::string fmt2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

inline std::string cell_text(const std::optional<double>& v) {
    return v ? fmt2(*v) : std::string("—"); // em dash for undefined
}

inline std::string cell_csv(const std::optional<double>& v) {
    return v ? fmt2(*v) : std::string();
}

enum class Measure { failure, avg, weighted };

inline std::optional<double> pick(const CellMetrics* m, Measure measure) {
    if (!m) return std::nullopt;
    switch (measure) {
        case Measure::failure: return m->failure_rate;
        case Measure::avg: return m->avg_steps;
        case Measure::weighted: return m->weighted_steps;
    }
    return std::nullopt;
}

inline std::string condition_table_csv(const MetricsReport& report, Family family,
                                       Measure measure) {
    std::string out = "condition,stage0,stage1\n";
    for (Condition c : {Condition::blind, Condition::informed, Condition::objective_informed}) {
        out += std::string(to_string(c)) + "," +
               cell_csv(pick(report.find(family, c, Stage::stage0), measure)) + "," +
               cell_csv(pick(report.find(family, c, Stage::stage1), measure)) + "\n";
    }
    return out;
}

inline std::string condition_table_txt(const MetricsReport& report, Family family,
                                       Measure measure, const std::string& title,
                                       const std::string& footnote = {}) {
    char line[128];
    std::string out = title + "\n";
    std::snprintf(line, sizeof(line), "%-22s %10s %10s\n", "condition", "stage0", "stage1");
    out += line;
    for (Condition c : {Condition::blind, Condition::informed, Condition::objective_informed}) {
        std::snprintf(line, sizeof(line), "%-22s %10s %10s\n", to_string(c),
                      cell_text(pick(report.find(family, c, Stage::stage0), measure)).c_str(),
                      cell_text(pick(report.find(family, c, Stage::stage1), measure)).c_str());
        out += line;
    }
    if (!footnote.empty()) out += footnote + "\n";
    return out;
}

inline std::string confusion_csv(const MetricsReport& report) {
    std::string out = "phase,intended,stage0,stage1,unclassified\n";
    for (const ConfusionMatrix* m : {&report.pre_task, &report.post_task}) {
        for (size_t row = 0; row < 2; ++row) {
            out += std::string(to_string(m->phase)) + "," +
                   to_string(static_cast<Stage>(row)) + "," +
                   std::to_string(m->cells[row][0]) + "," + std::to_string(m->cells[row][1]) +
                   "," + std::to_string(m->cells[row][2]) + "\n";
        }
    }
    return out;
}

inline std::string confusion_txt(const MetricsReport& report) {
    char line[160];
    std::string out = "Stage classification counts, pre-task vs post-task\n";
    for (const ConfusionMatrix* m : {&report.pre_task, &report.post_task}) {
        out += std::string(to_string(m->phase)) + ":\n";
        std::snprintf(line, sizeof(line), "  %-10s %8s %8s %14s\n", "intended", "stage0",
                      "stage1", "unclassified");
        out += line;
        for (size_t row = 0; row < 2; ++row) {
            std::snprintf(line, sizeof(line), "  %-10s %8d %8d %14d\n",
                          to_string(static_cast<Stage>(row)), m->cells[row][0], m->cells[row][1],
                          m->cells[row][2]);
            out += line;
        }
    }
    return out;
}

} // namespace report_detail

inline void render_report(const MetricsReport& report, const std::filesystem::path& dir) {
    using namespace report_detail;
    std::filesystem::create_directories(dir);

    write_text_file(dir / "report.json", report_to_json(report).dump(2) + "\n");

    write_text_file(dir / "table1_classic_failures.csv",
                    condition_table_csv(report, Family::classic, Measure::failure));
    write_text_file(dir / "table1_classic_failures.txt",
                    condition_table_txt(report, Family::classic, Measure::failure,
                                        "Task failure rate (%), classic scenes"));

    write_text_file(dir / "table2_classic_steps.csv",
                    condition_table_csv(report, Family::classic, Measure::avg));
    write_text_file(dir / "table2_classic_steps.txt",
                    condition_table_txt(report, Family::classic, Measure::avg,
                                        "Average steps to success, classic scenes"));

    write_text_file(dir / "table3_ecological_failures.csv",
                    condition_table_csv(report, Family::ecological, Measure::failure));
    write_text_file(dir / "table3_ecological_failures.txt",
                    condition_table_txt(report, Family::ecological, Measure::failure,
                                        "Task failure rate (%), ecological scenes"));

    write_text_file(dir / "table4_ecological_weighted_steps.csv",
                    condition_table_csv(report, Family::ecological, Measure::weighted));
    write_text_file(
        dir / "table4_ecological_weighted_steps.txt",
        condition_table_txt(report, Family::ecological, Measure::weighted,
                            "Success-weighted average steps, ecological scenes",
                            "weighted = sum(rate x steps) / sum(rate) over scenario cells "
                            "with success rate > 0"));

    write_text_file(dir / "table5_confusion.csv", confusion_csv(report));
    write_text_file(dir / "table5_confusion.txt", confusion_txt(report));
}

// ---------------------------------------------------------------------------
// The full pipeline: narratives -> pre-task scoring -> episodes -> post-task
// scoring -> metrics, everything persisted under the output directory.
// ---------------------------------------------------------------------------

namespace run_detail {

struct LoadedScenario {
    std::string file; // as written in the config
    Scenario scenario;
};

struct EpisodeResult {
    std::string scenario_id;
    Family family = Family::classic;
    Stage stage = Stage::stage0;
    Condition condition = Condition::blind;
    int repetition = 0;
    Episode episode;
    StageVerdict post_verdict;
};

struct JobResult {
    std::string scenario_id;
    Stage stage = Stage::stage0;
    std::optional<Narrative> narrative;
    std::string narrative_error;
    StageVerdict pre_verdict;
    std::vector<EpisodeResult> episodes;
};

inline uint64_t cell_seed(uint64_t base, const std::string& scenario_id, Stage stage,
                          Condition condition, int repetition) {
    std::string key = scenario_id;
    key += '\x1f';
    key += to_string(stage);
    key += '\x1f';
    key += to_string(condition);
    key += '\x1f';
    key += std::to_string(repetition);
    return base ^ fnv1a64(key);
}

inline std::string sanitize_for_filename(std::string s) {
    for (char& c : s)
        if (c == '/' || c == '\\' || c == ' ') c = '-';
    return s;
}

} // namespace run_detail

class ExperimentRunner {
public:
    explicit ExperimentRunner(ExperimentConfig config) : config_(std::move(config)) {
        config_.validate();
        if (config_.needs_prompts()) {
            prompts_ = PromptLibrary::load(config_.prompts_dir,
                                           PromptOptions{config_.child_persona});
        }
        if (config_.needs_gateway()) gateway_ = std::make_unique<Gateway>(config_.gateway);
        for (const auto& file : config_.scenario_files) {
            const auto path = config_.resolve(file);
            run_detail::LoadedScenario loaded;
            loaded.file = file;
            loaded.scenario = load_scenario(read_text_file(path));
            scenarios_.push_back(std::move(loaded));
        }
    }

    MetricsReport run() {
        const auto& out = config_.output_dir;
        std::filesystem::create_directories(out / "narratives");
        std::filesystem::create_directories(out / "episodes");
        std::filesystem::create_directories(out / "verdicts");
        std::filesystem::create_directories(out / "report");

        std::vector<run_detail::JobResult> results = run_jobs();

        write_manifest();
        persist(results);
        MetricsReport report = assemble(results);
        render_report(report, out / "report");
        return report;
    }

    const std::vector<run_detail::LoadedScenario>& scenarios() const { return scenarios_; }

private:
    run_detail::JobResult run_job(const run_detail::LoadedScenario& loaded, Stage stage) {
        run_detail::JobResult job;
        const Scene& scene = loaded.scenario.scene;
        job.scenario_id = scene.id;
        job.stage = stage;

        try {
            job.narrative = make_narrative(scene, stage);
        } catch (const Error& e) {
            job.narrative_error = e.what();
        }

        if (job.narrative) {
            job.pre_verdict = judge_text(job.narrative->text);
        } else {
            job.pre_verdict = StageVerdict{}; // unclassified
        }

        for (Condition condition : config_.conditions) {
            for (int rep = 0; rep < config_.repetitions; ++rep) {
                run_detail::EpisodeResult er;
                er.scenario_id = scene.id;
                er.family = scene.family;
                er.stage = stage;
                er.condition = condition;
                er.repetition = rep;
                const uint64_t seed =
                    run_detail::cell_seed(config_.seed_base, scene.id, stage, condition, rep);
                er.episode = run_one_episode(loaded, stage, condition, seed, job);
                const std::string doc = er.episode.thoughts_document();
                er.post_verdict = doc.empty() ? StageVerdict{} : judge_text(doc);
                job.episodes.push_back(std::move(er));
            }
        }
        return job;
    }

    Episode run_one_episode(const run_detail::LoadedScenario& loaded, Stage stage,
                            Condition condition, uint64_t seed, const run_detail::JobResult& job) {
        const Scene& scene = loaded.scenario.scene;
        try {
            if (!job.narrative)
                throw Error(ErrorKind::generation, "no narrative available: " + job.narrative_error);
            ConditionContext ctx = build_condition_context(condition, *job.narrative, scene);
            PolicyBackend backend;
            if (config_.matcher == MatcherBackendKind::scripted) {
                backend.kind = scripted_kind_for(stage);
            } else {
                backend.kind = PolicyBackend::Kind::llm;
                backend.gateway = gateway_.get();
                backend.prompts = &*prompts_;
                backend.model = config_.models.matcher;
                backend.temperature = config_.matcher_temperature;
                if (config_.fresh_samples && config_.matcher_temperature > 0.0)
                    backend.nonce_base = seed;
            }
            return run_episode(scene, loaded.scenario.request, ctx, backend, seed, stage,
                               config_.task);
        } catch (const Error& e) {
            // Backend trouble becomes a recorded failure, not an aborted run.
            Episode failed;
            failed.scene_id = scene.id;
            failed.condition = condition;
            failed.stage = stage;
            failed.seed = seed;
            failed.policy = "error";
            failed.outcome = Outcome::failure;
            failed.failure_reason = std::string("backend error: ") + e.what();
            return failed;
        }
    }

    Narrative make_narrative(const Scene& scene, Stage stage) {
        if (config_.narrator == NarrativeBackend::templated)
            return template_narrative(scene, stage);
        LlmNarrativeOptions options;
        options.model = config_.models.narrator;
        return llm_narrative(scene, stage, *gateway_, *prompts_, options);
    }

    StageVerdict judge_text(const std::string& doc) {
        if (config_.judge == JudgeKind::lexicon) return lexicon_judge(doc);
        LlmJudgeOptions options;
        options.model = config_.models.judge;
        return llm_judge(doc, *gateway_, *prompts_, options);
    }

    std::vector<run_detail::JobResult> run_jobs() {
        struct Task {
            size_t scenario_index;
            Stage stage;
        };
        std::vector<Task> tasks;
        for (size_t si = 0; si < scenarios_.size(); ++si)
            for (Stage stage : config_.stages) tasks.push_back({si, stage});

        std::vector<run_detail::JobResult> results(tasks.size());
        if (config_.parallelism <= 1) {
            for (size_t t = 0; t < tasks.size(); ++t)
                results[t] = run_job(scenarios_[tasks[t].scenario_index], tasks[t].stage);
            return results;
        }

        std::mutex mutex;
        size_t next = 0;
        std::exception_ptr first_error;
        auto worker = [&] {
            while (true) {
                size_t t;
                {
                    std::lock_guard lock(mutex);
                    if (next >= tasks.size() || first_error) return;
                    t = next++;
                }
                try {
                    results[t] = run_job(scenarios_[tasks[t].scenario_index], tasks[t].stage);
                } catch (...) {
                    std::lock_guard lock(mutex);
                    if (!first_error) first_error = std::current_exception();
                    return;
                }
            }
        };
        std::vector<std::thread> threads;
        const int n = std::min<int>(config_.parallelism, static_cast<int>(tasks.size()));
        for (int i = 0; i < n; ++i) threads.emplace_back(worker);
        for (auto& th : threads) th.join();
        if (first_error) std::rethrow_exception(first_error);
        return results;
    }

    void write_manifest() const {
        nlohmann::json scenes = nlohmann::json::array();
        for (const auto& loaded : scenarios_) {
            scenes.push_back({{"id", loaded.scenario.scene.id},
                              {"family", to_string(loaded.scenario.scene.family)},
                              {"file", loaded.file}});
        }
        nlohmann::json stages = nlohmann::json::array();
        for (Stage s : config_.stages) stages.push_back(to_string(s));
        nlohmann::json conditions = nlohmann::json::array();
        for (Condition c : config_.conditions) conditions.push_back(to_string(c));
        nlohmann::json j{{"scenes", std::move(scenes)},
                         {"stages", std::move(stages)},
                         {"conditions", std::move(conditions)},
                         {"repetitions", config_.repetitions},
                         {"seed_base", config_.seed_base},
                         {"max_steps", config_.task.max_steps},
                         {"backends",
                          {{"narrator", to_string(config_.narrator)},
                           {"matcher", to_string(config_.matcher)},
                           {"judge", to_string(config_.judge)}}}};
        write_text_file(config_.output_dir / "manifest.json", j.dump(2) + "\n");
    }

    void persist(const std::vector<run_detail::JobResult>& results) const {
        using run_detail::sanitize_for_filename;
        const auto& out = config_.output_dir;

        std::string pre_lines, post_lines;
        for (const auto& job : results) {
            const std::string sg = sanitize_for_filename(job.scenario_id) + "__" + to_string(job.stage);
            if (job.narrative) {
                write_text_file(out / "narratives" / (sg + ".json"),
                                narrative_to_json(*job.narrative).dump(2) + "\n");
            } else {
                write_text_file(out / "narratives" / (sg + ".error.txt"),
                                job.narrative_error + "\n");
            }
            VerdictRecord pre{"pre:" + job.scenario_id + ":" + to_string(job.stage), job.stage,
                              job.pre_verdict};
            pre_lines += verdict_record_to_line(pre) + "\n";

            for (const auto& er : job.episodes) {
                const std::string name = sg + "__" + std::string(to_string(er.condition)) + "__r" +
                                         std::to_string(er.repetition);
                write_text_file(out / "episodes" / (name + ".jsonl"),
                                episode_to_jsonl(er.episode));
                VerdictRecord post{"post:" + job.scenario_id + ":" + to_string(job.stage) + ":" +
                                       to_string(er.condition) + ":r" +
                                       std::to_string(er.repetition),
                                   er.stage, er.post_verdict};
                post_lines += verdict_record_to_line(post) + "\n";
            }
        }
        write_text_file(out / "verdicts" / "pre.jsonl", pre_lines);
        write_text_file(out / "verdicts" / "post.jsonl", post_lines);
    }

    MetricsReport assemble(const std::vector<run_detail::JobResult>& results) const {
        MetricsReport report;

        // Scenario-level tallies. Scenario order follows the config so the
        // weighted aggregation is bit-identical when recomputed from disk.
        struct ScenarioCell {
            int episodes = 0;
            int successes = 0;
            int64_t success_steps = 0;
        };
        std::map<std::tuple<std::string, Family, Condition, Stage>, ScenarioCell> per_scenario;

        std::vector<std::pair<Stage, VerdictStage>> pre_labeled, post_labeled;

        for (const auto& job : results) {
            pre_labeled.emplace_back(job.stage, job.pre_verdict.stage);
            for (const auto& er : job.episodes) {
                post_labeled.emplace_back(er.stage, er.post_verdict.stage);
                auto& cell = per_scenario[{er.scenario_id, er.family, er.condition, er.stage}];
                cell.episodes += 1;
                if (er.episode.outcome && *er.episode.outcome == Outcome::success) {
                    cell.successes += 1;
                    cell.success_steps += er.episode.step_count;
                }
            }
        }

        struct Aggregate {
            int episodes = 0;
            int successes = 0;
            int64_t success_steps = 0;
            std::vector<std::pair<double, double>> weighted_cells;
        };
        std::map<CellKey, Aggregate> aggregates;
        for (const auto& loaded : scenarios_) {
            const Scene& scene = loaded.scenario.scene;
            for (Condition condition : config_.conditions) {
                for (Stage stage : config_.stages) {
                    auto it = per_scenario.find({scene.id, scene.family, condition, stage});
                    if (it == per_scenario.end()) continue;
                    const auto& sc = it->second;
                    auto& agg = aggregates[CellKey{scene.family, condition, stage}];
                    agg.episodes += sc.episodes;
                    agg.successes += sc.successes;
                    agg.success_steps += sc.success_steps;
                    if (sc.successes > 0) {
                        const double rate =
                            static_cast<double>(sc.successes) / static_cast<double>(sc.episodes);
                        const double avg = static_cast<double>(sc.success_steps) /
                                           static_cast<double>(sc.successes);
                        agg.weighted_cells.emplace_back(rate, avg);
                    } else {
                        agg.weighted_cells.emplace_back(0.0, 0.0);
                    }
                }
            }
        }

        for (auto& [key, agg] : aggregates) {
            CellMetrics m;
            m.episodes = agg.episodes;
            m.failures = agg.episodes - agg.successes;
            m.failure_rate =
                100.0 * static_cast<double>(m.failures) / static_cast<double>(m.episodes);
            if (agg.successes > 0)
                m.avg_steps = static_cast<double>(agg.success_steps) /
                              static_cast<double>(agg.successes);
            m.weighted_steps = weighted_steps(agg.weighted_cells);
            report.cells[key] = m;
        }

        if (!pre_labeled.empty()) report.pre_task = confusion(pre_labeled, Phase::pre_task);
        if (!post_labeled.empty()) report.post_task = confusion(post_labeled, Phase::post_task);
        return report;
    }

    ExperimentConfig config_;
    std::optional<PromptLibrary> prompts_;
    std::unique_ptr<Gateway> gateway_;
    std::vector<run_detail::LoadedScenario> scenarios_;
};

inline MetricsReport run_experiment(const ExperimentConfig& config) {
    ExperimentRunner runner(config);
    return runner.run();
}

// Rebuilds the report from what a run left on disk; used by the `report`
// command and the persistence-fidelity checks.
inline MetricsReport recompute_report(const std::filesystem::path& run_dir) {
    const auto manifest_path = run_dir / "manifest.json";
    nlohmann::json manifest;
    {
        std::ifstream in(manifest_path, std::ios::binary);
        if (!in) throw Error(ErrorKind::config, "missing manifest: " + manifest_path.string());
        manifest = nlohmann::json::parse(in);
    }

    std::vector<std::pair<std::string, Family>> scenes; // in manifest order
    for (const auto& sj : manifest.at("scenes"))
        scenes.emplace_back(sj.at("id").get<std::string>(),
                            family_from_string(sj.at("family").get<std::string>()));
    std::vector<Stage> stages;
    for (const auto& s : manifest.at("stages")) stages.push_back(stage_from_string(s.get<std::string>()));
    std::vector<Condition> conditions;
    for (const auto& c : manifest.at("conditions"))
        conditions.push_back(condition_from_string(c.get<std::string>()));

    // Episodes.
    std::vector<Episode> episodes;
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(run_dir / "episodes"))
        if (entry.path().extension() == ".jsonl") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) episodes.push_back(episode_from_jsonl(read_text_file(f)));

    // Verdicts.
    auto read_labeled = [&](const std::filesystem::path& path) {
        std::vector<std::pair<Stage, VerdictStage>> labeled;
        std::ifstream in(path, std::ios::binary);
        if (!in) throw Error(ErrorKind::config, "missing verdicts: " + path.string());
        std::string line;
        while (std::getline(in, line)) {
            if (text::trim(line).empty()) continue;
            VerdictRecord r = verdict_record_from_line(line);
            if (!r.intended) throw Error(ErrorKind::parse, "verdict record lacks intended stage");
            labeled.emplace_back(*r.intended, r.verdict.stage);
        }
        return labeled;
    };

    MetricsReport report;

    struct ScenarioCell {
        int episodes = 0;
        int successes = 0;
        int64_t success_steps = 0;
    };
    std::map<std::tuple<std::string, Condition, Stage>, ScenarioCell> per_scenario;
    for (const auto& e : episodes) {
        auto& cell = per_scenario[{e.scene_id, e.condition, e.stage}];
        cell.episodes += 1;
        if (e.outcome && *e.outcome == Outcome::success) {
            cell.successes += 1;
            cell.success_steps += e.step_count;
        }
    }

    struct Aggregate {
        int episodes = 0;
        int successes = 0;
        int64_t success_steps = 0;
        std::vector<std::pair<double, double>> weighted_cells;
    };
    std::map<CellKey, Aggregate> aggregates;
    for (const auto& [scene_id, family] : scenes) {
        for (Condition condition : conditions) {
            for (Stage stage : stages) {
                auto it = per_scenario.find({scene_id, condition, stage});
                if (it == per_scenario.end()) continue;
                const auto& sc = it->second;
                auto& agg = aggregates[CellKey{family, condition, stage}];
                agg.episodes += sc.episodes;
                agg.successes += sc.successes;
                agg.success_steps += sc.success_steps;
                if (sc.successes > 0) {
                    agg.weighted_cells.emplace_back(
                        static_cast<double>(sc.successes) / static_cast<double>(sc.episodes),
                        static_cast<double>(sc.success_steps) / static_cast<double>(sc.successes));
                } else {
                    agg.weighted_cells.emplace_back(0.0, 0.0);
                }
            }
        }
    }
    for (auto& [key, agg] : aggregates) {
        CellMetrics m;
        m.episodes = agg.episodes;
        m.failures = agg.episodes - agg.successes;
        m.failure_rate = 100.0 * static_cast<double>(m.failures) / static_cast<double>(m.episodes);
        if (agg.successes > 0)
            m.avg_steps =
                static_cast<double>(agg.success_steps) / static_cast<double>(agg.successes);
        m.weighted_steps = weighted_steps(agg.weighted_cells);
        report.cells[key] = m;
    }

    auto pre = read_labeled(run_dir / "verdicts" / "pre.jsonl");
    auto post = read_labeled(run_dir / "verdicts" / "post.jsonl");
    if (!pre.empty()) report.pre_task = confusion(pre, Phase::pre_task);
    if (!post.empty()) report.post_task = confusion(post, Phase::post_task);
    return report;
}

} // namespace perspact
