#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include <json.hpp>

#include "perspact/gateway.hpp"
#include "perspact/prompts.hpp"
#include "perspact/scene.hpp"
#include "perspact/task.hpp"

namespace testsupport {

inline std::filesystem::path assets_dir() { return PERSPACT_ASSETS_DIR; }
inline std::filesystem::path golden_dir() { return PERSPACT_GOLDEN_DIR; }

inline std::filesystem::path scenario_path(const std::string& name) {
    return assets_dir() / "scenarios" / (name + ".json");
}

inline perspact::Scenario load_bundled(const std::string& name) {
    return perspact::load_scenario(perspact::read_text_file(scenario_path(name)));
}

inline std::vector<std::string> bundled_scenario_names() {
    return {"wardrobe", "kitchen", "office", "toy_corner", "bookcase", "garden_shed", "workshop"};
}

inline perspact::PromptLibrary load_prompts(bool child_persona = true) {
    return perspact::PromptLibrary::load(assets_dir() / "prompts",
                                         perspact::PromptOptions{child_persona});
}

// Unique scratch directory, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("perspact-" + tag + "-" + std::to_string(rd()) + "-" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

// Transport stub: counts calls, returns queued completions in order (cycling
// the last one), and can simulate transport failure.
class StubTransport : public perspact::Transport {
public:
    std::vector<std::string> completions;
    bool fail = false;
    int status = 200;
    size_t calls = 0;
    std::vector<std::string> request_bodies;

    perspact::HttpResponse post(const std::string&, const std::string& body,
                                const std::vector<std::pair<std::string, std::string>>&) override {
        ++calls;
        request_bodies.push_back(body);
        if (fail) return perspact::HttpResponse{0, "", false};
        if (status < 200 || status >= 300) return perspact::HttpResponse{status, "oops", true};
        std::string content;
        if (!completions.empty()) {
            const size_t idx = std::min(calls - 1, completions.size() - 1);
            content = completions[idx];
        }
        nlohmann::json j{{"choices", {nlohmann::json{{"message", {{"content", content}}}}}},
                         {"usage", {{"prompt_tokens", 7}, {"completion_tokens", 5}}}};
        return perspact::HttpResponse{200, j.dump(), true};
    }
};

} // namespace testsupport
