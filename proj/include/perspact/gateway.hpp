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

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "perspact/digest.hpp"
#include "perspact/errors.hpp"

namespace perspact {

// ---------------------------------------------------------------------------
// Single chokepoint for model calls. Every request is canonicalized and
// content-addressed; responses land in a file cache (one file per entry).
// Replay mode answers exclusively from the cache and never touches the
// network, which is what the offline test suite and fixtures rely on.
// ---------------------------------------------------------------------------

struct ChatMessage {
    std::string role; // "system", "user" or "assistant"
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
    std::string model;
    std::vector<ChatMessage> messages;
    double temperature = 1.0;
    int max_tokens = 1024;

    bool operator==(const ChatRequest&) const = default;
};

inline void validate_chat_request(const ChatRequest& req) {
    if (req.messages.empty())
        throw Error(ErrorKind::validation, "chat request has no messages");
    const std::string& first = req.messages.front().role;
    if (first != "system" && first != "user")
        throw Error(ErrorKind::validation, "first message role must be system or user, got \"" + first + "\"");
    for (const auto& m : req.messages) {
        if (m.role != "system" && m.role != "user" && m.role != "assistant")
            throw Error(ErrorKind::validation, "unknown message role \"" + m.role + "\"");
    }
}

inline nlohmann::json chat_request_to_json(const ChatRequest& req) {
    nlohmann::json messages = nlohmann::json::array();
    for (const auto& m : req.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
    return nlohmann::json{{"model", req.model},
                          {"messages", std::move(messages)},
                          {"temperature", req.temperature},
                          {"max_tokens", req.max_tokens}};
}

inline ChatRequest chat_request_from_json(const nlohmann::json& j) {
    ChatRequest req;
    req.model = j.at("model").get<std::string>();
    for (const auto& mj : j.at("messages"))
        req.messages.push_back({mj.at("role").get<std::string>(), mj.at("content").get<std::string>()});
    if (j.contains("temperature")) req.temperature = j.at("temperature").get<double>();
    if (j.contains("max_tokens")) req.max_tokens = j.at("max_tokens").get<int>();
    return req;
}

// Canonical form: struct fields rendered into JSON with sorted keys; the
// serialization a request arrived in cannot influence the digest.
inline std::string canonical_request(const ChatRequest& req, std::optional<uint64_t> nonce = {}) {
    nlohmann::json j = chat_request_to_json(req);
    if (nonce) j["nonce"] = *nonce;
    return j.dump();
}

inline std::string request_digest(const ChatRequest& req, std::optional<uint64_t> nonce = {}) {
    return sha256_hex(canonical_request(req, nonce));
}

struct TokenUsage {
    int64_t prompt_tokens = 0;
    int64_t completion_tokens = 0;

    bool operator==(const TokenUsage&) const = default;
};

struct CacheEntry {
    std::string key;
    std::string model;
    std::string response;
    int64_t timestamp = 0; // unix seconds at store time
    TokenUsage usage;
};

struct HttpResponse {
    int status = 0;
    std::string body;
    bool transport_ok = true; // false when the connection itself failed
};

class Transport {
public:
    virtual ~Transport() = default;
    virtual HttpResponse post(const std::string& path, const std::string& body,
                              const std::vector<std::pair<std::string, std::string>>& headers) = 0;
};

enum class GatewayMode { live, replay };

struct GatewayConfig {
    GatewayMode mode = GatewayMode::replay;
    std::string base_url = "https://api.openai.com/v1";
    std::string api_key_env = "OPENAI_API_KEY";
    std::filesystem::path cache_dir = "gateway-cache";
    int timeout_seconds = 60;
    int retries = 3;             // total attempts on transport failure
    int retry_backoff_ms = 250;  // doubled per attempt
};

class Gateway {
public:
    explicit Gateway(GatewayConfig config, std::unique_ptr<Transport> transport = nullptr)
        : config_(std::move(config)), transport_(std::move(transport)) {
        std::filesystem::create_directories(config_.cache_dir);
        std::filesystem::create_directories(fixtures_dir());
    }

    const GatewayConfig& config() const { return config_; }
    size_t transport_calls() const { return transport_calls_.load(); }
    size_t cache_hits() const { return cache_hits_.load(); }

    std::string complete(const ChatRequest& request, std::optional<uint64_t> nonce = {}) {
        validate_chat_request(request);
        const std::string key = request_digest(request, nonce);

        if (auto cached = lookup(key)) {
            ++cache_hits_;
            return cached->response;
        }
        if (config_.mode == GatewayMode::replay)
            throw Error(ErrorKind::replay_miss, "no cached response for request digest " + key);

        auto [response_text, usage] = send_live(request);
        store(CacheEntry{key, request.model, response_text, now_seconds(), usage});
        return response_text;
    }

    // Names a (request, response) pair and seeds the cache with it so replay
    // mode can serve it. Duplicate names conflict.
    void record_fixture(const std::string& name, const ChatRequest& request,
                        const std::string& response) {
        validate_chat_request(request);
        const auto path = fixtures_dir() / (name + ".json");
        if (std::filesystem::exists(path))
            throw Error(ErrorKind::conflict, "fixture \"" + name + "\" already exists");
        const std::string key = request_digest(request);
        nlohmann::json j{{"name", name},
                         {"key", key},
                         {"request", chat_request_to_json(request)},
                         {"response", response}};
        write_file_atomic(path, j.dump(2) + "\n");
        store(CacheEntry{key, request.model, response, now_seconds(), {}});
    }

    std::vector<std::string> list_fixtures() const {
        std::vector<std::string> names;
        if (!std::filesystem::exists(fixtures_dir())) return names;
        for (const auto& entry : std::filesystem::directory_iterator(fixtures_dir())) {
            if (entry.path().extension() == ".json") names.push_back(entry.path().stem().string());
        }
        std::sort(names.begin(), names.end());
        return names;
    }

private:
    std::filesystem::path fixtures_dir() const { return config_.cache_dir / "fixtures"; }
    std::filesystem::path entry_path(const std::string& key) const {
        return config_.cache_dir / (key + ".json");
    }

    static int64_t now_seconds() {
        return std::chrono::duration_cast<std::chrono::seconds>(
                   std::chrono::system_clock::now().time_since_epoch())
            .count();
    }

    static void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
        auto tmp = path;
        tmp += ".tmp";
        {
            std::ofstream out(tmp, std::ios::binary);
            if (!out) throw Error(ErrorKind::gateway, "cannot write " + tmp.string());
            out << content;
        }
        std::filesystem::rename(tmp, path);
    }

    std::optional<CacheEntry> lookup(const std::string& key) {
        std::lock_guard lock(mutex_);
        auto it = memory_.find(key);
        if (it != memory_.end()) return it->second;
        const auto path = entry_path(key);
        if (!std::filesystem::exists(path)) return std::nullopt;
        std::ifstream in(path, std::ios::binary);
        nlohmann::json j = nlohmann::json::parse(in);
        CacheEntry entry;
        entry.key = j.at("key").get<std::string>();
        entry.model = j.at("model").get<std::string>();
        entry.response = j.at("response").get<std::string>();
        entry.timestamp = j.value("timestamp", int64_t{0});
        entry.usage.prompt_tokens = j.value("prompt_tokens", int64_t{0});
        entry.usage.completion_tokens = j.value("completion_tokens", int64_t{0});
        memory_[key] = entry;
        return entry;
    }

    void store(const CacheEntry& entry) {
        std::lock_guard lock(mutex_);
        nlohmann::json j{{"key", entry.key},
                         {"model", entry.model},
                         {"response", entry.response},
                         {"timestamp", entry.timestamp},
                         {"prompt_tokens", entry.usage.prompt_tokens},
                         {"completion_tokens", entry.usage.completion_tokens}};
        write_file_atomic(entry_path(entry.key), j.dump(2) + "\n");
        memory_[entry.key] = entry;
    }

    std::string api_key() const {
        const char* key = std::getenv(config_.api_key_env.c_str());
        return key ? key : "";
    }

    std::pair<std::string, TokenUsage> send_live(const ChatRequest& request);

    GatewayConfig config_;
    std::unique_ptr<Transport> transport_;
    std::mutex mutex_;
    std::unordered_map<std::string, CacheEntry> memory_;
    std::atomic<size_t> transport_calls_{0};
    std::atomic<size_t> cache_hits_{0};
};

} // namespace perspact

// The live HTTP path is isolated so that including the gateway does not force
// sockets into every translation unit that only ever replays.
#if !defined(PERSPACT_NO_HTTP)
#include <httplib.h>

namespace perspact {

class HttplibTransport : public Transport {
public:
    HttplibTransport(std::string base_url, int timeout_seconds) {
        // Split "https://host[:port]/prefix" into client root and path prefix.
        auto scheme_end = base_url.find("://");
        size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
        auto path_start = base_url.find('/', host_start);
        if (path_start == std::string::npos) {
            root_ = base_url;
        } else {
            root_ = base_url.substr(0, path_start);
            prefix_ = base_url.substr(path_start);
            while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
        }
        client_ = std::make_unique<httplib::Client>(root_);
        client_->set_connection_timeout(timeout_seconds, 0);
        client_->set_read_timeout(timeout_seconds, 0);
    }

    HttpResponse post(const std::string& path, const std::string& body,
                      const std::vector<std::pair<std::string, std::string>>& headers) override {
        httplib::Headers h(headers.begin(), headers.end());
        auto res = client_->Post((prefix_ + path).c_str(), h, body, "application/json");
        if (!res) return HttpResponse{0, "", false};
        return HttpResponse{res->status, res->body, true};
    }

private:
    std::string root_;
    std::string prefix_;
    std::unique_ptr<httplib::Client> client_;
};

} // namespace perspact
#endif

namespace perspact {

inline std::pair<std::string, TokenUsage> Gateway::send_live(const ChatRequest& request) {
    if (!transport_) {
#if !defined(PERSPACT_NO_HTTP)
        transport_ = std::make_unique<HttplibTransport>(config_.base_url, config_.timeout_seconds);
#else
        throw Error(ErrorKind::config, "live mode requires a transport");
#endif
    }

    nlohmann::json body = chat_request_to_json(request);
    std::vector<std::pair<std::string, std::string>> headers;
    const std::string key = api_key();
    if (!key.empty()) headers.emplace_back("Authorization", "Bearer " + key);

    HttpResponse response;
    std::string last_error;
    for (int attempt = 0; attempt < config_.retries; ++attempt) {
        if (attempt > 0) {
            const auto delay = std::chrono::milliseconds(
                static_cast<int64_t>(config_.retry_backoff_ms) * (int64_t{1} << (attempt - 1)));
            std::this_thread::sleep_for(delay);
        }
        ++transport_calls_;
        response = transport_->post("/chat/completions", body.dump(), headers);
        if (response.transport_ok && response.status >= 200 && response.status < 300) {
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(response.body);
            } catch (const nlohmann::json::parse_error& e) {
                throw Error(ErrorKind::gateway, std::string("malformed completion body: ") + e.what());
            }
            try {
                TokenUsage usage;
                if (j.contains("usage")) {
                    usage.prompt_tokens = j["usage"].value("prompt_tokens", int64_t{0});
                    usage.completion_tokens = j["usage"].value("completion_tokens", int64_t{0});
                }
                return {j.at("choices").at(0).at("message").at("content").get<std::string>(), usage};
            } catch (const nlohmann::json::exception& e) {
                throw Error(ErrorKind::gateway, std::string("unexpected completion shape: ") + e.what());
            }
        }
        last_error = response.transport_ok
                         ? "http status " + std::to_string(response.status)
                         : "connection failed";
    }
    throw Error(ErrorKind::gateway,
                "chat completion failed after " + std::to_string(config_.retries) +
                    " attempts: " + last_error);
}

} // namespace perspact
