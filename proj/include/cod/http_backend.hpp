#pragma once

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <random>
#include <semaphore>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "cod/backend.hpp"

namespace cod {

struct RetryPolicy {
    int max_retries = 3;      // transport retries beyond the first attempt
    int backoff_ms = 200;     // doubled per retry, plus jitter
    int connect_timeout_ms = 5000;
    int read_timeout_ms = 120000;
};

/// Remote endpoint speaking the ubiquitous chat-completions HTTP shape.
/// Concurrent calls share a per-endpoint budget; transport failures retry
/// with exponential backoff and jitter.
class HttpBackend : public Backend {
public:
    struct Options {
        RetryPolicy retry;
        int concurrency = 4;
        std::function<void(const std::string&)> warn = [](const std::string& msg) {
            std::cerr << "warning: " << msg << '\n';
        };
    };

    explicit HttpBackend(ModelEndpoint endpoint)
        : HttpBackend(std::move(endpoint), Options()) {}

    HttpBackend(ModelEndpoint endpoint, Options options)
        : Backend(std::move(endpoint)),
          options_(std::move(options)),
          budget_(options_.concurrency > 0 ? options_.concurrency : 1) {
        if (this->endpoint().kind != EndpointKind::remote) {
            throw ConfigError("HttpBackend requires a remote endpoint");
        }
        split_base_url();
    }

protected:
    CompletionResult do_complete(const CompletionRequest& request) override {
        const std::string token = resolve_credential();
        const nlohmann::ordered_json body = build_body(request);
        const std::string payload = body.dump();

        std::string last_error;
        const int attempts = options_.retry.max_retries + 1;
        for (int attempt = 0; attempt < attempts; ++attempt) {
            if (attempt > 0) backoff_sleep(attempt);
            budget_.acquire();
            auto release = Finally{[this] { budget_.release(); }};

            httplib::Client client(origin_);
            client.set_connection_timeout(
                std::chrono::milliseconds(options_.retry.connect_timeout_ms));
            client.set_read_timeout(
                std::chrono::milliseconds(options_.retry.read_timeout_ms));
            httplib::Headers headers{{"Authorization", "Bearer " + token}};
            auto res = client.Post(path_prefix_ + "/chat/completions", headers,
                                   payload, "application/json");
            if (!res) {
                last_error = "transport error: " + httplib::to_string(res.error());
                continue;
            }
            if (res->status == 200) {
                CompletionResult result = parse_response(res->body);
                result.attempt_count = attempt + 1;
                return result;
            }
            last_error = "HTTP " + std::to_string(res->status) + ": " + res->body;
            if (res->status != 429 && res->status < 500) {
                throw EndpointError("endpoint '" + name() + "': " + last_error);
            }
        }
        throw EndpointError("endpoint '" + name() + "' failed after " +
                            std::to_string(attempts) + " attempt(s): " +
                            last_error);
    }

private:
    struct Finally {
        std::function<void()> fn;
        ~Finally() { fn(); }
    };

    void split_base_url() {
        std::string url = endpoint().base_url;
        while (!url.empty() && url.back() == '/') url.pop_back();
        std::size_t scheme = url.find("://");
        std::size_t path =
            scheme == std::string::npos ? url.find('/') : url.find('/', scheme + 3);
        if (path == std::string::npos) {
            origin_ = url;
        } else {
            origin_ = url.substr(0, path);
            path_prefix_ = url.substr(path);
        }
    }

    std::string resolve_credential() const {
        const char* value = std::getenv(endpoint().credential_env.c_str());
        if (value == nullptr || *value == '\0') {
            throw ConfigError("endpoint '" + name() +
                              "': credential environment variable '" +
                              endpoint().credential_env + "' is not set");
        }
        return value;
    }

    nlohmann::ordered_json build_body(const CompletionRequest& request) {
        nlohmann::ordered_json body;
        body["model"] = name();
        nlohmann::ordered_json msgs = nlohmann::ordered_json::array();
        for (const ChatMessage& m : request.messages) {
            msgs.push_back({{"role", to_string(m.role)}, {"content", m.content}});
        }
        body["messages"] = std::move(msgs);
        body["temperature"] = request.params.temperature;
        body["top_p"] = request.params.top_p;
        body["max_tokens"] = request.params.max_tokens;
        if (!request.params.stop_sequences.empty()) {
            body["stop"] = request.params.stop_sequences;
        }
        if (endpoint().supports_repetition_penalty) {
            body["repetition_penalty"] = request.params.repetition_penalty;
        } else if (request.params.repetition_penalty != 1.0 &&
                   !warned_repetition_penalty_.exchange(true)) {
            options_.warn("endpoint '" + name() +
                          "' does not advertise repetition_penalty support; "
                          "omitting it from requests");
        }
        return body;
    }

    CompletionResult parse_response(const std::string& body) const {
        nlohmann::ordered_json j;
        try {
            j = nlohmann::ordered_json::parse(body);
        } catch (const std::exception& e) {
            throw EndpointError("endpoint '" + name() +
                                "': unparseable response body: " + e.what());
        }
        if (!j.contains("choices") || !j["choices"].is_array() ||
            j["choices"].empty()) {
            throw EndpointError("endpoint '" + name() +
                                "': response carries no choices");
        }
        const auto& choice = j["choices"][0];
        CompletionResult result;
        if (choice.contains("message") && choice["message"].contains("content") &&
            choice["message"]["content"].is_string()) {
            result.text = choice["message"]["content"].get<std::string>();
        } else {
            throw EndpointError("endpoint '" + name() +
                                "': response carries no message content");
        }
        std::string reason = choice.value("finish_reason", std::string{"other"});
        result.finish_reason = reason == "stop"     ? FinishReason::stop
                               : reason == "length" ? FinishReason::length
                                                    : FinishReason::other;
        return result;
    }

    void backoff_sleep(int attempt) const {
        thread_local std::mt19937 rng(std::random_device{}());
        int base = options_.retry.backoff_ms << (attempt - 1);
        std::uniform_int_distribution<int> jitter(0, options_.retry.backoff_ms / 2 + 1);
        std::this_thread::sleep_for(std::chrono::milliseconds(base + jitter(rng)));
    }

    Options options_;
    std::counting_semaphore<1024> budget_;
    std::string origin_;
    std::string path_prefix_;
    std::atomic<bool> warned_repetition_penalty_{false};
};

}  // namespace cod
