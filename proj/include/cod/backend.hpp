#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cod/errors.hpp"
#include "cod/util.hpp"

namespace cod {

// ---------------------------------------------------------------------------
// Wire types
// ---------------------------------------------------------------------------

enum class Role { system, user, assistant };

inline const char* to_string(Role role) {
    switch (role) {
        case Role::system: return "system";
        case Role::user: return "user";
        case Role::assistant: return "assistant";
    }
    return "user";
}

struct ChatMessage {
    Role role = Role::user;
    std::string content;
};

struct DecodingParams {
    double temperature = 0.3;
    double top_p = 0.8;
    double repetition_penalty = 1.05;
    int max_tokens = 2048;
    std::vector<std::string> stop_sequences;

    void validate() const {
        if (temperature < 0.0) {
            throw ValidationError("decoding: temperature must be >= 0");
        }
        if (top_p <= 0.0 || top_p > 1.0) {
            throw ValidationError("decoding: top_p must be in (0,1]");
        }
        if (repetition_penalty < 1.0) {
            throw ValidationError("decoding: repetition_penalty must be >= 1");
        }
        if (max_tokens < 1) {
            throw ValidationError("decoding: max_tokens must be >= 1");
        }
    }
};

enum class EndpointKind { remote, scripted };

/// A named model backend. For remote endpoints the credential is resolved
/// from the environment variable named by `credential_env` at call time.
struct ModelEndpoint {
    std::string name;
    EndpointKind kind = EndpointKind::scripted;
    std::string base_url;        // remote only
    std::string credential_env;  // remote only
    bool supports_repetition_penalty = false;
    DecodingParams defaults;

    void validate() const {
        if (name.empty()) throw ValidationError("endpoint has empty name");
        if (kind == EndpointKind::remote) {
            if (base_url.empty()) {
                throw ValidationError("remote endpoint '" + name +
                                      "' missing base_url");
            }
            if (credential_env.empty()) {
                throw ValidationError("remote endpoint '" + name +
                                      "' missing credential_env");
            }
        }
        defaults.validate();
    }
};

enum class FinishReason { stop, length, other };

inline const char* to_string(FinishReason reason) {
    switch (reason) {
        case FinishReason::stop: return "stop";
        case FinishReason::length: return "length";
        case FinishReason::other: return "other";
    }
    return "other";
}

struct CompletionResult {
    std::string text;
    FinishReason finish_reason = FinishReason::stop;
    int attempt_count = 1;  // underlying calls consumed to produce this text
};

/// One request to a backend. `step_tag` identifies the pipeline step
/// (template id + case id + article id where applicable); scripted backends
/// key on it and the raw log records it.
struct CompletionRequest {
    std::vector<ChatMessage> messages;
    DecodingParams params;
    std::string step_tag;

    std::uint64_t digest(std::uint64_t seed = 0) const {
        std::uint64_t h = fnv1a64(step_tag, 14695981039346656037ULL ^ seed);
        for (const ChatMessage& m : messages) {
            h = fnv1a64(to_string(m.role), h);
            h = fnv1a64(m.content, h);
        }
        return h;
    }
};

// ---------------------------------------------------------------------------
// Raw request/response logging
// ---------------------------------------------------------------------------

/// Appends full request/response pairs to a line-delimited log file.
/// Shared by all endpoints of a run; internally synchronized.
class RawLogSink {
public:
    explicit RawLogSink(std::filesystem::path path) : path_(std::move(path)) {
        if (path_.has_parent_path()) {
            std::filesystem::create_directories(path_.parent_path());
        }
    }

    void log(const std::string& endpoint, const CompletionRequest& request,
             const nlohmann::ordered_json& outcome) {
        nlohmann::ordered_json j;
        j["endpoint"] = endpoint;
        j["step_tag"] = request.step_tag;
        nlohmann::ordered_json msgs = nlohmann::ordered_json::array();
        for (const ChatMessage& m : request.messages) {
            msgs.push_back({{"role", to_string(m.role)}, {"content", m.content}});
        }
        j["messages"] = std::move(msgs);
        j["outcome"] = outcome;
        std::lock_guard<std::mutex> lock(mutex_);
        std::ofstream out(path_, std::ios::app | std::ios::binary);
        out << j.dump() << '\n';
    }

private:
    std::filesystem::path path_;
    std::mutex mutex_;
};

// ---------------------------------------------------------------------------
// Backend interface
// ---------------------------------------------------------------------------

/// Uniform model-endpoint abstraction. Implementations must be safe for
/// concurrent use; results are value objects and inputs are never mutated.
class Backend {
public:
    virtual ~Backend() = default;

    const ModelEndpoint& endpoint() const noexcept { return endpoint_; }
    const std::string& name() const noexcept { return endpoint_.name; }

    /// Total completed calls, successful or not. Used by tests and by the
    /// judge cache to assert call counts.
    std::size_t call_count() const noexcept { return calls_.load(); }

    /// Attaches a raw request/response log shared across endpoints. The
    /// sink must outlive the backend.
    void set_raw_log(RawLogSink* sink) noexcept { raw_log_ = sink; }

    CompletionResult complete(const CompletionRequest& request) {
        if (request.messages.empty()) {
            throw ValidationError("complete: empty message list");
        }
        for (const ChatMessage& m : request.messages) {
            if (m.role != Role::system && trim(m.content).empty()) {
                throw ValidationError("complete: empty " +
                                      std::string(to_string(m.role)) +
                                      " message content");
            }
        }
        request.params.validate();
        calls_.fetch_add(1);
        try {
            CompletionResult result = do_complete(request);
            if (raw_log_ != nullptr) {
                raw_log_->log(endpoint_.name, request,
                              {{"text", result.text},
                               {"finish_reason", to_string(result.finish_reason)},
                               {"attempt_count", result.attempt_count}});
            }
            return result;
        } catch (const std::exception& e) {
            if (raw_log_ != nullptr) {
                raw_log_->log(endpoint_.name, request, {{"error", e.what()}});
            }
            throw;
        }
    }

protected:
    explicit Backend(ModelEndpoint endpoint) : endpoint_(std::move(endpoint)) {
        endpoint_.validate();
    }

    virtual CompletionResult do_complete(const CompletionRequest& request) = 0;

private:
    ModelEndpoint endpoint_;
    std::atomic<std::size_t> calls_{0};
    RawLogSink* raw_log_ = nullptr;
};

// ---------------------------------------------------------------------------
// Fragmentary-output regeneration
// ---------------------------------------------------------------------------

using FragmentaryPredicate = std::function<bool(const CompletionResult&)>;

/// A completion is fragmentary when it was cut off by the length limit,
/// came back empty, or lacks a section marker the step requires.
inline FragmentaryPredicate default_fragmentary(
    std::optional<std::string> required_marker = std::nullopt) {
    return [marker = std::move(required_marker)](const CompletionResult& r) {
        if (r.finish_reason == FinishReason::length) return true;
        if (trim(r.text).empty()) return true;
        if (marker && r.text.find(*marker) == std::string::npos) return true;
        return false;
    };
}

/// Re-issues the request while the result stays fragmentary, up to
/// `max_regens` extra attempts. Never exceeds 1 + max_regens calls.
inline CompletionResult complete_with_regen(Backend& backend,
                                            const CompletionRequest& request,
                                            const FragmentaryPredicate& is_fragmentary,
                                            int max_regens) {
    if (max_regens < 0) {
        throw ValidationError("complete_with_regen: max_regens must be >= 0");
    }
    CompletionResult last;
    int attempts_used = 0;
    for (int attempt = 0; attempt <= max_regens; ++attempt) {
        last = backend.complete(request);
        attempts_used += last.attempt_count;
        last.attempt_count = attempts_used;
        if (!is_fragmentary(last)) {
            return last;
        }
    }
    throw FragmentaryOutputError(
        "endpoint '" + backend.name() + "' still fragmentary after " +
            std::to_string(max_regens) + " regeneration(s) for step '" +
            request.step_tag + "'",
        last.text);
}

}  // namespace cod
