#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "cod/backend.hpp"
#include "cod/errors.hpp"
#include "cod/http_backend.hpp"
#include "cod/prompts.hpp"
#include "cod/scripted_backend.hpp"

namespace cod {

struct EndpointSpec {
    std::string name;
    EndpointKind kind = EndpointKind::scripted;
    std::string base_url;
    std::string credential_env;
    bool supports_repetition_penalty = false;
    std::filesystem::path script;  // scripted: optional entry file
    bool synthetic = true;         // scripted: fall back to generated replies
};

/// One configuration file drives every command: panel endpoints, decoding
/// defaults, the revision threshold, candidate count, template language,
/// concurrency budgets and retry limits. Command-line flags override file
/// values.
struct RunConfig {
    std::vector<EndpointSpec> endpoints;
    DecodingParams decoding;
    double delta = 0.66;
    int num_candidates = 5;
    TemplateLanguage language = TemplateLanguage::zh;
    std::filesystem::path template_dir;  // optional template overrides
    std::filesystem::path icl_dir;       // optional in-context example files
    int max_regens = 2;
    RetryPolicy retry;
    int endpoint_concurrency = 4;
    int case_parallelism = 2;
    std::string judge;  // endpoint reserved for judging; never a peer
    std::uint64_t seed = 0;
    nlohmann::ordered_json snapshot;  // parsed file, recorded in manifests

    const EndpointSpec& find_endpoint(const std::string& name) const {
        for (const EndpointSpec& e : endpoints) {
            if (e.name == name) return e;
        }
        throw ConfigError("no endpoint named '" + name + "' in configuration");
    }

    bool has_endpoint(const std::string& name) const {
        for (const EndpointSpec& e : endpoints) {
            if (e.name == name) return true;
        }
        return false;
    }
};

inline RunConfig load_run_config(const std::filesystem::path& path) {
    nlohmann::ordered_json j;
    try {
        j = nlohmann::ordered_json::parse(read_text_file(path));
    } catch (const std::exception& e) {
        throw ConfigError("config " + path.string() + ": invalid JSON: " +
                          e.what());
    }
    const std::filesystem::path base = path.has_parent_path()
                                           ? path.parent_path()
                                           : std::filesystem::path(".");
    auto resolve = [&](const std::string& p) -> std::filesystem::path {
        if (p.empty()) return {};
        std::filesystem::path fp(p);
        return fp.is_absolute() ? fp : base / fp;
    };

    RunConfig cfg;
    cfg.snapshot = j;
    if (!j.contains("endpoints") || !j["endpoints"].is_array() ||
        j["endpoints"].empty()) {
        throw ConfigError("config " + path.string() +
                          ": endpoints array required");
    }
    for (const auto& ej : j["endpoints"]) {
        EndpointSpec spec;
        spec.name = ej.value("name", std::string{});
        if (spec.name.empty()) {
            throw ConfigError("config: endpoint with empty name");
        }
        std::string kind = ej.value("kind", std::string{"scripted"});
        if (kind == "remote") {
            spec.kind = EndpointKind::remote;
        } else if (kind == "scripted") {
            spec.kind = EndpointKind::scripted;
        } else {
            throw ConfigError("config: endpoint '" + spec.name +
                              "': unknown kind '" + kind + "'");
        }
        spec.base_url = ej.value("base_url", std::string{});
        spec.credential_env = ej.value("credential_env", std::string{});
        spec.supports_repetition_penalty =
            ej.value("supports_repetition_penalty", false);
        spec.script = resolve(ej.value("script", std::string{}));
        spec.synthetic = ej.value("synthetic", true);
        for (const EndpointSpec& seen : cfg.endpoints) {
            if (seen.name == spec.name) {
                throw ConfigError("config: duplicate endpoint name '" +
                                  spec.name + "'");
            }
        }
        cfg.endpoints.push_back(std::move(spec));
    }
    if (j.contains("decoding")) {
        const auto& d = j["decoding"];
        cfg.decoding.temperature = d.value("temperature", cfg.decoding.temperature);
        cfg.decoding.top_p = d.value("top_p", cfg.decoding.top_p);
        cfg.decoding.repetition_penalty =
            d.value("repetition_penalty", cfg.decoding.repetition_penalty);
        cfg.decoding.max_tokens = d.value("max_tokens", cfg.decoding.max_tokens);
        cfg.decoding.validate();
    }
    cfg.delta = j.value("delta", cfg.delta);
    if (cfg.delta < 0.0 || cfg.delta > 1.0) {
        throw ConfigError("config: delta must be in [0,1]");
    }
    cfg.num_candidates = j.value("num_candidates", cfg.num_candidates);
    if (cfg.num_candidates < 1) {
        throw ConfigError("config: num_candidates must be >= 1");
    }
    cfg.language = template_language_from_string(
        j.value("template_language", std::string{"zh"}));
    cfg.template_dir = resolve(j.value("template_dir", std::string{}));
    cfg.icl_dir = resolve(j.value("icl_dir", std::string{}));
    cfg.max_regens = j.value("max_regens", cfg.max_regens);
    if (cfg.max_regens < 0) {
        throw ConfigError("config: max_regens must be >= 0");
    }
    if (j.contains("retry")) {
        const auto& r = j["retry"];
        cfg.retry.max_retries = r.value("max_retries", cfg.retry.max_retries);
        cfg.retry.backoff_ms = r.value("backoff_ms", cfg.retry.backoff_ms);
        cfg.retry.connect_timeout_ms =
            r.value("connect_timeout_ms", cfg.retry.connect_timeout_ms);
        cfg.retry.read_timeout_ms =
            r.value("read_timeout_ms", cfg.retry.read_timeout_ms);
    }
    cfg.endpoint_concurrency =
        j.value("endpoint_concurrency", cfg.endpoint_concurrency);
    cfg.case_parallelism = j.value("case_parallelism", cfg.case_parallelism);
    cfg.judge = j.value("judge", std::string{});
    if (!cfg.judge.empty() && !cfg.has_endpoint(cfg.judge)) {
        throw ConfigError("config: judge endpoint '" + cfg.judge +
                          "' not declared in endpoints");
    }
    cfg.seed = j.value("seed", cfg.seed);
    return cfg;
}

inline std::shared_ptr<Backend> make_backend(const EndpointSpec& spec,
                                             const RunConfig& cfg,
                                             RawLogSink* raw_log = nullptr) {
    ModelEndpoint endpoint;
    endpoint.name = spec.name;
    endpoint.kind = spec.kind;
    endpoint.base_url = spec.base_url;
    endpoint.credential_env = spec.credential_env;
    endpoint.supports_repetition_penalty = spec.supports_repetition_penalty;
    endpoint.defaults = cfg.decoding;
    std::shared_ptr<Backend> backend;
    if (spec.kind == EndpointKind::scripted) {
        auto scripted = std::make_shared<ScriptedBackend>(std::move(endpoint),
                                                          spec.synthetic,
                                                          cfg.seed);
        if (!spec.script.empty()) scripted->load_script(spec.script);
        backend = std::move(scripted);
    } else {
        HttpBackend::Options options;
        options.retry = cfg.retry;
        options.concurrency = cfg.endpoint_concurrency;
        backend = std::make_shared<HttpBackend>(std::move(endpoint),
                                                std::move(options));
    }
    backend->set_raw_log(raw_log);
    return backend;
}

/// Builtin catalog for the configured language plus any file overrides.
inline TemplateCatalog make_catalog(const RunConfig& cfg) {
    TemplateCatalog catalog = TemplateCatalog::builtin(cfg.language);
    if (!cfg.template_dir.empty()) {
        if (!std::filesystem::is_directory(cfg.template_dir)) {
            throw ConfigError("config: template_dir '" +
                              cfg.template_dir.string() +
                              "' is not a directory");
        }
        catalog.load_overrides(cfg.template_dir);
    }
    return catalog;
}

/// In-context examples from icl_dir: one file per template id, named
/// "<template_id>.txt", capped at two examples each. Missing files mean no
/// examples for that step.
inline std::map<TemplateId, std::vector<IclExample>> load_icl_set(
    const RunConfig& cfg) {
    std::map<TemplateId, std::vector<IclExample>> icl;
    if (cfg.icl_dir.empty()) return icl;
    if (!std::filesystem::is_directory(cfg.icl_dir)) {
        throw ConfigError("config: icl_dir '" + cfg.icl_dir.string() +
                          "' is not a directory");
    }
    static const TemplateId kIds[] = {
        TemplateId::question_analysis, TemplateId::summarize,
        TemplateId::evidence_analysis, TemplateId::critique,
        TemplateId::revise,            TemplateId::respond,
    };
    for (TemplateId id : kIds) {
        std::filesystem::path file =
            cfg.icl_dir / (std::string(to_string(id)) + ".txt");
        if (!std::filesystem::exists(file)) continue;
        std::vector<IclExample> examples = load_icl_examples(file);
        if (examples.size() > kMaxIclExamples) {
            examples.resize(kMaxIclExamples);
        }
        icl[id] = std::move(examples);
    }
    return icl;
}

}  // namespace cod
