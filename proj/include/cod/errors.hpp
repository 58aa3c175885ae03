#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace cod {

/// Base class for all errors raised by this library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input data: corpus records, score ranges, schema violations.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Bad or missing configuration: unknown endpoint names, absent credentials.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A model endpoint failed: transport errors after retries, missing script
/// entries, protocol-level rejections.
class EndpointError : public Error {
public:
    using Error::Error;
};

/// Output stayed fragmentary after the regeneration budget was spent.
/// Carries the last text the model produced.
class FragmentaryOutputError : public EndpointError {
public:
    FragmentaryOutputError(const std::string& what, std::string last_text)
        : EndpointError(what), last_text_(std::move(last_text)) {}

    const std::string& last_text() const noexcept { return last_text_; }

private:
    std::string last_text_;
};

/// Template catalog failures: unknown ids, unresolved placeholders.
class TemplateError : public Error {
public:
    using Error::Error;
};

/// The judge reply carried no usable rating. Retains the raw text.
class JudgeParseError : public Error {
public:
    JudgeParseError(const std::string& what, std::string raw)
        : Error(what), raw_(std::move(raw)) {}

    const std::string& raw() const noexcept { return raw_; }

private:
    std::string raw_;
};

/// A discussion stage failed mid-case.
class PipelineError : public Error {
public:
    using Error::Error;
};

}  // namespace cod
