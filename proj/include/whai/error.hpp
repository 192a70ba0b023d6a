#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

namespace whai {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Authoring problem in a configuration file. `what()` reads "path:line:col: message".
class ConfigError : public Error {
public:
    ConfigError(std::filesystem::path path, int line, int column, const std::string& message);
    ConfigError(std::filesystem::path path, const std::string& message);

    const std::filesystem::path& path() const noexcept { return path_; }
    int line() const noexcept { return line_; }
    int column() const noexcept { return column_; }

private:
    std::filesystem::path path_;
    int line_ = -1;
    int column_ = -1;
};

class ProviderError : public Error {
public:
    ProviderError(const std::string& message, bool retryable, int status = 0)
        : Error(message), retryable_(retryable), status_(status) {}

    bool retryable() const noexcept { return retryable_; }
    int status() const noexcept { return status_; }

private:
    bool retryable_;
    int status_;
};

/// The scripted provider had no rule for a request.
class ScriptMissError : public Error {
public:
    using Error::Error;
};

class CacheMissError : public Error {
public:
    explicit CacheMissError(std::string key)
        : Error("cache miss for key " + key), key_(std::move(key)) {}
    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

class CacheIoError : public Error {
public:
    using Error::Error;
};

class SessionError : public Error {
public:
    enum class Code {
        EndOfScenario,
        InvalidTarget,
        InvalidForkPoint,
        InvalidControl,
        ProbeMismatch,
        UnknownAgent,
        NotFound,
        Busy,
    };

    SessionError(Code code, const std::string& message) : Error(message), code_(code) {}
    Code code() const noexcept { return code_; }

private:
    Code code_;
};

}  // namespace whai
