#pragma once

#include <stdexcept>
#include <string>

namespace qdtune {

// Every failure raised by the library derives from Error so the CLI can map
// it to a machine-readable code.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& what)
        : std::runtime_error(what), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& w) : Error("config_error", w) {}
};

struct DomainError : Error {
    explicit DomainError(const std::string& w) : Error("domain_error", w) {}
};

struct ShapeError : Error {
    explicit ShapeError(const std::string& w) : Error("shape_error", w) {}
};

struct ParseError : Error {
    explicit ParseError(const std::string& w) : Error("parse_error", w) {}
};

struct VersionError : Error {
    explicit VersionError(const std::string& w) : Error("version_error", w) {}
};

struct UnsupportedResolution : Error {
    explicit UnsupportedResolution(const std::string& w) : Error("unsupported_resolution", w) {}
};

struct DivergenceError : Error {
    DivergenceError(const std::string& w, long step) : Error("divergence", w), step_(step) {}
    long step() const noexcept { return step_; }

private:
    long step_;
};

struct AcquisitionError : Error {
    explicit AcquisitionError(const std::string& w) : Error("acquisition_error", w) {}
};

}  // namespace qdtune
