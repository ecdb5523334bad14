#pragma once

#include <stdexcept>
#include <string>

namespace robedit {

// Base error. Every failure mode carries a stable machine-readable code;
// the CLI maps these codes onto its error JSON.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& what)
        : std::runtime_error(what), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

struct DimensionError : Error {
    explicit DimensionError(const std::string& m) : Error("DIMENSION_ERROR", m) {}
};

struct NumericError : Error {
    explicit NumericError(const std::string& m) : Error("NUMERIC_ERROR", m) {}
};

struct LayerIndexError : Error {
    explicit LayerIndexError(const std::string& m) : Error("LAYER_INDEX_ERROR", m) {}
};

struct SequenceTooLong : Error {
    explicit SequenceTooLong(const std::string& m) : Error("SEQUENCE_TOO_LONG", m) {}
};

struct NoRobustnessGap : Error {
    explicit NoRobustnessGap(const std::string& m) : Error("NO_ROBUSTNESS_GAP", m) {}
};

struct CheckerError : Error {
    explicit CheckerError(const std::string& m) : Error("CHECKER_ERROR", m) {}
};

struct NoApplicableSite : Error {
    explicit NoApplicableSite(const std::string& m) : Error("NO_APPLICABLE_SITE", m) {}
};

struct ParameterError : Error {
    explicit ParameterError(const std::string& m) : Error("PARAMETER_ERROR", m) {}
};

struct ProtocolError : Error {
    explicit ProtocolError(const std::string& m) : Error("PROTOCOL_ERROR", m) {}
};

struct DivergenceError : Error {
    explicit DivergenceError(const std::string& m) : Error("DIVERGENCE_ERROR", m) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& m) : Error("CONFIG_ERROR", m) {}
};

struct IoError : Error {
    explicit IoError(const std::string& m) : Error("IO_ERROR", m) {}
};

struct FormatError : Error {
    explicit FormatError(const std::string& m) : Error("FORMAT_ERROR", m) {}
};

}  // namespace robedit
