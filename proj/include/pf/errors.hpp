#pragma once

#include <stdexcept>
#include <string>

namespace pf {

// User-facing error taxonomy. CLI maps ConfigError/DataError/... to exit 2
// and NumericalError to exit 3.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DimensionError : std::runtime_error {
    explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct VocabularyError : std::runtime_error {
    explicit VocabularyError(const std::string& msg) : std::runtime_error(msg) {}
};

struct SplitError : std::runtime_error {
    explicit SplitError(const std::string& msg) : std::runtime_error(msg) {}
};

struct PreconditionError : std::runtime_error {
    explicit PreconditionError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

struct CoverageError : std::runtime_error {
    explicit CoverageError(const std::string& msg) : std::runtime_error(msg) {}
};

struct EvaluationError : std::runtime_error {
    explicit EvaluationError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace pf
