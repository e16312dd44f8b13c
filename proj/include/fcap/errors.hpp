#pragma once

#include <stdexcept>
#include <string>

namespace fcap {

// Error taxonomy shared by the whole pipeline. The CLI maps these onto
// process exit codes: usage/parameter problems -> 1, data and file-format
// problems -> 2, numeric failures (non-finite loss) -> 3.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/layer shape disagreement.
class DimensionError : public Error {
public:
    explicit DimensionError(const std::string& msg) : Error(msg) {}
};

// Invalid argument value (probability out of range, bad config field, ...).
class ParameterError : public Error {
public:
    explicit ParameterError(const std::string& msg) : Error(msg) {}
};

// Dataset content problems: too few samples, degenerate statistics.
class DataError : public Error {
public:
    explicit DataError(const std::string& msg) : Error(msg) {}
};

// File-format violations (bad magic, truncation, inconsistent headers).
// Carries the byte offset at which parsing failed when known.
class FormatError : public Error {
public:
    explicit FormatError(const std::string& msg) : Error(msg) {}
    FormatError(const std::string& msg, std::uint64_t offset)
        : Error(msg + " (at byte offset " + std::to_string(offset) + ")") {}
};

// Non-finite values encountered during optimization.
class NumericError : public Error {
public:
    explicit NumericError(const std::string& msg) : Error(msg) {}
};

} // namespace fcap
