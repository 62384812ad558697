#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace ocrr {

using ClassLabel = std::string;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when a prediction is requested but there is nothing to retrieve from
/// (empty ledger, empty live set, empty neighbour list).
class NoEvidenceError : public Error {
public:
    using Error::Error;
};

class InvalidSplitError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

enum class LoadErrorKind {
    io,
    malformed_header,
    malformed_record,
    dimension_mismatch,
    non_finite,
    trailing_data,
};

const char* to_string(LoadErrorKind kind);

/// Failure while reading an embedding file. `record()` is the zero-based index
/// of the offending record (or the record count for header/trailer problems).
class LoadError : public Error {
public:
    LoadError(LoadErrorKind kind, std::uint64_t record, const std::string& detail);

    LoadErrorKind kind() const noexcept { return kind_; }
    std::uint64_t record() const noexcept { return record_; }

private:
    LoadErrorKind kind_;
    std::uint64_t record_;
};

}  // namespace ocrr
