#pragma once

#include <stdexcept>
#include <string>

namespace groundprobe {

enum class ErrorKind {
    validation,        // bad values: NaN features, out-of-range coefficients, unlabeled records
    format,            // bad magic, unknown version, mixed d_h, malformed manifest lines
    truncation,        // declared record count inconsistent with file length
    ambiguity,         // duplicate hash_id within one view
    undefined_metric,  // single-class AUROC, no positives for AUCPR, empty subsets
    io,                // open/read/write failures
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool condition, ErrorKind kind, const std::string& what) {
    if (!condition) fail(kind, what);
}

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::validation: return "validation";
        case ErrorKind::format: return "format";
        case ErrorKind::truncation: return "truncation";
        case ErrorKind::ambiguity: return "ambiguity";
        case ErrorKind::undefined_metric: return "undefined_metric";
        case ErrorKind::io: return "io";
    }
    return "unknown";
}

}  // namespace groundprobe
