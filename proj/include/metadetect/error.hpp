#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace metadetect {

enum class ErrorKind {
    io,      ///< file could not be opened or written
    format,  ///< malformed input line, bad header, duplicate keys
    schema,  ///< well-formed input that disagrees with the declared layout (e.g. probs vs C)
    config,  ///< invalid option or hyperparameter
    data,    ///< input is valid but unusable for the requested operation
};

std::string_view to_string(ErrorKind kind) noexcept;

/// The single exception type thrown by the library; the CLI maps `kind` to a
/// categorized message and exit code.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace metadetect
