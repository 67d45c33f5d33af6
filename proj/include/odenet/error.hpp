#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace odenet {

enum class ErrorKind {
    Io,
    BadMagic,
    UnsupportedChannels,
    BadDimensions,
    BadHeader,
    BadMaxval,
    Truncated,
    NonFinite,
    ShapeMismatch,
    StaleCache,
    VersionMismatch,
    DescriptorMismatch,
    InconsistentPayload,
    OutOfRange,
    Divergence,
    Degenerate,
    Config,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries a kind so callers (and the CLI
/// exit-code mapping) can tell data problems apart without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

} // namespace odenet
