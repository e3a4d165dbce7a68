#pragma once

// Identity types and error hierarchy shared by every langunits module.

#include <compare>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>

namespace langunits {

enum class UnitKind : std::uint8_t { raw, sae };

inline std::string_view to_string(UnitKind kind) {
    return kind == UnitKind::raw ? "raw" : "sae";
}

/// A raw MLP neuron or an SAE latent, addressed by layer and index.
struct UnitId {
    std::uint32_t layer = 0;
    std::uint32_t index = 0;
    UnitKind kind = UnitKind::raw;

    friend auto operator<=>(const UnitId&, const UnitId&) = default;
    friend bool operator==(const UnitId&, const UnitId&) = default;
};

using UnitSet = std::set<UnitId>;

// Error hierarchy. Everything derives from Error so callers can catch broadly
// and the CLI can map categories onto exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input violates a documented invariant (bad config, bad shape, bad value).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// On-disk data is malformed: wrong magic, wrong version, wrong shape.
class FormatError : public Error {
public:
    using Error::Error;
};

/// A payload ended before the declared shape was satisfied.
class TruncationError : public FormatError {
public:
    using FormatError::FormatError;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// The input carries no usable signal (e.g. no selection survivors).
class DegenerateInputError : public Error {
public:
    using Error::Error;
};

inline std::string to_string(const UnitId& u) {
    return std::string(to_string(u.kind)) + ":" + std::to_string(u.layer) + ":" +
           std::to_string(u.index);
}

} // namespace langunits
