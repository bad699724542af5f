#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace msp {

/// Argument outside its documented range.
class ParameterError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Inputs that are well-typed but inconsistent (shape mismatch, arc outside domain, ...).
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Malformed file or document. `offset()` is the byte offset where parsing
/// failed, or -1 when no single offset applies.
class FormatError : public std::runtime_error {
public:
    explicit FormatError(const std::string& what, std::int64_t offset = -1)
        : std::runtime_error(offset >= 0 ? what + " (at byte " + std::to_string(offset) + ")" : what),
          offset_(offset) {}

    std::int64_t offset() const noexcept { return offset_; }

private:
    std::int64_t offset_;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace msp
