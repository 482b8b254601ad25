#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lcache {

// Base-step differential is identically zero; the frame must be stored
// verbatim instead of as a scale factor.
struct DegenerateBase : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct StepNotCached : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A single entry is larger than the whole cache; insertion refused.
struct OversizedEntry : std::runtime_error {
    OversizedEntry(std::uint64_t needed, std::uint64_t limit)
        : std::runtime_error("entry of " + std::to_string(needed) +
                             " bytes exceeds capacity limit of " +
                             std::to_string(limit) + " bytes"),
          needed_bytes(needed), capacity_limit(limit) {}
    std::uint64_t needed_bytes;
    std::uint64_t capacity_limit;
};

struct SnapshotError : std::runtime_error {
    SnapshotError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " at byte " + std::to_string(offset)),
          byte_offset(offset) {}
    std::size_t byte_offset;
};

struct TraceParseError : std::runtime_error {
    TraceParseError(const std::string& what, std::size_t line)
        : std::runtime_error("trace line " + std::to_string(line) + ": " + what),
          line_number(line) {}
    std::size_t line_number;
};

}  // namespace lcache
