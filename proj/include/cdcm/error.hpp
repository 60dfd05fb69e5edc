/**
 * @file error.hpp
 * @brief Error taxonomy used across the library
 */
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cdcm {

enum class ErrorCode {
    InvalidGeometry,
    SymbolOutOfRange,
    BadHeader,
    NonUnaryPayload,
    UnknownWord,
    ZeroState,
    InvalidPair,
    OddLength,
    MixedWordLength,
    OutOfRange,
    EdgeReorder,
    TooFewEdges,
    InvalidWaveform,
    InvalidConfig,
    NoLock,
    CaptureRange,
    SyncFailed,
    ExtractorUnsupported,
    InvalidTopology,
    Precondition,
    Validation,
    Io,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), m_code(code)
    {
    }

    ErrorCode code() const noexcept { return m_code; }

private:
    ErrorCode m_code;
};

}  // namespace cdcm
