#include "cdcm/error.hpp"

namespace cdcm {

std::string_view to_string(ErrorCode code)
{
    switch (code) {
        case ErrorCode::InvalidGeometry: return "InvalidGeometry";
        case ErrorCode::SymbolOutOfRange: return "SymbolOutOfRange";
        case ErrorCode::BadHeader: return "BadHeader";
        case ErrorCode::NonUnaryPayload: return "NonUnaryPayload";
        case ErrorCode::UnknownWord: return "UnknownWord";
        case ErrorCode::ZeroState: return "ZeroState";
        case ErrorCode::InvalidPair: return "InvalidPair";
        case ErrorCode::OddLength: return "OddLength";
        case ErrorCode::MixedWordLength: return "MixedWordLength";
        case ErrorCode::OutOfRange: return "OutOfRange";
        case ErrorCode::EdgeReorder: return "EdgeReorder";
        case ErrorCode::TooFewEdges: return "TooFewEdges";
        case ErrorCode::InvalidWaveform: return "InvalidWaveform";
        case ErrorCode::InvalidConfig: return "InvalidConfig";
        case ErrorCode::NoLock: return "NoLock";
        case ErrorCode::CaptureRange: return "CaptureRange";
        case ErrorCode::SyncFailed: return "SyncFailed";
        case ErrorCode::ExtractorUnsupported: return "ExtractorUnsupported";
        case ErrorCode::InvalidTopology: return "InvalidTopology";
        case ErrorCode::Precondition: return "Precondition";
        case ErrorCode::Validation: return "Validation";
        case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

}  // namespace cdcm
