#pragma once

#include <stdexcept>
#include <string>

namespace agripipe {

// Category codes surfaced verbatim by the CLI and asserted in tests.
enum class Err {
    // raster
    MalformedHeader,
    DuplicateBand,
    TruncatedPayload,
    NonFiniteValueWithValidFlag,
    IoFailure,
    PatternMismatch,
    InvalidDate,
    InvalidTime,
    UnknownProduct,
    // preprocess
    EmptyBand,
    DegenerateBand,
    EmptyRegion,
    ZeroBrightness,
    MissingBandFactor,
    // registration
    ImageTooSmall,
    TooFewMatches,
    NoConsensus,
    DegenerateSample,
    SingularTransform,
    InsufficientOverlap,
    RegistrationRejected,
    // mosaic
    DisconnectedGraph,
    SingularComposition,
    // indices
    MissingBand,
    // dataset
    TileLargerThanImage,
    TooFewTiles,
    NonSquareTile,
    PatchOutOfBounds,
    // classifier
    MissingClass,
    DivergedLoss,
    ChannelMismatch,
    // evaluation
    DimensionMismatch,
    EmptyMatrix,
    // pipeline
    ConfigInvalid,
    MissingInput,
    SizeTooSmall,
};

const char* err_name(Err code);

class Error : public std::runtime_error {
public:
    Error(Err code, const std::string& message)
        : std::runtime_error(std::string(err_name(code)) + ": " + message), code_(code) {}

    Err code() const { return code_; }

private:
    Err code_;
};

[[noreturn]] inline void fail(Err code, const std::string& message) { throw Error(code, message); }

} // namespace agripipe
