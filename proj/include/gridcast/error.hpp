#pragma once

#include <stdexcept>
#include <string>

namespace gridcast {

enum class ErrorCode {
    FileNotFound,
    MalformedRow,
    EmptyDataset,
    InconsistentResolution,
    NoCommonTimeRange,
    TooShort,
    ConstantSeries,
    OutOfCalendarRange,
    SplitTooShort,
    ShapeMismatch,
    NonScalarLoss,
    DetachedGraph,
    InsufficientHistory,
    SingularSystem,
    TooFewSamples,
    HeadDivisibility,
    NonFiniteGradient,
    Diverged,
    EmptyTrainingSet,
    MissingClientModel,
    HorizonOverrun,
    EmptyForecastSet,
    ConfigParse,
    NoResults,
    BadCheckpoint,
    InvalidArgument,
};

inline const char* to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::FileNotFound: return "FileNotFound";
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::InconsistentResolution: return "InconsistentResolution";
    case ErrorCode::NoCommonTimeRange: return "NoCommonTimeRange";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::ConstantSeries: return "ConstantSeries";
    case ErrorCode::OutOfCalendarRange: return "OutOfCalendarRange";
    case ErrorCode::SplitTooShort: return "SplitTooShort";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonScalarLoss: return "NonScalarLoss";
    case ErrorCode::DetachedGraph: return "DetachedGraph";
    case ErrorCode::InsufficientHistory: return "InsufficientHistory";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::HeadDivisibility: return "HeadDivisibility";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::Diverged: return "Diverged";
    case ErrorCode::EmptyTrainingSet: return "EmptyTrainingSet";
    case ErrorCode::MissingClientModel: return "MissingClientModel";
    case ErrorCode::HorizonOverrun: return "HorizonOverrun";
    case ErrorCode::EmptyForecastSet: return "EmptyForecastSet";
    case ErrorCode::ConfigParse: return "ConfigParse";
    case ErrorCode::NoResults: return "NoResults";
    case ErrorCode::BadCheckpoint: return "BadCheckpoint";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace gridcast
