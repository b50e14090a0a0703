#include "stevo/error.hpp"

namespace stevo {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::NonBinaryEntry: return "NonBinaryEntry";
        case ErrorCode::SelfLoop: return "SelfLoop";
        case ErrorCode::InvalidSize: return "InvalidSize";
        case ErrorCode::EmptyAnswerSet: return "EmptyAnswerSet";
        case ErrorCode::EmptyText: return "EmptyText";
        case ErrorCode::EmbedderUnavailable: return "EmbedderUnavailable";
        case ErrorCode::OddDimension: return "OddDimension";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::POutOfRange: return "POutOfRange";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::InvalidDistribution: return "InvalidDistribution";
        case ErrorCode::EmptySeries: return "EmptySeries";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::IoFailure: return "IoFailure";
        case ErrorCode::CorruptFile: return "CorruptFile";
        case ErrorCode::BackendFailure: return "BackendFailure";
        case ErrorCode::UnknownScenario: return "UnknownScenario";
        case ErrorCode::SchedulerFailure: return "SchedulerFailure";
        case ErrorCode::ConfigError: return "ConfigError";
        case ErrorCode::DatasetError: return "DatasetError";
    }
    return "Unknown";
}

}  // namespace stevo
