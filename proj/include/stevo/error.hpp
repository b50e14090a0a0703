#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace stevo {

enum class ErrorCode {
    ShapeMismatch,
    NonBinaryEntry,
    SelfLoop,
    InvalidSize,
    EmptyAnswerSet,
    EmptyText,
    EmbedderUnavailable,
    OddDimension,
    DimensionMismatch,
    POutOfRange,
    LengthMismatch,
    InvalidDistribution,
    EmptySeries,
    InvalidArgument,
    IoFailure,
    CorruptFile,
    BackendFailure,
    UnknownScenario,
    SchedulerFailure,
    ConfigError,
    DatasetError,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

#define STEVO_REQUIRE(cond, code, msg)                  \
    do {                                                \
        if (!(cond)) throw ::stevo::Error((code), (msg)); \
    } while (0)

}  // namespace stevo
