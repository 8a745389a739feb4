#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace passivion {

// Every failure the library reports carries one of these codes. The CLI maps
// them to distinct process exit codes.
enum class ErrorCode {
    InvalidSystem = 10,
    UnstableA,
    DefinitenessViolation,
    NonSquareFeedthrough,
    DimensionMismatch,
    PoleOnGrid,
    NoRightHalfPlaneEigenvalue,
    EigenvectorFailure,
    SingularShift,
    SingularCapacitance,
    SingularT,
    SingularR,
    PerturbedDefinitenessViolation,
    StepUnderflow,
    DegenerateKKT,
    InitialNotFeasible,
    InitializationFailed,
    IllConditionedFit,
    MaxIterations,
    RankDeficientQR,
    EmptyTrace,
    ParseError,
    IoError,
    InvalidConfig,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message);

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace passivion
