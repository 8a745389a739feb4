#include "passivion/errors.hpp"

namespace passivion {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidSystem: return "InvalidSystem";
        case ErrorCode::UnstableA: return "UnstableA";
        case ErrorCode::DefinitenessViolation: return "DefinitenessViolation";
        case ErrorCode::NonSquareFeedthrough: return "NonSquareFeedthrough";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::PoleOnGrid: return "PoleOnGrid";
        case ErrorCode::NoRightHalfPlaneEigenvalue: return "NoRightHalfPlaneEigenvalue";
        case ErrorCode::EigenvectorFailure: return "EigenvectorFailure";
        case ErrorCode::SingularShift: return "SingularShift";
        case ErrorCode::SingularCapacitance: return "SingularCapacitance";
        case ErrorCode::SingularT: return "SingularT";
        case ErrorCode::SingularR: return "SingularR";
        case ErrorCode::PerturbedDefinitenessViolation: return "PerturbedDefinitenessViolation";
        case ErrorCode::StepUnderflow: return "StepUnderflow";
        case ErrorCode::DegenerateKKT: return "DegenerateKKT";
        case ErrorCode::InitialNotFeasible: return "InitialNotFeasible";
        case ErrorCode::InitializationFailed: return "InitializationFailed";
        case ErrorCode::IllConditionedFit: return "IllConditionedFit";
        case ErrorCode::MaxIterations: return "MaxIterations";
        case ErrorCode::RankDeficientQR: return "RankDeficientQR";
        case ErrorCode::EmptyTrace: return "EmptyTrace";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::InvalidConfig: return "InvalidConfig";
    }
    return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace passivion
