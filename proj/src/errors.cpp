#include "ftg/errors.hpp"

namespace ftg {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotNormalized: return "NotNormalized";
    case ErrorCode::PositiveLogProb: return "PositiveLogProb";
    case ErrorCode::DuplicateKey: return "DuplicateKey";
    case ErrorCode::MixedKeyKinds: return "MixedKeyKinds";
    case ErrorCode::FloorAboveObserved: return "FloorAboveObserved";
    case ErrorCode::MissingKeyInUniverse: return "MissingKeyInUniverse";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::UnknownLabel: return "UnknownLabel";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::EmptyTrainingSet: return "EmptyTrainingSet";
    case ErrorCode::KTooLarge: return "KTooLarge";
    case ErrorCode::ClassTooSmall: return "ClassTooSmall";
    case ErrorCode::EmptyClass: return "EmptyClass";
    case ErrorCode::EmptyConfusion: return "EmptyConfusion";
    case ErrorCode::PerplexityInfeasible: return "PerplexityInfeasible";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::DivergenceDetected: return "DivergenceDetected";
    case ErrorCode::LogprobsUnsupported: return "LogprobsUnsupported";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::RateLimited: return "RateLimited";
    case ErrorCode::MalformedResponse: return "MalformedResponse";
    case ErrorCode::OutputUnwritable: return "OutputUnwritable";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::InvalidPolicy: return "InvalidPolicy";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

}  // namespace ftg
