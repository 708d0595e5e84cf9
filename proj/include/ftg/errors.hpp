#pragma once

#include <stdexcept>
#include <string>

namespace ftg {

enum class ErrorCode {
  // vector construction / distance
  NotNormalized,
  PositiveLogProb,
  DuplicateKey,
  MixedKeyKinds,
  FloorAboveObserved,
  MissingKeyInUniverse,
  // dataset
  ParseError,
  UnknownLabel,
  DuplicateId,
  EmptyDataset,
  // knn
  EmptyTrainingSet,
  KTooLarge,
  ClassTooSmall,
  EmptyClass,
  EmptyConfusion,
  // tsne
  PerplexityInfeasible,
  NonFiniteInput,
  DivergenceDetected,
  // probe / gateway
  LogprobsUnsupported,
  Timeout,
  RateLimited,
  MalformedResponse,
  OutputUnwritable,
  // gate
  EmptyInput,
  InvalidPolicy,
  InvalidConfig,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace ftg
