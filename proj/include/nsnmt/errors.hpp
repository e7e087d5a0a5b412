#pragma once

#include <stdexcept>
#include <string>

namespace nsnmt {

// Error taxonomy shared across the toolkit. Validation failures (shapes,
// alignment, plans, configs) map to CLI exit code 2, runtime aborts to 1.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionError : Error { using Error::Error; };
struct IndexError : Error { using Error::Error; };
struct ContractError : Error { using Error::Error; };
struct AlignmentError : Error { using Error::Error; };
struct PlanError : Error { using Error::Error; };
struct UnknownLanguageError : Error { using Error::Error; };
struct EmptyTaskError : Error { using Error::Error; };
struct RejectedRowError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct TrainAbortError : Error { using Error::Error; };

}  // namespace nsnmt
