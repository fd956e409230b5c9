#pragma once

#include <stdexcept>
#include <string>

namespace tinyrl {

// Exit-code families for the CLI: ConfigError -> 2, DataError -> 3,
// NumericError -> 4.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParseError : DataError {
    using DataError::DataError;
};

struct GroundTruthUnparseable : DataError {
    using DataError::DataError;
};

struct EmptyPrompt : DataError {
    using DataError::DataError;
};

struct EmptyBatch : DataError {
    using DataError::DataError;
};

struct EmptyCorpus : DataError {
    using DataError::DataError;
};

struct InsufficientItems : DataError {
    using DataError::DataError;
};

struct NoEffectiveGroups : DataError {
    using DataError::DataError;
};

struct LengthMismatch : DataError {
    using DataError::DataError;
};

struct StaleRollouts : NumericError {
    using NumericError::NumericError;
};

struct NonFiniteParams : NumericError {
    using NumericError::NumericError;
};

}  // namespace tinyrl
