#pragma once

#include <stdexcept>
#include <string>

namespace sdfc {

/// Exit-code categories for the CLI: usage = 1, data = 2, numerical = 3.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DegenerateMesh : DataError { using DataError::DataError; };
struct SignAmbiguous : DataError { using DataError::DataError; };
struct MissingPatch : DataError { using DataError::DataError; };
struct NoKnownPatches : DataError { using DataError::DataError; };
struct DatasetEmpty : DataError { using DataError::DataError; };
struct EmptyMesh : DataError { using DataError::DataError; };
struct EmptySet : DataError { using DataError::DataError; };
struct ResolutionMismatch : DataError { using DataError::DataError; };
struct MissingPair : DataError { using DataError::DataError; };
struct NoInputs : DataError { using DataError::DataError; };
struct FormatError : DataError { using DataError::DataError; };
struct CheckpointMismatch : DataError { using DataError::DataError; };
struct NonUnitNormal : DataError { using DataError::DataError; };

struct ShapeMismatch : UsageError { using UsageError::UsageError; };
struct InvalidBatch : UsageError { using UsageError::UsageError; };
struct ConfigError : UsageError { using UsageError::UsageError; };

struct NonFiniteLoss : NumericalError { using NumericalError::NumericalError; };
struct NonFiniteActivation : NumericalError { using NumericalError::NumericalError; };

}  // namespace sdfc
