#pragma once

#include <stdexcept>
#include <string>

namespace codeal {

// Error taxonomy. The three bases map onto the CLI exit-code contract:
// UsageError -> 2, DataError -> 3, NumericError -> 4.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UsageError : Error {
  using Error::Error;
};
struct DataError : Error {
  using Error::Error;
};
struct NumericError : Error {
  using Error::Error;
};

// panel-core
struct NonBinaryIndicator : DataError {
  using DataError::DataError;
};
struct ReversedTreatment : DataError {
  using DataError::DataError;
};
struct NoNeverTreatedUnit : DataError {
  using DataError::DataError;
};
struct UnsortedPanel : DataError {
  using DataError::DataError;
};
struct UntreatedTargetBlock : DataError {
  using DataError::DataError;
};
struct MissingImputedCell : DataError {
  using DataError::DataError;
};
struct NoTreatedCells : DataError {
  using DataError::DataError;
};
struct InvalidStaggeredPanel : DataError {
  using DataError::DataError;
};

// neural-net
struct ZeroDimension : UsageError {
  using UsageError::UsageError;
};
struct DimensionMismatch : DataError {
  using DataError::DataError;
};
struct NoForwardState : UsageError {
  using UsageError::UsageError;
};
struct EmptyMask : DataError {
  using DataError::DataError;
};
struct NonFiniteLoss : NumericError {
  using NumericError::NumericError;
};

// covariate / baselines
struct NoControlUnits : DataError {
  using DataError::DataError;
};
struct RankDeficientDesign : NumericError {
  using NumericError::NumericError;
};
struct ShapeMismatch : DataError {
  using DataError::DataError;
};
struct EmptyControlSet : DataError {
  using DataError::DataError;
};
struct EmptyRegion : DataError {
  using DataError::DataError;
};
struct InsufficientPrePeriods : DataError {
  using DataError::DataError;
};
struct NoObservedCells : DataError {
  using DataError::DataError;
};

// codeal / simulation / cli
struct UnknownEstimator : UsageError {
  using UsageError::UsageError;
};
struct InvalidConfig : UsageError {
  using UsageError::UsageError;
};
struct MissingFile : DataError {
  using DataError::DataError;
};
struct HeaderMismatch : DataError {
  using DataError::DataError;
};
struct NonNumericCell : DataError {
  using DataError::DataError;
};
struct JoinFailure : DataError {
  using DataError::DataError;
};

}  // namespace codeal
