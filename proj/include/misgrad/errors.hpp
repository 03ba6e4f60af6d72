#pragma once

#include <stdexcept>
#include <string>

namespace misgrad {

// Base class for everything this library throws.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// linalg
struct NonFiniteInput : Error { using Error::Error; };
struct SingularSystem : Error { using Error::Error; };
struct ShapeMismatch : Error { using Error::Error; };

// network
struct InvalidTarget : Error { using Error::Error; };
struct NonFiniteGradient : Error { using Error::Error; };

// importance store
struct IndexOutOfRange : Error { using Error::Error; };
struct NonFiniteImportance : Error { using Error::Error; };
struct AllZeroImportance : Error { using Error::Error; };

// estimators
struct ZeroProbabilitySample : Error { using Error::Error; };
struct AllTechniquesZero : Error { using Error::Error; };

// tasks
struct MalformedImage : Error { using Error::Error; };
struct UnsupportedFormat : Error { using Error::Error; };
struct MalformedIdx : Error { using Error::Error; };
struct LabelImageCountMismatch : Error { using Error::Error; };
struct EmptySubset : Error { using Error::Error; };

// config / cli
struct ConfigParse : Error { using Error::Error; };
struct ConfigInvalid : Error { using Error::Error; };
struct TaskMismatch : Error { using Error::Error; };

} // namespace misgrad
