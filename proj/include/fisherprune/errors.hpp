#pragma once

#include <stdexcept>
#include <string>

namespace fisherprune {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// tensor / autodiff
struct ShapeMismatch : Error { using Error::Error; };
struct NonFiniteLoss : Error { using Error::Error; };
struct GraphConsumed : Error { using Error::Error; };

// model zoo
struct UnknownArchitecture : Error { using Error::Error; };
struct LengthMismatch : Error { using Error::Error; };

// data io
struct BadMagic : Error { using Error::Error; };
struct CountMismatch : Error { using Error::Error; };
struct TruncatedFile : Error { using Error::Error; };
struct BadLabel : Error { using Error::Error; };
struct ClassTooSmall : Error { using Error::Error; };

// fim / criteria
struct EmptyPartition : Error { using Error::Error; };
struct NonFiniteGradient : Error { using Error::Error; };
struct DegenerateScores : Error { using Error::Error; };
struct ZeroGradient : Error { using Error::Error; };
struct SingularFisher : Error { using Error::Error; };

struct InvalidArgument : Error { using Error::Error; };

}  // namespace fisherprune
