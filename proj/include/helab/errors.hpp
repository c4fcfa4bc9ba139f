#pragma once

#include <stdexcept>
#include <string>

namespace helab {

// Contract violations are exceptions; numerical outcomes (non-convergence,
// precondition reports) are flags on the returned reports instead.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct InvalidGeometryError : Error { using Error::Error; };
struct InvalidParameterError : Error { using Error::Error; };
struct InvalidInputError : Error { using Error::Error; };
struct ShapeError : Error { using Error::Error; };
struct PositivityError : Error { using Error::Error; };
struct SymmetryError : Error { using Error::Error; };
struct ProjectorError : Error { using Error::Error; };
struct BranchError : Error { using Error::Error; };
struct DimensionError : Error { using Error::Error; };
struct BoundaryConditionError : Error { using Error::Error; };
struct BlowUpError : Error { using Error::Error; };
struct InsufficientDataError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };

}  // namespace helab
