#pragma once

#include <stdexcept>
#include <string>

namespace prospectr {

// Base class for everything the library throws on purpose.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor/raster dimension mismatches.
struct ShapeError : Error {
    using Error::Error;
};

// Bad run configuration (unknown keys, invalid hyperparameters).
struct ConfigError : Error {
    using Error::Error;
};

// Broken or missing input artifacts (files, checksums, empty bands).
struct DataError : Error {
    using Error::Error;
};

// API misuse: a documented precondition was violated.
struct ContractError : Error {
    using Error::Error;
};

// Non-finite values where the math requires finite ones.
struct NumericError : Error {
    using Error::Error;
};

}  // namespace prospectr
