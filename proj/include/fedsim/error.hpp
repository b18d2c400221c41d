#pragma once

#include <stdexcept>
#include <string>

namespace fedsim {

// Error taxonomy used across the library. The CLI maps these onto
// process exit codes (config -> 2, data -> 3, everything else -> 1).
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DimensionError : Error {
    using Error::Error;
};

struct NumericError : Error {
    using Error::Error;
};

struct FormatError : Error {
    using Error::Error;
};

struct InputError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

}  // namespace fedsim
