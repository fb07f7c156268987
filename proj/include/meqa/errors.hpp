#pragma once

#include <stdexcept>
#include <string>

namespace meqa {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Precondition violated by the caller (bad sizes, out-of-range values).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

// A file or record failed validation; the message names the offending field.
class ValidationError : public Error {
public:
    using Error::Error;
};

class PersistenceError : public Error {
public:
    using Error::Error;
};

// Voxel grid growth beyond the configured cap.
class ResourceLimitError : public Error {
public:
    using Error::Error;
};

}  // namespace meqa
