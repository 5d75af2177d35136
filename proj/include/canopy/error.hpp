#pragma once

#include <stdexcept>
#include <string>

namespace canopy {

// Input violates a documented precondition or file schema. CLI exit code 1,
// HTTP 400.
class ValidationError : public std::invalid_argument {
public:
    explicit ValidationError(const std::string& what, std::string field = {})
        : std::invalid_argument(what), field_(std::move(field)) {}

    // Name of the offending field or parameter, empty when not applicable.
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

// File could not be read or written. CLI exit code 2.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A referenced entity (snapshot, tree, layer) does not exist. HTTP 404.
class NotFoundError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Feature exists in the file format but is outside the supported subset.
class UnsupportedError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

}  // namespace canopy
