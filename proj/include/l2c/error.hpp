#pragma once

#include <stdexcept>
#include <string>

namespace l2c {

/// Input that violates a documented contract (malformed file, bad flag, bad shape).
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

/// A required file (model, dataset, checkpoint) could not be opened.
class MissingArtifactError : public std::runtime_error {
public:
    explicit MissingArtifactError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace l2c
