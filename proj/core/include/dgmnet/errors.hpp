#pragma once

#include <stdexcept>
#include <string>

namespace dgmnet {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A precondition or data invariant was violated (bad shapes, non-binary masks, bad config values).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Filesystem failure. The message always names the path involved.
class IoError : public Error {
public:
    IoError(const std::string& path, const std::string& what)
        : Error(what + ": " + path), path_(path) {}

    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

/// Configuration file could not be parsed or contains unknown keys.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Training diverged (NaN/Inf loss) or a numerical contract was broken.
class NumericError : public Error {
public:
    using Error::Error;
};

/// An output already exists and overwriting was not requested.
class ExistsError : public Error {
public:
    explicit ExistsError(const std::string& path)
        : Error("output exists (pass --overwrite): " + path), path_(path) {}

    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

}  // namespace dgmnet
