#pragma once

#include <stdexcept>
#include <string>

namespace metaslicing {

/// Shape or domain violation in caller-supplied data.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class NotFound : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised by the resource manager when a placement would break the
/// capacity constraint. The environment never lets this escape during a
/// normal run; seeing it means the admission check was bypassed.
class InsufficientResources : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Configuration file problems. `field()` names the offending key path.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string field, std::string detail)
        : std::runtime_error("config field '" + field + "': " + detail),
          field_(std::move(field)),
          detail_(std::move(detail)) {}

    const std::string& field() const noexcept { return field_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    std::string field_;
    std::string detail_;
};

class ConvergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace metaslicing
