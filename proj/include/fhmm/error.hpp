#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fhmm {

// Base for everything the library throws on purpose.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Caller passed something outside an operation's domain (bad symbol, empty input, shape mismatch).
class DomainError : public Error {
public:
    using Error::Error;
};

// A forward pass hit a zero-probability observation.
class DegenerateSequenceError : public Error {
public:
    DegenerateSequenceError(std::size_t time_step, const std::string& what)
        : Error(what + " (time step " + std::to_string(time_step) + ")"), time_step_(time_step) {}

    std::size_t time_step() const noexcept { return time_step_; }

private:
    std::size_t time_step_;
};

class EstimationError : public Error {
public:
    using Error::Error;
};

class SelectionError : public Error {
public:
    SelectionError(std::size_t eligible, const std::string& what)
        : Error(what + " (eligible groups: " + std::to_string(eligible) + ")"), eligible_(eligible) {}

    std::size_t eligible() const noexcept { return eligible_; }

private:
    std::size_t eligible_;
};

class DivergenceError : public Error {
public:
    DivergenceError(std::size_t epoch, const std::string& what)
        : Error(what + " (epoch " + std::to_string(epoch) + ")"), epoch_(epoch) {}

    std::size_t epoch() const noexcept { return epoch_; }

private:
    std::size_t epoch_;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Invalid or unknown configuration key; `key()` names the offender.
class ConfigError : public Error {
public:
    ConfigError(std::string key, const std::string& what)
        : Error(what), key_(std::move(key)) {}

    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

}  // namespace fhmm
