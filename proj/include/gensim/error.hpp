#pragma once

#include <stdexcept>
#include <string>

namespace gensim {

/// Base of every library error. Precondition violations use
/// std::invalid_argument instead.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A sampler failed; `stage` names which draw of the triplet failed.
class SamplingError : public Error {
public:
    SamplingError(std::string stage, const std::string& what)
        : Error("sampling failed at stage '" + stage + "': " + what), stage_(std::move(stage)) {}
    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

class DegenerateDensity : public Error {
public:
    using Error::Error;
};

/// Bounded rejection sampling ran out of attempts.
class ConstructionFailure : public Error {
public:
    using Error::Error;
};

/// NaN/Inf in a loss or gradient, non-convergent solver, undefined statistic.
class NumericFailure : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace gensim
