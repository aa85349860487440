#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace contamlab {

// All library failures derive from Error so callers can catch one type.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class ParseError : public Error {
  public:
    ParseError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line)
    {}
    [[nodiscard]] std::size_t line() const noexcept { return line_; }

  private:
    std::size_t line_;
};

class ValidationError : public Error {
    using Error::Error;
};

class ConfigError : public Error {
    using Error::Error;
};

class LookupError : public Error {
    using Error::Error;
};

class UsageError : public Error {
    using Error::Error;
};

class DataError : public Error {
    using Error::Error;
};

class EvaluationError : public Error {
    using Error::Error;
};

class TrainingError : public Error {
  public:
    TrainingError(std::uint64_t step, const std::string& what)
        : Error("step " + std::to_string(step) + ": " + what), step_(step)
    {}
    [[nodiscard]] std::uint64_t step() const noexcept { return step_; }

  private:
    std::uint64_t step_;
};

}  // namespace contamlab
