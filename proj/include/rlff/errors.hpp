#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rlff {

class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

// dialogue-core
class AlternationViolation : public Error
{
public:
  using Error::Error;
};

class InvalidValue : public Error
{
public:
  using Error::Error;
};

// Any failure to obtain a completion. Rollouts and episodes catch this base.
class BackendError : public Error
{
public:
  using Error::Error;
};

class BackendUnavailable : public BackendError
{
public:
  using BackendError::BackendError;
};

class ScriptExhausted : public BackendError
{
public:
  using BackendError::BackendError;
};

class UnparsableVerdict : public Error
{
public:
  using Error::Error;
};

class DegenerateLabels : public Error
{
public:
  DegenerateLabels(std::size_t positives, std::size_t negatives)
    : Error("degenerate labels: " + std::to_string(positives) + " positive, " +
            std::to_string(negatives) + " negative; both classes are required"),
      positives(positives),
      negatives(negatives)
  {}

  std::size_t positives;
  std::size_t negatives;
};

class GroupTooSmall : public Error
{
public:
  using Error::Error;
};

class NonFiniteInput : public Error
{
public:
  using Error::Error;
};

class EmptyResults : public Error
{
public:
  using Error::Error;
};

class SchemaError : public Error
{
public:
  using Error::Error;
};

class IoError : public Error
{
public:
  using Error::Error;
};

class ConfigError : public Error
{
public:
  using Error::Error;
};

} // namespace rlff
