#pragma once

#include <stdexcept>
#include <string>

namespace casegraph {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller passed a value outside the documented domain of an operation.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Input data (corpus, schema, checkpoint, rule file) is inconsistent.
class DataError : public Error {
 public:
  using Error::Error;
};

/// A file could not be opened or written.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace casegraph
