#ifndef SPATIALREL_ERRORS_H_
#define SPATIALREL_ERRORS_H_

#include <stdexcept>
#include <string>

namespace spatialrel {

// Base for all library errors. The CLI maps these to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file. Messages carry the 1-based line number when known.
class ParseError : public Error {
 public:
  using Error::Error;
};

// A value violated a documented invariant or precondition.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A relation-prior provider failed (network, schema).
class ProviderError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace spatialrel

#endif  // SPATIALREL_ERRORS_H_
