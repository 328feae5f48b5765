//
// Project tagmol - Copyright 2026 The tagmol Authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef TAGMOL_ERROR_H_
#define TAGMOL_ERROR_H_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tagmol {

// Precondition of an operation was violated by the caller (shape mismatch,
// out-of-range argument, invalid molecule).
class ContractViolation: public std::logic_error {
public:
  using std::logic_error::logic_error;
};

// Malformed dataset record. Carries the 1-based line number when known.
class ParseError: public std::runtime_error {
public:
  ParseError(const std::string &what, std::size_t line)
      : std::runtime_error(line == 0 ? what
                                     : "line " + std::to_string(line) + ": "
                                           + what),
        line_(line) { }

  std::size_t line() const { return line_; }

private:
  std::size_t line_;
};

// Training left the finite regime (non-finite loss or gradient, exploding
// critic loss, persistently rising FD).
class DivergenceError: public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class CheckpointError: public std::runtime_error {
public:
  enum class Kind { kIo, kMagic, kVersion, kChecksum, kTruncated, kMismatch };

  CheckpointError(Kind kind, const std::string &what)
      : std::runtime_error(what), kind_(kind) { }

  Kind kind() const { return kind_; }

private:
  Kind kind_;
};

class ConfigError: public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace tagmol

#endif // TAGMOL_ERROR_H_
