#pragma once

#include <stdexcept>
#include <string>

namespace sgen {

/// Invalid shapes, hyperparameters or option values.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// API misuse, e.g. calling backward on a tensor that is not part of a graph.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Non-finite values encountered during a forward pass, loss or update.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file. Carries the byte offset where parsing stopped.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sgen
