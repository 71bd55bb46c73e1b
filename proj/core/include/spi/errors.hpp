#pragma once

#include <stdexcept>
#include <string>

namespace spi {

// Bad user input: malformed config values, inconsistent geometry, unknown tokens.
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Unreadable or malformed data files (.phot, .vol, detector, mask).
class FormatError : public std::runtime_error {
public:
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// A processing stage could not produce a usable result.
class StageError : public std::runtime_error {
public:
  explicit StageError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace spi
