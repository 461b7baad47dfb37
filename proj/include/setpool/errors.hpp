#ifndef SETPOOL_ERRORS_HPP
#define SETPOOL_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace setpool {

// Exit-code mapping for the CLI: ConfigError -> 1, FormatError -> 2,
// NumericError -> 3. Precondition violations on library ops throw
// std::invalid_argument.

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FormatError : std::runtime_error {
  FormatError(const std::string& what, std::size_t byte_offset)
      : std::runtime_error(what + " (at byte " + std::to_string(byte_offset) + ")"),
        offset(byte_offset) {}
  std::size_t offset;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace setpool

#endif
