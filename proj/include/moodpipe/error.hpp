#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace moodpipe {

/// Base of every error raised by the library.
class error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Bad user-supplied input: dataset contents, config files, CLI arguments.
/// The CLI maps these to exit code 2.
class input_error : public error {
  public:
    using error::error;
};

/// A dataset line that cannot be turned into a record.
class parse_error : public input_error {
  public:
    parse_error(std::size_t line, const std::string &what)
        : input_error("line " + std::to_string(line) + ": " + what), line_{line} {}

    [[nodiscard]] std::size_t line() const noexcept { return line_; }

  private:
    std::size_t line_;
};

/// Problems reading one of the binary artifact formats.
class format_error : public error {
  public:
    using error::error;
};

class bad_magic_error : public format_error {
  public:
    using format_error::format_error;
};

class truncated_payload_error : public format_error {
  public:
    using format_error::format_error;
};

class version_mismatch_error : public format_error {
  public:
    using format_error::format_error;
};

}  // namespace moodpipe
