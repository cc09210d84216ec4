#pragma once

#include <stdexcept>
#include <string>

namespace chunkrt {

/// Raised when an operation's preconditions are violated by its arguments.
class InvalidInput : public std::invalid_argument {
 public:
  explicit InvalidInput(const std::string& what) : std::invalid_argument(what) {}
};

/// Configuration or fixture text that failed to parse. Carries the source
/// location so CLI error records can point at the offending line.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::string file, int line, const std::string& msg)
      : std::runtime_error(file + ":" + std::to_string(line) + ": " + msg),
        file_(std::move(file)),
        line_(line),
        message_(msg) {}

  const std::string& file() const { return file_; }
  int line() const { return line_; }
  const std::string& message() const { return message_; }

 private:
  std::string file_;
  int line_;
  std::string message_;
};

class DegenerateSchedule : public std::runtime_error {
 public:
  DegenerateSchedule(int step, double alpha_bar)
      : std::runtime_error("alpha_bar at step " + std::to_string(step) + " is " + std::to_string(alpha_bar) +
                           ", too small to invert") {}
};

/// A chunk source was asked for content past the end of its reference.
class SourceExhausted : public std::runtime_error {
 public:
  explicit SourceExhausted(const std::string& what) : std::runtime_error(what) {}
};

/// No buffered chunk covers the requested time.
class NoAction : public std::runtime_error {
 public:
  explicit NoAction(const std::string& what) : std::runtime_error(what) {}
};

class FileNotFound : public std::runtime_error {
 public:
  explicit FileNotFound(const std::string& path)
      : std::runtime_error("file not found: " + path), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

}  // namespace chunkrt
