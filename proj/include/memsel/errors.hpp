#pragma once

#include <stdexcept>
#include <string>

namespace memsel {

// Exit status used by the command-line tool for each error family.
enum class ExitCode : int {
  kOk = 0,
  kIo = 1,
  kConfig = 2,
  kMismatch = 3,
  kInvariant = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ExitCode::kConfig, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ExitCode::kIo, what) {}
};

class MismatchError : public Error {
 public:
  explicit MismatchError(const std::string& what) : Error(ExitCode::kMismatch, what) {}
};

class InvariantError : public Error {
 public:
  explicit InvariantError(const std::string& what) : Error(ExitCode::kInvariant, what) {}
};

class ArgumentError : public Error {
 public:
  explicit ArgumentError(const std::string& what) : Error(ExitCode::kInvariant, what) {}
};

class RangeError : public Error {
 public:
  explicit RangeError(const std::string& what) : Error(ExitCode::kInvariant, what) {}
};

class PartitionError : public Error {
 public:
  explicit PartitionError(const std::string& what) : Error(ExitCode::kInvariant, what) {}
};

// Raised when a region has fewer pixels than requested superpixels.
class DegenerateRegionError : public Error {
 public:
  DegenerateRegionError(const std::string& what, int region_size)
      : Error(ExitCode::kInvariant, what), region_size_(region_size) {}
  int region_size() const noexcept { return region_size_; }

 private:
  int region_size_;
};

// A sample has no class with usable support data.
class StateError : public Error {
 public:
  explicit StateError(const std::string& what) : Error(ExitCode::kInvariant, what) {}
};

}  // namespace memsel
