#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace dtp {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Operation not permitted in the clock's current mode.
class ModeError : public Error {
 public:
  using Error::Error;
};

/// Bus refused an envelope (unregistered payload kind, sequence regression).
class RejectionError : public Error {
 public:
  using Error::Error;
};

class TransportError : public Error {
 public:
  using Error::Error;
};

class EncodeError : public Error {
 public:
  using Error::Error;
};

class DecodeError : public Error {
 public:
  using Error::Error;
};

/// Log file problem; carries the byte offset at which reading stopped.
class ReplayError : public Error {
 public:
  ReplayError(const std::string& what, std::uint64_t offset)
      : Error(what + " at byte offset " + std::to_string(offset)), offset_(offset) {}
  explicit ReplayError(const std::string& what) : Error(what) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_ = 0;
};

class CalibrationError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace dtp
