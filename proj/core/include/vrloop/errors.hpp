#pragma once

#include <stdexcept>
#include <string>

namespace vrloop {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad configuration or template; raised before any network call.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Endpoint unreachable or retries exhausted.
class TransportError : public Error {
 public:
  using Error::Error;
};

// Endpoint lacks a feature the caller requires (e.g. top-K logprobs).
class CapabilityError : public Error {
 public:
  using Error::Error;
};

// Malformed persisted record.
class SchemaError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace vrloop
