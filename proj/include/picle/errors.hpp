#pragma once

#include <stdexcept>
#include <string>

namespace picle {

// Base class for all toolkit errors. Subclasses map onto CLI exit codes:
// usage/parse/schema problems exit 2, transport/endpoint problems exit 1.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input file (bad CoNLL line, bad JSONL record). Message carries
// file/line context where known.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Structurally valid input violating a domain invariant (bad IOB2 tag,
// length mismatch, wrong entity-type suffix).
class SchemaError : public Error {
 public:
  using Error::Error;
};

// Caller misuse: bad arguments, incompatible options, missing configuration.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Network-level failure after retries were exhausted.
class TransportError : public Error {
 public:
  using Error::Error;
};

// The remote endpoint answered with a non-retryable error status.
class EndpointError : public Error {
 public:
  EndpointError(int status, const std::string& body_excerpt)
      : Error("endpoint returned status " + std::to_string(status) +
              (body_excerpt.empty() ? "" : ": " + body_excerpt)),
        status_(status),
        body_excerpt_(body_excerpt) {}

  int status() const { return status_; }
  const std::string& body_excerpt() const { return body_excerpt_; }

 private:
  int status_;
  std::string body_excerpt_;
};

}  // namespace picle
