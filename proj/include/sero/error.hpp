#pragma once

#include <stdexcept>
#include <string>

namespace sero {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// A role-card field failed validation.
class SchemaViolation : public Error {
public:
  SchemaViolation(std::string field, std::string reason)
      : Error("schema violation in '" + field + "': " + reason),
        field(std::move(field)), reason(std::move(reason)) {}
  std::string field;
  std::string reason;
};

class VersionMismatch : public Error {
public:
  using Error::Error;
};

class EmptyMean : public Error {
public:
  EmptyMean() : Error("mean_embedding over an empty set") {}
};

class UnknownRole : public Error {
public:
  explicit UnknownRole(const std::string &name)
      : Error("unknown role: " + name) {}
};

class UsageError : public Error {
public:
  using Error::Error;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

class ImpossibleMask : public Error {
public:
  ImpossibleMask() : Error("action mask allows no operation") {}
};

// Transport-level failure from a model or embedding provider.
class BackendError : public Error {
public:
  enum class Kind { Transport, Timeout, RateLimited, MalformedResponse };

  BackendError(Kind kind, int status, std::string body)
      : Error(describe(kind, status, body)), kind(kind), status(status),
        body(std::move(body)) {}

  Kind kind;
  int status;
  std::string body;

private:
  static std::string describe(Kind kind, int status, const std::string &body) {
    std::string head;
    switch (kind) {
    case Kind::Transport: head = "backend transport error"; break;
    case Kind::Timeout: head = "backend timeout"; break;
    case Kind::RateLimited: head = "backend rate limited"; break;
    case Kind::MalformedResponse: head = "malformed backend response"; break;
    }
    if (status != 0) head += " (status " + std::to_string(status) + ")";
    if (!body.empty()) head += ": " + body.substr(0, 200);
    return head;
  }
};

} // namespace sero
