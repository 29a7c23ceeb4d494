#pragma once

#include <stdexcept>
#include <string>

namespace forge {

// Base class for all forge errors. Subclasses mark the failure category;
// the CLI maps categories onto exit codes.
class ForgeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file. Carries the 1-based line number when known.
class ParseError : public ForgeError {
 public:
  ParseError(const std::string& message, int line)
      : ForgeError("line " + std::to_string(line) + ": " + message), line_(line) {}
  explicit ParseError(const std::string& message) : ForgeError(message), line_(0) {}
  int line() const { return line_; }

 private:
  int line_;
};

// Structurally invalid catalog (dangling foreign key, duplicate name, ...).
// Names the offending entity.
class IntegrityError : public ForgeError {
 public:
  IntegrityError(const std::string& message, std::string entity)
      : ForgeError(message), entity_(std::move(entity)) {}
  const std::string& entity() const { return entity_; }

 private:
  std::string entity_;
};

class EmptyQuestion : public ForgeError {
 public:
  EmptyQuestion() : ForgeError("question must be non-empty") {}
};

class UnknownDatabaseId : public ForgeError {
 public:
  explicit UnknownDatabaseId(const std::string& id)
      : ForgeError("unknown database_id: " + id) {}
};

class TransportError : public ForgeError {
 public:
  using ForgeError::ForgeError;
};

class AuthError : public ForgeError {
 public:
  using ForgeError::ForgeError;
};

// Per-run generation call budget exhausted.
class BudgetExceeded : public ForgeError {
 public:
  explicit BudgetExceeded(long long budget)
      : ForgeError("generation call budget exceeded (" + std::to_string(budget) + " calls)") {}
};

class EmptyPairSet : public ForgeError {
 public:
  EmptyPairSet() : ForgeError("pair set is empty") {}
};

class DegenerateSplit : public ForgeError {
 public:
  using ForgeError::ForgeError;
};

class ZeroBaseline : public ForgeError {
 public:
  ZeroBaseline() : ForgeError("baseline mean token count must be positive") {}
};

class FingerprintMismatch : public ForgeError {
 public:
  using ForgeError::ForgeError;
};

class ConfigError : public ForgeError {
 public:
  using ForgeError::ForgeError;
};

// Requested engine binding is not compiled into this build.
class EngineUnavailable : public ForgeError {
 public:
  using ForgeError::ForgeError;
};

}  // namespace forge
