#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mgpc {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A distribution or configuration parameter violates its constraints.
class InvalidParameter : public Error {
 public:
  InvalidParameter(std::string field, const std::string& what)
      : Error("invalid parameter '" + field + "': " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// The measure cannot support the requested number of orthogonal polynomials.
class DegenerateMeasure : public Error {
 public:
  using Error::Error;
};

class IterationLimit : public Error {
 public:
  using Error::Error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

/// No quadrature size up to the cap reached the tolerance.
class Infeasible : public Error {
 public:
  Infeasible(const std::string& what, double best_residual)
      : Error(what), best_residual_(best_residual) {}
  double best_residual() const noexcept { return best_residual_; }

 private:
  double best_residual_;
};

class VersionMismatch : public Error {
 public:
  using Error::Error;
};

class CorruptFile : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Model adapter failures.

class AdapterError : public Error {
 public:
  using Error::Error;
};

class ChildFailed : public AdapterError {
 public:
  ChildFailed(const std::string& what, int status) : AdapterError(what), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

class Timeout : public AdapterError {
 public:
  explicit Timeout(long id)
      : AdapterError("timed out waiting for reply to sample id " + std::to_string(id)), id_(id) {}
  long id() const noexcept { return id_; }

 private:
  long id_;
};

class ProtocolError : public AdapterError {
 public:
  using AdapterError::AdapterError;
};

class MissingRows : public AdapterError {
 public:
  explicit MissingRows(std::vector<long> ids)
      : AdapterError(describe(ids)), ids_(std::move(ids)) {}
  const std::vector<long>& ids() const noexcept { return ids_; }

 private:
  static std::string describe(const std::vector<long>& ids) {
    std::string s = "response is missing rows for ids:";
    for (std::size_t i = 0; i < ids.size() && i < 20; ++i) s += " " + std::to_string(ids[i]);
    if (ids.size() > 20) s += " ...";
    return s;
  }
  std::vector<long> ids_;
};

class IdMismatch : public AdapterError {
 public:
  using AdapterError::AdapterError;
};

}  // namespace mgpc
