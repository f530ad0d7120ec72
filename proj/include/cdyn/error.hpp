#pragma once

#include <set>
#include <stdexcept>
#include <string>

namespace cdyn {

/// Base for every error the engine raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t offset, std::set<std::string> expected, const std::string& what)
      : Error(what), offset_(offset), expected_(std::move(expected)) {}
  std::size_t offset() const { return offset_; }
  const std::set<std::string>& expected() const { return expected_; }

 private:
  std::size_t offset_;
  std::set<std::string> expected_;
};

class UnboundVariable : public Error {
 public:
  explicit UnboundVariable(const std::string& name)
      : Error("unbound variable '" + name + "'"), name_(name) {}
  const std::string& name() const { return name_; }

 private:
  std::string name_;
};

class DomainError : public Error {
 public:
  explicit DomainError(const std::string& subexpr)
      : Error("domain error in '" + subexpr + "'"), subexpr_(subexpr) {}
  const std::string& subexpression() const { return subexpr_; }

 private:
  std::string subexpr_;
};

// Numerical failures.
class NumericalError : public Error {
 public:
  using Error::Error;
};
class DegenerateLegendre : public NumericalError {
 public:
  using NumericalError::NumericalError;
};
class NoConvergence : public NumericalError {
 public:
  using NumericalError::NumericalError;
};
class ChainTooDeep : public NumericalError {
 public:
  using NumericalError::NumericalError;
};
class SingularConsistency : public NumericalError {
 public:
  using NumericalError::NumericalError;
};
class SingularMass : public NumericalError {
 public:
  using NumericalError::NumericalError;
};
class SingularConstraintBlock : public NumericalError {
 public:
  using NumericalError::NumericalError;
};
class MaxStepsExceeded : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class DriftAbort : public Error {
 public:
  DriftAbort(double t, double residual)
      : Error("constraint drift " + std::to_string(residual) + " exceeded threshold at t=" +
              std::to_string(t)),
        t_(t),
        residual_(residual) {}
  double time() const { return t_; }
  double residual() const { return residual_; }

 private:
  double t_;
  double residual_;
};

// Model/configuration errors.
class InvalidSystem : public Error {
 public:
  using Error::Error;
};
class SchemaError : public Error {
 public:
  SchemaError(std::string pointer, const std::string& what)
      : Error(pointer + ": " + what), pointer_(std::move(pointer)) {}
  const std::string& pointer() const { return pointer_; }

 private:
  std::string pointer_;
};
class ConstraintViolated : public Error {
 public:
  using Error::Error;
};
class UnknownScenario : public Error {
 public:
  explicit UnknownScenario(const std::string& name) : Error("unknown scenario '" + name + "'") {}
};

}  // namespace cdyn
