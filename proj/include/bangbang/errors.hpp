#pragma once

#include <stdexcept>
#include <string>

namespace bangbang {

/// Argument outside the domain of an operation (e.g. evaluation time outside [0, t_f]).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Switching times are not strictly increasing, or left the admissible window.
class OrderViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The integrator produced a non-finite state.
class IntegrationBlowup : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// No switching time remains after the requested instant.
class NoFreedomLeft : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class AllSingularValuesZero : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The timing optimizer stopped without meeting its feasibility tolerance.
class NotConverged : public std::runtime_error {
 public:
  NotConverged(const std::string& what, double residual)
      : std::runtime_error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

class NoFeasibleNominal : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or missing experiment configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace bangbang
