#ifndef SPILLSC_ERRORS_HPP
#define SPILLSC_ERRORS_HPP

#include <stdexcept>
#include <string>
#include <vector>

namespace spillsc {

// Base class for every failure this library raises deliberately.
class error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input data (CSV/JSON): carries a human-readable location.
class parse_error : public error {
 public:
  using error::error;
};

// Structurally valid input that violates a precondition or option contract.
class config_error : public error {
 public:
  using error::error;
};

// A matrix required to be invertible is singular or too ill-conditioned.
class singular_error : public error {
 public:
  using error::error;
};

// Argument outside the defined domain of an operation.
class domain_error : public error {
 public:
  using error::error;
};

// Iterative solve did not reach the requested certificate.
// Carries the last iterate so callers can inspect how close it got.
class solver_error : public error {
 public:
  solver_error(const std::string& msg, std::vector<double> last_weights,
               double kkt_gap, int iterations)
      : error(msg),
        last_weights(std::move(last_weights)),
        kkt_gap(kkt_gap),
        iterations(iterations) {}

  std::vector<double> last_weights;
  double kkt_gap = 0.0;
  int iterations = 0;
};

// fit_all fails fast on the first unit whose solve fails; the units that
// already succeeded are reported so callers can diagnose the panel.
class fit_error : public error {
 public:
  fit_error(const std::string& msg, int unit_failed, std::vector<int> units_succeeded)
      : error(msg), unit_failed(unit_failed), units_succeeded(std::move(units_succeeded)) {}

  int unit_failed = -1;
  std::vector<int> units_succeeded;
};

}  // namespace spillsc

#endif
