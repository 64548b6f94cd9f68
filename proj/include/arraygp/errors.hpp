#pragma once

#include <stdexcept>
#include <string>

namespace arraygp {

// Thrown when a linear-algebra step fails beyond recovery, e.g. a Cholesky
// factorization that still reports a numerical issue after the documented
// jitter retry. `iteration` is >= 0 when the failure happened inside a
// fixed-point iteration and identifies the failing pass.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what, int iteration = -1)
      : std::runtime_error(what), iteration_(iteration) {}

  int iteration() const noexcept { return iteration_; }

 private:
  int iteration_;
};

}  // namespace arraygp
