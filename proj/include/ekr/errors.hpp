#ifndef EKR_ERRORS_HPP
#define EKR_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace ekr {

// Malformed or inconsistent input: files, shapes, config values.
struct data_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numerical failure: rank deficiency, NaN loss, non-convergence.
struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad command-line or config usage.
struct usage_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

} // namespace ekr

#endif
