#pragma once

#include <stdexcept>
#include <string>

// Scalar type for all pixel and network arithmetic. The high-precision build
// (GLAZELAB_HIGH_PRECISION) exists for gradient-check suites; it lives in its
// own inline namespace so both builds can be linked into one program.
#ifdef GLAZELAB_HIGH_PRECISION
#define GLAZELAB_ABI hp
#else
#define GLAZELAB_ABI sp
#endif

namespace glazelab::inline GLAZELAB_ABI {

#ifdef GLAZELAB_HIGH_PRECISION
using real = double;
#else
using real = float;
#endif

inline constexpr bool kHighPrecision = sizeof(real) == sizeof(double);

// Bad input, bad file, broken precondition. Maps to CLI exit code 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Divergence, NaN/Inf, degenerate models. Maps to CLI exit code 2.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace glazelab
