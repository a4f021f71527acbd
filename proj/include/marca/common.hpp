#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace marca {

// Error hierarchy. Every failure surfaces as one of these so callers (CLI,
// tests) can distinguish bad input from internal faults.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class DimError : public Error {          // tensor shape mismatch
public:
  using Error::Error;
};
class NumericError : public Error {      // non-finite intermediate
public:
  using Error::Error;
};
class DomainError : public Error {       // input outside kernel domain
public:
  using Error::Error;
};
class SaturationError : public Error {   // shift-unit overflow
public:
  using Error::Error;
};
class EncodeError : public Error {       // instruction field overflow / bad opcode
public:
  using Error::Error;
};
class AsmError : public Error {          // assembly syntax, carries line number
public:
  using Error::Error;
};
class PlanError : public Error {         // buffer planning infeasible
public:
  using Error::Error;
};
class ResidencyError : public Error {    // operand not covered by a live region
public:
  using Error::Error;
};
class IoError : public Error {
public:
  using Error::Error;
};

template <typename T>
constexpr T ceil_div(T a, T b) {
  return (a + b - 1) / b;
}

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Deterministic xorshift64 stream. All test weights/inputs come from here so
// runs are reproducible across platforms.
class Xorshift {
public:
  explicit Xorshift(uint64_t seed) : state_(splitmix64(seed)) {
    if (state_ == 0) state_ = 0x9E3779B97F4A7C15ull;
  }

  uint64_t next() {
    state_ ^= state_ << 13;
    state_ ^= state_ >> 7;
    state_ ^= state_ << 17;
    return state_;
  }

  // Uniform in [0, 1) with 24 bits of resolution (exact in FP32).
  float next_float() {
    return static_cast<float>(next() >> 40) * (1.0f / 16777216.0f);
  }

  float uniform(float lo, float hi) {
    return lo + (hi - lo) * next_float();
  }

private:
  uint64_t state_;
};

}  // namespace marca
