#pragma once

#include <cstdint>
#include <string>

#include "marca/common.hpp"

namespace marca {

// Parameters of the biased fast exponential
//   x' = a*x + b;  u = trunc(x' * 2^23);  result = bits_as_float(u) + c
// a defaults to 1/ln2 so the exponent field lands on e^x, b = 127 + bias_b
// re-centres the IEEE exponent bias, c is a final additive correction.
struct ExpParams {
  float a = 1.4426950408889634f;  // 1/ln2
  float bias_b = 0.0f;
  float b = 127.0f;               // 127 + bias_b
  float c = 0.0f;

  static ExpParams with_biases(float bias_b, float c);
};

ExpParams load_exp_params(const std::string& path);
void save_exp_params(const ExpParams& p, const std::string& path,
                     double err_uncalibrated = -1.0, double err_calibrated = -1.0);

// floor(x_prime * 2^23) computed the way the hardware does it: extract the
// exponent, rebuild the 24-bit significand with the implicit leading 1, and
// shift. Never goes through an integer multiply.
// Throws DomainError if x_prime <= 0 or non-finite, SaturationError if
// x_prime >= 2^9 (the shifted significand would overflow 32 bits).
uint32_t exp_shift_unit(float x_prime);

// Fast biased exponential. Inputs below the flush threshold (-87.3) return
// 0; otherwise x' must come out positive or a DomainError is thrown.
float fast_exp_biased(float x, const ExpParams& p = ExpParams{});

constexpr float kExpFlushThreshold = -87.3f;

// Calibration sweep on the grid x = -7/n, n = 1..200: bias_b over
// [-0.5, 0.5] step 1/64, c over [-0.05, 0.05] step 1/1024, minimizing mean
// relative error against the true exponential. Ties keep the
// lexicographically smallest (bias_b, c). The lattice contains (0, 0), so
// the calibrated error never exceeds the uncalibrated one.
struct CalibrationResult {
  ExpParams params;
  double err_uncalibrated = 0.0;
  double err_calibrated = 0.0;
};
CalibrationResult calibrate_exp_bias();

// Mean relative error of the approximation on the calibration grid.
double exp_grid_mean_rel_err(const ExpParams& p);

// Four-segment piecewise SiLU:
//   x < -5            -> -0.0135
//   -5 <= x < -1.5    -> -0.06244*x - 0.3457
//   -1.5 <= x <= 0.75 -> ((x + 1.181)^2) * 0.232 - 0.275
//   x > 0.75          -> 1.05*x - 0.2781
// NaN propagates.
float silu_piecewise(float x);

enum class SiluSegment { Constant, Linear, Quadratic };
struct SiluSegmentInfo {
  SiluSegment segment;
  int ew_ops;  // element-wise op count: 0 / 2 / 4
};
SiluSegmentInfo silu_segment(float x);

// Exact references shared by the golden model and the exact-kernel engine
// mode. Single definition so "exact" means the same bits everywhere.
float sigmoid_exact(float x);
float silu_exact(float x);

}  // namespace marca
