#include "marca/approx.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

namespace marca {

ExpParams ExpParams::with_biases(float bias_b, float c) {
  ExpParams p;
  p.bias_b = bias_b;
  p.b = 127.0f + bias_b;
  p.c = c;
  return p;
}

uint32_t exp_shift_unit(float x_prime) {
  if (!std::isfinite(x_prime) || x_prime <= 0.0f)
    throw DomainError("exp_shift_unit: x' must be positive and finite, got " +
                      std::to_string(x_prime));
  uint32_t bits = std::bit_cast<uint32_t>(x_prime);
  int e = static_cast<int>((bits >> 23) & 0xFF) - 127;
  // x' = m * 2^(e-23) with the implicit leading one restored, so
  // floor(x' * 2^23) = m shifted by e.
  uint32_t m = (bits & 0x7FFFFFu) | 0x800000u;
  if (e >= 9) throw SaturationError("exp_shift_unit: shift overflow, x' >= 2^9");
  if (e >= 0) return m << e;
  int r = -e;
  if (r >= 32) return 0;  // subnormal x' * 2^23 < 1
  return m >> r;
}

float fast_exp_biased(float x, const ExpParams& p) {
  if (x < kExpFlushThreshold) return 0.0f;
  float t = p.a * x;
  float x_prime = t + p.b;
  uint32_t u = exp_shift_unit(x_prime);
  return std::bit_cast<float>(u) + p.c;
}

double exp_grid_mean_rel_err(const ExpParams& p) {
  double sum = 0.0;
  for (int n = 1; n <= 200; ++n) {
    float x = static_cast<float>(-7.0 / n);
    double truth = std::exp(static_cast<double>(x));
    double approx = static_cast<double>(fast_exp_biased(x, p));
    sum += std::fabs(approx - truth) / truth;
  }
  return sum / 200.0;
}

CalibrationResult calibrate_exp_bias() {
  CalibrationResult r;
  r.err_uncalibrated = exp_grid_mean_rel_err(ExpParams{});

  double best = -1.0;
  ExpParams best_p;
  // Sweep in lexicographic (bias_b, c) order with strict improvement so ties
  // keep the smallest pair.
  for (int kb = -32; kb <= 32; ++kb) {
    float bias_b = static_cast<float>(kb) / 64.0f;
    for (int kc = -51; kc <= 51; ++kc) {
      float c = static_cast<float>(kc) / 1024.0f;
      ExpParams p = ExpParams::with_biases(bias_b, c);
      double err = exp_grid_mean_rel_err(p);
      if (best < 0.0 || err < best) {
        best = err;
        best_p = p;
      }
    }
  }
  r.params = best_p;
  r.err_calibrated = best;
  return r;
}

ExpParams load_exp_params(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open exp params: " + path);
  nlohmann::json j;
  f >> j;
  static const std::set<std::string> known = {"a", "bias_b", "b", "c",
                                              "grid_mean_rel_err_uncalibrated",
                                              "grid_mean_rel_err_calibrated"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key())) throw IoError("unknown exp params field: " + it.key());
  ExpParams p = ExpParams::with_biases(j.at("bias_b").get<float>(), j.at("c").get<float>());
  if (j.contains("a")) p.a = j["a"].get<float>();
  if (j.contains("b")) p.b = j["b"].get<float>();
  return p;
}

void save_exp_params(const ExpParams& p, const std::string& path,
                     double err_uncalibrated, double err_calibrated) {
  nlohmann::json j;
  j["a"] = p.a;
  j["bias_b"] = p.bias_b;
  j["b"] = p.b;
  j["c"] = p.c;
  if (err_uncalibrated >= 0.0) j["grid_mean_rel_err_uncalibrated"] = err_uncalibrated;
  if (err_calibrated >= 0.0) j["grid_mean_rel_err_calibrated"] = err_calibrated;
  std::ofstream f(path);
  if (!f) throw IoError("cannot open for write: " + path);
  f << j.dump(2) << "\n";
}

float silu_piecewise(float x) {
  if (x < -5.0f) return -0.0135f;
  if (x < -1.5f) {
    float t = -0.06244f * x;
    return t - 0.3457f;
  }
  if (x <= 0.75f) {
    float t = x + 1.181f;
    float sq = t * t;
    float scaled = sq * 0.232f;
    return scaled - 0.275f;
  }
  // x > 0.75, and NaN falls through to here and propagates
  float t = 1.05f * x;
  return t - 0.2781f;
}

SiluSegmentInfo silu_segment(float x) {
  if (x < -5.0f) return {SiluSegment::Constant, 0};
  if (x < -1.5f) return {SiluSegment::Linear, 2};
  if (x <= 0.75f) return {SiluSegment::Quadratic, 4};
  return {SiluSegment::Linear, 2};
}

float sigmoid_exact(float x) {
  return 1.0f / (1.0f + std::exp(-x));
}

float silu_exact(float x) {
  return x * sigmoid_exact(x);
}

}  // namespace marca
