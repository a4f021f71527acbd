#pragma once

#include <cmath>
#include <cstdint>

#include "marca/approx.hpp"
#include "marca/common.hpp"

namespace marca {

// Shared numeric primitives. The golden model and the execution engine both
// call these, so "mirrored reduction order" comparisons are bit-exact by
// construction. The reduction orders themselves are normative:
//   - sequential: acc over k in ascending order
//   - tree16: balanced pairwise tree over chunks of 16, the last tree level
//     takes a third input that chains the previous chunk's accumulator

// Balanced pairwise sum of 16 values; the final addition folds in `acc` as
// its third input: ((l3_0 + l3_1) + acc).
inline float treesum16(const float* v, float acc) {
  float s0 = v[0] + v[1];
  float s1 = v[2] + v[3];
  float s2 = v[4] + v[5];
  float s3 = v[6] + v[7];
  float s4 = v[8] + v[9];
  float s5 = v[10] + v[11];
  float s6 = v[12] + v[13];
  float s7 = v[14] + v[15];
  float t0 = s0 + s1;
  float t1 = s2 + s3;
  float t2 = s4 + s5;
  float t3 = s6 + s7;
  float u0 = t0 + t1;
  float u1 = t2 + t3;
  return (u0 + u1) + acc;
}

// Dot product with strided operands, sequential accumulation p = 0..k-1.
inline float dot_seq(const float* a, int64_t astride, const float* b, int64_t bstride,
                     int64_t k, float acc) {
  for (int64_t p = 0; p < k; ++p) acc += a[p * astride] * b[p * bstride];
  return acc;
}

// Dot product in tree16 order: k is consumed in ascending chunks of 16,
// zero-padded, each chunk reduced by treesum16 chained through acc.
inline float dot_tree16(const float* a, int64_t astride, const float* b, int64_t bstride,
                        int64_t k, float acc) {
  float prod[16];
  for (int64_t p0 = 0; p0 < k; p0 += 16) {
    int64_t lanes = k - p0 < 16 ? k - p0 : 16;
    for (int64_t i = 0; i < lanes; ++i)
      prod[i] = a[(p0 + i) * astride] * b[(p0 + i) * bstride];
    for (int64_t i = lanes; i < 16; ++i) prod[i] = 0.0f;
    acc = treesum16(prod, acc);
  }
  return acc;
}

enum class ReductionOrder { Sequential, Tree16 };

inline float dot_reduce(ReductionOrder order, const float* a, int64_t astride,
                        const float* b, int64_t bstride, int64_t k, float acc) {
  return order == ReductionOrder::Sequential ? dot_seq(a, astride, b, bstride, k, acc)
                                             : dot_tree16(a, astride, b, bstride, k, acc);
}

// One row of layer normalization: two-pass mean / population variance, then
// (x - mean) / sqrt(var + eps) * gamma + beta.
inline void layernorm_row(const float* x, const float* gamma, const float* beta,
                          int64_t d, float eps, float* out) {
  float sum = 0.0f;
  for (int64_t i = 0; i < d; ++i) sum += x[i];
  float mean = sum / static_cast<float>(d);
  float var = 0.0f;
  for (int64_t i = 0; i < d; ++i) {
    float c = x[i] - mean;
    var += c * c;
  }
  var /= static_cast<float>(d);
  float inv = 1.0f / std::sqrt(var + eps);
  for (int64_t i = 0; i < d; ++i) out[i] = (x[i] - mean) * inv * gamma[i] + beta[i];
}

enum class KernelMode { Exact, Approx };

// Per-lane nonlinearities under one switch so golden and engine agree on the
// exact bits in either mode.
struct LaneKernels {
  KernelMode mode = KernelMode::Exact;
  ExpParams exp_params;

  float exp(float x) const {
    return mode == KernelMode::Exact ? std::exp(x) : fast_exp_biased(x, exp_params);
  }
  float silu(float x) const {
    return mode == KernelMode::Exact ? silu_exact(x) : silu_piecewise(x);
  }
};

}  // namespace marca
