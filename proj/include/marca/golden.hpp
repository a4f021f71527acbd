#pragma once

#include "marca/config.hpp"
#include "marca/kernels.hpp"
#include "marca/tensor.hpp"
#include "marca/weights.hpp"

namespace marca {

// FP32 reference model. Operation order is pinned down to the rounding:
// matmul accumulates sequentially over k, conv over ascending taps, the scan
// updates h token by token. With ReductionOrder::Tree16 every dot product
// instead uses the engine's balanced-tree order, which makes the reference
// bit-comparable against simulated exact-kernel runs.
struct GoldenOptions {
  LaneKernels kernels;                                     // exact by default
  ReductionOrder reduction = ReductionOrder::Sequential;
};

// out[m,n] = a[m,k] x b[k,n], sequential accumulation p = 0..k-1.
Tensor matmul_ref(const Tensor& a, const Tensor& b);
Tensor matmul_ord(const Tensor& a, const Tensor& b, ReductionOrder order);

// Causal depthwise conv: y[t,d] = sum_j w[d,j] * x[t-K+1+j,d], zero padded
// on the left. Taps accumulate in ascending j.
Tensor conv1d_ref(const Tensor& x, const Tensor& w);

// Row-wise layer norm, population variance.
Tensor layernorm_ref(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps);

// Selective scan over L tokens:
//   abar = 1 + dt*A (Euler) or exp(dt*A) (ZohExp)
//   h    = abar o h + (dt o x) outer B
//   y[n] = h x C[n] + d_skip o x[n]
// Throws NumericError naming the token index if a non-finite value appears.
Tensor selective_scan_ref(const Tensor& x, const Tensor& dt, const Tensor& a,
                          const Tensor& b, const Tensor& c, const Tensor& d_skip,
                          Discretization mode);
Tensor selective_scan_opt(const Tensor& x, const Tensor& dt, const Tensor& a,
                          const Tensor& b, const Tensor& c, const Tensor& d_skip,
                          Discretization mode, const GoldenOptions& opt);

// One block: norm -> in_proj (x/gate branches) -> conv -> silu -> scan
// (dt, B, C projected from the activated conv output) -> gate multiply ->
// out_proj -> residual.
Tensor mamba_block_ref(const Tensor& x, const LayerWeights& w, const MambaConfig& cfg,
                       const GoldenOptions& opt = {});

// Stacked blocks.
Tensor mamba_forward(const Tensor& x, const MambaWeights& w, const MambaConfig& cfg,
                     const GoldenOptions& opt = {});

}  // namespace marca
