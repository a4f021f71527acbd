#pragma once

#include <vector>

#include "marca/config.hpp"
#include "marca/tensor.hpp"

namespace marca {

// One block's parameters. Layouts (row-major):
//   in_proj  [d_model, 2*d_inner]   columns [0,E) = x branch, [E,2E) = gate
//   conv_w   [d_inner, K]           depthwise, tap K-1 is the current token
//   x_proj   [d_inner, dt_rank+2N]  columns: dt slice, then B, then C
//   dt_proj  [dt_rank, d_inner]
//   a_log    [d_inner, N]           A = -exp(a_log), always negative
//   d_skip   [d_inner]
//   out_proj [d_inner, d_model]
//   norm_gamma, norm_beta [d_model]
struct LayerWeights {
  Tensor in_proj, conv_w, x_proj, dt_proj, a_log, d_skip, out_proj, norm_gamma, norm_beta;

  Tensor materialize_a() const;  // A = -exp(a_log)
};

struct MambaWeights {
  std::vector<LayerWeights> layers;
};

// Deterministic weights from the config seed. Scales are chosen so the
// recurrence stays well-conditioned out to a few thousand tokens (dt is kept
// small; there is no softplus to force dt positive).
MambaWeights generate_weights(const MambaConfig& cfg);
MambaWeights zero_weights(const MambaConfig& cfg);

// Input drawn from the same stream, after the weights, so a (config, seed)
// pair pins the whole experiment.
struct TestBundle {
  MambaWeights weights;
  Tensor input;  // [L, d_model]
};
TestBundle make_test_bundle(const MambaConfig& cfg);

}  // namespace marca
