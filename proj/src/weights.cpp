#include "marca/weights.hpp"

#include <cmath>

namespace marca {

Tensor LayerWeights::materialize_a() const {
  Tensor a(a_log.shape);
  for (size_t i = 0; i < a_log.data.size(); ++i) a.data[i] = -std::exp(a_log.data[i]);
  return a;
}

static void fill_uniform(Tensor& t, Xorshift& rng, float lo, float hi) {
  for (float& v : t.data) v = rng.uniform(lo, hi);
}

MambaWeights generate_weights(const MambaConfig& cfg) {
  Xorshift rng(cfg.seed);
  MambaWeights w;
  w.layers.resize(static_cast<size_t>(cfg.n_layers));
  const int64_t m = cfg.d_model, e = cfg.d_inner, n = cfg.d_state, k = cfg.d_conv,
                r = cfg.dt_rank;
  for (auto& lw : w.layers) {
    lw.in_proj = Tensor({m, 2 * e});
    lw.conv_w = Tensor({e, k});
    lw.x_proj = Tensor({e, r + 2 * n});
    lw.dt_proj = Tensor({r, e});
    lw.a_log = Tensor({e, n});
    lw.d_skip = Tensor({e});
    lw.out_proj = Tensor({e, m});
    lw.norm_gamma = Tensor({m});
    lw.norm_beta = Tensor({m});

    float s_in = 1.0f / std::sqrt(static_cast<float>(m));
    float s_x = 1.0f / std::sqrt(static_cast<float>(e));
    float s_conv = 1.0f / std::sqrt(static_cast<float>(k));
    // dt stays small so exp(dt*A) cannot compound into overflow over long
    // sequences (dt has no positivity constraint here).
    float s_dt = 0.05f / std::sqrt(static_cast<float>(r));

    fill_uniform(lw.in_proj, rng, -s_in, s_in);
    fill_uniform(lw.conv_w, rng, -s_conv, s_conv);
    fill_uniform(lw.x_proj, rng, -s_x, s_x);
    fill_uniform(lw.dt_proj, rng, -s_dt, s_dt);
    fill_uniform(lw.a_log, rng, -2.0f, 0.5f);
    fill_uniform(lw.d_skip, rng, 0.5f, 1.5f);
    fill_uniform(lw.out_proj, rng, -s_x, s_x);
    fill_uniform(lw.norm_gamma, rng, 0.8f, 1.2f);
    fill_uniform(lw.norm_beta, rng, -0.1f, 0.1f);
  }
  return w;
}

MambaWeights zero_weights(const MambaConfig& cfg) {
  MambaWeights w = generate_weights(cfg);
  for (auto& lw : w.layers) {
    for (Tensor* t : {&lw.in_proj, &lw.conv_w, &lw.x_proj, &lw.dt_proj, &lw.a_log,
                      &lw.d_skip, &lw.out_proj, &lw.norm_gamma, &lw.norm_beta})
      std::fill(t->data.begin(), t->data.end(), 0.0f);
  }
  return w;
}

TestBundle make_test_bundle(const MambaConfig& cfg) {
  TestBundle b;
  b.weights = generate_weights(cfg);
  Xorshift rng(splitmix64(cfg.seed) ^ 0xA5A5A5A5DEADBEEFull);
  b.input = Tensor({cfg.seq_len, cfg.d_model});
  for (float& v : b.input.data) v = rng.uniform(-1.0f, 1.0f);
  return b;
}

}  // namespace marca
