#include "marca/golden.hpp"

#include <cmath>
#include <string>

namespace marca {

Tensor matmul_ord(const Tensor& a, const Tensor& b, ReductionOrder order) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0])
    throw DimError("matmul: incompatible shapes");
  const int64_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
  Tensor out({m, n});
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j)
      out(i, j) = dot_reduce(order, a.row(i), 1, b.data.data() + j, n, k, 0.0f);
  return out;
}

Tensor matmul_ref(const Tensor& a, const Tensor& b) {
  return matmul_ord(a, b, ReductionOrder::Sequential);
}

Tensor conv1d_ref(const Tensor& x, const Tensor& w) {
  if (x.rank() != 2 || w.rank() != 2 || x.shape[1] != w.shape[0])
    throw DimError("conv1d: incompatible shapes");
  const int64_t l = x.shape[0], d = x.shape[1], k = w.shape[1];
  Tensor out({l, d});
  for (int64_t t = 0; t < l; ++t) {
    for (int64_t c = 0; c < d; ++c) {
      // First tap initializes, later taps accumulate; exactly the shifted
      // multiply-add chain the compiler emits.
      float acc = 0.0f;
      for (int64_t j = 0; j < k; ++j) {
        int64_t src = t - (k - 1) + j;
        float xv = src >= 0 ? x(src, c) : 0.0f;
        float prod = w(c, j) * xv;
        acc = j == 0 ? prod : acc + prod;
      }
      out(t, c) = acc;
    }
  }
  return out;
}

Tensor layernorm_ref(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps) {
  if (x.rank() != 2 || gamma.numel() != x.shape[1] || beta.numel() != x.shape[1])
    throw DimError("layernorm: incompatible shapes");
  Tensor out(x.shape);
  for (int64_t r = 0; r < x.shape[0]; ++r)
    layernorm_row(x.row(r), gamma.data.data(), beta.data.data(), x.shape[1], eps,
                  out.row(r));
  return out;
}

Tensor selective_scan_opt(const Tensor& x, const Tensor& dt, const Tensor& a,
                          const Tensor& b, const Tensor& c, const Tensor& d_skip,
                          Discretization mode, const GoldenOptions& opt) {
  const int64_t l = x.shape[0], e = x.shape[1];
  const int64_t n = a.shape[1];
  if (dt.shape != x.shape || a.shape[0] != e || b.shape[0] != l || b.shape[1] != n ||
      c.shape != b.shape || d_skip.numel() != e)
    throw DimError("selective_scan: incompatible shapes");

  Tensor h({e, n});
  Tensor y({l, e});
  std::vector<float> abar(static_cast<size_t>(e) * n), dbx(abar.size());

  for (int64_t tok = 0; tok < l; ++tok) {
    const float* dtr = dt.row(tok);
    const float* xr = x.row(tok);
    const float* br = b.row(tok);
    const float* cr = c.row(tok);
    for (int64_t d = 0; d < e; ++d) {
      for (int64_t s = 0; s < n; ++s) {
        float da = dtr[d] * a(d, s);
        abar[static_cast<size_t>(d * n + s)] =
            mode == Discretization::ZohExp ? opt.kernels.exp(da) : da + 1.0f;
      }
      float u = dtr[d] * xr[d];
      for (int64_t s = 0; s < n; ++s)
        dbx[static_cast<size_t>(d * n + s)] = u * br[s];
    }
    for (int64_t d = 0; d < e; ++d) {
      for (int64_t s = 0; s < n; ++s) {
        size_t i = static_cast<size_t>(d * n + s);
        float t4 = abar[i] * h(d, s);
        h(d, s) = t4 + dbx[i];
      }
      float lin = dot_reduce(opt.reduction, h.row(d), 1, cr, 1, n, 0.0f);
      float sk = d_skip.data[static_cast<size_t>(d)] * xr[d];
      y(tok, d) = lin + sk;
      if (!std::isfinite(y(tok, d)))
        throw NumericError("selective_scan: non-finite output at token " +
                           std::to_string(tok));
    }
    for (float hv : h.data)
      if (!std::isfinite(hv))
        throw NumericError("selective_scan: non-finite state at token " +
                           std::to_string(tok));
  }
  return y;
}

Tensor selective_scan_ref(const Tensor& x, const Tensor& dt, const Tensor& a,
                          const Tensor& b, const Tensor& c, const Tensor& d_skip,
                          Discretization mode) {
  return selective_scan_opt(x, dt, a, b, c, d_skip, mode, GoldenOptions{});
}

static Tensor apply_silu(const Tensor& x, const LaneKernels& kern) {
  Tensor out(x.shape);
  for (size_t i = 0; i < x.data.size(); ++i) out.data[i] = kern.silu(x.data[i]);
  return out;
}

Tensor mamba_block_ref(const Tensor& x, const LayerWeights& w, const MambaConfig& cfg,
                       const GoldenOptions& opt) {
  if (x.rank() != 2 || x.shape[1] != cfg.d_model)
    throw DimError("mamba_block: input must be [L, d_model]");
  const int64_t e = cfg.d_inner, n = cfg.d_state, r = cfg.dt_rank;

  Tensor xn = layernorm_ref(x, w.norm_gamma, w.norm_beta, cfg.eps_norm);
  Tensor xm = matmul_ord(xn, slice_cols(w.in_proj, 0, e), opt.reduction);
  Tensor z = matmul_ord(xn, slice_cols(w.in_proj, e, 2 * e), opt.reduction);
  Tensor xc = conv1d_ref(xm, w.conv_w);
  Tensor xa = apply_silu(xc, opt.kernels);

  Tensor dtr = matmul_ord(xa, slice_cols(w.x_proj, 0, r), opt.reduction);
  Tensor bt = matmul_ord(xa, slice_cols(w.x_proj, r, r + n), opt.reduction);
  Tensor ct = matmul_ord(xa, slice_cols(w.x_proj, r + n, r + 2 * n), opt.reduction);
  Tensor dt = matmul_ord(dtr, w.dt_proj, opt.reduction);
  if (cfg.softplus_delta)
    for (float& v : dt.data) v = std::log1p(std::exp(v));

  Tensor a = w.materialize_a();
  Tensor y = selective_scan_opt(xa, dt, a, bt, ct, w.d_skip, cfg.discretization, opt);

  Tensor zs = apply_silu(z, opt.kernels);
  Tensor g(y.shape);
  for (size_t i = 0; i < y.data.size(); ++i) g.data[i] = y.data[i] * zs.data[i];

  Tensor o = matmul_ord(g, w.out_proj, opt.reduction);
  Tensor out(x.shape);
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = o.data[i] + x.data[i];
  return out;
}

Tensor mamba_forward(const Tensor& x, const MambaWeights& w, const MambaConfig& cfg,
                     const GoldenOptions& opt) {
  Tensor cur = x;
  for (const auto& lw : w.layers) cur = mamba_block_ref(cur, lw, cfg, opt);
  return cur;
}

}  // namespace marca
