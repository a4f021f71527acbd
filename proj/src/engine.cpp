#include "marca/engine.hpp"

namespace marca {

float reduce_tree_slice(const float v[16], float acc) {
  return treesum16(v, acc);
}

uint64_t rcu_mm(const float* a, const float* b, float* acc) {
  for (int i = 0; i < kRpeDim; ++i)
    for (int j = 0; j < kRpeDim; ++j)
      acc[i * kRpeDim + j] =
          dot_tree16(a + i * kRpeDim, 1, b + j, kRpeDim, kRpeDim,
                     acc[i * kRpeDim + j]);
  return kMmTileCycles;
}

uint64_t rcu_ew(bool mul, const float* a, const float* b, float* out, int n) {
  for (int i = 0; i < n; ++i) out[i] = mul ? a[i] * b[i] : a[i] + b[i];
  return kEwTileCycles;
}

uint64_t rcu_exp(const float* in, float* out, int n, const LaneKernels& k) {
  for (int i = 0; i < n; ++i) out[i] = k.exp(in[i]);
  return kExpTileCycles;
}

uint64_t rcu_silu(const float* in, float* out, int n, const LaneKernels& k) {
  for (int i = 0; i < n; ++i) out[i] = k.silu(in[i]);
  return kSiluTileCycles;
}

uint64_t norm_unit(const float* x, const float* gamma, const float* beta,
                   int64_t d, float eps, float* out) {
  layernorm_row(x, gamma, beta, d, eps, out);
  return 3 * ceil_div<uint64_t>(d, kRpeDim);
}

namespace {

uint64_t reg_addr(const std::array<uint32_t, 16>& gpr, uint8_t r) {
  return gpr[r];
}

}  // namespace

ExecEffect execute_instruction(const Instruction& in, const Program& prog,
                               const std::array<uint32_t, 16>& gpr,
                               BufferPool& buf, const MachineConfig& mc) {
  ExecEffect fx;
  const uint64_t ew_penalty = mc.baseline_tensor_core ? kBaselineEwPenalty : 1;
  LaneKernels lanes;
  lanes.mode = mc.kernel_mode;

  switch (in.op) {
    case Opcode::LIN: {
      int64_t m, k, n;
      lin_dims(in.imm, m, k, n);
      const float* x = buf.f32_view(reg_addr(gpr, in.src1), m * k);
      const float* w = buf.f32_view(reg_addr(gpr, in.src2), k * n);
      float* d = buf.f32_view(reg_addr(gpr, in.dst), m * n);
      const bool acc = in.flags & kFlagLinAcc;
      // Per-output tree16 reduction over ascending k. Tile decomposition
      // does not change the arithmetic because chunk boundaries are
      // 16-aligned and the accumulator chains through the tree's third input.
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) {
          float init = acc ? d[i * n + j] : 0.0f;
          d[i * n + j] = dot_tree16(x + i * k, 1, w + j, n, k, init);
        }
      fx.tile_cycles = ceil_div<uint64_t>(m, 16) * ceil_div<uint64_t>(k, 16) *
                       ceil_div<uint64_t>(n, 16) * kMmTileCycles;
      fx.used_reduction_tree = true;
      break;
    }
    case Opcode::CONV: {
      int64_t l, d, k;
      conv_dims(in.imm, l, d, k);
      const float* x = buf.f32_view(reg_addr(gpr, in.src1), l * d);
      const float* w = buf.f32_view(reg_addr(gpr, in.src2), k * d);  // tap-major
      float* out = buf.f32_view(reg_addr(gpr, in.dst), l * d);
      for (int64_t t = 0; t < l; ++t)
        for (int64_t c = 0; c < d; ++c) {
          float acc = 0.0f;
          for (int64_t j = 0; j < k; ++j) {
            int64_t src = t - (k - 1) + j;
            float xv = src >= 0 ? x[src * d + c] : 0.0f;
            float prod = w[j * d + c] * xv;
            acc = j == 0 ? prod : acc + prod;
          }
          out[t * d + c] = acc;
        }
      fx.tile_cycles = static_cast<uint64_t>(2 * k - 1) *
                       ceil_div<uint64_t>(l * d, kEwTileElems) * kEwTileCycles *
                       ew_penalty;
      break;
    }
    case Opcode::NORM: {
      int64_t rows, d;
      int eps_creg;
      norm_dims(in.imm, rows, d, eps_creg);
      const float* x = buf.f32_view(reg_addr(gpr, in.src1), rows * d);
      const float* gamma = buf.f32_view(reg_addr(gpr, in.src2), d);
      const float* beta = buf.f32_view(reg_addr(gpr, in.src3), d);
      float* out = buf.f32_view(reg_addr(gpr, in.dst), rows * d);
      uint64_t cyc = 0;
      for (int64_t r = 0; r < rows; ++r)
        cyc += norm_unit(x + r * d, gamma, beta, d, prog.creg_f32(eps_creg),
                         out + r * d);
      fx.tile_cycles = cyc;
      // Dedicated serial unit: no RCU spreading.
      fx.compute_cycles = mc.issue_overhead + cyc;
      return fx;
    }
    case Opcode::EWM:
    case Opcode::EWA: {
      const bool mul = in.op == Opcode::EWM;
      if (in.flags & kFlagEwEinsum) {
        if (!mul) throw PlanError("einsum flag is only valid on EWM");
        int64_t p, q;
        EwPairMode mode;
        ew2_dims(in.imm, p, q, mode);
        float* out = buf.f32_view(reg_addr(gpr, in.dst), p * q);
        switch (mode) {
          case EwPairMode::Outer: {
            const float* a = buf.f32_view(reg_addr(gpr, in.src1), p);
            const float* b = buf.f32_view(reg_addr(gpr, in.src2), q);
            for (int64_t i = 0; i < p; ++i)
              for (int64_t j = 0; j < q; ++j) out[i * q + j] = a[i] * b[j];
            break;
          }
          case EwPairMode::RowScale: {
            const float* a = buf.f32_view(reg_addr(gpr, in.src1), p);
            const float* b = buf.f32_view(reg_addr(gpr, in.src2), p * q);
            for (int64_t i = 0; i < p; ++i)
              for (int64_t j = 0; j < q; ++j)
                out[i * q + j] = a[i] * b[i * q + j];
            break;
          }
          case EwPairMode::ColScale: {
            const float* a = buf.f32_view(reg_addr(gpr, in.src1), p * q);
            const float* b = buf.f32_view(reg_addr(gpr, in.src2), q);
            for (int64_t i = 0; i < p; ++i)
              for (int64_t j = 0; j < q; ++j)
                out[i * q + j] = a[i * q + j] * b[j];
            break;
          }
        }
        fx.tile_cycles =
            ceil_div<uint64_t>(p * q, kEwTileElems) * kEwTileCycles * ew_penalty;
      } else {
        int64_t count = ew_count(in.imm);
        const float* a = buf.f32_view(reg_addr(gpr, in.src1), count);
        float* out = buf.f32_view(reg_addr(gpr, in.dst), count);
        if (in.flags & kFlagEwScalar) {
          const float s = prog.creg_f32(in.src2);
          for (int64_t i = 0; i < count; ++i)
            out[i] = mul ? a[i] * s : a[i] + s;
        } else {
          const float* b = buf.f32_view(reg_addr(gpr, in.src2), count);
          for (int64_t i = 0; i < count; ++i)
            out[i] = mul ? a[i] * b[i] : a[i] + b[i];
        }
        fx.tile_cycles =
            ceil_div<uint64_t>(count, kEwTileElems) * kEwTileCycles * ew_penalty;
      }
      break;
    }
    case Opcode::EXP: {
      int64_t count;
      int creg_base;
      exp_fields(in.imm, count, creg_base);
      lanes.exp_params.a = prog.creg_f32(creg_base);
      lanes.exp_params.b = prog.creg_f32(creg_base + 1);
      lanes.exp_params.c = prog.creg_f32(creg_base + 2);
      const float* a = buf.f32_view(reg_addr(gpr, in.src1), count);
      float* out = buf.f32_view(reg_addr(gpr, in.dst), count);
      for (int64_t i = 0; i < count; ++i) out[i] = lanes.exp(a[i]);
      fx.tile_cycles =
          ceil_div<uint64_t>(count, kEwTileElems) * kExpTileCycles * ew_penalty;
      break;
    }
    case Opcode::SILU: {
      int64_t count = ew_count(in.imm);
      const float* a = buf.f32_view(reg_addr(gpr, in.src1), count);
      float* out = buf.f32_view(reg_addr(gpr, in.dst), count);
      for (int64_t i = 0; i < count; ++i) out[i] = lanes.silu(a[i]);
      fx.tile_cycles =
          ceil_div<uint64_t>(count, kEwTileElems) * kSiluTileCycles * ew_penalty;
      break;
    }
    case Opcode::LOAD:
    case Opcode::STORE:
      throw PlanError("memory instruction routed to the compute engine");
  }
  fx.compute_cycles =
      mc.issue_overhead + ceil_div(fx.tile_cycles, static_cast<uint64_t>(mc.n_rcus));
  return fx;
}

}  // namespace marca
