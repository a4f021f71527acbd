#pragma once

#include <cstdint>

#include "marca/isa.hpp"
#include "marca/kernels.hpp"
#include "marca/memory.hpp"

namespace marca {

constexpr int kNumRcus = 32;
constexpr int kRpeDim = 16;              // 16x16 lanes per RCU
constexpr int kEwTileElems = 256;        // one full lane array
constexpr uint64_t kMmTileCycles = 16;   // 16 tree passes per 16^3 tile
constexpr uint64_t kEwTileCycles = 1;
constexpr uint64_t kExpTileCycles = 4;
constexpr uint64_t kSiluTileCycles = 4;  // lock-step worst branch
constexpr uint64_t kIssueOverheadCycles = 2;
// In tensor-core baseline mode element-wise work is forced through the
// reduction path, leaving one valid lane column per pass.
constexpr uint64_t kBaselineEwPenalty = 16;

struct MachineConfig {
  int n_rcus = kNumRcus;
  uint64_t issue_overhead = kIssueOverheadCycles;
  bool baseline_tensor_core = false;
  KernelMode kernel_mode = KernelMode::Approx;
};

// --- RCU-scale helpers, exposed for tests. Each returns its tile cycles. ---

// One reduction-tree slice: balanced pairwise sum of 16 lanes, accumulator
// folded into the final adder.
float reduce_tree_slice(const float v[16], float acc);

// acc(16x16) += a(16x16) x b(16x16), per-output tree16 reduction order.
uint64_t rcu_mm(const float* a, const float* b, float* acc);

// Lane-wise add/mul on up to 256 lanes.
uint64_t rcu_ew(bool mul, const float* a, const float* b, float* out, int n);

// Lane-wise exponential / SiLU; p selects exact or shift-unit kernels.
uint64_t rcu_exp(const float* in, float* out, int n, const LaneKernels& k);
uint64_t rcu_silu(const float* in, float* out, int n, const LaneKernels& k);

// Normalization unit: one row, three passes at 16 elements each per cycle.
uint64_t norm_unit(const float* x, const float* gamma, const float* beta,
                   int64_t d, float eps, float* out);

struct ExecEffect {
  uint64_t tile_cycles = 0;    // charged RCU (or norm-unit) work
  uint64_t compute_cycles = 0; // issue_overhead + ceil(tile_cycles / n_rcus)
  bool used_reduction_tree = false;
};

// Functional + timing model of one compute instruction against the on-chip
// buffer. LOAD/STORE/SETR belong to the memory path and are rejected here.
// Work is split into 16x16 tiles spread round-robin over the RCUs; the
// normalization unit is a separate serial pipeline (no RCU parallelism).
// GPRs hold buffer byte addresses; CRegs come from the program header.
ExecEffect execute_instruction(const Instruction& in, const Program& prog,
                               const std::array<uint32_t, 16>& gpr,
                               BufferPool& buf, const MachineConfig& mc);

}  // namespace marca
