#pragma once

#include <cstdint>
#include <vector>

#include "marca/compiler.hpp"
#include "marca/engine.hpp"
#include "marca/memory.hpp"
#include "marca/tensor.hpp"

namespace marca {

struct SimOptions {
  MachineConfig machine;
  // Plain phase sum instead of compute/prefetch overlap.
  bool strict_serial = false;
  bool collect_trace = false;
  // Verify that every buffer access of every instruction falls inside a
  // region the plan declares live at that point.
  bool check_residency = true;
};

struct InstrTrace {
  uint64_t index = 0;
  Opcode op = Opcode::LIN;
  uint64_t tile_cycles = 0;
  uint64_t compute_cycles = 0;
  uint64_t memory_cycles = 0;
  uint64_t charged_cycles = 0;  // contribution to the program total
};

struct SimResult {
  TrafficStats stats;
  EnergyBreakdown energy;
  Tensor output;  // contents of the "out" symbol, [seq_len, d_model]
  std::vector<InstrTrace> trace;
};

// Runs a lowered model end to end: copies the HBM image, writes `input` into
// the "x_in" symbol, executes every instruction (functional + timing), and
// reads the "out" symbol back.
//
// Timing: LOAD batches (SETRs transparent) accumulate into a prefetch window
// absorbed by the next compute instruction, which is charged
// max(compute, pending prefetch); STOREs are charged standalone. With
// strict_serial every instruction is charged its own phase, no overlap.
SimResult simulate(const CompiledModel& cm, const MambaConfig& cfg,
                   const Tensor& input, const SimOptions& opt = {});

}  // namespace marca
