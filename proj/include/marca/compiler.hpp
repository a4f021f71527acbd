#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "marca/approx.hpp"
#include "marca/config.hpp"
#include "marca/graph.hpp"
#include "marca/isa.hpp"
#include "marca/memory.hpp"
#include "marca/weights.hpp"

namespace marca {

enum class Residency { Transient, ScanResident };

struct Region {
  uint64_t offset = 0;
  uint64_t size = 0;
  std::string tensor;
  Residency residency = Residency::Transient;
  int64_t live_from = 0;  // first instruction index using the region
  int64_t live_to = -1;   // last one (inclusive)
};

struct HbmSymbol {
  uint64_t addr = 0;
  uint64_t bytes = 0;
};

struct BufferPlan {
  uint64_t capacity = kBufferBytes;
  uint64_t resident_bytes = 0;      // scan-resident area at the bottom
  uint64_t read_buffer_extent = 0;  // capacity - resident_bytes
  uint64_t ew2_reserve = 0;         // vector-operand pocket inside the extent
  uint64_t hbm_image_bytes = 0;
  std::vector<Region> regions;
  std::map<std::string, HbmSymbol> hbm;  // ordered => deterministic output
  // Per-instruction metadata, parallel to Program::code.
  std::vector<std::string> instr_node;    // producing graph node
  std::vector<std::string> instr_symbol;  // LOAD/STORE target symbol, else ""
  std::vector<TrafficClass> instr_class;
};

std::string plan_to_json(const BufferPlan& p);
std::string plan_summary(const BufferPlan& p);

struct LowerFlags {
  bool intra_bm = true;
  bool inter_bm = true;
};

struct CompiledModel {
  Program program;
  BufferPlan plan;
  std::vector<uint8_t> hbm_image;  // weights + zero page; activations zeroed
};

// Tiling decision for one linear node given the free working-buffer bytes.
// Instruction counts describe the emitted schedule (x loaded from HBM).
struct TilePlan {
  bool whole_op = false;
  int64_t tile_m = 0, tile_k = 0, tile_n = 0;
  int64_t loads = 0, lins = 0, stores = 0;
  uint64_t weight_bytes_loaded = 0;
};
TilePlan plan_intra_linear(int64_t m, int64_t k, int64_t n, uint64_t budget,
                           bool intra_bm);

// Scan residency choice: candidates ordered by HBM traffic saved (descending,
// then declaration order), admitted greedily under the resident budget.
struct ResidencyDecision {
  std::string tensor;  // "abar", "dbx", "h", "xa"
  uint64_t bytes = 0;
  uint64_t traffic_saved = 0;
  bool admitted = false;
};
std::vector<ResidencyDecision> plan_inter_residency(const MambaConfig& cfg,
                                                    bool inter_bm,
                                                    uint64_t budget);

// Fraction of the buffer reserved for scan residents when inter-BM is on.
constexpr uint64_t kResidentBudgetNum = 3;
constexpr uint64_t kResidentBudgetDen = 4;

// Lowers the whole model to straight-line code (the scan fully unrolled).
// Deterministic for a given (config, flags); the weight image is part of the
// result, activations are filled in by the simulator.
CompiledModel lower(const MambaConfig& cfg, const MambaWeights& w,
                    LowerFlags flags, const ExpParams& exp_params,
                    uint64_t instr_cap = 10'000'000);

}  // namespace marca
