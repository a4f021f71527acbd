#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "marca/common.hpp"
#include "marca/graph.hpp"
#include "marca/isa.hpp"

namespace marca {

constexpr uint64_t kBufferBytes = 24ull << 20;   // on-chip buffer capacity
constexpr uint64_t kHbmBytesPerCycle = 256;      // off-chip bandwidth
constexpr double kHbmPjPerBit = 7.0;             // off-chip access energy
constexpr double kBufferPjPerByte = 1.0;         // on-chip access energy
constexpr double kPePjPerOp = 0.8;               // per MAC / ALU op
constexpr int kPeOpsPerTileCycle = 256;          // 16x16 lanes busy per cycle

// Cycles to move `bytes` over the HBM channel.
inline uint64_t hbm_transfer_cycles(uint64_t bytes) {
  return ceil_div(bytes, kHbmBytesPerCycle);
}

// Decoupled access/execute: an instruction's latency is the slower of its
// compute and its memory phase.
inline uint64_t instruction_timing(uint64_t compute_cycles,
                                   uint64_t memory_cycles) {
  return compute_cycles > memory_cycles ? compute_cycles : memory_cycles;
}

struct EnergyBreakdown {
  double hbm_pj = 0.0;
  double buffer_pj = 0.0;
  double pe_pj = 0.0;
  double total() const { return hbm_pj + buffer_pj + pe_pj; }
};

inline EnergyBreakdown energy_model(uint64_t hbm_bytes, uint64_t buffer_bytes,
                                    uint64_t pe_ops) {
  EnergyBreakdown e;
  e.hbm_pj = static_cast<double>(hbm_bytes) * 8.0 * kHbmPjPerBit;
  e.buffer_pj = static_cast<double>(buffer_bytes) * kBufferPjPerByte;
  e.pe_pj = static_cast<double>(pe_ops) * kPePjPerOp;
  return e;
}

// Flat on-chip buffer. Loads/stores are byte-addressed, float-aligned.
class BufferPool {
 public:
  explicit BufferPool(uint64_t capacity = kBufferBytes);
  uint64_t capacity() const { return bytes_.size(); }
  void write_bytes(uint64_t addr, const uint8_t* src, uint64_t n);
  void read_bytes(uint64_t addr, uint8_t* dst, uint64_t n) const;
  float load_f32(uint64_t addr) const;
  void store_f32(uint64_t addr, float v);
  void fill(uint8_t v);
  // Bounds- and alignment-checked direct views for tile kernels.
  const float* f32_view(uint64_t addr, uint64_t count) const;
  float* f32_view(uint64_t addr, uint64_t count);

 private:
  void check(uint64_t addr, uint64_t n) const;
  std::vector<uint8_t> bytes_;
};

// Simulated HBM backing store.
class Hbm {
 public:
  explicit Hbm(uint64_t capacity);
  uint64_t capacity() const { return bytes_.size(); }
  void write_bytes(uint64_t addr, const uint8_t* src, uint64_t n);
  void read_bytes(uint64_t addr, uint8_t* dst, uint64_t n) const;
  std::vector<uint8_t>& raw() { return bytes_; }
  const std::vector<uint8_t>& raw() const { return bytes_; }

 private:
  void check(uint64_t addr, uint64_t n) const;
  std::vector<uint8_t> bytes_;
};

struct OpcodeStats {
  uint64_t count = 0;
  uint64_t tile_cycles = 0;
  uint64_t compute_cycles = 0;
  uint64_t memory_cycles = 0;
  uint64_t total_cycles = 0;
};

struct TrafficStats {
  std::array<OpcodeStats, kNumOpcodes> by_opcode{};
  std::array<uint64_t, 5> cycles_by_class{};  // indexed by TrafficClass
  std::map<std::string, uint64_t> hbm_read_by_symbol;
  std::map<std::string, uint64_t> hbm_write_by_symbol;
  uint64_t hbm_read_bytes = 0;
  uint64_t hbm_write_bytes = 0;
  uint64_t buffer_bytes = 0;  // on-chip bytes moved (loads + stores + lanes)
  uint64_t pe_ops = 0;
  uint64_t cycles_total = 0;
  uint64_t instructions = 0;

  uint64_t hbm_symbol_bytes(const std::string& sym) const;
};

}  // namespace marca
