#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "marca/common.hpp"

namespace marca {

// 64-bit instruction word:
//   [63:58] opcode  [57:54] dst  [53:50] src1  [49:46] src2  [45:42] src3
//   [41:40] flags   [39:0] imm
// Register operands index 16 GPRs holding byte addresses; constants live in
// 16 CRegs initialized from the program header.
enum class Opcode : uint8_t {
  LIN = 0,
  CONV = 1,
  NORM = 2,
  EWM = 3,
  EWA = 4,
  EXP = 5,
  SILU = 6,
  LOAD = 7,
  STORE = 8,
};
constexpr int kNumOpcodes = 9;
const char* opcode_name(Opcode op);

// Flag bits. Meaning depends on the opcode:
//   bit0: LIN accumulate into dst | EWM einsum (EW2) mode | LOAD register-set
//         form (assembly mnemonic SETR: gpr[dst] = imm, no memory traffic)
//   bit1: EWM/EWA scalar-broadcast mode, src2 field names a CReg
constexpr uint8_t kFlagLinAcc = 1;
constexpr uint8_t kFlagEwEinsum = 1;
constexpr uint8_t kFlagLoadSetReg = 1;
constexpr uint8_t kFlagEwScalar = 2;

// EW2 einsum flavors (imm mode field):
//   0: out[p,q] = src1[p] * src2[q]      (outer product)
//   1: out[p,q] = src1[p] * src2[p,q]    (row scale, dt x A)
//   2: out[p,q] = src1[p,q] * src2[q]    (column-vector scale, conv taps)
enum class EwPairMode : uint8_t { Outer = 0, RowScale = 1, ColScale = 2 };

struct Instruction {
  Opcode op = Opcode::LIN;
  uint8_t dst = 0;
  uint8_t src1 = 0;
  uint8_t src2 = 0;
  uint8_t src3 = 0;
  uint8_t flags = 0;
  uint64_t imm = 0;

  bool operator==(const Instruction&) const = default;
};

uint64_t encode(const Instruction& in);   // EncodeError on field overflow
Instruction decode(uint64_t word);        // EncodeError on reserved opcode

// Per-opcode imm packing helpers.
uint64_t lin_imm(int64_t m, int64_t k, int64_t n);           // 13 bits each
void lin_dims(uint64_t imm, int64_t& m, int64_t& k, int64_t& n);
uint64_t conv_imm(int64_t l, int64_t d, int64_t k);          // 16/16/8 bits
void conv_dims(uint64_t imm, int64_t& l, int64_t& d, int64_t& k);
uint64_t norm_imm(int64_t rows, int64_t d, int eps_creg);    // 20/16/4 bits
void norm_dims(uint64_t imm, int64_t& rows, int64_t& d, int& eps_creg);
uint64_t ew_imm(int64_t count);                              // 36 bits
int64_t ew_count(uint64_t imm);
uint64_t ew2_imm(int64_t p, int64_t q, EwPairMode mode);     // 18/18/2 bits
void ew2_dims(uint64_t imm, int64_t& p, int64_t& q, EwPairMode& mode);
uint64_t exp_imm(int64_t count, int creg_base);              // 36/4 bits
void exp_fields(uint64_t imm, int64_t& count, int& creg_base);

struct Program {
  std::vector<Instruction> code;
  std::array<uint32_t, 16> creg_init{};  // raw 32-bit patterns
  std::vector<std::string> labels;       // per-instruction source labels, optional

  void set_creg_f32(int i, float v);
  float creg_f32(int i) const;
};

// Binary container: magic "MRCA", u16 version, 16 u32 creg words, u32
// instruction count, packed 64-bit little-endian words. Labels are
// compile-time metadata and are not persisted.
void save_program(const Program& p, const std::string& path);
Program load_program(const std::string& path);

// Def-before-use over the GPR file: every register an instruction reads must
// have been written (SETR) earlier. Throws EncodeError naming the offending
// instruction.
void validate_program(const Program& p);

}  // namespace marca
