#include "marca/isa.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace marca {

const char* opcode_name(Opcode op) {
  switch (op) {
    case Opcode::LIN: return "LIN";
    case Opcode::CONV: return "CONV";
    case Opcode::NORM: return "NORM";
    case Opcode::EWM: return "EWM";
    case Opcode::EWA: return "EWA";
    case Opcode::EXP: return "EXP";
    case Opcode::SILU: return "SILU";
    case Opcode::LOAD: return "LOAD";
    case Opcode::STORE: return "STORE";
  }
  return "?";
}

static void check_field(uint64_t v, uint64_t max, const char* name) {
  if (v > max)
    throw EncodeError(std::string("instruction field overflow: ") + name + "=" +
                      std::to_string(v) + " max=" + std::to_string(max));
}

uint64_t encode(const Instruction& in) {
  check_field(static_cast<uint64_t>(in.op), kNumOpcodes - 1, "opcode");
  check_field(in.dst, 15, "dst");
  check_field(in.src1, 15, "src1");
  check_field(in.src2, 15, "src2");
  check_field(in.src3, 15, "src3");
  check_field(in.flags, 3, "flags");
  check_field(in.imm, (1ull << 40) - 1, "imm");
  return (static_cast<uint64_t>(in.op) << 58) | (static_cast<uint64_t>(in.dst) << 54) |
         (static_cast<uint64_t>(in.src1) << 50) | (static_cast<uint64_t>(in.src2) << 46) |
         (static_cast<uint64_t>(in.src3) << 42) | (static_cast<uint64_t>(in.flags) << 40) |
         in.imm;
}

Instruction decode(uint64_t word) {
  Instruction in;
  uint64_t op = word >> 58;
  if (op >= kNumOpcodes)
    throw EncodeError("illegal instruction: reserved opcode " + std::to_string(op));
  in.op = static_cast<Opcode>(op);
  in.dst = static_cast<uint8_t>((word >> 54) & 0xF);
  in.src1 = static_cast<uint8_t>((word >> 50) & 0xF);
  in.src2 = static_cast<uint8_t>((word >> 46) & 0xF);
  in.src3 = static_cast<uint8_t>((word >> 42) & 0xF);
  in.flags = static_cast<uint8_t>((word >> 40) & 0x3);
  in.imm = word & ((1ull << 40) - 1);
  return in;
}

uint64_t lin_imm(int64_t m, int64_t k, int64_t n) {
  check_field(static_cast<uint64_t>(m), 0x1FFF, "lin.m");
  check_field(static_cast<uint64_t>(k), 0x1FFF, "lin.k");
  check_field(static_cast<uint64_t>(n), 0x1FFF, "lin.n");
  return static_cast<uint64_t>(m) | (static_cast<uint64_t>(k) << 13) |
         (static_cast<uint64_t>(n) << 26);
}

void lin_dims(uint64_t imm, int64_t& m, int64_t& k, int64_t& n) {
  m = static_cast<int64_t>(imm & 0x1FFF);
  k = static_cast<int64_t>((imm >> 13) & 0x1FFF);
  n = static_cast<int64_t>((imm >> 26) & 0x1FFF);
}

uint64_t conv_imm(int64_t l, int64_t d, int64_t k) {
  check_field(static_cast<uint64_t>(l), 0xFFFF, "conv.l");
  check_field(static_cast<uint64_t>(d), 0xFFFF, "conv.d");
  check_field(static_cast<uint64_t>(k), 0xFF, "conv.k");
  return static_cast<uint64_t>(l) | (static_cast<uint64_t>(d) << 16) |
         (static_cast<uint64_t>(k) << 32);
}

void conv_dims(uint64_t imm, int64_t& l, int64_t& d, int64_t& k) {
  l = static_cast<int64_t>(imm & 0xFFFF);
  d = static_cast<int64_t>((imm >> 16) & 0xFFFF);
  k = static_cast<int64_t>((imm >> 32) & 0xFF);
}

uint64_t norm_imm(int64_t rows, int64_t d, int eps_creg) {
  check_field(static_cast<uint64_t>(rows), 0xFFFFF, "norm.rows");
  check_field(static_cast<uint64_t>(d), 0xFFFF, "norm.d");
  check_field(static_cast<uint64_t>(eps_creg), 0xF, "norm.eps_creg");
  return static_cast<uint64_t>(rows) | (static_cast<uint64_t>(d) << 20) |
         (static_cast<uint64_t>(eps_creg) << 36);
}

void norm_dims(uint64_t imm, int64_t& rows, int64_t& d, int& eps_creg) {
  rows = static_cast<int64_t>(imm & 0xFFFFF);
  d = static_cast<int64_t>((imm >> 20) & 0xFFFF);
  eps_creg = static_cast<int>((imm >> 36) & 0xF);
}

uint64_t ew_imm(int64_t count) {
  check_field(static_cast<uint64_t>(count), (1ull << 36) - 1, "ew.count");
  return static_cast<uint64_t>(count);
}

int64_t ew_count(uint64_t imm) { return static_cast<int64_t>(imm & ((1ull << 36) - 1)); }

uint64_t ew2_imm(int64_t p, int64_t q, EwPairMode mode) {
  check_field(static_cast<uint64_t>(p), 0x3FFFF, "ew2.p");
  check_field(static_cast<uint64_t>(q), 0x3FFFF, "ew2.q");
  return static_cast<uint64_t>(p) | (static_cast<uint64_t>(q) << 18) |
         (static_cast<uint64_t>(mode) << 36);
}

void ew2_dims(uint64_t imm, int64_t& p, int64_t& q, EwPairMode& mode) {
  p = static_cast<int64_t>(imm & 0x3FFFF);
  q = static_cast<int64_t>((imm >> 18) & 0x3FFFF);
  mode = static_cast<EwPairMode>((imm >> 36) & 0x3);
}

uint64_t exp_imm(int64_t count, int creg_base) {
  check_field(static_cast<uint64_t>(count), (1ull << 36) - 1, "exp.count");
  check_field(static_cast<uint64_t>(creg_base), 13, "exp.creg_base");
  return static_cast<uint64_t>(count) | (static_cast<uint64_t>(creg_base) << 36);
}

void exp_fields(uint64_t imm, int64_t& count, int& creg_base) {
  count = static_cast<int64_t>(imm & ((1ull << 36) - 1));
  creg_base = static_cast<int>((imm >> 36) & 0xF);
}

void Program::set_creg_f32(int i, float v) {
  creg_init.at(static_cast<size_t>(i)) = std::bit_cast<uint32_t>(v);
}

float Program::creg_f32(int i) const {
  return std::bit_cast<float>(creg_init.at(static_cast<size_t>(i)));
}

static constexpr char kMagic[4] = {'M', 'R', 'C', 'A'};
static constexpr uint16_t kVersion = 1;

template <typename T>
static void put(std::ofstream& f, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));  // little-endian host
  f.write(buf, sizeof(T));
}

template <typename T>
static T get(std::ifstream& f) {
  char buf[sizeof(T)];
  f.read(buf, sizeof(T));
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

void save_program(const Program& p, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for write: " + path);
  f.write(kMagic, 4);
  put<uint16_t>(f, kVersion);
  for (uint32_t c : p.creg_init) put<uint32_t>(f, c);
  put<uint32_t>(f, static_cast<uint32_t>(p.code.size()));
  for (const Instruction& in : p.code) put<uint64_t>(f, encode(in));
  if (!f) throw IoError("short write: " + path);
}

Program load_program(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kMagic, 4) != 0)
    throw IoError("bad magic, not a program file: " + path);
  uint16_t ver = get<uint16_t>(f);
  if (ver != kVersion)
    throw IoError("unsupported program version " + std::to_string(ver));
  Program p;
  for (uint32_t& c : p.creg_init) c = get<uint32_t>(f);
  uint32_t count = get<uint32_t>(f);
  if (!f) throw IoError("truncated program header: " + path);
  p.code.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    uint64_t w = get<uint64_t>(f);
    if (!f) throw IoError("truncated program body: " + path);
    p.code.push_back(decode(w));
  }
  return p;
}

// Which register fields an instruction reads/writes, for def-before-use.
struct RegUse {
  bool reads[4] = {false, false, false, false};  // dst, src1, src2, src3
  bool writes_dst = false;
};

static RegUse reg_use(const Instruction& in) {
  RegUse u;
  switch (in.op) {
    case Opcode::LIN:
    case Opcode::CONV:
      u.reads[0] = u.reads[1] = u.reads[2] = true;
      break;
    case Opcode::NORM:
      u.reads[0] = u.reads[1] = u.reads[2] = u.reads[3] = true;
      break;
    case Opcode::EWM:
    case Opcode::EWA:
      u.reads[0] = u.reads[1] = true;
      u.reads[2] = !(in.flags & kFlagEwScalar);  // scalar mode src2 is a creg
      break;
    case Opcode::EXP:
    case Opcode::SILU:
      u.reads[0] = u.reads[1] = true;
      break;
    case Opcode::LOAD:
      if (in.flags & kFlagLoadSetReg) {
        u.writes_dst = true;
      } else {
        u.reads[0] = u.reads[1] = true;
      }
      break;
    case Opcode::STORE:
      u.reads[0] = u.reads[1] = true;
      break;
  }
  return u;
}

void validate_program(const Program& p) {
  bool written[16] = {};
  for (size_t i = 0; i < p.code.size(); ++i) {
    const Instruction& in = p.code[i];
    RegUse u = reg_use(in);
    uint8_t regs[4] = {in.dst, in.src1, in.src2, in.src3};
    for (int f = 0; f < 4; ++f)
      if (u.reads[f] && !written[regs[f]])
        throw EncodeError("instruction " + std::to_string(i) + " (" +
                          opcode_name(in.op) + "): register r" +
                          std::to_string(regs[f]) + " read before write");
    if (u.writes_dst) written[in.dst] = true;
  }
}

}  // namespace marca
