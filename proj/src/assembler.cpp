#include "marca/assembler.hpp"

#include <bit>
#include <cctype>
#include <map>
#include <sstream>
#include <vector>

namespace marca {

namespace {

struct Line {
  int number;
  std::string text;
};

[[noreturn]] void fail(int line, const std::string& msg) {
  throw AsmError("line " + std::to_string(line) + ": " + msg);
}

std::string strip(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_operands(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == ',') {
      out.push_back(strip(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  std::string last = strip(cur);
  if (!last.empty() || !out.empty()) out.push_back(last);
  return out;
}

bool parse_opcode(const std::string& name, Opcode& op) {
  for (int i = 0; i < kNumOpcodes; ++i) {
    if (name == opcode_name(static_cast<Opcode>(i))) {
      op = static_cast<Opcode>(i);
      return true;
    }
  }
  return false;
}

uint8_t parse_reg(const std::string& tok, int line) {
  if (tok.size() < 2 || (tok[0] != 'r' && tok[0] != 'c'))
    fail(line, "expected register, got '" + tok + "'");
  int v = 0;
  for (size_t i = 1; i < tok.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(tok[i])))
      fail(line, "bad register '" + tok + "'");
    v = v * 10 + (tok[i] - '0');
  }
  if (v > 15) fail(line, "register index out of range: '" + tok + "'");
  return static_cast<uint8_t>(v);
}

uint64_t parse_uint(const std::string& tok, int line) {
  try {
    size_t pos = 0;
    unsigned long long v =
        std::stoull(tok, &pos, tok.rfind("0x", 0) == 0 ? 16 : 10);
    if (pos != tok.size()) fail(line, "bad integer '" + tok + "'");
    return v;
  } catch (const AsmError&) {
    throw;
  } catch (const std::exception&) {
    fail(line, "bad integer '" + tok + "'");
  }
}

uint32_t parse_creg_value(const std::string& tok, int line) {
  if (tok.rfind("0x", 0) == 0) return static_cast<uint32_t>(parse_uint(tok, line));
  std::string t = tok;
  if (!t.empty() && (t.back() == 'f' || t.back() == 'F')) t.pop_back();
  try {
    size_t pos = 0;
    float f = std::stof(t, &pos);
    if (pos != t.size()) fail(line, "bad creg value '" + tok + "'");
    return std::bit_cast<uint32_t>(f);
  } catch (const AsmError&) {
    throw;
  } catch (const std::exception&) {
    fail(line, "bad creg value '" + tok + "'");
  }
}

}  // namespace

Program assemble(const std::string& text) {
  std::vector<Line> lines;
  {
    std::istringstream in(text);
    std::string raw;
    int num = 0;
    while (std::getline(in, raw)) {
      ++num;
      size_t sc = raw.find(';');
      if (sc != std::string::npos) raw.erase(sc);
      std::string s = strip(raw);
      if (!s.empty()) lines.push_back({num, s});
    }
  }

  // First pass: label byte offsets (8 bytes per instruction word).
  std::map<std::string, uint64_t> symbols;
  {
    uint64_t index = 0;
    for (const Line& ln : lines) {
      if (ln.text[0] == '.') continue;
      if (ln.text.back() == ':') {
        std::string name = strip(ln.text.substr(0, ln.text.size() - 1));
        if (name.empty()) fail(ln.number, "empty label");
        if (symbols.count(name)) fail(ln.number, "duplicate label '" + name + "'");
        symbols[name] = index * 8;
      } else {
        ++index;
      }
    }
  }

  Program p;
  for (const Line& ln : lines) {
    if (ln.text.back() == ':') continue;
    if (ln.text[0] == '.') {
      std::istringstream ds(ln.text);
      std::string dir, regtok, eq, val;
      ds >> dir >> regtok >> eq >> val;
      if (dir != ".creg" || eq != "=" || val.empty())
        fail(ln.number, "bad directive, expected .creg cN = value");
      uint8_t idx = parse_reg(regtok, ln.number);
      p.creg_init[idx] = parse_creg_value(val, ln.number);
      continue;
    }

    size_t sp = ln.text.find_first_of(" \t");
    std::string head = ln.text.substr(0, sp);
    std::string rest = sp == std::string::npos ? "" : strip(ln.text.substr(sp));

    Instruction in;
    std::vector<std::string> tags;
    {
      std::istringstream hs(head);
      std::string tok;
      std::getline(hs, tok, '.');
      if (tok == "SETR") {
        in.op = Opcode::LOAD;
        in.flags |= kFlagLoadSetReg;
      } else if (!parse_opcode(tok, in.op)) {
        fail(ln.number, "unknown mnemonic '" + tok + "'");
      }
      while (std::getline(hs, tok, '.')) tags.push_back(tok);
    }
    for (const std::string& t : tags) {
      if (t == "acc" || t == "ein" || t == "f1")
        in.flags |= 1;
      else if (t == "s" || t == "f2")
        in.flags |= 2;
      else
        fail(ln.number, "unknown flag tag '." + t + "'");
    }

    std::vector<std::string> ops = rest.empty() ? std::vector<std::string>{}
                                                : split_operands(rest);
    int regslot = 0;
    uint8_t* slots[4] = {&in.dst, &in.src1, &in.src2, &in.src3};
    for (const std::string& tok : ops) {
      if (tok.empty()) fail(ln.number, "empty operand");
      if (tok[0] == '#') {
        std::string v = strip(tok.substr(1));
        if (v.empty()) fail(ln.number, "empty immediate");
        if (std::isdigit(static_cast<unsigned char>(v[0]))) {
          in.imm = parse_uint(v, ln.number);
        } else {
          auto it = symbols.find(v);
          if (it == symbols.end()) fail(ln.number, "undefined label '" + v + "'");
          in.imm = it->second;
        }
      } else {
        if (regslot >= 4) fail(ln.number, "too many register operands");
        *slots[regslot++] = parse_reg(tok, ln.number);
      }
    }
    try {
      encode(in);  // field range check with source location
    } catch (const EncodeError& e) {
      fail(ln.number, e.what());
    }
    p.code.push_back(in);
  }
  return p;
}

std::string disassemble(const Program& p) {
  std::ostringstream out;
  for (int i = 0; i < 16; ++i) {
    if (p.creg_init[static_cast<size_t>(i)] != 0) {
      char buf[16];
      std::snprintf(buf, sizeof(buf), "0x%08X", p.creg_init[static_cast<size_t>(i)]);
      out << ".creg c" << i << " = " << buf << " ; = "
          << p.creg_f32(i) << "\n";
    }
  }
  for (size_t idx = 0; idx < p.code.size(); ++idx) {
    const Instruction& in = p.code[idx];
    bool setr = in.op == Opcode::LOAD && (in.flags & kFlagLoadSetReg);
    std::string mnem = setr ? "SETR" : opcode_name(in.op);
    uint8_t flags = setr ? (in.flags & ~kFlagLoadSetReg) : in.flags;
    if (flags & 1) mnem += in.op == Opcode::LIN ? ".acc" : in.op == Opcode::EWM ? ".ein" : ".f1";
    if (flags & 2)
      mnem += (in.op == Opcode::EWM || in.op == Opcode::EWA) ? ".s" : ".f2";

    bool scalar_src2 =
        (in.op == Opcode::EWM || in.op == Opcode::EWA) && (in.flags & kFlagEwScalar);
    out << mnem << " r" << static_cast<int>(in.dst) << ", r" << static_cast<int>(in.src1)
        << ", " << (scalar_src2 ? "c" : "r") << static_cast<int>(in.src2) << ", r"
        << static_cast<int>(in.src3) << ", #" << in.imm;
    if (idx < p.labels.size() && !p.labels[idx].empty()) out << " ; " << p.labels[idx];
    out << "\n";
  }
  return out.str();
}

}  // namespace marca
