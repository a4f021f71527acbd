#pragma once

#include <string>

#include "marca/isa.hpp"

namespace marca {

// Text syntax, one instruction per line:
//   MNEM[.tag[.tag]] rD, rS1, rS2, rS3, #imm
//   ; comment to end of line
//   .creg cN = 0x3F800000      raw bits, or a float literal like 1.5
//   somewhere:                 label, value = instruction byte offset
// Trailing operands may be omitted (default register r0 / imm 0); imm takes
// a '#'-prefixed integer or a label name. Flag tags: acc (LIN), ein (EWM),
// s (scalar src2 = CReg), generic f1/f2. The register-set form of LOAD is
// spelled SETR.
Program assemble(const std::string& text);
std::string disassemble(const Program& p);

}  // namespace marca
