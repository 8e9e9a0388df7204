#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fan/isa.hpp"

namespace fan {

struct Violation {
  std::size_t index;
  std::string message;
};

struct VerifierReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
};

// Static admission: known opcodes, register fields <= 10, no writes to r10,
// jump targets inside the program, CALL indices inside the host table, and a
// terminal EXIT or JA.
inline VerifierReport verify(const Program& program, std::size_t host_table_size) {
  VerifierReport report;
  auto fail = [&](std::size_t i, std::string msg) {
    report.violations.push_back({i, std::move(msg)});
  };

  const std::size_t n = program.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Instruction& insn = program.instructions[i];
    const OpcodeInfo* info = find_opcode(insn.opcode);
    if (!info) {
      fail(i, "unknown opcode");
      continue;
    }
    using K = OpcodeInfo::Kind;
    if (insn.dst >= kNumRegisters || insn.src >= kNumRegisters) {
      fail(i, "register index out of range");
      continue;
    }
    bool writes_dst = info->kind == K::AluImm || info->kind == K::AluReg ||
                      info->kind == K::Load;
    if (writes_dst && insn.dst == 10) fail(i, "write to r10");

    bool is_jump = info->op == Opcode::Ja || info->kind == K::JmpImm ||
                   info->kind == K::JmpReg;
    if (is_jump) {
      // Target = index of the next instruction + offset.
      std::int64_t target = static_cast<std::int64_t>(i) + 1 + insn.offset;
      if (target < 0 || target >= static_cast<std::int64_t>(n))
        fail(i, "jump target out of bounds");
    }
    if (info->op == Opcode::Call) {
      if (insn.imm < 0 || static_cast<std::size_t>(insn.imm) >= host_table_size)
        fail(i, "invalid host index");
    }
  }

  if (n > 0) {
    Opcode last = program.instructions[n - 1].op();
    if (last != Opcode::Exit && last != Opcode::Ja)
      fail(n - 1, "final instruction must be exit or ja");
  }
  return report;
}

}  // namespace fan
