#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "fan/isa.hpp"

namespace fan {

// Renders one mnemonic per line; jump offsets become synthesized labels so
// the output reassembles to identical bytes.
inline std::string disassemble(const Program& program) {
  using K = OpcodeInfo::Kind;
  const std::size_t n = program.size();

  // Collect in-range jump targets; out-of-range offsets (verifier-invalid
  // programs still disassemble) fall back to numeric offsets.
  std::map<std::size_t, std::string> labels;
  for (std::size_t i = 0; i < n; ++i) {
    const Instruction& insn = program.instructions[i];
    const OpcodeInfo* info = find_opcode(insn.opcode);
    if (!info) continue;
    bool is_jump = info->op == Opcode::Ja || info->kind == K::JmpImm ||
                   info->kind == K::JmpReg;
    if (!is_jump) continue;
    std::int64_t target = static_cast<std::int64_t>(i) + 1 + insn.offset;
    if (target >= 0 && target < static_cast<std::int64_t>(n))
      labels.emplace(static_cast<std::size_t>(target), "");
  }
  std::size_t label_idx = 0;
  for (auto& [pos, name] : labels) name = "L" + std::to_string(label_idx++);

  auto jump_operand = [&](std::size_t i, std::int16_t offset) -> std::string {
    std::int64_t target = static_cast<std::int64_t>(i) + 1 + offset;
    if (target >= 0 && target < static_cast<std::int64_t>(n))
      return labels.at(static_cast<std::size_t>(target));
    return (offset >= 0 ? "+" : "") + std::to_string(offset);
  };

  std::ostringstream out;
  for (std::size_t i = 0; i < n; ++i) {
    const Instruction& insn = program.instructions[i];
    if (auto it = labels.find(i); it != labels.end()) out << it->second << ":\n";
    const OpcodeInfo* info = find_opcode(insn.opcode);
    if (!info) {
      out << "raw 0x" << to_hex(std::span<const std::uint8_t>(&insn.opcode, 1)) << ", "
          << int(insn.dst) << ", " << int(insn.src) << ", " << insn.offset << ", "
          << insn.imm << "\n";
      continue;
    }
    out << info->mnemonic;
    switch (info->kind) {
      case K::Misc:
        if (info->op == Opcode::Call) out << " " << insn.imm;
        if (info->op == Opcode::Ja) out << " " << jump_operand(i, insn.offset);
        break;
      case K::AluImm:
        out << " r" << int(insn.dst) << ", " << insn.imm;
        break;
      case K::AluReg:
        if (info->op == Opcode::Neg)
          out << " r" << int(insn.dst);
        else
          out << " r" << int(insn.dst) << ", r" << int(insn.src);
        break;
      case K::Load:
        out << " r" << int(insn.dst) << ", r" << int(insn.src) << ", " << insn.offset;
        break;
      case K::StoreReg:
        out << " r" << int(insn.dst) << ", " << insn.offset << ", r" << int(insn.src);
        break;
      case K::StoreImm:
        out << " r" << int(insn.dst) << ", " << insn.offset << ", " << insn.imm;
        break;
      case K::JmpImm:
        out << " r" << int(insn.dst) << ", " << insn.imm << ", "
            << jump_operand(i, insn.offset);
        break;
      case K::JmpReg:
        out << " r" << int(insn.dst) << ", r" << int(insn.src) << ", "
            << jump_operand(i, insn.offset);
        break;
    }
    out << "\n";
  }
  // Labels pointing one past the end cannot occur (targets are in-range),
  // so nothing to flush here.
  return out.str();
}

}  // namespace fan
