#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "fan/common.hpp"

namespace fan {

// Fixed 8-byte instruction: opcode u8 | dst low nibble / src high nibble |
// offset s16 LE | imm s32 LE. Registers r0..r9 general, r10 = arena size
// (read-only). Jump offsets count instructions relative to the next one.
enum class Opcode : std::uint8_t {
  Exit = 0x00,
  Call = 0x01,  // imm = host table index
  Ja = 0x02,

  Addi = 0x10,
  Subi = 0x11,
  Muli = 0x12,
  Divi = 0x13,
  Modi = 0x14,
  Andi = 0x15,
  Ori = 0x16,
  Xori = 0x17,
  Lshi = 0x18,
  Rshi = 0x19,
  Arshi = 0x1A,
  Movi = 0x1B,

  Add = 0x20,
  Sub = 0x21,
  Mul = 0x22,
  Div = 0x23,
  Mod = 0x24,
  And = 0x25,
  Or = 0x26,
  Xor = 0x27,
  Lsh = 0x28,
  Rsh = 0x29,
  Arsh = 0x2A,
  Mov = 0x2B,
  Neg = 0x2C,

  Ld8 = 0x30,
  Ld16 = 0x31,
  Ld32 = 0x32,
  Ld64 = 0x33,

  St8 = 0x40,
  St16 = 0x41,
  St32 = 0x42,
  St64 = 0x43,

  Sti8 = 0x50,
  Sti16 = 0x51,
  Sti32 = 0x52,
  Sti64 = 0x53,

  Jeqi = 0x60,
  Jnei = 0x61,
  Jlti = 0x62,
  Jlei = 0x63,
  Jgti = 0x64,
  Jgei = 0x65,

  Jeq = 0x70,
  Jne = 0x71,
  Jlt = 0x72,
  Jle = 0x73,
  Jgt = 0x74,
  Jge = 0x75,
};

inline constexpr std::size_t kInstructionSize = 8;
inline constexpr std::size_t kMaxInstructions = 65536;
inline constexpr unsigned kNumRegisters = 11;  // r0..r10

struct Instruction {
  std::uint8_t opcode = 0;
  std::uint8_t dst = 0;
  std::uint8_t src = 0;
  std::int16_t offset = 0;
  std::int32_t imm = 0;

  bool operator==(const Instruction&) const = default;

  Opcode op() const { return static_cast<Opcode>(opcode); }
};

struct OpcodeInfo {
  Opcode op;
  std::string_view mnemonic;
  enum class Kind {
    Misc,      // exit, call, ja
    AluImm,    // dst op= imm
    AluReg,    // dst op= src (neg: dst only)
    Load,      // dst = mem[src + offset]
    StoreReg,  // mem[dst + offset] = src
    StoreImm,  // mem[dst + offset] = imm
    JmpImm,    // if dst ? imm -> pc += offset
    JmpReg,    // if dst ? src -> pc += offset
  } kind;
};

inline std::span<const OpcodeInfo> opcode_table() {
  using K = OpcodeInfo::Kind;
  static const OpcodeInfo table[] = {
      {Opcode::Exit, "exit", K::Misc},   {Opcode::Call, "call", K::Misc},
      {Opcode::Ja, "ja", K::Misc},       {Opcode::Addi, "addi", K::AluImm},
      {Opcode::Subi, "subi", K::AluImm}, {Opcode::Muli, "muli", K::AluImm},
      {Opcode::Divi, "divi", K::AluImm}, {Opcode::Modi, "modi", K::AluImm},
      {Opcode::Andi, "andi", K::AluImm}, {Opcode::Ori, "ori", K::AluImm},
      {Opcode::Xori, "xori", K::AluImm}, {Opcode::Lshi, "lshi", K::AluImm},
      {Opcode::Rshi, "rshi", K::AluImm}, {Opcode::Arshi, "arshi", K::AluImm},
      {Opcode::Movi, "movi", K::AluImm}, {Opcode::Add, "add", K::AluReg},
      {Opcode::Sub, "sub", K::AluReg},   {Opcode::Mul, "mul", K::AluReg},
      {Opcode::Div, "div", K::AluReg},   {Opcode::Mod, "mod", K::AluReg},
      {Opcode::And, "and", K::AluReg},   {Opcode::Or, "or", K::AluReg},
      {Opcode::Xor, "xor", K::AluReg},   {Opcode::Lsh, "lsh", K::AluReg},
      {Opcode::Rsh, "rsh", K::AluReg},   {Opcode::Arsh, "arsh", K::AluReg},
      {Opcode::Mov, "mov", K::AluReg},   {Opcode::Neg, "neg", K::AluReg},
      {Opcode::Ld8, "ld8", K::Load},     {Opcode::Ld16, "ld16", K::Load},
      {Opcode::Ld32, "ld32", K::Load},   {Opcode::Ld64, "ld64", K::Load},
      {Opcode::St8, "st8", K::StoreReg}, {Opcode::St16, "st16", K::StoreReg},
      {Opcode::St32, "st32", K::StoreReg}, {Opcode::St64, "st64", K::StoreReg},
      {Opcode::Sti8, "sti8", K::StoreImm}, {Opcode::Sti16, "sti16", K::StoreImm},
      {Opcode::Sti32, "sti32", K::StoreImm}, {Opcode::Sti64, "sti64", K::StoreImm},
      {Opcode::Jeqi, "jeqi", K::JmpImm}, {Opcode::Jnei, "jnei", K::JmpImm},
      {Opcode::Jlti, "jlti", K::JmpImm}, {Opcode::Jlei, "jlei", K::JmpImm},
      {Opcode::Jgti, "jgti", K::JmpImm}, {Opcode::Jgei, "jgei", K::JmpImm},
      {Opcode::Jeq, "jeq", K::JmpReg},   {Opcode::Jne, "jne", K::JmpReg},
      {Opcode::Jlt, "jlt", K::JmpReg},   {Opcode::Jle, "jle", K::JmpReg},
      {Opcode::Jgt, "jgt", K::JmpReg},   {Opcode::Jge, "jge", K::JmpReg},
  };
  return table;
}

inline const OpcodeInfo* find_opcode(std::uint8_t opcode) {
  for (const auto& info : opcode_table())
    if (static_cast<std::uint8_t>(info.op) == opcode) return &info;
  return nullptr;
}

inline const OpcodeInfo* find_mnemonic(std::string_view m) {
  for (const auto& info : opcode_table())
    if (info.mnemonic == m) return &info;
  return nullptr;
}

struct Program {
  std::vector<Instruction> instructions;

  bool operator==(const Program&) const = default;
  std::size_t size() const { return instructions.size(); }
};

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void encode_instruction(const Instruction& insn, std::uint8_t* out) {
  out[0] = insn.opcode;
  out[1] = static_cast<std::uint8_t>((insn.src << 4) | (insn.dst & 0x0F));
  put_u16(out + 2, static_cast<std::uint16_t>(insn.offset));
  put_u32(out + 4, static_cast<std::uint32_t>(insn.imm));
}

inline Bytes encode_program(const Program& program) {
  Bytes out(program.size() * kInstructionSize);
  for (std::size_t i = 0; i < program.size(); ++i)
    encode_instruction(program.instructions[i], out.data() + i * kInstructionSize);
  return out;
}

inline Program parse_program(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) throw ParseError("empty program");
  if (bytes.size() % kInstructionSize != 0)
    throw ParseError("program length not a multiple of 8");
  std::size_t count = bytes.size() / kInstructionSize;
  if (count > kMaxInstructions) throw ParseError("program exceeds 65536 instructions");
  Program program;
  program.instructions.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint8_t* p = bytes.data() + i * kInstructionSize;
    Instruction insn;
    insn.opcode = p[0];
    insn.dst = p[1] & 0x0F;
    insn.src = p[1] >> 4;
    insn.offset = static_cast<std::int16_t>(get_u16(p + 2));
    insn.imm = static_cast<std::int32_t>(get_u32(p + 4));
    program.instructions.push_back(insn);
  }
  return program;
}

}  // namespace fan
