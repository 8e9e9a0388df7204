#pragma once

#include <cctype>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fan/disasm.hpp"
#include "fan/isa.hpp"

namespace fan {

class AsmError : public std::runtime_error {
 public:
  AsmError(std::size_t line, const std::string& msg)
      : std::runtime_error("line " + std::to_string(line) + ": " + msg), line(line) {}
  std::size_t line;
};

namespace detail {

inline std::string strip(std::string s) {
  auto issp = [](unsigned char c) { return std::isspace(c); };
  while (!s.empty() && issp(s.front())) s.erase(s.begin());
  while (!s.empty() && issp(s.back())) s.pop_back();
  return s;
}

inline std::vector<std::string> split_operands(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(strip(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  cur = strip(cur);
  if (!cur.empty() || !out.empty()) out.push_back(cur);
  return out;
}

inline bool parse_int(const std::string& s, std::int64_t& out) {
  if (s.empty()) return false;
  std::size_t pos = 0;
  try {
    out = std::stoll(s, &pos, 0);  // handles 0x prefix and sign
  } catch (...) {
    return false;
  }
  return pos == s.size();
}

}  // namespace detail

// Two-pass assembler for the textual form: "label:" definitions, one
// mnemonic per line, ';' comments, r0..r10 registers, decimal or 0x
// immediates, label references in jump offsets and call.
class Assembler {
 public:
  static Program assemble(const std::string& source) {
    Assembler a;
    a.first_pass(source);
    return a.second_pass();
  }

  static Bytes assemble_bytes(const std::string& source) {
    return encode_program(assemble(source));
  }

  // Also exposes label -> instruction index, for entry-point tables.
  static std::pair<Program, std::map<std::string, std::size_t>> assemble_with_labels(
      const std::string& source) {
    Assembler a;
    a.first_pass(source);
    Program p = a.second_pass();
    return {std::move(p), std::move(a.labels_)};
  }

 private:
  struct Line {
    std::size_t number;
    std::string mnemonic;
    std::vector<std::string> operands;
  };

  void first_pass(const std::string& source) {
    std::istringstream in(source);
    std::string raw;
    std::size_t lineno = 0;
    while (std::getline(in, raw)) {
      ++lineno;
      if (auto pos = raw.find(';'); pos != std::string::npos) raw.erase(pos);
      std::string text = detail::strip(raw);
      // Leading "label:" definitions, possibly followed by an instruction.
      while (true) {
        auto colon = text.find(':');
        if (colon == std::string::npos) break;
        std::string label = detail::strip(text.substr(0, colon));
        if (label.empty() || !is_identifier(label)) break;
        if (labels_.count(label)) throw AsmError(lineno, "duplicate label '" + label + "'");
        labels_[label] = lines_.size();
        text = detail::strip(text.substr(colon + 1));
      }
      if (text.empty()) continue;
      Line line;
      line.number = lineno;
      auto sp = text.find_first_of(" \t");
      line.mnemonic = text.substr(0, sp);
      if (sp != std::string::npos)
        line.operands = detail::split_operands(detail::strip(text.substr(sp)));
      lines_.push_back(std::move(line));
    }
    // Labels may point one past the last instruction only if unused; reject
    // at reference time via offset bounds instead.
  }

  Program second_pass() {
    Program program;
    for (std::size_t idx = 0; idx < lines_.size(); ++idx)
      program.instructions.push_back(encode_line(lines_[idx], idx));
    return program;
  }

  Instruction encode_line(const Line& line, std::size_t idx) {
    using K = OpcodeInfo::Kind;
    Instruction insn;
    const std::size_t ln = line.number;

    if (line.mnemonic == "raw") {
      need(line, 5);
      insn.opcode = static_cast<std::uint8_t>(imm_operand(ln, line.operands[0]));
      insn.dst = static_cast<std::uint8_t>(imm_operand(ln, line.operands[1]));
      insn.src = static_cast<std::uint8_t>(imm_operand(ln, line.operands[2]));
      insn.offset = static_cast<std::int16_t>(imm_operand(ln, line.operands[3]));
      insn.imm = static_cast<std::int32_t>(imm_operand(ln, line.operands[4]));
      return insn;
    }

    const OpcodeInfo* info = find_mnemonic(line.mnemonic);
    if (!info) throw AsmError(ln, "unknown mnemonic '" + line.mnemonic + "'");
    insn.opcode = static_cast<std::uint8_t>(info->op);

    switch (info->kind) {
      case K::Misc:
        if (info->op == Opcode::Exit) {
          need(line, 0);
        } else if (info->op == Opcode::Call) {
          need(line, 1);
          insn.imm = static_cast<std::int32_t>(call_operand(ln, line.operands[0]));
        } else {  // ja
          need(line, 1);
          insn.offset = jump_offset(ln, idx, line.operands[0]);
        }
        break;
      case K::AluImm:
        need(line, 2);
        insn.dst = reg_operand(ln, line.operands[0]);
        insn.imm = imm32(ln, line.operands[1]);
        break;
      case K::AluReg:
        if (info->op == Opcode::Neg) {
          need(line, 1);
          insn.dst = reg_operand(ln, line.operands[0]);
        } else {
          need(line, 2);
          insn.dst = reg_operand(ln, line.operands[0]);
          insn.src = reg_operand(ln, line.operands[1]);
        }
        break;
      case K::Load:
        need(line, 3);
        insn.dst = reg_operand(ln, line.operands[0]);
        insn.src = reg_operand(ln, line.operands[1]);
        insn.offset = off16(ln, line.operands[2]);
        break;
      case K::StoreReg:
        need(line, 3);
        insn.dst = reg_operand(ln, line.operands[0]);
        insn.offset = off16(ln, line.operands[1]);
        insn.src = reg_operand(ln, line.operands[2]);
        break;
      case K::StoreImm:
        need(line, 3);
        insn.dst = reg_operand(ln, line.operands[0]);
        insn.offset = off16(ln, line.operands[1]);
        insn.imm = imm32(ln, line.operands[2]);
        break;
      case K::JmpImm:
        need(line, 3);
        insn.dst = reg_operand(ln, line.operands[0]);
        insn.imm = imm32(ln, line.operands[1]);
        insn.offset = jump_offset(ln, idx, line.operands[2]);
        break;
      case K::JmpReg:
        need(line, 3);
        insn.dst = reg_operand(ln, line.operands[0]);
        insn.src = reg_operand(ln, line.operands[1]);
        insn.offset = jump_offset(ln, idx, line.operands[2]);
        break;
    }
    return insn;
  }

  static void need(const Line& line, std::size_t count) {
    if (line.operands.size() != count)
      throw AsmError(line.number, "'" + line.mnemonic + "' expects " +
                                      std::to_string(count) + " operand(s)");
  }

  static bool is_identifier(const std::string& s) {
    if (s.empty() || std::isdigit(static_cast<unsigned char>(s[0]))) return false;
    for (char c : s)
      if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return false;
    return true;
  }

  static std::uint8_t reg_operand(std::size_t ln, const std::string& s) {
    std::int64_t v;
    if (s.size() < 2 || (s[0] != 'r' && s[0] != 'R') ||
        !detail::parse_int(s.substr(1), v) || v < 0 || v > 10)
      throw AsmError(ln, "bad register '" + s + "'");
    return static_cast<std::uint8_t>(v);
  }

  static std::int64_t imm_operand(std::size_t ln, const std::string& s) {
    std::int64_t v;
    if (!detail::parse_int(s, v)) throw AsmError(ln, "bad immediate '" + s + "'");
    return v;
  }

  static std::int32_t imm32(std::size_t ln, const std::string& s) {
    std::int64_t v = imm_operand(ln, s);
    if (v < INT32_MIN || v > static_cast<std::int64_t>(UINT32_MAX))
      throw AsmError(ln, "immediate out of 32-bit range");
    return static_cast<std::int32_t>(v);
  }

  static std::int16_t off16(std::size_t ln, const std::string& s) {
    std::int64_t v = imm_operand(ln, s);
    if (v < INT16_MIN || v > INT16_MAX) throw AsmError(ln, "offset out of 16-bit range");
    return static_cast<std::int16_t>(v);
  }

  std::int64_t call_operand(std::size_t ln, const std::string& s) {
    if (auto it = labels_.find(s); it != labels_.end())
      return static_cast<std::int64_t>(it->second);
    return imm_operand(ln, s);
  }

  std::int16_t jump_offset(std::size_t ln, std::size_t idx, const std::string& s) {
    std::int64_t off;
    if (auto it = labels_.find(s); it != labels_.end()) {
      off = static_cast<std::int64_t>(it->second) - static_cast<std::int64_t>(idx) - 1;
    } else if (s[0] == '+' || s[0] == '-' || std::isdigit(static_cast<unsigned char>(s[0]))) {
      off = imm_operand(ln, s);
    } else {
      throw AsmError(ln, "undefined label '" + s + "'");
    }
    if (off < INT16_MIN || off > INT16_MAX)
      throw AsmError(ln, "jump offset out of range (+-32767)");
    return static_cast<std::int16_t>(off);
  }

  std::vector<Line> lines_;
  std::map<std::string, std::size_t> labels_;
};

inline Program assemble(const std::string& source) { return Assembler::assemble(source); }

}  // namespace fan
