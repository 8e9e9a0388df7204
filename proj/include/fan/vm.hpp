#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "fan/isa.hpp"
#include "fan/verifier.hpp"

namespace fan {

enum class TrapKind {
  MemoryOutOfBounds,
  DivisionByZero,
  GasExhausted,
  InvalidHostCall,
  CapabilityDenied,
  WriteToR10,
  HostError,
};

struct Trap {
  TrapKind kind;
  std::size_t pc = 0;
  std::int64_t host_code = 0;  // only for HostError
};

inline const char* trap_name(TrapKind k) {
  switch (k) {
    case TrapKind::MemoryOutOfBounds: return "MemoryOutOfBounds";
    case TrapKind::DivisionByZero: return "DivisionByZero";
    case TrapKind::GasExhausted: return "GasExhausted";
    case TrapKind::InvalidHostCall: return "InvalidHostCall";
    case TrapKind::CapabilityDenied: return "CapabilityDenied";
    case TrapKind::WriteToR10: return "WriteToR10";
    case TrapKind::HostError: return "HostError";
  }
  return "?";
}

class VmInstance;

// Host function outcome: a value for r0, or a trap raised on the guest.
struct HostResult {
  std::uint64_t value = 0;
  bool trapped = false;
  Trap trap{};

  static HostResult ok(std::uint64_t v) { return {v, false, {}}; }
  static HostResult raise(TrapKind kind, std::int64_t code = 0) {
    return {0, true, {kind, 0, code}};
  }
};

struct HostEntry {
  std::uint32_t capability_bit = 0;
  std::uint64_t gas_cost = 1;
  std::function<HostResult(VmInstance&, std::span<const std::uint64_t, 5>)> handler;
};

struct HostTable {
  std::vector<HostEntry> entries;
};

inline constexpr std::size_t kArenaMin = 4 * 1024;
inline constexpr std::size_t kArenaMax = 1024 * 1024;
inline constexpr std::uint64_t kDefaultGasPerEvent = 100'000;

class VmError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using RunResult = std::variant<std::uint64_t, Trap>;

// One sandboxed execution instance: registers, a bounds-checked linear
// arena, gas, and a capability mask gating host calls. The arena persists
// between runs; it is zeroed only at instantiation.
class VmInstance {
 public:
  // Test hook: observes every guest memory access (offset, size, is_write).
  using AccessObserver = std::function<void(std::uint64_t, std::size_t, bool)>;

  VmInstance(Program program, std::size_t memory_size, const HostTable* host_table,
             std::uint32_t capability_mask)
      : program_(std::move(program)),
        arena_(check_size(memory_size), 0),
        host_table_(host_table),
        capability_mask_(capability_mask) {}

  std::size_t memory_size() const { return arena_.size(); }
  std::uint32_t capability_mask() const { return capability_mask_; }
  const Program& program() const { return program_; }
  std::span<std::uint8_t> arena() { return arena_; }
  std::span<const std::uint8_t> arena() const { return arena_; }
  std::uint64_t gas_used() const { return gas_used_; }

  void set_access_observer(AccessObserver obs) { observer_ = std::move(obs); }

  bool has_capability(std::uint32_t bit) const {
    return bit < 32 && (capability_mask_ >> bit) & 1;
  }

  // Checked guest memory access, the only path to the arena.
  bool copy_in(std::uint64_t off, std::span<const std::uint8_t> src) {
    if (!check_range(off, src.size(), true)) return false;
    std::copy(src.begin(), src.end(), arena_.begin() + off);
    return true;
  }

  bool copy_out(std::uint64_t off, std::span<std::uint8_t> dst) {
    if (!check_range(off, dst.size(), false)) return false;
    std::copy_n(arena_.begin() + off, dst.size(), dst.begin());
    return true;
  }

  RunResult run(std::size_t entry_pc, std::span<const std::uint64_t> args,
                std::uint64_t gas_limit) {
    if (entry_pc >= program_.size()) throw VmError("entry pc out of range");
    if (args.size() > 5) throw VmError("more than five arguments");

    std::array<std::uint64_t, kNumRegisters> r{};
    for (std::size_t i = 0; i < args.size(); ++i) r[i + 1] = args[i];
    r[10] = arena_.size();

    std::uint64_t gas = gas_limit;
    gas_used_ = 0;
    std::size_t pc = entry_pc;

    auto charge = [&](std::uint64_t cost) {
      if (gas < cost) return false;
      gas -= cost;
      gas_used_ += cost;
      return true;
    };

    for (;;) {
      if (!charge(1)) return Trap{TrapKind::GasExhausted, pc};
      const Instruction& insn = program_.instructions[pc];
      const OpcodeInfo* info = find_opcode(insn.opcode);
      if (!info) return Trap{TrapKind::InvalidHostCall, pc};  // unreachable post-verify

      using K = OpcodeInfo::Kind;
      const std::uint64_t imm = static_cast<std::uint64_t>(
          static_cast<std::int64_t>(insn.imm));  // sign-extended
      std::size_t next_pc = pc + 1;

      switch (info->kind) {
        case K::Misc: {
          if (info->op == Opcode::Exit) return r[0];
          if (info->op == Opcode::Ja) {
            next_pc = jump_target(pc, insn.offset);
            break;
          }
          // CALL
          if (insn.imm < 0 || !host_table_ ||
              static_cast<std::size_t>(insn.imm) >= host_table_->entries.size())
            return Trap{TrapKind::InvalidHostCall, pc};
          const HostEntry& entry = host_table_->entries[insn.imm];
          if (!has_capability(entry.capability_bit))
            return Trap{TrapKind::CapabilityDenied, pc};
          if (!charge(entry.gas_cost)) return Trap{TrapKind::GasExhausted, pc};
          std::array<std::uint64_t, 5> hargs{r[1], r[2], r[3], r[4], r[5]};
          HostResult hr = entry.handler(*this, hargs);
          if (hr.trapped) {
            Trap t = hr.trap;
            t.pc = pc;
            return t;
          }
          r[0] = hr.value;
          break;
        }
        case K::AluImm:
        case K::AluReg: {
          if (insn.dst == 10) return Trap{TrapKind::WriteToR10, pc};
          std::uint64_t b = info->kind == K::AluImm ? imm : r[insn.src];
          std::uint64_t& a = r[insn.dst];
          switch (info->op) {
            case Opcode::Addi: case Opcode::Add: a += b; break;
            case Opcode::Subi: case Opcode::Sub: a -= b; break;
            case Opcode::Muli: case Opcode::Mul: a *= b; break;
            case Opcode::Divi: case Opcode::Div:
              if (b == 0) return Trap{TrapKind::DivisionByZero, pc};
              a /= b;
              break;
            case Opcode::Modi: case Opcode::Mod:
              if (b == 0) return Trap{TrapKind::DivisionByZero, pc};
              a %= b;
              break;
            case Opcode::Andi: case Opcode::And: a &= b; break;
            case Opcode::Ori: case Opcode::Or: a |= b; break;
            case Opcode::Xori: case Opcode::Xor: a ^= b; break;
            case Opcode::Lshi: case Opcode::Lsh: a <<= (b & 63); break;
            case Opcode::Rshi: case Opcode::Rsh: a >>= (b & 63); break;
            case Opcode::Arshi: case Opcode::Arsh:
              a = static_cast<std::uint64_t>(static_cast<std::int64_t>(a) >> (b & 63));
              break;
            case Opcode::Movi: case Opcode::Mov: a = b; break;
            case Opcode::Neg: a = ~a + 1; break;
            default: return Trap{TrapKind::InvalidHostCall, pc};
          }
          break;
        }
        case K::Load: {
          if (insn.dst == 10) return Trap{TrapKind::WriteToR10, pc};
          std::uint64_t addr = r[insn.src] + static_cast<std::int64_t>(insn.offset);
          std::size_t width = load_store_width(info->op);
          std::uint8_t buf[8] = {};
          if (!copy_out(addr, {buf, width})) return Trap{TrapKind::MemoryOutOfBounds, pc};
          r[insn.dst] = get_u64(buf) & width_mask(width);
          break;
        }
        case K::StoreReg:
        case K::StoreImm: {
          std::uint64_t addr = r[insn.dst] + static_cast<std::int64_t>(insn.offset);
          std::size_t width = load_store_width(info->op);
          std::uint64_t v = info->kind == K::StoreReg ? r[insn.src] : imm;
          std::uint8_t buf[8];
          put_u64(buf, v);
          if (!copy_in(addr, {buf, width})) return Trap{TrapKind::MemoryOutOfBounds, pc};
          break;
        }
        case K::JmpImm:
        case K::JmpReg: {
          std::uint64_t a = r[insn.dst];
          std::uint64_t b = info->kind == K::JmpImm ? imm : r[insn.src];
          bool taken = false;
          switch (info->op) {
            case Opcode::Jeqi: case Opcode::Jeq: taken = a == b; break;
            case Opcode::Jnei: case Opcode::Jne: taken = a != b; break;
            case Opcode::Jlti: case Opcode::Jlt: taken = a < b; break;
            case Opcode::Jlei: case Opcode::Jle: taken = a <= b; break;
            case Opcode::Jgti: case Opcode::Jgt: taken = a > b; break;
            case Opcode::Jgei: case Opcode::Jge: taken = a >= b; break;
            default: break;
          }
          if (taken) next_pc = jump_target(pc, insn.offset);
          break;
        }
      }
      pc = next_pc;
    }
  }

 private:
  static std::size_t check_size(std::size_t memory_size) {
    if (memory_size < kArenaMin || memory_size > kArenaMax)
      throw VmError("memory size outside 4 KiB..1 MiB");
    return memory_size;
  }

  static std::size_t load_store_width(Opcode op) {
    switch (op) {
      case Opcode::Ld8: case Opcode::St8: case Opcode::Sti8: return 1;
      case Opcode::Ld16: case Opcode::St16: case Opcode::Sti16: return 2;
      case Opcode::Ld32: case Opcode::St32: case Opcode::Sti32: return 4;
      default: return 8;
    }
  }

  static std::uint64_t width_mask(std::size_t width) {
    return width == 8 ? ~0ULL : (1ULL << (width * 8)) - 1;
  }

  static std::size_t jump_target(std::size_t pc, std::int16_t offset) {
    return static_cast<std::size_t>(static_cast<std::int64_t>(pc) + 1 + offset);
  }

  bool check_range(std::uint64_t off, std::size_t len, bool write) {
    if (off > arena_.size() || len > arena_.size() - off) return false;
    if (observer_) observer_(off, len, write);
    return true;
  }

  Program program_;
  std::vector<std::uint8_t> arena_;
  const HostTable* host_table_;
  std::uint32_t capability_mask_;
  std::uint64_t gas_used_ = 0;
  AccessObserver observer_;
};

// Instantiate a verified program. The caller is expected to have run
// verify(); re-checks here so a bad program cannot slip into execution.
inline VmInstance instantiate(Program program, std::size_t memory_size,
                              const HostTable* host_table, std::uint32_t capability_mask) {
  std::size_t table_size = host_table ? host_table->entries.size() : 0;
  if (!verify(program, table_size).ok()) throw VmError("program failed verification");
  return VmInstance(std::move(program), memory_size, host_table, capability_mask);
}

}  // namespace fan
