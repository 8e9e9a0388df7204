#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>

#include "fan/cell.hpp"
#include "fan/package.hpp"
#include "fan/vm.hpp"

namespace fan {

// Per-event binding of the 8 host functions. The owning node fills this in
// before firing a plugin event; handlers in the shared host table read it.
struct HostContext {
  std::uint32_t circuit_id = 0;
  std::uint8_t hop_flags = 0;  // bit0 has_prev, bit1 has_next
  std::uint64_t cells_forwarded = 0;
  std::array<std::uint8_t, 256>* scratch = nullptr;
  const RelayPayload* cell = nullptr;  // triggering cell, if any
  int emit_budget = 4;

  std::function<bool(std::uint8_t cmd, std::span<const std::uint8_t> data, Direction dir)>
      emit_cell;
  std::function<void(std::uint64_t ms, std::uint64_t tag)> set_timer;
  std::function<void(std::uint64_t level, std::string msg)> log;
  std::function<void(std::span<std::uint8_t> out)> rand_bytes;
  std::function<std::uint64_t()> now_ms;
};

inline constexpr int kDefaultEmitBudget = 4;

namespace hostfn {
inline constexpr std::uint32_t kLog = 0;
inline constexpr std::uint32_t kGetField = 1;
inline constexpr std::uint32_t kSetField = 2;
inline constexpr std::uint32_t kReadCell = 3;
inline constexpr std::uint32_t kEmitCell = 4;
inline constexpr std::uint32_t kSetTimer = 5;
inline constexpr std::uint32_t kRandBytes = 6;
inline constexpr std::uint32_t kNowMs = 7;
}  // namespace hostfn

namespace field {
inline constexpr std::uint64_t kCircuitId = 0;
inline constexpr std::uint64_t kHopFlags = 1;
inline constexpr std::uint64_t kCellsForwarded = 2;
inline constexpr std::uint64_t kScratch = 3;
}  // namespace field

inline constexpr std::uint64_t kHostErrValue = static_cast<std::uint64_t>(-1);

// The normative 8-entry host table. All handlers dereference `ctx`, which
// must outlive the table and be rebound per event.
inline HostTable make_host_table(HostContext& ctx) {
  HostTable t;
  auto oob = [] { return HostResult::raise(TrapKind::MemoryOutOfBounds); };

  // 0: log(level, off, len)
  t.entries.push_back({0, 10, [&ctx, oob](VmInstance& vm, std::span<const std::uint64_t, 5> a) {
    if (a[2] > 4096) return HostResult::ok(kHostErrValue);
    std::string msg(static_cast<std::size_t>(a[2]), '\0');
    if (!vm.copy_out(a[1], {reinterpret_cast<std::uint8_t*>(msg.data()), msg.size()}))
      return oob();
    if (ctx.log) ctx.log(a[0], std::move(msg));
    return HostResult::ok(0);
  }});

  // 1: get_field(id, off, cap) -> bytes written or -1
  t.entries.push_back({1, 5, [&ctx, oob](VmInstance& vm, std::span<const std::uint64_t, 5> a) {
    std::uint8_t buf[8];
    std::span<const std::uint8_t> src;
    switch (a[0]) {
      case field::kCircuitId:
        put_u32(buf, ctx.circuit_id);
        src = {buf, 4};
        break;
      case field::kHopFlags:
        buf[0] = ctx.hop_flags;
        src = {buf, 1};
        break;
      case field::kCellsForwarded:
        put_u64(buf, ctx.cells_forwarded);
        src = {buf, 8};
        break;
      case field::kScratch:
        if (!ctx.scratch) return HostResult::ok(kHostErrValue);
        src = {ctx.scratch->data(), std::min<std::size_t>(a[2], ctx.scratch->size())};
        break;
      default:
        return HostResult::ok(kHostErrValue);
    }
    if (a[0] != field::kScratch && a[2] < src.size()) return HostResult::ok(kHostErrValue);
    if (!vm.copy_in(a[1], src)) return oob();
    return HostResult::ok(src.size());
  }});

  // 2: set_field(id, off, len) -> 0 or -1; only scratch is writable
  t.entries.push_back({2, 5, [&ctx, oob](VmInstance& vm, std::span<const std::uint64_t, 5> a) {
    if (a[0] != field::kScratch || !ctx.scratch) return HostResult::ok(kHostErrValue);
    if (a[2] > ctx.scratch->size()) return HostResult::ok(kHostErrValue);
    if (!vm.copy_out(a[1], {ctx.scratch->data(), static_cast<std::size_t>(a[2])}))
      return oob();
    return HostResult::ok(0);
  }});

  // 3: read_cell(off, cap) -> data length or -1
  t.entries.push_back({3, 5, [&ctx, oob](VmInstance& vm, std::span<const std::uint64_t, 5> a) {
    if (!ctx.cell) return HostResult::ok(kHostErrValue);
    auto data = ctx.cell->data_view();
    if (a[1] < data.size()) return HostResult::ok(kHostErrValue);
    if (!vm.copy_in(a[0], data)) return oob();
    return HostResult::ok(data.size());
  }});

  // 4: emit_cell(cmd, off, len, dir) -> 0 or -1
  t.entries.push_back({4, 20, [&ctx, oob](VmInstance& vm, std::span<const std::uint64_t, 5> a) {
    if (a[0] < kFeatureIdMin || a[0] > 255) return HostResult::ok(kHostErrValue);
    if (a[2] > kRelayDataMax) return HostResult::ok(kHostErrValue);
    if (ctx.emit_budget <= 0) return HostResult::ok(kHostErrValue);
    Bytes data(static_cast<std::size_t>(a[2]));
    if (!vm.copy_out(a[1], data)) return oob();
    Direction dir = a[3] ? Direction::Forward : Direction::Backward;
    if (!ctx.emit_cell) return HostResult::ok(kHostErrValue);
    --ctx.emit_budget;
    bool sent = ctx.emit_cell(static_cast<std::uint8_t>(a[0]), data, dir);
    return HostResult::ok(sent ? 0 : kHostErrValue);
  }});

  // 5: set_timer(ms, tag) -> 0
  t.entries.push_back({5, 10, [&ctx](VmInstance&, std::span<const std::uint64_t, 5> a) {
    if (!ctx.set_timer) return HostResult::ok(kHostErrValue);
    ctx.set_timer(a[0], a[1]);
    return HostResult::ok(0);
  }});

  // 6: rand_bytes(off, len)
  t.entries.push_back({6, 5, [&ctx, oob](VmInstance& vm, std::span<const std::uint64_t, 5> a) {
    if (a[1] > 4096) return HostResult::ok(kHostErrValue);
    Bytes buf(static_cast<std::size_t>(a[1]));
    if (ctx.rand_bytes) ctx.rand_bytes(buf);
    if (!vm.copy_in(a[0], buf)) return oob();
    return HostResult::ok(0);
  }});

  // 7: now_ms()
  t.entries.push_back({7, 1, [&ctx](VmInstance&, std::span<const std::uint64_t, 5>) {
    return HostResult::ok(ctx.now_ms ? ctx.now_ms() : 0);
  }});

  return t;
}

}  // namespace fan
