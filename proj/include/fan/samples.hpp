#pragma once

#include <string>
#include <vector>

#include "fan/assembler.hpp"
#include "fan/package.hpp"

namespace fan {

// A sample plugin: assembly source plus the metadata its package carries.
struct SamplePlugin {
  std::string name;
  std::string source;
  std::uint32_t capability_mask = 0;
  std::vector<std::uint8_t> feature_ids;
  std::vector<std::pair<EventKind, std::string>> entry_labels;
  std::uint32_t memory_size = 65536;

  PluginPackage build() const {
    auto [program, labels] = Assembler::assemble_with_labels(source);
    PluginPackage pkg;
    pkg.name = name;
    pkg.version = {1, 0, 0};
    pkg.capability_mask = capability_mask;
    pkg.feature_ids = feature_ids;
    pkg.memory_size = memory_size;
    pkg.code = encode_program(program);
    for (const auto& [event, label] : entry_labels)
      pkg.entries.push_back({static_cast<std::uint16_t>(event),
                             static_cast<std::uint32_t>(labels.at(label))});
    return pkg;
  }

  Bytes build_signed(const SigningKey& key) const { return package(build(), key); }
};

inline constexpr std::uint8_t kPaddingFeatureId = 32;
inline constexpr std::uint8_t kCounterFeatureId = 33;

// Emits a zero-length cmd-32 cell backward every period ms. The period comes
// from the first 4 bytes of plugin scratch, defaulting to 50 ms; client-side
// copies of the plugin swallow incoming cmd-32 cells.
inline SamplePlugin padding_plugin() {
  SamplePlugin p;
  p.name = "padding";
  p.capability_mask =
      cap::kTimer | cap::kCellEmit | cap::kStateRead | cap::kStateWrite | cap::kLog;
  p.feature_ids = {kPaddingFeatureId};
  p.entry_labels = {{EventKind::OnAttach, "on_attach"},
                    {EventKind::OnTimer, "on_timer"},
                    {EventKind::OnFeatureCell, "on_cell"},
                    {EventKind::OnCircuitTeardown, "on_teardown"}};
  p.source =
      "; padding: periodic zero-length cmd-32 cells toward the client\n"
      "on_attach:\n"
      "  movi r1, 3        ; scratch field\n"
      "  movi r2, 0\n"
      "  movi r3, 4\n"
      "  call 1            ; get_field -> arena[0..4]\n"
      "  movi r6, 0\n"
      "  ld32 r7, r6, 0    ; configured period\n"
      "  jnei r7, 0, have_period\n"
      "  movi r7, 50       ; default 50 ms\n"
      "have_period:\n"
      "  movi r6, 8\n"
      "  st32 r6, 0, r7    ; persist period at arena[8]\n"
      "  mov r1, r7\n"
      "  movi r2, 1\n"
      "  call 5            ; set_timer(period, 1)\n"
      "  movi r0, 0\n"
      "  exit\n"
      "on_timer:\n"
      "  movi r1, 32       ; PADDING\n"
      "  movi r2, 0\n"
      "  movi r3, 0        ; zero-length\n"
      "  movi r4, 0        ; backward\n"
      "  call 4            ; emit_cell\n"
      "  movi r6, 8\n"
      "  ld32 r1, r6, 0\n"
      "  movi r2, 1\n"
      "  call 5            ; re-arm\n"
      "  movi r0, 0\n"
      "  exit\n"
      "on_cell:\n"
      "  movi r0, 0        ; swallow\n"
      "  exit\n"
      "on_teardown:\n"
      "  movi r4, 100\n"
      "  sti8 r4, 0, 98    ; 'b'\n"
      "  sti8 r4, 1, 121   ; 'y'\n"
      "  sti8 r4, 2, 101   ; 'e'\n"
      "  movi r1, 0\n"
      "  movi r2, 100\n"
      "  movi r3, 3\n"
      "  call 0            ; log \"bye\"\n"
      "  movi r0, 0\n"
      "  exit\n";
  return p;
}

// Replies to a cmd-33 cell with input value + this circuit's forwarded-cell
// count, as an 8-byte little-endian cmd-33 cell backward.
inline SamplePlugin counter_plugin() {
  SamplePlugin p;
  p.name = "counter";
  p.capability_mask = cap::kCellRead | cap::kCellEmit | cap::kStateRead;
  p.feature_ids = {kCounterFeatureId};
  p.entry_labels = {{EventKind::OnFeatureCell, "on_cell"}};
  p.source =
      "; counter: echo input + cells_forwarded\n"
      "on_cell:\n"
      "  movi r1, 0\n"
      "  movi r2, 496\n"
      "  call 3            ; read_cell -> arena[0..]\n"
      "  movi r1, 2        ; cells_forwarded field\n"
      "  movi r2, 16\n"
      "  movi r3, 8\n"
      "  call 1            ; get_field -> arena[16..24]\n"
      "  movi r4, 0\n"
      "  ld64 r5, r4, 0    ; input value\n"
      "  ld64 r6, r4, 16   ; cells_forwarded\n"
      "  add r5, r6\n"
      "  movi r4, 24\n"
      "  st64 r4, 0, r5\n"
      "  movi r1, 33\n"
      "  movi r2, 24\n"
      "  movi r3, 8\n"
      "  movi r4, 0        ; backward\n"
      "  call 4            ; emit_cell\n"
      "  movi r0, 0\n"
      "  exit\n";
  return p;
}

inline std::vector<SamplePlugin> sample_plugins() {
  return {padding_plugin(), counter_plugin()};
}

}  // namespace fan
