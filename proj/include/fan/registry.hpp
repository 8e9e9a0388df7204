#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <variant>

#include "fan/host_abi.hpp"
#include "fan/package.hpp"
#include "fan/vm.hpp"

namespace fan {

struct Attachment {
  PluginPackage package;
  VmInstance vm;
  std::array<std::uint8_t, 256> scratch{};
  bool global = false;
  std::uint32_t circuit_id = 0;

  Attachment(PluginPackage pkg, const HostTable* table)
      : package(std::move(pkg)),
        vm(instantiate(parse_program(package.code), package.memory_size, table,
                       package.capability_mask)) {}

  // Runs one event entry point if the package declares it. Returns the trap
  // if the plugin misbehaved, nullopt otherwise (including "no handler").
  std::optional<Trap> fire(EventKind event, std::span<const std::uint64_t> args,
                           std::uint64_t gas_budget) {
    const PluginEntry* entry = package.entry_for(event);
    if (!entry) return std::nullopt;
    RunResult r = vm.run(entry->pc, args, gas_budget);
    if (auto* trap = std::get_if<Trap>(&r)) return *trap;
    return std::nullopt;
  }
};

using AttachmentPtr = std::shared_ptr<Attachment>;

enum class AttachError { FeatureConflict, OnAttachTrap };

// Global and per-circuit (ephemeral) plugin attachments. Circuit scope wins
// on lookup; circuit attachments vanish at circuit teardown.
class PluginRegistry {
 public:
  struct Scope {
    bool is_global = true;
    std::uint32_t circuit_id = 0;

    static Scope global() { return {true, 0}; }
    static Scope circuit(std::uint32_t id) { return {false, id}; }
  };

  // `fire_on_attach` runs the ON_ATTACH entry with the caller's host context
  // already bound; the registry is untouched if it traps.
  Result<AttachmentPtr, AttachError> attach(
      PluginPackage pkg, Scope scope, const HostTable* table, std::uint64_t gas_budget,
      const std::function<std::optional<Trap>(Attachment&)>& fire_on_attach = {}) {
    for (auto id : pkg.feature_ids) {
      bool conflict = scope.is_global
                          ? global_.count(id) > 0
                          : per_circuit_.count({scope.circuit_id, id}) > 0;
      if (conflict) return AttachError::FeatureConflict;
    }
    auto att = std::make_shared<Attachment>(std::move(pkg), table);
    att->global = scope.is_global;
    att->circuit_id = scope.circuit_id;
    if (fire_on_attach) {
      if (fire_on_attach(*att)) return AttachError::OnAttachTrap;
    } else if (att->fire(EventKind::OnAttach, {}, gas_budget)) {
      return AttachError::OnAttachTrap;
    }
    for (auto id : att->package.feature_ids) {
      if (scope.is_global)
        global_[id] = att;
      else
        per_circuit_[{scope.circuit_id, id}] = att;
    }
    if (att->package.feature_ids.empty()) {
      // Pure-hook plugin: track it for teardown/detach events.
      if (!scope.is_global) hooks_.emplace(scope.circuit_id, att);
    }
    return att;
  }

  AttachmentPtr lookup(std::uint8_t feature_id, std::uint32_t circuit_id) const {
    if (auto it = per_circuit_.find({circuit_id, feature_id}); it != per_circuit_.end())
      return it->second;
    if (auto it = global_.find(feature_id); it != global_.end()) return it->second;
    return nullptr;
  }

  AttachmentPtr lookup_global(std::uint8_t feature_id) const {
    auto it = global_.find(feature_id);
    return it == global_.end() ? nullptr : it->second;
  }

  // Runs ON_DETACH, then removes the attachment from its scope.
  void detach(const AttachmentPtr& att, std::uint64_t gas_budget) {
    if (!att) return;
    att->fire(EventKind::OnDetach, {}, gas_budget);
    erase(att);
  }

  // Fires ON_CIRCUIT_TEARDOWN on every attachment scoped to the circuit,
  // then removes them. Global attachments are untouched.
  template <typename FireFn>
  void teardown_circuit(std::uint32_t circuit_id, FireFn&& fire) {
    std::vector<AttachmentPtr> victims;
    for (const auto& [key, att] : per_circuit_)
      if (key.first == circuit_id && (victims.empty() || victims.back() != att))
        victims.push_back(att);
    for (auto [it, end] = hooks_.equal_range(circuit_id); it != end; ++it)
      victims.push_back(it->second);
    for (const auto& att : victims) fire(*att);
    for (const auto& att : victims) erase(att);
  }

  void teardown_circuit(std::uint32_t circuit_id, std::uint64_t gas_budget) {
    teardown_circuit(circuit_id, [gas_budget](Attachment& a) {
      a.fire(EventKind::OnCircuitTeardown, {}, gas_budget);
    });
  }

  std::size_t global_count() const { return global_.size(); }
  std::size_t circuit_count() const { return per_circuit_.size(); }

  std::vector<AttachmentPtr> attachments_for_circuit(std::uint32_t circuit_id) const {
    std::vector<AttachmentPtr> out;
    for (const auto& [key, att] : per_circuit_)
      if (key.first == circuit_id &&
          std::find(out.begin(), out.end(), att) == out.end())
        out.push_back(att);
    return out;
  }

 private:
  void erase(const AttachmentPtr& att) {
    std::erase_if(global_, [&](const auto& kv) { return kv.second == att; });
    std::erase_if(per_circuit_, [&](const auto& kv) { return kv.second == att; });
    std::erase_if(hooks_, [&](const auto& kv) { return kv.second == att; });
  }

  std::map<std::uint8_t, AttachmentPtr> global_;
  std::map<std::pair<std::uint32_t, std::uint8_t>, AttachmentPtr> per_circuit_;
  std::multimap<std::uint32_t, AttachmentPtr> hooks_;
};

}  // namespace fan
