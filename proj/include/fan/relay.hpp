#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fan/cell.hpp"
#include "fan/host_abi.hpp"
#include "fan/manifest.hpp"
#include "fan/package.hpp"
#include "fan/registry.hpp"
#include "fan/samples.hpp"

namespace fan {

struct NodePolicy {
  std::uint32_t max_capability_mask = cap::kAll;
  std::uint64_t gas_per_event = kDefaultGasPerEvent;
  int emit_budget = kDefaultEmitBudget;
};

// Output of one node-level processing step; the transport (simulator or
// socket adapter) turns these into wire/clock effects.
struct Action {
  enum class Kind { SendCell, Report, Log, DeliverData, SetTimer };

  Kind kind;
  NodeId peer{};   // SendCell
  LinkCell cell{};
  nlohmann::json detail;  // Report / Log / DeliverData annotations
  Bytes data;             // DeliverData
  std::uint64_t delay_ms = 0;  // SetTimer
  std::uint32_t circuit_key = 0;
  std::uint8_t feature_id = 0;
  std::uint64_t tag = 0;
};

struct PendingTimer {
  std::uint64_t fire_at = 0;
  std::uint8_t feature_id = 0;
  std::uint64_t tag = 0;
};

struct CircuitEntry {
  std::uint32_t key = 0;  // node-local identity, visible to plugins
  NodeId prev_peer{};
  std::uint32_t prev_circ_id = 0;
  bool has_next = false;
  NodeId next_peer{};
  std::uint32_t next_circ_id = 0;
  bool next_established = false;
  HopKeys hop_keys;
  std::uint64_t cells_forwarded = 0;
  bool destroyed = false;
  std::vector<PendingTimer> pending_timers;
  // PLUGIN_DELIVER reassembly
  Bytes plugin_buf;
  std::size_t plugin_expected = 0;
};

// Error codes carried by PLUGIN_ERR cells.
namespace plugin_err {
inline constexpr std::uint8_t kBadPackage = 1;
inline constexpr std::uint8_t kUnknownSigner = 2;
inline constexpr std::uint8_t kSignatureInvalid = 3;
inline constexpr std::uint8_t kVerifierRejected = 4;
inline constexpr std::uint8_t kCapabilityDenied = 5;
inline constexpr std::uint8_t kFeatureConflict = 6;
}  // namespace plugin_err

inline std::uint8_t plugin_err_code(PackageError e) {
  switch (e) {
    case PackageError::BadMagic: return plugin_err::kBadPackage;
    case PackageError::UnknownSigner: return plugin_err::kUnknownSigner;
    case PackageError::SignatureInvalid: return plugin_err::kSignatureInvalid;
    case PackageError::VerifierRejected: return plugin_err::kVerifierRejected;
    case PackageError::UnknownCapability: return plugin_err::kCapabilityDenied;
  }
  return plugin_err::kBadPackage;
}

// Deterministic per-node random stream (splitmix64 counter mode).
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t next() { return splitmix64(seed_ + counter_++); }

  void fill(std::span<std::uint8_t> out) {
    std::size_t off = 0;
    while (off < out.size()) {
      std::uint64_t v = next();
      for (int i = 0; i < 8 && off < out.size(); ++i, ++off)
        out[off] = static_cast<std::uint8_t>(v >> (8 * i));
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

// The relay state machine. All methods run on the owning event loop; every
// protocol effect is returned as Actions.
class RelayNode {
 public:
  RelayNode(NodeId node_id, const CryptoProvider* crypto, TrustStore trust_store,
            NodePolicy policy = {}, std::uint64_t rng_seed = 0)
      : node_id_(node_id),
        crypto_(crypto),
        trust_store_(std::move(trust_store)),
        policy_(policy),
        rng_(rng_seed),
        host_table_(make_host_table(ctx_)) {
    ctx_.now_ms = [] {
      return static_cast<std::uint64_t>(
          std::chrono::duration_cast<std::chrono::milliseconds>(
              std::chrono::steady_clock::now().time_since_epoch())
              .count());
    };
  }

  const NodeId& node_id() const { return node_id_; }
  PluginRegistry& registry() { return registry_; }
  const PluginRegistry& registry() const { return registry_; }
  const NodePolicy& policy() const { return policy_; }
  const HostTable& host_table() const { return host_table_; }

  void set_clock(std::function<std::uint64_t()> now_ms) { clock_ = std::move(now_ms); }

  std::size_t circuit_count() const { return circuits_.size(); }
  const CircuitEntry* circuit(std::uint32_t key) const {
    auto it = circuits_.find(key);
    return it == circuits_.end() ? nullptr : &it->second;
  }

  std::vector<Action> handle_link_cell(const NodeId& from, const LinkCell& cell) {
    std::vector<Action> actions;
    switch (cell.command) {
      case static_cast<std::uint8_t>(LinkCommand::Create):
        handle_create(from, cell, actions);
        break;
      case static_cast<std::uint8_t>(LinkCommand::Created):
        handle_created(from, cell, actions);
        break;
      case static_cast<std::uint8_t>(LinkCommand::Relay):
        handle_relay(from, cell, actions);
        break;
      case static_cast<std::uint8_t>(LinkCommand::Destroy):
        handle_destroy(from, cell, actions);
        break;
      default:
        log(actions, "drop", {{"why", "unknown link command"},
                              {"command", cell.command},
                              {"circ_id", cell.circ_id}});
    }
    return actions;
  }

  std::vector<Action> fire_timer(std::uint32_t circuit_key, std::uint8_t feature_id,
                                 std::uint64_t tag) {
    std::vector<Action> actions;
    auto it = circuits_.find(circuit_key);
    if (it == circuits_.end()) return actions;
    AttachmentPtr att = registry_.lookup(feature_id, circuit_key);
    if (!att) att = registry_.lookup_global(feature_id);
    if (!att) return actions;
    std::uint64_t args[1] = {tag};
    auto trap = fire_event(it->second, *att, EventKind::OnTimer, args, nullptr,
                           Direction::Backward, actions);
    if (trap) kill_circuit(it->second, trap_reason(*trap), actions);
    return actions;
  }

  // Global (operator-provisioned) attachment; packages arrive as bytes.
  Result<AttachmentPtr, std::uint8_t> attach_global(std::span<const std::uint8_t> bytes,
                                                    std::vector<Action>& actions) {
    auto parsed = parse_and_verify(bytes, trust_store_);
    if (!parsed.ok()) return plugin_err_code(parsed.error());
    if (parsed.value().capability_mask & ~policy_.max_capability_mask)
      return plugin_err::kCapabilityDenied;
    return do_attach(parsed.value(), PluginRegistry::Scope::global(), nullptr, actions);
  }

 private:
  using Clock = std::chrono::steady_clock;

  std::uint64_t now_ms() const {
    if (clock_) return clock_();
    return static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::milliseconds>(
            Clock::now().time_since_epoch())
            .count());
  }

  void log(std::vector<Action>& actions, const std::string& kind, nlohmann::json detail) {
    Action a;
    a.kind = Action::Kind::Log;
    detail["kind"] = kind;
    a.detail = std::move(detail);
    actions.push_back(std::move(a));
  }

  void send(std::vector<Action>& actions, const NodeId& peer, std::uint32_t circ_id,
            LinkCommand command, const std::array<std::uint8_t, kPayloadSize>& payload) {
    Action a;
    a.kind = Action::Kind::SendCell;
    a.peer = peer;
    a.cell.circ_id = circ_id;
    a.cell.command = static_cast<std::uint8_t>(command);
    a.cell.payload = payload;
    actions.push_back(std::move(a));
  }

  void send_backward_recognized(CircuitEntry& c, RelayPayload p,
                                std::vector<Action>& actions) {
    auto bytes = seal_payload_digest(*crypto_, std::move(p), c.hop_keys.bwd_digest_state);
    apply_layer(*crypto_, c.hop_keys, Direction::Backward, bytes);
    send(actions, c.prev_peer, c.prev_circ_id, LinkCommand::Relay, bytes);
  }

  static nlohmann::json trap_reason(const Trap& t) {
    return {{"reason", "PluginTrap"},
            {"trap", trap_name(t.kind)},
            {"pc", t.pc}};
  }

  void handle_create(const NodeId& from, const LinkCell& cell,
                     std::vector<Action>& actions) {
    if (cell.circ_id == 0) {
      log(actions, "drop", {{"why", "reserved circ_id 0"}});
      return;
    }
    if (prev_index_.count({from, cell.circ_id})) {
      log(actions, "drop", {{"why", "duplicate CREATE"}, {"circ_id", cell.circ_id}});
      return;
    }
    Bytes sealed(cell.payload.begin(), cell.payload.begin() + 32);
    Bytes key = crypto_->open(node_id_, sealed);

    CircuitEntry c;
    c.key = next_circuit_key_++;
    c.prev_peer = from;
    c.prev_circ_id = cell.circ_id;
    std::copy(key.begin(), key.end(), c.hop_keys.key.begin());
    std::uint32_t ckey = c.key;
    circuits_.emplace(ckey, std::move(c));
    prev_index_[{from, cell.circ_id}] = ckey;

    std::array<std::uint8_t, kPayloadSize> empty{};
    send(actions, from, cell.circ_id, LinkCommand::Created, empty);
  }

  void handle_created(const NodeId& from, const LinkCell& cell,
                      std::vector<Action>& actions) {
    auto it = next_index_.find({from, cell.circ_id});
    if (it == next_index_.end()) {
      log(actions, "drop", {{"why", "CREATED for unknown circuit"}});
      return;
    }
    CircuitEntry& c = circuits_.at(it->second);
    if (c.next_established) return;
    c.next_established = true;
    RelayPayload extended;
    extended.relay_cmd = static_cast<std::uint8_t>(RelayCommand::Extended);
    send_backward_recognized(c, extended, actions);
  }

  void handle_relay(const NodeId& from, const LinkCell& cell,
                    std::vector<Action>& actions) {
    if (auto it = prev_index_.find({from, cell.circ_id}); it != prev_index_.end()) {
      relay_forward(circuits_.at(it->second), cell, actions);
      return;
    }
    if (auto it = next_index_.find({from, cell.circ_id}); it != next_index_.end()) {
      relay_backward(circuits_.at(it->second), cell, actions);
      return;
    }
    log(actions, "drop", {{"why", "unknown circ_id"}, {"circ_id", cell.circ_id}});
  }

  void relay_forward(CircuitEntry& c, const LinkCell& cell, std::vector<Action>& actions) {
    if (c.destroyed) return;
    auto buf = onion_unwrap_layer(*crypto_, cell.payload, c.hop_keys, Direction::Forward);
    if (recognize(buf, *crypto_, c.hop_keys.fwd_digest_state)) {
      process_relay_command(c, decode_relay_payload(buf), Direction::Forward, actions);
      return;
    }
    if (c.has_next && c.next_established) {
      send(actions, c.next_peer, c.next_circ_id, LinkCommand::Relay, buf);
      ++c.cells_forwarded;
      return;
    }
    kill_circuit(c, {{"reason", "UnrecognizedCell"}}, actions);
  }

  void relay_backward(CircuitEntry& c, const LinkCell& cell, std::vector<Action>& actions) {
    if (c.destroyed) return;
    auto buf = cell.payload;
    apply_layer(*crypto_, c.hop_keys, Direction::Backward, buf);
    send(actions, c.prev_peer, c.prev_circ_id, LinkCommand::Relay, buf);
    ++c.cells_forwarded;
  }

  void process_relay_command(CircuitEntry& c, const RelayPayload& p, Direction dir,
                             std::vector<Action>& actions) {
    if (p.relay_cmd >= kFeatureIdMin) {
      dispatch_feature(c, p, dir, actions);
      return;
    }
    switch (static_cast<RelayCommand>(p.relay_cmd)) {
      case RelayCommand::Data: {
        // This hop is the destination: deliver to the application sink and
        // echo back (demo exit behavior).
        Action deliver;
        deliver.kind = Action::Kind::DeliverData;
        deliver.data.assign(p.data_view().begin(), p.data_view().end());
        deliver.detail = {{"stream_id", p.stream_id}};
        actions.push_back(std::move(deliver));
        RelayPayload echo = p;
        send_backward_recognized(c, echo, actions);
        break;
      }
      case RelayCommand::End:
        log(actions, "stream_end", {{"stream_id", p.stream_id}});
        break;
      case RelayCommand::Extend:
        handle_extend(c, p, actions);
        break;
      case RelayCommand::PluginDeliver:
        deliver_plugin(c, p, actions);
        break;
      case RelayCommand::Extended:
      case RelayCommand::PluginAck:
      case RelayCommand::PluginErr:
        log(actions, "drop", {{"why", "client-only relay command"},
                              {"relay_cmd", p.relay_cmd}});
        break;
      default:
        log(actions, "drop", {{"why", "unhandled core relay command"},
                              {"relay_cmd", p.relay_cmd}});
        break;
    }
  }

  void handle_extend(CircuitEntry& c, const RelayPayload& p, std::vector<Action>& actions) {
    auto data = p.data_view();
    if (data.size() < 16 + 32 || c.has_next) {
      log(actions, "drop", {{"why", "malformed EXTEND"}});
      return;
    }
    NodeId next{};
    std::copy_n(data.begin(), 16, next.begin());
    c.has_next = true;
    c.next_peer = next;
    c.next_circ_id = next_circ_counter_++;
    c.next_established = false;
    next_index_[{next, c.next_circ_id}] = c.key;

    std::array<std::uint8_t, kPayloadSize> payload{};
    std::copy(data.begin() + 16, data.end(), payload.begin());
    send(actions, next, c.next_circ_id, LinkCommand::Create, payload);
  }

  void dispatch_feature(CircuitEntry& c, const RelayPayload& p, Direction dir,
                        std::vector<Action>& actions) {
    AttachmentPtr att = registry_.lookup(p.relay_cmd, c.key);
    if (!att) {
      kill_circuit(c, {{"reason", "UnknownFeature"}, {"relay_cmd", p.relay_cmd}}, actions);
      return;
    }
    std::uint64_t args[2] = {p.relay_cmd, static_cast<std::uint64_t>(dir)};
    auto trap = fire_event(c, *att, EventKind::OnFeatureCell, args, &p, dir, actions);
    if (trap) kill_circuit(c, trap_reason(*trap), actions);
  }

  void deliver_plugin(CircuitEntry& c, const RelayPayload& p, std::vector<Action>& actions) {
    auto data = p.data_view();
    if (c.plugin_expected == 0) {
      if (data.size() < 2) {
        reply_plugin_err(c, plugin_err::kBadPackage, actions);
        return;
      }
      c.plugin_expected = get_u16(data.data());
      c.plugin_buf.assign(data.begin() + 2, data.end());
    } else {
      c.plugin_buf.insert(c.plugin_buf.end(), data.begin(), data.end());
    }
    if (c.plugin_buf.size() < c.plugin_expected) return;  // await next fragment
    Bytes bytes(c.plugin_buf.begin(), c.plugin_buf.begin() + c.plugin_expected);
    c.plugin_buf.clear();
    c.plugin_expected = 0;

    auto t0 = Clock::now();
    auto parsed = parse_and_verify(bytes, trust_store_);
    if (!parsed.ok()) {
      reply_plugin_err(c, plugin_err_code(parsed.error()), actions);
      return;
    }
    if (parsed.value().capability_mask & ~policy_.max_capability_mask) {
      reply_plugin_err(c, plugin_err::kCapabilityDenied, actions);
      return;
    }
    auto attached =
        do_attach(parsed.value(), PluginRegistry::Scope::circuit(c.key), &c, actions);
    if (!attached.ok()) {
      reply_plugin_err(c, attached.error(), actions);
      return;
    }
    auto latency_us = std::chrono::duration_cast<std::chrono::microseconds>(
                          Clock::now() - t0)
                          .count();
    RelayPayload ack;
    ack.relay_cmd = static_cast<std::uint8_t>(RelayCommand::PluginAck);
    const std::string& name = attached.value()->package.name;
    ack.length = static_cast<std::uint16_t>(4 + 1 + name.size());
    put_u32(ack.data.data(), static_cast<std::uint32_t>(std::max<long>(latency_us, 1)));
    ack.data[4] = static_cast<std::uint8_t>(name.size());
    std::copy(name.begin(), name.end(), ack.data.begin() + 5);
    send_backward_recognized(c, ack, actions);
    Action note;
    note.kind = Action::Kind::Log;
    note.detail = {{"kind", "plugin_attach"},
                   {"plugin", name},
                   {"circuit", c.key},
                   {"scope", "circuit"}};
    actions.push_back(std::move(note));
  }

  void reply_plugin_err(CircuitEntry& c, std::uint8_t code, std::vector<Action>& actions) {
    RelayPayload err;
    err.relay_cmd = static_cast<std::uint8_t>(RelayCommand::PluginErr);
    err.length = 1;
    err.data[0] = code;
    send_backward_recognized(c, err, actions);
    log(actions, "plugin_err", {{"code", code}, {"circuit", c.key}});
  }

  Result<AttachmentPtr, std::uint8_t> do_attach(const PluginPackage& pkg,
                                                PluginRegistry::Scope scope,
                                                CircuitEntry* circuit,
                                                std::vector<Action>& actions) {
    auto r = registry_.attach(pkg, scope, &host_table_, policy_.gas_per_event,
                              [&](Attachment& att) {
                                return fire_event(circuit, att, EventKind::OnAttach, {},
                                                  nullptr, Direction::Backward, actions);
                              });
    if (r.ok()) return r.value();
    return r.error() == AttachError::FeatureConflict ? plugin_err::kFeatureConflict
                                                     : plugin_err::kBadPackage;
  }

  std::optional<Trap> fire_event(CircuitEntry& c, Attachment& att, EventKind event,
                                 std::span<const std::uint64_t> args,
                                 const RelayPayload* cell, Direction dir,
                                 std::vector<Action>& actions) {
    return fire_event(&c, att, event, args, cell, dir, actions);
  }

  // Binds the host context to (circuit, attachment, triggering cell) and
  // runs the entry point.
  std::optional<Trap> fire_event(CircuitEntry* c, Attachment& att, EventKind event,
                                 std::span<const std::uint64_t> args,
                                 const RelayPayload* cell, Direction dir,
                                 std::vector<Action>& actions) {
    ctx_.circuit_id = c ? c->key : 0;
    ctx_.hop_flags = c ? static_cast<std::uint8_t>(1 | (c->has_next ? 2 : 0)) : 0;
    ctx_.cells_forwarded = c ? c->cells_forwarded : 0;
    ctx_.scratch = &att.scratch;
    ctx_.cell = cell;
    ctx_.emit_budget = policy_.emit_budget;
    ctx_.now_ms = [this] { return now_ms(); };
    ctx_.rand_bytes = [this](std::span<std::uint8_t> out) { rng_.fill(out); };
    ctx_.log = [this, &actions, c, &att](std::uint64_t level, std::string msg) {
      Action a;
      a.kind = Action::Kind::Log;
      a.detail = {{"kind", "plugin_log"},
                  {"plugin", att.package.name},
                  {"circuit", c ? c->key : 0},
                  {"level", level},
                  {"msg", msg}};
      actions.push_back(std::move(a));
    };
    ctx_.set_timer = [this, &actions, c, &att](std::uint64_t ms, std::uint64_t tag) {
      if (!c) return;
      std::uint8_t feature =
          att.package.feature_ids.empty() ? 0 : att.package.feature_ids[0];
      c->pending_timers.push_back({now_ms() + ms, feature, tag});
      Action a;
      a.kind = Action::Kind::SetTimer;
      a.delay_ms = ms;
      a.circuit_key = c->key;
      a.feature_id = feature;
      a.tag = tag;
      actions.push_back(std::move(a));
    };
    ctx_.emit_cell = [this, &actions, c](std::uint8_t cmd,
                                         std::span<const std::uint8_t> data,
                                         Direction d) {
      if (!c || c->destroyed) return false;
      RelayPayload p;
      p.relay_cmd = cmd;
      p.length = static_cast<std::uint16_t>(data.size());
      std::copy(data.begin(), data.end(), p.data.begin());
      if (d == Direction::Backward) {
        send_backward_recognized(*c, std::move(p), actions);
        return true;
      }
      if (!c->has_next || !c->next_established) return false;
      // Forward emission: next hops treat it like any other forward cell.
      auto bytes = seal_payload_digest(*crypto_, std::move(p), c->hop_keys.fwd_digest_state);
      send(actions, c->next_peer, c->next_circ_id, LinkCommand::Relay, bytes);
      return true;
    };
    return att.fire(event, args, policy_.gas_per_event);
  }

  void kill_circuit(CircuitEntry& c, nlohmann::json reason, std::vector<Action>& actions) {
    if (c.destroyed) return;
    c.destroyed = true;
    registry_.teardown_circuit(c.key, [&](Attachment& att) {
      fire_event(c, att, EventKind::OnCircuitTeardown, {}, nullptr, Direction::Backward,
                 actions);
    });
    std::array<std::uint8_t, kPayloadSize> empty{};
    send(actions, c.prev_peer, c.prev_circ_id, LinkCommand::Destroy, empty);
    if (c.has_next) send(actions, c.next_peer, c.next_circ_id, LinkCommand::Destroy, empty);

    Action report;
    report.kind = Action::Kind::Report;
    reason["time"] = now_ms();
    reason["node"] = to_hex(node_id_);
    reason["circ_id"] = c.prev_circ_id;
    report.detail = std::move(reason);
    actions.push_back(std::move(report));
    remove_circuit(c);
  }

  void handle_destroy(const NodeId& from, const LinkCell& cell,
                      std::vector<Action>& actions) {
    CircuitEntry* c = nullptr;
    bool from_prev = false;
    if (auto it = prev_index_.find({from, cell.circ_id}); it != prev_index_.end()) {
      c = &circuits_.at(it->second);
      from_prev = true;
    } else if (auto it = next_index_.find({from, cell.circ_id}); it != next_index_.end()) {
      c = &circuits_.at(it->second);
    }
    if (!c) {
      log(actions, "drop", {{"why", "DESTROY for unknown circuit"}});
      return;
    }
    c->destroyed = true;
    registry_.teardown_circuit(c->key, [&](Attachment& att) {
      fire_event(*c, att, EventKind::OnCircuitTeardown, {}, nullptr, Direction::Backward,
                 actions);
    });
    std::array<std::uint8_t, kPayloadSize> empty{};
    if (from_prev && c->has_next)
      send(actions, c->next_peer, c->next_circ_id, LinkCommand::Destroy, empty);
    if (!from_prev)
      send(actions, c->prev_peer, c->prev_circ_id, LinkCommand::Destroy, empty);
    log(actions, "circuit_destroyed", {{"circuit", c->key}});
    remove_circuit(*c);
  }

  void remove_circuit(CircuitEntry& c) {
    prev_index_.erase({c.prev_peer, c.prev_circ_id});
    if (c.has_next) next_index_.erase({c.next_peer, c.next_circ_id});
    circuits_.erase(c.key);
  }

  NodeId node_id_;
  const CryptoProvider* crypto_;
  TrustStore trust_store_;
  NodePolicy policy_;
  RandomStream rng_;
  std::function<std::uint64_t()> clock_;

  HostContext ctx_;
  HostTable host_table_;
  PluginRegistry registry_;

  std::map<std::uint32_t, CircuitEntry> circuits_;
  std::map<std::pair<NodeId, std::uint32_t>, std::uint32_t> prev_index_;
  std::map<std::pair<NodeId, std::uint32_t>, std::uint32_t> next_index_;
  std::uint32_t next_circuit_key_ = 1;
  std::uint32_t next_circ_counter_ = 1000;
};

}  // namespace fan
