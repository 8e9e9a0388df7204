#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fan/relay.hpp"

namespace fan {

// Reply to an injected plugin, surfaced to the application.
struct PluginReply {
  bool ok = false;
  std::string name;           // ack
  std::uint32_t latency_us = 0;
  std::uint8_t err_code = 0;  // PLUGIN_ERR code
};

enum class CircuitState { Building, Open, Closed };

struct ClientCircuit {
  std::uint32_t circ_id = 0;
  NodeId first_hop{};
  std::vector<NodeId> route;
  std::vector<HopKeys> hops;  // mirror state, index 0 = first hop
  std::size_t established = 0;
  CircuitState state = CircuitState::Building;
  std::vector<PluginReply> plugin_replies;
  std::map<std::uint8_t, std::uint64_t> feature_cells;  // received, by relay_cmd
};

// Circuit originator: builds telescoped circuits, injects plugins at chosen
// hops, and runs its own local plugin attachments (e.g. the client half of a
// padding scheme). Same Action-list discipline as RelayNode.
class ClientNode {
 public:
  ClientNode(NodeId node_id, const CryptoProvider* crypto, std::uint64_t rng_seed = 0)
      : node_id_(node_id), crypto_(crypto), rng_(rng_seed),
        host_table_(make_host_table(ctx_)) {}

  const NodeId& node_id() const { return node_id_; }
  PluginRegistry& registry() { return registry_; }
  void set_clock(std::function<std::uint64_t()> now_ms) { clock_ = std::move(now_ms); }
  void set_gas_budget(std::uint64_t gas) { gas_budget_ = gas; }

  const ClientCircuit* circuit(std::uint32_t circ_id) const {
    auto it = circuits_.find(circ_id);
    return it == circuits_.end() ? nullptr : &it->second;
  }

  // Starts building a circuit through `route`; hop keys are drawn from the
  // node's random stream. Returns the circuit id on the first link.
  std::uint32_t begin_circuit(std::vector<NodeId> route, std::vector<Action>& actions) {
    if (route.empty()) throw std::invalid_argument("route must have at least one hop");
    ClientCircuit c;
    c.circ_id = next_circ_id_++;
    c.first_hop = route[0];
    c.route = std::move(route);
    c.hops.resize(c.route.size());
    for (auto& hop : c.hops) rng_.fill(hop.key);

    LinkCell cell;
    cell.circ_id = c.circ_id;
    cell.command = static_cast<std::uint8_t>(LinkCommand::Create);
    Bytes sealed = crypto_->seal(c.route[0], c.hops[0].key);
    std::copy(sealed.begin(), sealed.end(), cell.payload.begin());

    std::uint32_t id = c.circ_id;
    circuits_.emplace(id, std::move(c));
    push_send(actions, circuits_.at(id).first_hop, cell);
    return id;
  }

  std::vector<Action> handle_link_cell(const NodeId& from, const LinkCell& cell) {
    std::vector<Action> actions;
    auto it = circuits_.find(cell.circ_id);
    if (it == circuits_.end() || it->second.first_hop != from) {
      log(actions, "drop", {{"why", "unknown circ_id"}, {"circ_id", cell.circ_id}});
      return actions;
    }
    ClientCircuit& c = it->second;
    switch (cell.command) {
      case static_cast<std::uint8_t>(LinkCommand::Created):
        if (c.established == 0) {
          c.established = 1;
          continue_build(c, actions);
        }
        break;
      case static_cast<std::uint8_t>(LinkCommand::Relay):
        handle_backward(c, cell, actions);
        break;
      case static_cast<std::uint8_t>(LinkCommand::Destroy):
        teardown(c, actions);
        log(actions, "circuit_destroyed", {{"circ_id", c.circ_id}});
        break;
      default:
        log(actions, "drop", {{"why", "unexpected link command"},
                              {"command", cell.command}});
    }
    return actions;
  }

  std::vector<Action> send_data(std::uint32_t circ_id, std::uint16_t stream_id,
                                std::span<const std::uint8_t> data) {
    std::vector<Action> actions;
    ClientCircuit* c = open_circuit(circ_id, actions);
    if (!c) return actions;
    RelayPayload p;
    p.relay_cmd = static_cast<std::uint8_t>(RelayCommand::Data);
    p.stream_id = stream_id;
    p.length = static_cast<std::uint16_t>(std::min(data.size(), kRelayDataMax));
    std::copy_n(data.begin(), p.length, p.data.begin());
    send_forward(*c, c->hops.size() - 1, std::move(p), actions);
    return actions;
  }

  // Sends a raw extension-space cell to hop `hop_index` (0-based). Used by
  // feature protocols and by tests probing relay policy.
  std::vector<Action> send_feature(std::uint32_t circ_id, std::size_t hop_index,
                                   std::uint8_t relay_cmd,
                                   std::span<const std::uint8_t> data) {
    std::vector<Action> actions;
    ClientCircuit* c = open_circuit(circ_id, actions);
    if (!c || hop_index >= c->hops.size()) return actions;
    RelayPayload p;
    p.relay_cmd = relay_cmd;
    p.length = static_cast<std::uint16_t>(std::min(data.size(), kRelayDataMax));
    std::copy_n(data.begin(), p.length, p.data.begin());
    send_forward(*c, hop_index, std::move(p), actions);
    return actions;
  }

  // Ships a signed package to hop `hop_index` as fragmented PLUGIN_DELIVER
  // cells; the outcome arrives later as a PluginReply.
  std::vector<Action> inject_plugin(std::uint32_t circ_id, std::size_t hop_index,
                                    std::span<const std::uint8_t> package_bytes) {
    std::vector<Action> actions;
    ClientCircuit* c = open_circuit(circ_id, actions);
    if (!c || hop_index >= c->hops.size()) return actions;
    Bytes framed(2);
    put_u16(framed.data(), static_cast<std::uint16_t>(package_bytes.size()));
    framed.insert(framed.end(), package_bytes.begin(), package_bytes.end());
    for (std::size_t off = 0; off < framed.size(); off += kRelayDataMax) {
      std::size_t n = std::min(kRelayDataMax, framed.size() - off);
      RelayPayload p;
      p.relay_cmd = static_cast<std::uint8_t>(RelayCommand::PluginDeliver);
      p.length = static_cast<std::uint16_t>(n);
      std::copy_n(framed.begin() + off, n, p.data.begin());
      send_forward(*c, hop_index, std::move(p), actions);
    }
    return actions;
  }

  // Attaches a plugin to this endpoint (client half of a feature protocol).
  Result<AttachmentPtr, AttachError> attach_local(std::uint32_t circ_id,
                                                  const PluginPackage& pkg,
                                                  std::vector<Action>& actions) {
    auto it = circuits_.find(circ_id);
    if (it == circuits_.end()) return AttachError::OnAttachTrap;
    return registry_.attach(pkg, PluginRegistry::Scope::circuit(circ_id), &host_table_,
                            gas_budget_, [&](Attachment& att) {
                              return fire_event(it->second, att, EventKind::OnAttach, {},
                                                nullptr, actions);
                            });
  }

  std::vector<Action> fire_timer(std::uint32_t circ_id, std::uint8_t feature_id,
                                 std::uint64_t tag) {
    std::vector<Action> actions;
    auto it = circuits_.find(circ_id);
    if (it == circuits_.end() || it->second.state == CircuitState::Closed) return actions;
    AttachmentPtr att = registry_.lookup(feature_id, circ_id);
    if (!att) return actions;
    std::uint64_t args[1] = {tag};
    auto trap = fire_event(it->second, *att, EventKind::OnTimer, args, nullptr, actions);
    if (trap) kill_circuit(it->second, trap_reason(*trap), actions);
    return actions;
  }

  std::vector<Action> close_circuit(std::uint32_t circ_id) {
    std::vector<Action> actions;
    auto it = circuits_.find(circ_id);
    if (it == circuits_.end() || it->second.state == CircuitState::Closed) return actions;
    ClientCircuit& c = it->second;
    teardown(c, actions);
    std::array<std::uint8_t, kPayloadSize> empty{};
    LinkCell cell;
    cell.circ_id = c.circ_id;
    cell.command = static_cast<std::uint8_t>(LinkCommand::Destroy);
    cell.payload = empty;
    push_send(actions, c.first_hop, cell);
    return actions;
  }

 private:
  static nlohmann::json trap_reason(const Trap& t) {
    return {{"reason", "PluginTrap"}, {"trap", trap_name(t.kind)}, {"pc", t.pc}};
  }

  std::uint64_t now_ms() const {
    if (clock_) return clock_();
    return static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::milliseconds>(
            std::chrono::steady_clock::now().time_since_epoch())
            .count());
  }

  ClientCircuit* open_circuit(std::uint32_t circ_id, std::vector<Action>& actions) {
    auto it = circuits_.find(circ_id);
    if (it == circuits_.end() || it->second.state != CircuitState::Open) {
      log(actions, "drop", {{"why", "circuit not open"}, {"circ_id", circ_id}});
      return nullptr;
    }
    return &it->second;
  }

  void log(std::vector<Action>& actions, const std::string& kind, nlohmann::json detail) {
    Action a;
    a.kind = Action::Kind::Log;
    detail["kind"] = kind;
    a.detail = std::move(detail);
    actions.push_back(std::move(a));
  }

  void push_send(std::vector<Action>& actions, const NodeId& peer, LinkCell cell) {
    Action a;
    a.kind = Action::Kind::SendCell;
    a.peer = peer;
    a.cell = std::move(cell);
    actions.push_back(std::move(a));
  }

  // Seals for hop `target` and wraps through hops 0..target.
  void send_forward(ClientCircuit& c, std::size_t target, RelayPayload p,
                    std::vector<Action>& actions) {
    auto bytes =
        seal_payload_digest(*crypto_, std::move(p), c.hops[target].fwd_digest_state);
    LinkCell cell;
    cell.circ_id = c.circ_id;
    cell.command = static_cast<std::uint8_t>(LinkCommand::Relay);
    cell.payload = onion_wrap(*crypto_, bytes,
                              std::span<HopKeys>(c.hops.data(), target + 1));
    push_send(actions, c.first_hop, cell);
  }

  void continue_build(ClientCircuit& c, std::vector<Action>& actions) {
    if (c.established == c.route.size()) {
      c.state = CircuitState::Open;
      log(actions, "circuit_open", {{"circ_id", c.circ_id}, {"hops", c.established}});
      return;
    }
    std::size_t next = c.established;  // hop to add
    RelayPayload ext;
    ext.relay_cmd = static_cast<std::uint8_t>(RelayCommand::Extend);
    Bytes sealed = crypto_->seal(c.route[next], c.hops[next].key);
    ext.length = static_cast<std::uint16_t>(16 + sealed.size());
    std::copy(c.route[next].begin(), c.route[next].end(), ext.data.begin());
    std::copy(sealed.begin(), sealed.end(), ext.data.begin() + 16);
    send_forward(c, c.established - 1, std::move(ext), actions);
  }

  void handle_backward(ClientCircuit& c, const LinkCell& cell,
                       std::vector<Action>& actions) {
    if (c.state == CircuitState::Closed) return;
    auto buf = cell.payload;
    for (std::size_t i = 0; i < c.established; ++i) {
      apply_layer(*crypto_, c.hops[i], Direction::Backward, buf);
      if (recognize(buf, *crypto_, c.hops[i].bwd_digest_state)) {
        dispatch(c, i, decode_relay_payload(buf), actions);
        return;
      }
    }
    kill_circuit(c, {{"reason", "UnrecognizedCell"}}, actions);
  }

  void dispatch(ClientCircuit& c, std::size_t hop, const RelayPayload& p,
                std::vector<Action>& actions) {
    if (p.relay_cmd >= kFeatureIdMin) {
      ++c.feature_cells[p.relay_cmd];
      log(actions, "feature_cell", {{"circ_id", c.circ_id}, {"hop", hop},
                                    {"relay_cmd", p.relay_cmd}});
      AttachmentPtr att = registry_.lookup(p.relay_cmd, c.circ_id);
      if (!att) {
        kill_circuit(c, {{"reason", "UnknownFeature"}, {"relay_cmd", p.relay_cmd}},
                     actions);
        return;
      }
      std::uint64_t args[2] = {p.relay_cmd,
                               static_cast<std::uint64_t>(Direction::Backward)};
      auto trap = fire_event(c, *att, EventKind::OnFeatureCell, args, &p, actions);
      if (trap) kill_circuit(c, trap_reason(*trap), actions);
      return;
    }
    switch (static_cast<RelayCommand>(p.relay_cmd)) {
      case RelayCommand::Extended:
        if (c.state == CircuitState::Building && hop == c.established - 1) {
          ++c.established;
          continue_build(c, actions);
        }
        break;
      case RelayCommand::Data: {
        Action a;
        a.kind = Action::Kind::DeliverData;
        a.data.assign(p.data_view().begin(), p.data_view().end());
        a.detail = {{"stream_id", p.stream_id}, {"hop", hop}};
        actions.push_back(std::move(a));
        break;
      }
      case RelayCommand::PluginAck: {
        auto data = p.data_view();
        PluginReply r;
        r.ok = true;
        if (data.size() >= 5) {
          r.latency_us = get_u32(data.data());
          std::uint8_t n = data[4];
          if (data.size() >= 5u + n) r.name.assign(data.begin() + 5, data.begin() + 5 + n);
        }
        log(actions, "plugin_ack", {{"circ_id", c.circ_id}, {"hop", hop},
                                    {"plugin", r.name}});
        c.plugin_replies.push_back(std::move(r));
        break;
      }
      case RelayCommand::PluginErr: {
        PluginReply r;
        if (!p.data_view().empty()) r.err_code = p.data_view()[0];
        log(actions, "plugin_err", {{"circ_id", c.circ_id}, {"hop", hop},
                                    {"code", r.err_code}});
        c.plugin_replies.push_back(std::move(r));
        break;
      }
      case RelayCommand::End:
        log(actions, "stream_end", {{"stream_id", p.stream_id}});
        break;
      default:
        log(actions, "drop", {{"why", "unexpected backward relay command"},
                              {"relay_cmd", p.relay_cmd}});
    }
  }

  std::optional<Trap> fire_event(ClientCircuit& c, Attachment& att, EventKind event,
                                 std::span<const std::uint64_t> args,
                                 const RelayPayload* cell, std::vector<Action>& actions) {
    ctx_.circuit_id = c.circ_id;
    ctx_.hop_flags = 0;  // endpoint: no prev, no next
    ctx_.cells_forwarded = 0;
    ctx_.scratch = &att.scratch;
    ctx_.cell = cell;
    ctx_.emit_budget = kDefaultEmitBudget;
    ctx_.now_ms = [this] { return now_ms(); };
    ctx_.rand_bytes = [this](std::span<std::uint8_t> out) { rng_.fill(out); };
    ctx_.log = [this, &actions, &c, &att](std::uint64_t level, std::string msg) {
      Action a;
      a.kind = Action::Kind::Log;
      a.detail = {{"kind", "plugin_log"}, {"plugin", att.package.name},
                  {"circuit", c.circ_id}, {"level", level}, {"msg", msg}};
      actions.push_back(std::move(a));
    };
    ctx_.set_timer = [this, &actions, &c, &att](std::uint64_t ms, std::uint64_t tag) {
      Action a;
      a.kind = Action::Kind::SetTimer;
      a.delay_ms = ms;
      a.circuit_key = c.circ_id;
      a.feature_id = att.package.feature_ids.empty() ? 0 : att.package.feature_ids[0];
      a.tag = tag;
      actions.push_back(std::move(a));
    };
    ctx_.emit_cell = [this, &actions, &c](std::uint8_t cmd,
                                          std::span<const std::uint8_t> data,
                                          Direction d) {
      // Forward = into the circuit toward the exit; the client has no
      // backward side.
      if (d != Direction::Forward || c.state != CircuitState::Open) return false;
      RelayPayload p;
      p.relay_cmd = cmd;
      p.length = static_cast<std::uint16_t>(data.size());
      std::copy(data.begin(), data.end(), p.data.begin());
      send_forward(c, c.hops.size() - 1, std::move(p), actions);
      return true;
    };
    return att.fire(event, args, gas_budget_);
  }

  void teardown(ClientCircuit& c, std::vector<Action>& actions) {
    if (c.state == CircuitState::Closed) return;
    c.state = CircuitState::Closed;
    registry_.teardown_circuit(c.circ_id, [&](Attachment& att) {
      fire_event(c, att, EventKind::OnCircuitTeardown, {}, nullptr, actions);
    });
  }

  void kill_circuit(ClientCircuit& c, nlohmann::json reason, std::vector<Action>& actions) {
    if (c.state == CircuitState::Closed) return;
    teardown(c, actions);
    std::array<std::uint8_t, kPayloadSize> empty{};
    LinkCell cell;
    cell.circ_id = c.circ_id;
    cell.command = static_cast<std::uint8_t>(LinkCommand::Destroy);
    cell.payload = empty;
    push_send(actions, c.first_hop, cell);
    Action report;
    report.kind = Action::Kind::Report;
    reason["time"] = now_ms();
    reason["node"] = to_hex(node_id_);
    reason["circ_id"] = c.circ_id;
    report.detail = std::move(reason);
    actions.push_back(std::move(report));
  }

  NodeId node_id_;
  const CryptoProvider* crypto_;
  RandomStream rng_;
  std::function<std::uint64_t()> clock_;
  std::uint64_t gas_budget_ = kDefaultGasPerEvent;

  HostContext ctx_;
  HostTable host_table_;
  PluginRegistry registry_;

  std::map<std::uint32_t, ClientCircuit> circuits_;
  std::uint32_t next_circ_id_ = 1;
};

}  // namespace fan
