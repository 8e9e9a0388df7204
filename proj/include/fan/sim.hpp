#pragma once

#include <functional>
#include <map>
#include <memory>
#include <queue>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fan/client.hpp"
#include "fan/relay.hpp"
#include "fan/samples.hpp"

namespace fan {

// Derives a stable 16-byte node id from a scenario name.
inline NodeId node_id_from_name(const std::string& name) {
  NodeId id{};
  std::uint64_t h = fnv1a64({reinterpret_cast<const std::uint8_t*>(name.data()),
                             name.size()});
  put_u64(id.data(), splitmix64(h));
  put_u64(id.data() + 8, splitmix64(h + 1));
  return id;
}

struct SimResult {
  std::vector<std::string> trace;  // JSON lines, stable across runs per seed
  std::vector<nlohmann::json> reports;
  std::vector<std::string> failures;
  std::uint64_t cells_delivered = 0;

  bool ok() const { return failures.empty(); }
};

// Deterministic discrete-event simulation of clients and relays driven by a
// JSON scenario. Wall clock never enters the trace; all time is virtual.
class Simulation {
 public:
  explicit Simulation(nlohmann::json config) : config_(std::move(config)) {
    crypto_init();
    seed_ = config_.value("seed", 1u);
    duration_ms_ = config_.value("duration_ms", 1000u);
    default_latency_ms_ = config_.value("default_latency_ms", 1u);

    // Scenario signing key, defaulting to the 0x42-repeated seed so shipped
    // scenarios and tests agree on key ids.
    std::array<std::uint8_t, 32> sk_seed{};
    if (config_.contains("signing_seed_hex"))
      sk_seed = array_from_hex<32>(config_["signing_seed_hex"].get<std::string>());
    else
      sk_seed.fill(0x42);
    signing_key_ = std::make_unique<SigningKey>(SigningKey::from_seed(sk_seed));

    for (const auto& rc : config_.value("relays", nlohmann::json::array()))
      add_relay(rc);
    for (const auto& cc : config_.value("clients", nlohmann::json::array()))
      add_client(cc);
    for (const auto& lc : config_.value("links", nlohmann::json::array())) {
      NodeId a = ids_.at(lc.at("a").get<std::string>());
      NodeId b = ids_.at(lc.at("b").get<std::string>());
      latency_[{a, b}] = latency_[{b, a}] = lc.value("latency_ms", default_latency_ms_);
    }
  }

  SimResult run() {
    for (const auto& [name, relay] : relays_)
      for (const auto& plugin_name :
           relay_configs_.at(name).value("global_plugins", std::vector<std::string>{}))
        schedule(0, [this, name, plugin_name] {
          std::vector<Action> actions;
          auto r = relays_.at(name)->attach_global(
              signed_sample(plugin_name), actions);
          trace_line({{"t_ms", now_}, {"node", name}, {"kind", "global_attach"},
                      {"detail", {{"plugin", plugin_name}, {"ok", r.ok()}}}});
          process(ids_.at(name), actions);
        });

    for (const auto& step : config_.value("script", nlohmann::json::array()))
      schedule(step.value("at_ms", 0u), [this, step] { run_step(step); });

    while (!queue_.empty()) {
      Ev ev = queue_.top();
      queue_.pop();
      if (ev.t > duration_ms_) break;
      now_ = ev.t;
      ev.fn();
    }

    check_expectations();
    return std::move(result_);
  }

 private:
  struct Ev {
    std::uint64_t t;
    std::uint64_t seq;
    std::function<void()> fn;
    bool operator>(const Ev& o) const {
      return t != o.t ? t > o.t : seq > o.seq;
    }
  };

  void add_relay(const nlohmann::json& rc) {
    std::string name = rc.at("name").get<std::string>();
    NodeId id = node_id_from_name(name);
    NodePolicy policy;
    if (rc.contains("policy")) {
      const auto& p = rc["policy"];
      policy.max_capability_mask = p.value("max_capabilities", cap::kAll);
      policy.gas_per_event = p.value("gas_per_event", kDefaultGasPerEvent);
      policy.emit_budget = p.value("emit_budget", kDefaultEmitBudget);
    }
    TrustStore trust;
    if (rc.value("trust_signing_key", true))
      trust[signing_key_->key_id()] = signing_key_->public_key;
    for (const auto& hex : rc.value("trusted_keys", std::vector<std::string>{})) {
      PublicKey pk = array_from_hex<32>(hex);
      trust[pk] = pk;  // key id is the public key
    }
    std::uint64_t node_seed = splitmix64(seed_ ^ fnv1a64(
        {reinterpret_cast<const std::uint8_t*>(name.data()), name.size()}));
    relays_[name] = std::make_unique<RelayNode>(id, &crypto_, trust, policy, node_seed);
    relays_[name]->set_clock([this] { return now_; });
    relay_configs_[name] = rc;
    ids_[name] = id;
    names_[id] = name;
  }

  void add_client(const nlohmann::json& cc) {
    std::string name = cc.at("name").get<std::string>();
    NodeId id = node_id_from_name(name);
    std::uint64_t node_seed = splitmix64(seed_ ^ fnv1a64(
        {reinterpret_cast<const std::uint8_t*>(name.data()), name.size()}));
    clients_[name] = std::make_unique<ClientNode>(id, &crypto_, node_seed);
    clients_[name]->set_clock([this] { return now_; });
    ids_[name] = id;
    names_[id] = name;
  }

  void schedule(std::uint64_t t, std::function<void()> fn) {
    queue_.push({t, seq_++, std::move(fn)});
  }

  std::uint64_t latency(const NodeId& a, const NodeId& b) const {
    auto it = latency_.find({a, b});
    return it == latency_.end() ? default_latency_ms_ : it->second;
  }

  void trace_line(nlohmann::json j) { result_.trace.push_back(j.dump()); }

  Bytes signed_sample(const std::string& name) {
    for (const auto& s : sample_plugins())
      if (s.name == name) return s.build_signed(*signing_key_);
    throw std::runtime_error("unknown sample plugin: " + name);
  }

  PluginPackage sample_package(const std::string& name) {
    for (const auto& s : sample_plugins())
      if (s.name == name) return s.build();
    throw std::runtime_error("unknown sample plugin: " + name);
  }

  // Routes one node's actions into the event queue and the trace.
  void process(const NodeId& owner, const std::vector<Action>& actions) {
    std::string owner_name = names_.at(owner);
    for (const Action& a : actions) {
      switch (a.kind) {
        case Action::Kind::SendCell: {
          std::uint64_t at = now_ + latency(owner, a.peer);
          NodeId peer = a.peer;
          LinkCell cell = a.cell;
          schedule(at, [this, owner, peer, cell] {
            trace_line({{"t_ms", now_}, {"node", names_.at(peer)}, {"kind", "cell"},
                        {"detail", {{"from", names_.at(owner)}, {"circ", cell.circ_id},
                                    {"cmd", cell.command}}}});
            deliver(owner, peer, cell);
          });
          break;
        }
        case Action::Kind::SetTimer: {
          std::uint32_t ckey = a.circuit_key;
          std::uint8_t feature = a.feature_id;
          std::uint64_t tag = a.tag;
          schedule(now_ + a.delay_ms, [this, owner, ckey, feature, tag] {
            fire_timer(owner, ckey, feature, tag);
          });
          break;
        }
        case Action::Kind::Report:
          result_.reports.push_back(a.detail);
          trace_line({{"t_ms", now_}, {"node", owner_name}, {"kind", "report"},
                      {"detail", a.detail}});
          break;
        case Action::Kind::Log:
          trace_line({{"t_ms", now_}, {"node", owner_name}, {"kind", "log"},
                      {"detail", a.detail}});
          break;
        case Action::Kind::DeliverData:
          ++result_.cells_delivered;
          delivered_[owner_name].push_back(a.data);
          trace_line({{"t_ms", now_}, {"node", owner_name}, {"kind", "data"},
                      {"detail", {{"data", to_hex(a.data)}}}});
          break;
      }
    }
  }

  void deliver(const NodeId& from, const NodeId& to, const LinkCell& cell) {
    const std::string& to_name = names_.at(to);
    if (auto it = relays_.find(to_name); it != relays_.end()) {
      process(to, it->second->handle_link_cell(from, cell));
    } else if (auto jt = clients_.find(to_name); jt != clients_.end()) {
      process(to, jt->second->handle_link_cell(from, cell));
    }
  }

  void fire_timer(const NodeId& owner, std::uint32_t circuit_key, std::uint8_t feature,
                  std::uint64_t tag) {
    const std::string& name = names_.at(owner);
    if (auto it = relays_.find(name); it != relays_.end())
      process(owner, it->second->fire_timer(circuit_key, feature, tag));
    else if (auto jt = clients_.find(name); jt != clients_.end())
      process(owner, jt->second->fire_timer(circuit_key, feature, tag));
  }

  void run_step(const nlohmann::json& step) {
    std::string op = step.at("do").get<std::string>();
    if (op == "build_circuit") {
      ClientNode& client = *clients_.at(step.at("client").get<std::string>());
      std::vector<NodeId> route;
      for (const auto& hop : step.at("route"))
        route.push_back(ids_.at(hop.get<std::string>()));
      std::vector<Action> actions;
      std::uint32_t circ = client.begin_circuit(std::move(route), actions);
      circuits_[step.at("circuit").get<std::string>()] = {&client, circ};
      process(client.node_id(), actions);
      return;
    }
    auto [client, circ] = circuits_.at(step.at("circuit").get<std::string>());
    if (op == "send_data") {
      Bytes data = step_data(step);
      process(client->node_id(),
              client->send_data(circ, step.value("stream", 1u), data));
    } else if (op == "send_feature") {
      Bytes data = step_data(step);
      process(client->node_id(),
              client->send_feature(circ, step.value("hop", 0u),
                                   step.at("relay_cmd").get<std::uint8_t>(), data));
    } else if (op == "inject_plugin") {
      Bytes pkg = step.contains("package_hex")
                      ? from_hex(step["package_hex"].get<std::string>())
                      : signed_sample(step.at("plugin").get<std::string>());
      process(client->node_id(),
              client->inject_plugin(circ, step.value("hop", 0u), pkg));
    } else if (op == "attach_local") {
      std::vector<Action> actions;
      auto r = client->attach_local(circ, sample_package(step.at("plugin").get<std::string>()),
                                    actions);
      trace_line({{"t_ms", now_}, {"node", names_.at(client->node_id())},
                  {"kind", "local_attach"},
                  {"detail", {{"plugin", step.at("plugin")}, {"ok", r.ok()}}}});
      process(client->node_id(), actions);
    } else if (op == "close") {
      process(client->node_id(), client->close_circuit(circ));
    } else {
      throw std::runtime_error("unknown script action: " + op);
    }
  }

  static Bytes step_data(const nlohmann::json& step) {
    if (step.contains("data_hex")) return from_hex(step["data_hex"].get<std::string>());
    std::string s = step.value("data", "");
    return Bytes(s.begin(), s.end());
  }

  void check_expectations() {
    for (const auto& e : config_.value("expect", nlohmann::json::array())) {
      std::string kind = e.at("kind").get<std::string>();
      std::string label = e.dump();
      if (kind == "circuit_state") {
        auto [client, circ] = circuits_.at(e.at("circuit").get<std::string>());
        const ClientCircuit* c = client->circuit(circ);
        std::string want = e.at("state").get<std::string>();
        std::string got = !c ? "missing"
                          : c->state == CircuitState::Open      ? "open"
                          : c->state == CircuitState::Building  ? "building"
                                                                : "closed";
        if (got != want) fail(label + " (got " + got + ")");
      } else if (kind == "report") {
        bool found = false;
        for (const auto& r : result_.reports) {
          if (e.contains("reason") && r.value("reason", "") != e["reason"]) continue;
          if (e.contains("node") &&
              r.value("node", "") != to_hex(ids_.at(e["node"].get<std::string>())))
            continue;
          found = true;
        }
        if (!found) fail(label);
      } else if (kind == "report_count") {
        if (result_.reports.size() != e.at("count").get<std::size_t>())
          fail(label + " (got " + std::to_string(result_.reports.size()) + ")");
      } else if (kind == "feature_cells_min") {
        auto [client, circ] = circuits_.at(e.at("circuit").get<std::string>());
        const ClientCircuit* c = client->circuit(circ);
        std::uint64_t got =
            c ? c->feature_cells.count(e.at("relay_cmd").get<std::uint8_t>())
                    ? c->feature_cells.at(e.at("relay_cmd").get<std::uint8_t>())
                    : 0
              : 0;
        if (got < e.at("min").get<std::uint64_t>())
          fail(label + " (got " + std::to_string(got) + ")");
      } else if (kind == "delivered") {
        const auto& v = delivered_[e.at("node").get<std::string>()];
        Bytes want = e.contains("data_hex")
                         ? from_hex(e["data_hex"].get<std::string>())
                         : step_data(e);
        std::size_t got = std::count(v.begin(), v.end(), want);
        std::size_t min = e.value("min", 1u);
        if (got < min) fail(label + " (got " + std::to_string(got) + ")");
      } else if (kind == "relay_plugin_count") {
        const auto& relay = *relays_.at(e.at("node").get<std::string>());
        std::size_t got = relay.registry().circuit_count() + relay.registry().global_count();
        if (got != e.at("count").get<std::size_t>())
          fail(label + " (got " + std::to_string(got) + ")");
      } else {
        fail("unknown expectation kind: " + kind);
      }
    }
  }

  void fail(const std::string& msg) { result_.failures.push_back(msg); }

  nlohmann::json config_;
  TestCryptoProvider crypto_;
  std::unique_ptr<SigningKey> signing_key_;
  std::uint64_t seed_ = 1;
  std::uint64_t duration_ms_ = 1000;
  std::uint64_t default_latency_ms_ = 1;
  std::uint64_t now_ = 0;
  std::uint64_t seq_ = 0;

  std::map<std::string, std::unique_ptr<RelayNode>> relays_;
  std::map<std::string, nlohmann::json> relay_configs_;
  std::map<std::string, std::unique_ptr<ClientNode>> clients_;
  std::map<std::string, NodeId> ids_;
  std::map<NodeId, std::string> names_;
  std::map<std::pair<NodeId, NodeId>, std::uint64_t> latency_;
  std::map<std::string, std::pair<ClientNode*, std::uint32_t>> circuits_;
  std::map<std::string, std::vector<Bytes>> delivered_;

  std::priority_queue<Ev, std::vector<Ev>, std::greater<Ev>> queue_;
  SimResult result_;
};

inline SimResult run_sim(const nlohmann::json& config) {
  return Simulation(config).run();
}

}  // namespace fan
