// fan: assembler/packager/repo toolchain, simulator, benchmark, and a thin
// TCP transport for running relay and client nodes outside the simulator.

#include <arpa/inet.h>
#include <netdb.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <queue>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fan/assembler.hpp"
#include "fan/bench.hpp"
#include "fan/client.hpp"
#include "fan/disasm.hpp"
#include "fan/manifest.hpp"
#include "fan/relay.hpp"
#include "fan/samples.hpp"
#include "fan/sim.hpp"

using namespace fan;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string read_text(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
}

void write_text(const std::string& path, const std::string& s) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << s;
}

SigningKey load_key(const std::string& path) {
  json j = json::parse(read_text(path));
  SigningKey k;
  Bytes sk = from_hex(j.at("secret_key").get<std::string>());
  Bytes pk = from_hex(j.at("public_key").get<std::string>());
  if (sk.size() != k.secret_key.size() || pk.size() != k.public_key.size())
    throw std::runtime_error("malformed key file " + path);
  std::copy(sk.begin(), sk.end(), k.secret_key.begin());
  std::copy(pk.begin(), pk.end(), k.public_key.begin());
  return k;
}

// Trust directory: any file that is either a keygen JSON or bare hex of a
// 32-byte public key.
TrustStore load_trust_dir(const std::string& dir) {
  TrustStore store;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string text = read_text(entry.path().string());
    try {
      json j = json::parse(text);
      PublicKey pk = array_from_hex<32>(j.at("public_key").get<std::string>());
      store[pk] = pk;
      continue;
    } catch (...) {
    }
    std::string hex;
    for (char c : text)
      if (!isspace(static_cast<unsigned char>(c))) hex.push_back(c);
    try {
      PublicKey pk = array_from_hex<32>(hex);
      store[pk] = pk;
    } catch (...) {
      // not a key file, skip
    }
  }
  return store;
}

std::uint32_t parse_caps(const std::string& list) {
  std::uint32_t mask = 0;
  if (list.empty() || list == "none") return 0;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) mask |= capability_from_name(item);
  return mask;
}

std::uint16_t event_from_name(const std::string& name) {
  static const std::map<std::string, EventKind> table = {
      {"on_attach", EventKind::OnAttach},
      {"on_detach", EventKind::OnDetach},
      {"on_feature_cell", EventKind::OnFeatureCell},
      {"on_timer", EventKind::OnTimer},
      {"on_teardown", EventKind::OnCircuitTeardown},
  };
  auto it = table.find(name);
  if (it == table.end()) throw std::runtime_error("unknown event '" + name + "'");
  return static_cast<std::uint16_t>(it->second);
}

// -------- toolchain subcommands --------

int cmd_asm(const std::string& in, const std::string& out) {
  Bytes code = Assembler::assemble_bytes(read_text(in));
  write_bytes(out, code);
  std::cerr << "assembled " << code.size() / kInstructionSize << " instructions\n";
  return 0;
}

int cmd_disasm(const std::string& in) {
  Program p = parse_program(read_file_bytes(in));
  std::cout << disassemble(p);
  return 0;
}

int cmd_keygen(const std::string& out, const std::string& seed_hex) {
  SigningKey k = seed_hex.empty()
                     ? SigningKey::generate()
                     : SigningKey::from_seed(array_from_hex<32>(seed_hex));
  json j = {{"key_id", to_hex(k.key_id())},
            {"public_key", to_hex(k.public_key)},
            {"secret_key", to_hex(k.secret_key)}};
  write_text(out, j.dump(2) + "\n");
  std::cerr << "key id " << to_hex(k.key_id()) << "\n";
  return 0;
}

int cmd_package(const std::string& code_path, const std::string& name,
                const std::string& version, const std::string& caps,
                const std::vector<std::uint8_t>& features,
                const std::vector<std::string>& entries, std::uint32_t memory,
                const std::string& key_path, const std::string& out) {
  PluginPackage p;
  p.name = name;
  unsigned a = 0, b = 0, c = 0;
  if (sscanf(version.c_str(), "%u.%u.%u", &a, &b, &c) != 3)
    throw std::runtime_error("version must be X.Y.Z");
  p.version = {static_cast<std::uint16_t>(a), static_cast<std::uint16_t>(b),
               static_cast<std::uint16_t>(c)};
  p.capability_mask = parse_caps(caps);
  p.feature_ids = features;
  p.memory_size = memory;
  p.code = read_file_bytes(code_path);
  for (const std::string& e : entries) {
    auto eq = e.find('=');
    if (eq == std::string::npos) throw std::runtime_error("--entry wants EVENT=PC");
    p.entries.push_back({event_from_name(e.substr(0, eq)),
                         static_cast<std::uint32_t>(std::stoul(e.substr(eq + 1)))});
  }
  Bytes bytes = package(p, load_key(key_path));
  write_bytes(out, bytes);
  std::cerr << "packaged " << bytes.size() << " bytes\n";
  return 0;
}

int cmd_sample(const std::string& name, const std::string& key_path,
               const std::string& out) {
  SigningKey key;
  if (key_path.empty()) {
    std::array<std::uint8_t, 32> seed{};
    seed.fill(0x42);
    key = SigningKey::from_seed(seed);
  } else {
    key = load_key(key_path);
  }
  for (const SamplePlugin& s : sample_plugins()) {
    if (s.name != name) continue;
    Bytes bytes = s.build_signed(key);
    write_bytes(out, bytes);
    std::cerr << "wrote " << bytes.size() << " bytes\n";
    return 0;
  }
  std::cerr << "unknown sample plugin '" << name << "'\n";
  return 1;
}

int cmd_verify(const std::string& pkg_path, const std::string& trust_dir) {
  Bytes bytes = read_file_bytes(pkg_path);
  auto r = parse_and_verify(bytes, load_trust_dir(trust_dir));
  if (!r.ok()) {
    std::cout << json{{"ok", false}, {"error", package_error_name(r.error())}}.dump()
              << "\n";
    return 1;
  }
  const PluginPackage& p = r.value();
  json features = json::array();
  for (auto f : p.feature_ids) features.push_back(f);
  std::cout << json{{"ok", true},
                    {"name", p.name},
                    {"version", {p.version.major, p.version.minor, p.version.patch}},
                    {"capabilities", p.capability_mask},
                    {"features", features},
                    {"code_bytes", p.code.size()},
                    {"memory_size", p.memory_size},
                    {"signer", to_hex(p.signer_key_id)}}
                   .dump()
            << "\n";
  return 0;
}

// -------- repo subcommands --------

int cmd_repo_init(const std::string& dir, const std::vector<std::string>& key_hexes,
                  std::uint32_t threshold, unsigned days) {
  fs::create_directories(dir);
  RepoRoot root;
  root.threshold = threshold;
  root.expires = std::time(nullptr) + static_cast<std::time_t>(days) * 86400;
  for (const auto& hex : key_hexes) {
    PublicKey pk = array_from_hex<32>(hex);
    root.keys[pk] = pk;
  }
  RepoTargets targets;
  targets.expires = root.expires;
  write_text(dir + "/root.json", canonical_json(root_to_json(root)) + "\n");
  write_text(dir + "/targets.json", canonical_json(targets_to_json(targets)) + "\n");
  return 0;
}

int cmd_repo_add(const std::string& dir, const std::string& pkg_path,
                 std::string name) {
  Bytes bytes = read_file_bytes(pkg_path);
  if (bytes.size() < 50) throw std::runtime_error("package too short");
  // capability_mask lives at a fixed header offset:
  // magic(4) + format(2) + flags(2) + name(32) + version(6).
  std::uint32_t caps = get_u32(bytes.data() + 46);
  if (name.empty()) name = fs::path(pkg_path).stem().string();

  RepoTargets targets = targets_from_json(json::parse(read_text(dir + "/targets.json")));
  TargetEntry e;
  e.length = bytes.size();
  e.hash = sha256(bytes);
  e.max_capabilities = caps;
  targets.targets[name] = e;
  ++targets.version;
  write_text(dir + "/targets.json", canonical_json(targets_to_json(targets)) + "\n");
  write_bytes(dir + "/" + name + ".fanp", bytes);
  std::cerr << "added '" << name << "' (" << bytes.size() << " bytes)\n";
  return 0;
}

int cmd_repo_sign(const std::string& dir, const std::string& key_path) {
  RepoManifest m;
  m.root = root_from_json(json::parse(read_text(dir + "/root.json")));
  m.targets = targets_from_json(json::parse(read_text(dir + "/targets.json")));
  if (fs::exists(dir + "/manifest.json")) {
    json prev = json::parse(read_text(dir + "/manifest.json"));
    // Keep prior signatures only if they cover the current targets bytes.
    if (canonical_json(prev.at("signed")) == canonical_json(targets_to_json(m.targets)))
      for (const auto& s : prev.at("signatures"))
        m.signatures.push_back({array_from_hex<32>(s.at("key_id").get<std::string>()),
                                array_from_hex<64>(s.at("sig").get<std::string>())});
  }
  SigningKey key = load_key(key_path);
  std::erase_if(m.signatures,
                [&](const ManifestSignature& s) { return s.key_id == key.key_id(); });
  m.signatures.push_back(sign_targets(m.targets, key));
  write_text(dir + "/manifest.json", canonical_json(manifest_targets_file(m)) + "\n");
  std::cerr << m.signatures.size() << " signature(s)\n";
  return 0;
}

int cmd_repo_verify(const std::string& dir) {
  RepoManifest m;
  m.root = root_from_json(json::parse(read_text(dir + "/root.json")));
  json mf = json::parse(read_text(dir + "/manifest.json"));
  m.targets = targets_from_json(mf.at("signed"));
  for (const auto& s : mf.at("signatures"))
    m.signatures.push_back({array_from_hex<32>(s.at("key_id").get<std::string>()),
                            array_from_hex<64>(s.at("sig").get<std::string>())});
  if (auto err = verify_manifest(m, std::time(nullptr))) {
    std::cout << json{{"ok", false}, {"error", manifest_error_name(*err)}}.dump() << "\n";
    return 1;
  }
  json results = json::object();
  bool all_ok = true;
  for (const auto& [name, entry] : m.targets.targets) {
    std::string path = dir + "/" + name + ".fanp";
    if (!fs::exists(path)) {
      results[name] = "missing";
      all_ok = false;
      continue;
    }
    Bytes bytes = read_file_bytes(path);
    std::uint32_t caps = bytes.size() >= 50 ? get_u32(bytes.data() + 46) : ~0u;
    auto err = resolve_plugin(m, name, bytes, caps);
    results[name] = err ? resolve_error_name(*err) : "ok";
    all_ok = all_ok && !err;
  }
  std::cout << json{{"ok", all_ok}, {"targets", results}}.dump() << "\n";
  return all_ok ? 0 : 1;
}

// -------- sim and bench --------

int cmd_sim_run(const std::string& config_path, const std::string& trace_out) {
  json cfg = json::parse(read_text(config_path));
  SimResult r = run_sim(cfg);
  if (!trace_out.empty()) {
    std::ofstream f(trace_out);
    for (const auto& line : r.trace) f << line << "\n";
  }
  for (const auto& rep : r.reports) std::cerr << "report: " << rep.dump() << "\n";
  for (const auto& fail : r.failures) std::cerr << "EXPECT FAILED: " << fail << "\n";
  std::cout << json{{"ok", r.ok()},
                    {"trace_records", r.trace.size()},
                    {"reports", r.reports.size()},
                    {"cells_delivered", r.cells_delivered},
                    {"failed_expectations", r.failures.size()}}
                   .dump()
            << "\n";
  return r.ok() ? 0 : 1;
}

int cmd_bench_attach(const std::string& pkg_path, std::size_t iters,
                     const std::string& trust_dir, const std::string& out) {
  TrustStore trust;
  if (!trust_dir.empty()) {
    trust = load_trust_dir(trust_dir);
  } else {
    // No trust dir given: trust the package's embedded signer. Fine for a
    // benchmark; verify still runs every iteration.
    Bytes bytes = read_file_bytes(pkg_path);
    if (bytes.size() < 96) throw std::runtime_error("package too short");
    PublicKey pk{};
    std::copy_n(bytes.end() - 96, 32, pk.begin());
    trust[pk] = pk;
  }
  BenchStats stats = bench_attach_file(pkg_path, trust, iters);
  json report = bench_report(pkg_path, iters, 0, stats, "");
  {
    Bytes bytes = read_file_bytes(pkg_path);
    auto parsed = parse_and_verify(bytes, trust);
    if (parsed.ok()) report["memory_size"] = parsed.value().memory_size;
  }
  std::cout << report.dump() << "\n";
  if (!out.empty()) write_text(out, canonical_json(report) + "\n");
  return 0;
}

// -------- socket transport --------

// Cells are framed as raw 512-byte records over TCP.
struct CellConn {
  int fd = -1;
  NodeId peer{};
  Bytes inbuf;
};

int dial(const std::string& hostport) {
  auto colon = hostport.rfind(':');
  if (colon == std::string::npos) throw std::runtime_error("address must be HOST:PORT");
  std::string host = hostport.substr(0, colon);
  std::string port = hostport.substr(colon + 1);
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (getaddrinfo(host.c_str(), port.c_str(), &hints, &res) != 0 || !res)
    throw std::runtime_error("cannot resolve " + hostport);
  int fd = socket(res->ai_family, res->ai_socktype, 0);
  int rc = connect(fd, res->ai_addr, res->ai_addrlen);
  freeaddrinfo(res);
  if (fd < 0 || rc != 0) throw std::runtime_error("cannot connect to " + hostport);
  return fd;
}

int listen_on(const std::string& hostport) {
  auto colon = hostport.rfind(':');
  if (colon == std::string::npos) throw std::runtime_error("address must be HOST:PORT");
  int fd = socket(AF_INET, SOCK_STREAM, 0);
  int one = 1;
  setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(std::stoi(hostport.substr(colon + 1))));
  std::string host = hostport.substr(0, colon);
  addr.sin_addr.s_addr = host == "0.0.0.0" || host.empty()
                             ? INADDR_ANY
                             : inet_addr(host.c_str());
  if (bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 ||
      listen(fd, 16) != 0)
    throw std::runtime_error("cannot listen on " + hostport);
  return fd;
}

void send_cell(int fd, const LinkCell& cell) {
  auto bytes = encode_cell(cell);
  std::size_t off = 0;
  while (off < bytes.size()) {
    ssize_t n = write(fd, bytes.data() + off, bytes.size() - off);
    if (n <= 0) throw std::runtime_error("short write");
    off += static_cast<std::size_t>(n);
  }
}

struct TimerEntry {
  std::chrono::steady_clock::time_point at;
  std::uint32_t circuit_key;
  std::uint8_t feature_id;
  std::uint64_t tag;
  bool operator>(const TimerEntry& o) const { return at > o.at; }
};

int cmd_relay_run(const std::string& listen_addr, const std::string& id_hex,
                  const std::string& trust_dir, const std::string& key_path,
                  const std::vector<std::string>& peer_specs) {
  crypto_init();
  NodeId id = id_hex.empty() ? node_id_from_name(listen_addr)
                             : array_from_hex<16>(id_hex);
  TrustStore trust = trust_dir.empty() ? TrustStore{} : load_trust_dir(trust_dir);
  if (!key_path.empty()) {
    SigningKey k = load_key(key_path);
    trust[k.key_id()] = k.public_key;
  }
  static TestCryptoProvider crypto;
  RelayNode node(id, &crypto, trust, NodePolicy{},
                 std::chrono::steady_clock::now().time_since_epoch().count());

  std::map<NodeId, std::string> peer_addrs;
  for (const auto& spec : peer_specs) {
    auto eq = spec.find('=');
    if (eq == std::string::npos) throw std::runtime_error("--peer wants HEXID=HOST:PORT");
    peer_addrs[array_from_hex<16>(spec.substr(0, eq))] = spec.substr(eq + 1);
  }

  int lfd = listen_on(listen_addr);
  std::cerr << json{{"listening", listen_addr}, {"node", to_hex(id)}}.dump() << "\n";

  std::vector<CellConn> conns;
  std::map<NodeId, int> fds;
  std::priority_queue<TimerEntry, std::vector<TimerEntry>, std::greater<TimerEntry>>
      timers;
  std::uint64_t synthetic = 0;

  auto handle_actions = [&](const std::vector<Action>& actions) {
    for (const auto& a : actions) {
      switch (a.kind) {
        case Action::Kind::SendCell: {
          auto it = fds.find(a.peer);
          if (it == fds.end()) {
            auto addr = peer_addrs.find(a.peer);
            if (addr == peer_addrs.end()) {
              std::cerr << json{{"drop", "no route"}, {"peer", to_hex(a.peer)}}.dump()
                        << "\n";
              break;
            }
            int fd = dial(addr->second);
            conns.push_back({fd, a.peer, {}});
            it = fds.emplace(a.peer, fd).first;
          }
          send_cell(it->second, a.cell);
          break;
        }
        case Action::Kind::SetTimer:
          timers.push({std::chrono::steady_clock::now() +
                           std::chrono::milliseconds(a.delay_ms),
                       a.circuit_key, a.feature_id, a.tag});
          break;
        case Action::Kind::Report:
        case Action::Kind::Log:
          std::cerr << a.detail.dump() << "\n";
          break;
        case Action::Kind::DeliverData:
          std::cout << json{{"data", to_hex(a.data)}}.dump() << "\n";
          break;
      }
    }
  };

  for (;;) {
    int timeout = -1;
    if (!timers.empty()) {
      auto d = std::chrono::duration_cast<std::chrono::milliseconds>(
          timers.top().at - std::chrono::steady_clock::now());
      timeout = std::max<int>(0, static_cast<int>(d.count()));
    }
    std::vector<pollfd> pfds{{lfd, POLLIN, 0}};
    for (const auto& c : conns) pfds.push_back({c.fd, POLLIN, 0});
    int rc = poll(pfds.data(), pfds.size(), timeout);
    if (rc < 0) break;

    while (!timers.empty() && timers.top().at <= std::chrono::steady_clock::now()) {
      TimerEntry t = timers.top();
      timers.pop();
      handle_actions(node.fire_timer(t.circuit_key, t.feature_id, t.tag));
    }
    if (pfds[0].revents & POLLIN) {
      int fd = accept(lfd, nullptr, nullptr);
      if (fd >= 0) {
        NodeId peer = node_id_from_name("anon#" + std::to_string(synthetic++));
        conns.push_back({fd, peer, {}});
        fds[peer] = fd;
      }
    }
    for (std::size_t i = 1; i < pfds.size(); ++i) {
      if (!(pfds[i].revents & (POLLIN | POLLHUP))) continue;
      std::uint8_t buf[kCellSize];
      ssize_t n = read(conns[i - 1].fd, buf, sizeof buf);
      if (n <= 0) {
        close(conns[i - 1].fd);
        fds.erase(conns[i - 1].peer);
        conns.erase(conns.begin() + static_cast<long>(i - 1));
        break;  // pollfd indices stale; re-poll
      }
      // Drain complete cells before dispatching: handle_actions may dial a
      // new peer and grow `conns`, invalidating any reference into it.
      NodeId peer = conns[i - 1].peer;
      std::vector<LinkCell> cells;
      {
        Bytes& inbuf = conns[i - 1].inbuf;
        inbuf.insert(inbuf.end(), buf, buf + n);
        while (inbuf.size() >= kCellSize) {
          cells.push_back(decode_cell(std::span(inbuf.data(), kCellSize)));
          inbuf.erase(inbuf.begin(), inbuf.begin() + kCellSize);
        }
      }
      for (const LinkCell& cell : cells)
        handle_actions(node.handle_link_cell(peer, cell));
    }
  }
  return 0;
}

int cmd_client_run(const std::string& connect_addr, const std::string& route_csv,
                   const std::string& data, const std::string& inject_path,
                   std::size_t inject_hop, unsigned timeout_ms) {
  crypto_init();
  static TestCryptoProvider crypto;
  NodeId self = node_id_from_name("client:" + connect_addr);
  ClientNode node(self, &crypto,
                  std::chrono::steady_clock::now().time_since_epoch().count());

  std::vector<NodeId> route;
  std::stringstream ss(route_csv);
  std::string hex;
  while (std::getline(ss, hex, ',')) route.push_back(array_from_hex<16>(hex));
  if (route.empty()) throw std::runtime_error("--route must list at least one hop id");

  int fd = dial(connect_addr);
  Bytes inbuf;
  bool done = false;
  int exit_code = 0;

  auto handle_actions = [&](const std::vector<Action>& actions) {
    for (const auto& a : actions) {
      switch (a.kind) {
        case Action::Kind::SendCell:
          send_cell(fd, a.cell);  // single link: everything goes to hop 1
          break;
        case Action::Kind::Report:
          std::cerr << a.detail.dump() << "\n";
          exit_code = 1;
          done = true;
          break;
        case Action::Kind::Log:
          std::cerr << a.detail.dump() << "\n";
          break;
        case Action::Kind::DeliverData: {
          std::string s(a.data.begin(), a.data.end());
          std::cout << json{{"echo", s}}.dump() << "\n";
          done = true;
          break;
        }
        case Action::Kind::SetTimer:
          break;  // local plugin timers unsupported in socket mode
      }
    }
  };

  std::vector<Action> start;
  std::uint32_t circ = node.begin_circuit(route, start);
  handle_actions(start);

  auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
  bool injected = false, sent = false;
  while (!done && std::chrono::steady_clock::now() < deadline) {
    const ClientCircuit* c = node.circuit(circ);
    if (c->state == CircuitState::Closed) {
      exit_code = 1;
      break;
    }
    if (c->state == CircuitState::Open && !injected && !inject_path.empty()) {
      injected = true;
      handle_actions(node.inject_plugin(circ, inject_hop, read_file_bytes(inject_path)));
    }
    if (c->state == CircuitState::Open && !sent &&
        (inject_path.empty() || !c->plugin_replies.empty())) {
      if (!c->plugin_replies.empty()) {
        const PluginReply& r = c->plugin_replies[0];
        std::cout << json{{"plugin_ok", r.ok}, {"plugin", r.name},
                          {"latency_us", r.latency_us}, {"err_code", r.err_code}}
                         .dump()
                  << "\n";
        if (!r.ok) {
          exit_code = 1;
          break;
        }
      }
      if (data.empty()) break;
      sent = true;
      handle_actions(node.send_data(circ, 1,
                                    {reinterpret_cast<const std::uint8_t*>(data.data()),
                                     data.size()}));
    }

    pollfd pfd{fd, POLLIN, 0};
    if (poll(&pfd, 1, 50) <= 0) continue;
    std::uint8_t buf[kCellSize];
    ssize_t n = read(fd, buf, sizeof buf);
    if (n <= 0) break;
    inbuf.insert(inbuf.end(), buf, buf + n);
    while (inbuf.size() >= kCellSize && !done) {
      LinkCell cell = decode_cell(std::span(inbuf.data(), kCellSize));
      inbuf.erase(inbuf.begin(), inbuf.begin() + kCellSize);
      handle_actions(node.handle_link_cell(route[0], cell));
    }
  }
  if (!done && !data.empty() && exit_code == 0) {
    std::cerr << "error: no echo before timeout or disconnect\n";
    exit_code = 1;
  }
  handle_actions(node.close_circuit(circ));
  close(fd);
  return exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pluggable onion-routing framework toolchain"};
  app.require_subcommand(1);
  signal(SIGPIPE, SIG_IGN);

  std::string in, out, name, version = "1.0.0", caps, key_path, trust_dir, seed_hex;
  std::string dir, config, trace_out, listen_addr, connect_addr, route_csv, data;
  std::string id_hex, inject_path;
  std::vector<std::string> entries, key_hexes, peer_specs;
  std::vector<std::uint8_t> features;
  std::uint32_t memory = 65536, threshold = 1;
  std::size_t iters = 1000, inject_hop = 0;
  unsigned days = 365, timeout_ms = 10000;

  auto* c_asm = app.add_subcommand("asm", "assemble a .fasm source file");
  c_asm->add_option("input", in)->required()->check(CLI::ExistingFile);
  c_asm->add_option("-o,--output", out)->required();

  auto* c_dis = app.add_subcommand("disasm", "disassemble a code binary");
  c_dis->add_option("input", in)->required()->check(CLI::ExistingFile);

  auto* c_key = app.add_subcommand("keygen", "generate a signing key");
  c_key->add_option("-o,--output", out)->required();
  c_key->add_option("--seed", seed_hex, "32-byte hex seed for a deterministic key");

  auto* c_pkg = app.add_subcommand("package", "build and sign a plugin package");
  c_pkg->add_option("--code", in)->required()->check(CLI::ExistingFile);
  c_pkg->add_option("--name", name)->required();
  c_pkg->add_option("--version", version);
  c_pkg->add_option("--caps", caps, "comma-separated capability names");
  c_pkg->add_option("--feature", features, "feature ids (>= 32)");
  c_pkg->add_option("--entry", entries, "EVENT=PC, e.g. on_attach=0");
  c_pkg->add_option("--memory", memory);
  c_pkg->add_option("--key", key_path)->required()->check(CLI::ExistingFile);
  c_pkg->add_option("-o,--output", out)->required();

  auto* c_sample = app.add_subcommand("sample", "emit a signed sample plugin");
  c_sample->add_option("name", name)->required();
  c_sample->add_option("--key", key_path)->check(CLI::ExistingFile);
  c_sample->add_option("-o,--output", out)->required();

  auto* c_ver = app.add_subcommand("verify", "verify a package against trusted keys");
  c_ver->add_option("package", in)->required()->check(CLI::ExistingFile);
  c_ver->add_option("--trust", trust_dir)->required()->check(CLI::ExistingDirectory);

  auto* c_repo = app.add_subcommand("repo", "plugin repository manifests");
  c_repo->require_subcommand(1);
  auto* c_init = c_repo->add_subcommand("init", "create root.json and targets.json");
  c_init->add_option("dir", dir)->required();
  c_init->add_option("--key-id", key_hexes, "hex public key (repeatable)")->required();
  c_init->add_option("--threshold", threshold);
  c_init->add_option("--expires-days", days);
  auto* c_add = c_repo->add_subcommand("add", "add a package to targets.json");
  c_add->add_option("dir", dir)->required()->check(CLI::ExistingDirectory);
  c_add->add_option("package", in)->required()->check(CLI::ExistingFile);
  c_add->add_option("--name", name);
  auto* c_sign = c_repo->add_subcommand("sign", "sign targets into manifest.json");
  c_sign->add_option("dir", dir)->required()->check(CLI::ExistingDirectory);
  c_sign->add_option("--key", key_path)->required()->check(CLI::ExistingFile);
  auto* c_rver = c_repo->add_subcommand("verify", "verify manifest and stored packages");
  c_rver->add_option("dir", dir)->required()->check(CLI::ExistingDirectory);

  auto* c_sim = app.add_subcommand("sim", "deterministic simulation");
  c_sim->require_subcommand(1);
  auto* c_run = c_sim->add_subcommand("run", "run a scenario config");
  c_run->add_option("config", config)->required()->check(CLI::ExistingFile);
  c_run->add_option("--trace", trace_out, "write the event trace (JSON lines)");

  auto* c_bench = app.add_subcommand("bench", "benchmarks");
  c_bench->require_subcommand(1);
  auto* c_batt = c_bench->add_subcommand("attach", "plugin attach latency");
  c_batt->add_option("package", in)->required()->check(CLI::ExistingFile);
  c_batt->add_option("--iters", iters)->check(CLI::Range(std::size_t{1}, std::size_t{10000000}));
  c_batt->add_option("--trust", trust_dir)->check(CLI::ExistingDirectory);
  c_batt->add_option("-o,--output", out);

  auto* c_relay = app.add_subcommand("relay", "relay node");
  c_relay->require_subcommand(1);
  auto* c_rrun = c_relay->add_subcommand("run", "serve cells over TCP");
  c_rrun->add_option("--listen", listen_addr)->required();
  c_rrun->add_option("--id", id_hex, "16-byte hex node id");
  c_rrun->add_option("--trust", trust_dir)->check(CLI::ExistingDirectory);
  c_rrun->add_option("--key", key_path)->check(CLI::ExistingFile);
  c_rrun->add_option("--peer", peer_specs, "HEXID=HOST:PORT (repeatable)");

  auto* c_client = app.add_subcommand("client", "client node");
  c_client->require_subcommand(1);
  auto* c_crun = c_client->add_subcommand("run", "build a circuit over TCP");
  c_crun->add_option("--connect", connect_addr)->required();
  c_crun->add_option("--route", route_csv, "comma-separated 16-byte hex node ids")
      ->required();
  c_crun->add_option("--data", data, "send and await the echo");
  c_crun->add_option("--inject", inject_path, "plugin package to inject")
      ->check(CLI::ExistingFile);
  c_crun->add_option("--hop", inject_hop, "0-based hop for --inject");
  c_crun->add_option("--timeout-ms", timeout_ms);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*c_asm) return cmd_asm(in, out);
    if (*c_dis) return cmd_disasm(in);
    if (*c_key) return cmd_keygen(out, seed_hex);
    if (*c_pkg)
      return cmd_package(in, name, version, caps, features, entries, memory, key_path,
                         out);
    if (*c_sample) return cmd_sample(name, key_path, out);
    if (*c_ver) return cmd_verify(in, trust_dir);
    if (*c_init) return cmd_repo_init(dir, key_hexes, threshold, days);
    if (*c_add) return cmd_repo_add(dir, in, name);
    if (*c_sign) return cmd_repo_sign(dir, key_path);
    if (*c_rver) return cmd_repo_verify(dir);
    if (*c_run) return cmd_sim_run(config, trace_out);
    if (*c_batt) return cmd_bench_attach(in, iters, trust_dir, out);
    if (*c_rrun) return cmd_relay_run(listen_addr, id_hex, trust_dir, key_path, peer_specs);
    if (*c_crun)
      return cmd_client_run(connect_addr, route_csv, data, inject_path, inject_hop,
                            timeout_ms);
  } catch (const AsmError& e) {
    std::cerr << "assembly error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
