// Checks the implementation against golden vectors produced by
// scripts/reference_vectors.py (an independent reference kept in Python).
#include <catch2/catch_amalgamated.hpp>

#include <fstream>

#include <nlohmann/json.hpp>

#include "fan/assembler.hpp"
#include "fan/cell.hpp"
#include "fan/vm.hpp"

using namespace fan;
using nlohmann::json;

namespace {

const json& vectors() {
  static const json v = [] {
    std::ifstream in(std::string(FAN_SOURCE_DIR) + "/tests/golden/vectors.json");
    if (!in.good()) throw std::runtime_error("missing tests/golden/vectors.json");
    return json::parse(in);
  }();
  return v;
}

std::uint64_t hex_u64(const json& j) { return std::stoull(j.get<std::string>(), nullptr, 16); }

}  // namespace

TEST_CASE("fnv1a64 vectors") {
  for (const auto& v : vectors()["fnv1a64"]) {
    Bytes input = from_hex(v["input_hex"].get<std::string>());
    CHECK(fnv1a64(input) == hex_u64(v["state"]));
  }
}

TEST_CASE("splitmix64 vectors") {
  for (const auto& v : vectors()["splitmix64"])
    CHECK(splitmix64(hex_u64(v["x"])) == hex_u64(v["v"]));
}

TEST_CASE("keystream vectors") {
  std::array<std::uint8_t, 32> zero_key{};
  CHECK(TestCryptoProvider::stream_seed(zero_key, Direction::Forward) ==
        hex_u64(vectors()["stream"]["zero_key_fwd_seed"]));
  CHECK(TestCryptoProvider::stream_seed(zero_key, Direction::Backward) ==
        hex_u64(vectors()["stream"]["zero_key_bwd_seed"]));

  TestCryptoProvider crypto;
  for (auto [counter, field] :
       {std::pair<std::uint64_t, const char*>{0, "zero_key_fwd_ctr0_first16_hex"},
        {1, "zero_key_fwd_ctr1_first16_hex"}}) {
    std::array<std::uint8_t, 16> buf{};
    crypto.stream_xor(zero_key, Direction::Forward, counter, buf);
    CHECK(to_hex(buf) == vectors()["stream"][field].get<std::string>());
  }
}

TEST_CASE("cell encoding vector") {
  LinkCell c;
  c.circ_id = 1;
  c.command = 3;
  CHECK(to_hex(encode_cell(c)) ==
        vectors()["cell_circ1_relay_zero_payload_hex"].get<std::string>());
}

TEST_CASE("relay payload digest vector") {
  TestCryptoProvider crypto;
  std::uint64_t state = kFnvOffsetBasis;
  RelayPayload p;
  p.relay_cmd = 1;
  p.stream_id = 7;
  p.length = 5;
  std::memcpy(p.data.data(), "hello", 5);
  auto bytes = seal_payload_digest(crypto, p, state);
  const auto& v = vectors()["relay_payload_hello"];
  CHECK(state == hex_u64(v["digest_state"]));
  CHECK(get_u32(bytes.data() + 5) == hex_u64(v["digest_field"]));
  CHECK(to_hex(std::span(bytes).first(32)) == v["first32_hex"].get<std::string>());

  // Single-hop wrap under the zero key.
  std::vector<HopKeys> one(1);
  auto wrapped = onion_wrap(crypto, bytes, one);
  CHECK(to_hex(std::span(wrapped).first(8)) ==
        vectors()["onion_1hop_zero_key"]["first8_hex"].get<std::string>());
  CHECK(fnv1a64(wrapped) == hex_u64(vectors()["onion_1hop_zero_key"]["full_fnv"]));

  // Three-hop wrap, keys 0x01/0x02/0x03 repeated, hop 1 first.
  std::vector<HopKeys> three(3);
  for (int i = 0; i < 3; ++i) three[i].key.fill(static_cast<std::uint8_t>(i + 1));
  auto w3 = onion_wrap(crypto, bytes, three);
  CHECK(to_hex(std::span(w3).first(8)) ==
        vectors()["onion_3hop"]["first8_hex"].get<std::string>());
  CHECK(fnv1a64(w3) == hex_u64(vectors()["onion_3hop"]["full_fnv"]));
}

TEST_CASE("seal vector") {
  TestCryptoProvider crypto;
  const auto& v = vectors()["seal"];
  NodeId id = array_from_hex<16>(v["relay_id_hex"].get<std::string>());
  Bytes pt = from_hex(v["pt_hex"].get<std::string>());
  CHECK(to_hex(crypto.seal(id, pt)) == v["ct_hex"].get<std::string>());
}

TEST_CASE("hand-assembled program vectors") {
  const auto& v = vectors()["programs"];

  Bytes b1 = Assembler::assemble_bytes("movi r0, 42\nexit");
  CHECK(to_hex(b1) == v["movi42_hex"].get<std::string>());
  VmInstance vm1 = instantiate(parse_program(b1), 65536, nullptr, 0);
  CHECK(std::get<std::uint64_t>(vm1.run(0, {}, 1000)) ==
        v["movi42_result"].get<std::uint64_t>());

  Bytes b2 = Assembler::assemble_bytes(
      "movi r1, 2\nmovi r2, 3\nmov r0, r1\nadd r0, r2\nexit");
  CHECK(to_hex(b2) == v["add_hex"].get<std::string>());
  VmInstance vm2 = instantiate(parse_program(b2), 65536, nullptr, 0);
  CHECK(std::get<std::uint64_t>(vm2.run(0, {}, 1000)) ==
        v["add_result"].get<std::uint64_t>());
}
