#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "fan/cell.hpp"

using namespace fan;

namespace {

TestCryptoProvider crypto;

RelayPayload random_payload(std::mt19937_64& rng) {
  RelayPayload p;
  p.relay_cmd = static_cast<std::uint8_t>(rng());
  p.stream_id = static_cast<std::uint16_t>(rng());
  p.length = static_cast<std::uint16_t>(rng() % (kRelayDataMax + 1));
  for (std::size_t i = 0; i < p.length; ++i)
    p.data[i] = static_cast<std::uint8_t>(rng());
  return p;
}

}  // namespace

TEST_CASE("link cell layout") {
  LinkCell c;
  c.circ_id = 1;
  c.command = static_cast<std::uint8_t>(LinkCommand::Relay);
  auto bytes = encode_cell(c);
  REQUIRE(bytes.size() == 512);
  CHECK(bytes[0] == 0x01);
  CHECK(bytes[1] == 0x00);
  CHECK(bytes[2] == 0x00);
  CHECK(bytes[3] == 0x00);
  CHECK(bytes[4] == 0x03);
  for (std::size_t i = 5; i < 512; ++i) REQUIRE(bytes[i] == 0);
  CHECK(decode_cell(bytes) == c);
}

TEST_CASE("cell round trip on random cells") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 50; ++i) {
    LinkCell c;
    c.circ_id = static_cast<std::uint32_t>(rng());
    c.command = static_cast<std::uint8_t>(rng());
    for (auto& b : c.payload) b = static_cast<std::uint8_t>(rng());
    REQUIRE(decode_cell(encode_cell(c)) == c);
  }
}

TEST_CASE("decode rejects wrong lengths") {
  Bytes b(511, 0);
  CHECK_THROWS_AS(decode_cell(b), CellError);
  CHECK_THROWS_AS(decode_cell(Bytes{}), CellError);
}

TEST_CASE("unknown link command decodes unvalidated") {
  Bytes b(512, 0);
  b[4] = 0x2A;
  CHECK(decode_cell(b).command == 42);
}

TEST_CASE("relay payload layout and length bound") {
  RelayPayload p;
  p.relay_cmd = 1;
  p.stream_id = 7;
  p.length = 5;
  std::memcpy(p.data.data(), "hello", 5);
  auto bytes = encode_relay_payload(p);
  REQUIRE(bytes.size() == 507);
  CHECK(decode_relay_payload(bytes) == p);

  p.length = 497;
  CHECK_THROWS_AS(encode_relay_payload(p), CellError);
}

TEST_CASE("stream xor is an involution") {
  std::mt19937_64 rng(11);
  std::array<std::uint8_t, 32> key;
  for (auto& b : key) b = static_cast<std::uint8_t>(rng());
  std::array<std::uint8_t, kPayloadSize> buf, orig;
  for (auto& b : buf) b = static_cast<std::uint8_t>(rng());
  orig = buf;
  crypto.stream_xor(key, Direction::Forward, 3, buf);
  CHECK(buf != orig);
  crypto.stream_xor(key, Direction::Forward, 3, buf);
  CHECK(buf == orig);
}

TEST_CASE("onion wrap with zero hops is identity") {
  RelayPayload p = random_payload(*new std::mt19937_64(3));
  auto bytes = encode_relay_payload(p);
  auto wrapped = onion_wrap(crypto, bytes, std::span<HopKeys>{});
  CHECK(wrapped == bytes);
}

TEST_CASE("wrap/unwrap round trip over 0..5 hops") {
  std::mt19937_64 rng(42);
  for (int hops = 0; hops <= 5; ++hops) {
    for (int rep = 0; rep < 20; ++rep) {
      std::vector<HopKeys> sender(hops), receiver(hops);
      for (int h = 0; h < hops; ++h) {
        for (auto& b : sender[h].key) b = static_cast<std::uint8_t>(rng());
        receiver[h].key = sender[h].key;
      }
      auto payload = encode_relay_payload(random_payload(rng));
      auto buf = onion_wrap(crypto, payload, sender);
      for (int h = 0; h < hops; ++h)
        buf = onion_unwrap_layer(crypto, buf, receiver[h], Direction::Forward);
      REQUIRE(buf == payload);
    }
  }
}

TEST_CASE("sequential cells use distinct keystreams") {
  HopKeys k;
  auto payload = encode_relay_payload(RelayPayload{});
  std::vector<HopKeys> hops{k};
  auto first = onion_wrap(crypto, payload, hops);
  auto second = onion_wrap(crypto, payload, hops);
  CHECK(hops[0].fwd_cell_counter == 2);
  CHECK(first != second);
}

TEST_CASE("counter overflow is an error") {
  HopKeys k;
  k.fwd_cell_counter = UINT64_MAX;
  std::array<std::uint8_t, kPayloadSize> buf{};
  CHECK_THROWS_AS(apply_layer(crypto, k, Direction::Forward, buf), CellError);
}

TEST_CASE("recognition by construction, rejection on recognized flag") {
  std::uint64_t sender_state = kFnvOffsetBasis;
  std::uint64_t hop_state = kFnvOffsetBasis;

  RelayPayload p;
  p.relay_cmd = 1;
  p.length = 3;
  p.data[0] = 'a';
  auto bytes = seal_payload_digest(crypto, p, sender_state);
  CHECK(recognize(bytes, crypto, hop_state));
  CHECK(hop_state == sender_state);

  // Second cell continues the digest chain.
  auto bytes2 = seal_payload_digest(crypto, p, sender_state);
  CHECK(recognize(bytes2, crypto, hop_state));

  // recognized != 0 fails regardless of digest.
  auto bad = bytes;
  put_u16(bad.data() + 1, 0x0001);
  std::uint64_t s = kFnvOffsetBasis;
  CHECK_FALSE(recognize(bad, crypto, s));
  CHECK(s == kFnvOffsetBasis);
}

TEST_CASE("single-bit flips break recognition") {
  std::uint64_t sender_state = kFnvOffsetBasis;
  RelayPayload p;
  p.relay_cmd = 1;
  p.length = 100;
  for (int i = 0; i < 100; ++i) p.data[i] = static_cast<std::uint8_t>(i);
  auto bytes = seal_payload_digest(crypto, p, sender_state);

  std::mt19937_64 rng(99);
  for (int i = 0; i < 100; ++i) {
    auto mutated = bytes;
    // Flip a random bit of the data region (bytes 11..506).
    std::size_t byte = 11 + rng() % (kPayloadSize - 11);
    mutated[byte] ^= static_cast<std::uint8_t>(1u << (rng() % 8));
    std::uint64_t state = kFnvOffsetBasis;
    REQUIRE_FALSE(recognize(mutated, crypto, state));
  }
}

TEST_CASE("unwrap with wrong key fails recognition") {
  std::uint64_t sender_state = kFnvOffsetBasis;
  RelayPayload p;
  p.relay_cmd = 1;
  auto payload = seal_payload_digest(crypto, p, sender_state);

  std::vector<HopKeys> hops(1);
  hops[0].key.fill(0x55);
  auto wrapped = onion_wrap(crypto, payload, hops);

  HopKeys wrong;
  wrong.key.fill(0x56);
  auto unwrapped = onion_unwrap_layer(crypto, wrapped, wrong, Direction::Forward);
  std::uint64_t state = kFnvOffsetBasis;
  CHECK_FALSE(recognize(unwrapped, crypto, state));
}

TEST_CASE("seal/open round trip and node separation") {
  NodeId a{}, b{};
  a.fill(0xAA);
  b.fill(0xAB);
  Bytes pt(32, 0x11);
  Bytes ct = crypto.seal(a, pt);
  CHECK(ct != pt);
  CHECK(crypto.open(a, ct) == pt);
  CHECK(crypto.open(b, ct) != pt);
}
