#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "fan/common.hpp"
#include "fan/crypto.hpp"

namespace fan {

inline constexpr std::size_t kCellSize = 512;
inline constexpr std::size_t kPayloadSize = 507;
inline constexpr std::size_t kRelayDataMax = 496;

enum class LinkCommand : std::uint8_t {
  Create = 1,
  Created = 2,
  Relay = 3,
  Destroy = 4,
};

// Core relay commands; values >= 32 are the extension (FeatureId) space.
enum class RelayCommand : std::uint8_t {
  Data = 1,
  End = 2,
  Extend = 3,
  Extended = 4,
  PluginDeliver = 16,
  PluginAck = 17,
  PluginErr = 18,
};

inline constexpr std::uint8_t kFeatureIdMin = 32;

struct LinkCell {
  std::uint32_t circ_id = 0;  // 0 reserved, never assigned
  std::uint8_t command = 0;
  std::array<std::uint8_t, kPayloadSize> payload{};

  bool operator==(const LinkCell&) const = default;
};

// 507-byte relay payload: cmd u8 | recognized u16 | stream_id u16 |
// digest u32 | length u16 | data[496], all little-endian.
struct RelayPayload {
  std::uint8_t relay_cmd = 0;
  std::uint16_t recognized = 0;
  std::uint16_t stream_id = 0;
  std::uint32_t digest = 0;
  std::uint16_t length = 0;
  std::array<std::uint8_t, kRelayDataMax> data{};

  bool operator==(const RelayPayload&) const = default;

  std::span<const std::uint8_t> data_view() const {
    return {data.data(), std::min<std::size_t>(length, kRelayDataMax)};
  }
};

struct HopKeys {
  std::array<std::uint8_t, 32> key{};
  std::uint64_t fwd_cell_counter = 0;
  std::uint64_t bwd_cell_counter = 0;
  std::uint64_t fwd_digest_state = kFnvOffsetBasis;
  std::uint64_t bwd_digest_state = kFnvOffsetBasis;

  std::uint64_t& counter(Direction d) {
    return d == Direction::Forward ? fwd_cell_counter : bwd_cell_counter;
  }
  std::uint64_t& digest_state(Direction d) {
    return d == Direction::Forward ? fwd_digest_state : bwd_digest_state;
  }
};

class CellError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::array<std::uint8_t, kCellSize> encode_cell(const LinkCell& cell) {
  std::array<std::uint8_t, kCellSize> out{};
  put_u32(out.data(), cell.circ_id);
  out[4] = cell.command;
  std::copy(cell.payload.begin(), cell.payload.end(), out.begin() + 5);
  return out;
}

inline LinkCell decode_cell(std::span<const std::uint8_t> bytes) {
  if (bytes.size() != kCellSize) throw CellError("cell must be exactly 512 bytes");
  LinkCell cell;
  cell.circ_id = get_u32(bytes.data());
  cell.command = bytes[4];
  std::copy(bytes.begin() + 5, bytes.end(), cell.payload.begin());
  return cell;
}

inline std::array<std::uint8_t, kPayloadSize> encode_relay_payload(const RelayPayload& p) {
  if (p.length > kRelayDataMax) throw CellError("relay data length > 496");
  std::array<std::uint8_t, kPayloadSize> out{};
  out[0] = p.relay_cmd;
  put_u16(out.data() + 1, p.recognized);
  put_u16(out.data() + 3, p.stream_id);
  put_u32(out.data() + 5, p.digest);
  put_u16(out.data() + 9, p.length);
  std::copy(p.data.begin(), p.data.end(), out.begin() + 11);
  return out;
}

inline RelayPayload decode_relay_payload(std::span<const std::uint8_t> bytes) {
  if (bytes.size() != kPayloadSize) throw CellError("relay payload must be 507 bytes");
  RelayPayload p;
  p.relay_cmd = bytes[0];
  p.recognized = get_u16(bytes.data() + 1);
  p.stream_id = get_u16(bytes.data() + 3);
  p.digest = get_u32(bytes.data() + 5);
  p.length = get_u16(bytes.data() + 9);
  std::copy(bytes.begin() + 11, bytes.end(), p.data.begin());
  return p;
}

// Digest over the payload with its digest field zeroed, continuing `state`.
inline std::uint64_t payload_digest(const CryptoProvider& crypto,
                                    std::span<const std::uint8_t, kPayloadSize> payload,
                                    std::uint64_t state) {
  std::array<std::uint8_t, kPayloadSize> tmp;
  std::copy(payload.begin(), payload.end(), tmp.begin());
  std::fill(tmp.begin() + 5, tmp.begin() + 9, 0);
  return crypto.digest_update(state, tmp);
}

// Fills in digest/recognized for a payload destined to the hop owning
// `state`, committing the new digest state.
inline std::array<std::uint8_t, kPayloadSize> seal_payload_digest(
    const CryptoProvider& crypto, RelayPayload p, std::uint64_t& state) {
  p.recognized = 0;
  p.digest = 0;
  auto bytes = encode_relay_payload(p);
  std::uint64_t next = payload_digest(crypto, bytes, state);
  state = next;
  put_u32(bytes.data() + 5, static_cast<std::uint32_t>(next));
  return bytes;
}

struct RecognizeResult {
  bool recognized = false;
};

// True iff recognized field is zero and the digest matches the running
// state; commits the state only on recognition.
inline bool recognize(std::span<const std::uint8_t, kPayloadSize> payload_bytes,
                      const CryptoProvider& crypto, std::uint64_t& digest_state) {
  if (get_u16(payload_bytes.data() + 1) != 0) return false;
  std::uint64_t next = payload_digest(crypto, payload_bytes, digest_state);
  if (get_u32(payload_bytes.data() + 5) != static_cast<std::uint32_t>(next)) return false;
  digest_state = next;
  return true;
}

inline void apply_layer(const CryptoProvider& crypto, HopKeys& keys, Direction dir,
                        std::span<std::uint8_t, kPayloadSize> buffer) {
  std::uint64_t& ctr = keys.counter(dir);
  if (ctr == UINT64_MAX) throw CellError("cell counter overflow");
  crypto.stream_xor(keys.key, dir, ctr, buffer);
  ++ctr;
}

// Onion-wrap toward the last hop in `hops` (hop 1 first, destination last):
// innermost layer is the destination's, outermost hop 1's. Consumes one
// counter per hop.
inline std::array<std::uint8_t, kPayloadSize> onion_wrap(
    const CryptoProvider& crypto, std::span<const std::uint8_t, kPayloadSize> payload,
    std::span<HopKeys> hops, Direction dir = Direction::Forward) {
  std::array<std::uint8_t, kPayloadSize> buf;
  std::copy(payload.begin(), payload.end(), buf.begin());
  for (auto it = hops.rbegin(); it != hops.rend(); ++it)
    apply_layer(crypto, *it, dir, buf);
  return buf;
}

inline std::array<std::uint8_t, kPayloadSize> onion_unwrap_layer(
    const CryptoProvider& crypto, std::span<const std::uint8_t, kPayloadSize> buffer,
    HopKeys& keys, Direction dir) {
  std::array<std::uint8_t, kPayloadSize> out;
  std::copy(buffer.begin(), buffer.end(), out.begin());
  apply_layer(crypto, keys, dir, out);
  return out;
}

}  // namespace fan
