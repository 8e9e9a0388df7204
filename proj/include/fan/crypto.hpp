#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>

#include "fan/common.hpp"

namespace fan {

enum class Direction : std::uint8_t { Backward = 0, Forward = 1 };

inline constexpr std::uint64_t kFnvOffsetBasis = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

inline std::uint64_t fnv1a64(std::span<const std::uint8_t> data,
                             std::uint64_t state = kFnvOffsetBasis) {
  for (auto b : data) {
    state ^= b;
    state *= kFnvPrime;
  }
  return state;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Pluggable symmetric layer: keystream, running digest, and the key-exchange
// substitute used by CREATE cells. The test provider below is bit-exactly
// pinned so independent implementations interoperate; it is not secure.
class CryptoProvider {
 public:
  virtual ~CryptoProvider() = default;

  // In-place keystream XOR; an involution for fixed (key, direction, counter).
  virtual void stream_xor(std::span<const std::uint8_t, 32> key, Direction dir,
                          std::uint64_t cell_counter,
                          std::span<std::uint8_t> buffer) const = 0;

  virtual std::uint64_t digest_update(std::uint64_t state,
                                      std::span<const std::uint8_t> bytes) const = 0;

  virtual Bytes seal(const NodeId& relay_id, std::span<const std::uint8_t> pt) const = 0;
  virtual Bytes open(const NodeId& relay_id, std::span<const std::uint8_t> ct) const = 0;
};

// Deterministic provider: splitmix64 counter-mode keystream seeded with
// FNV1a64(key || direction byte), FNV-1a running digest, XOR "seal".
class TestCryptoProvider final : public CryptoProvider {
 public:
  static std::uint64_t stream_seed(std::span<const std::uint8_t, 32> key, Direction dir) {
    std::uint64_t state = fnv1a64(key);
    std::uint8_t d = static_cast<std::uint8_t>(dir);
    state ^= d;
    state *= kFnvPrime;
    return state;
  }

  // Keystream block j of a cell = splitmix64(seed + cell_counter*64 + j).
  static void xor_keystream(std::uint64_t seed, std::uint64_t block_base,
                            std::span<std::uint8_t> buffer) {
    std::size_t off = 0;
    for (std::uint64_t j = 0; off < buffer.size(); ++j) {
      std::uint64_t block = splitmix64(seed + block_base + j);
      for (int i = 0; i < 8 && off < buffer.size(); ++i, ++off)
        buffer[off] ^= static_cast<std::uint8_t>(block >> (8 * i));
    }
  }

  void stream_xor(std::span<const std::uint8_t, 32> key, Direction dir,
                  std::uint64_t cell_counter,
                  std::span<std::uint8_t> buffer) const override {
    xor_keystream(stream_seed(key, dir), cell_counter * 64, buffer);
  }

  std::uint64_t digest_update(std::uint64_t state,
                              std::span<const std::uint8_t> bytes) const override {
    return fnv1a64(bytes, state);
  }

  Bytes seal(const NodeId& relay_id, std::span<const std::uint8_t> pt) const override {
    Bytes out(pt.begin(), pt.end());
    xor_keystream(seal_seed(relay_id), 0, out);
    return out;
  }

  Bytes open(const NodeId& relay_id, std::span<const std::uint8_t> ct) const override {
    return seal(relay_id, ct);
  }

 private:
  static std::uint64_t seal_seed(const NodeId& relay_id) {
    std::uint64_t state = fnv1a64(
        std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>("seal"), 4));
    return fnv1a64(relay_id, state);
  }
};

}  // namespace fan
