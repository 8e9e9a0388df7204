#pragma once

#include <sodium.h>

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>

#include "fan/common.hpp"

namespace fan {

// Ed25519 behind the fixed wire format: 32-byte public keys (the key id is
// the public key itself), 64-byte signatures.
using PublicKey = std::array<std::uint8_t, 32>;
using Signature = std::array<std::uint8_t, 64>;
using SecretKey = std::array<std::uint8_t, 64>;

using TrustStore = std::map<KeyId, PublicKey>;

inline void crypto_init() {
  static const int rc = sodium_init();
  if (rc < 0) throw std::runtime_error("sodium_init failed");
}

struct SigningKey {
  PublicKey public_key{};
  SecretKey secret_key{};

  KeyId key_id() const { return public_key; }

  static SigningKey generate() {
    crypto_init();
    SigningKey k;
    crypto_sign_keypair(k.public_key.data(), k.secret_key.data());
    return k;
  }

  // Deterministic keypair from a seed, for reproducible tests and scenarios.
  static SigningKey from_seed(std::span<const std::uint8_t, 32> seed) {
    crypto_init();
    SigningKey k;
    crypto_sign_seed_keypair(k.public_key.data(), k.secret_key.data(), seed.data());
    return k;
  }
};

inline Signature sign_detached(const SecretKey& sk, std::span<const std::uint8_t> msg) {
  crypto_init();
  Signature sig{};
  crypto_sign_detached(sig.data(), nullptr, msg.data(), msg.size(), sk.data());
  return sig;
}

inline bool verify_detached(const PublicKey& pk, std::span<const std::uint8_t> msg,
                            const Signature& sig) {
  crypto_init();
  return crypto_sign_verify_detached(sig.data(), msg.data(), msg.size(), pk.data()) == 0;
}

inline std::array<std::uint8_t, 32> sha256(std::span<const std::uint8_t> data) {
  crypto_init();
  std::array<std::uint8_t, 32> out{};
  crypto_hash_sha256(out.data(), data.data(), data.size());
  return out;
}

}  // namespace fan
