#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "fan/cell.hpp"
#include "fan/common.hpp"
#include "fan/isa.hpp"
#include "fan/signing.hpp"
#include "fan/verifier.hpp"
#include "fan/vm.hpp"

namespace fan {

// Capability bits gating host functions.
namespace cap {
inline constexpr std::uint32_t kLog = 1u << 0;
inline constexpr std::uint32_t kStateRead = 1u << 1;
inline constexpr std::uint32_t kStateWrite = 1u << 2;
inline constexpr std::uint32_t kCellRead = 1u << 3;
inline constexpr std::uint32_t kCellEmit = 1u << 4;
inline constexpr std::uint32_t kTimer = 1u << 5;
inline constexpr std::uint32_t kRand = 1u << 6;
inline constexpr std::uint32_t kClock = 1u << 7;
inline constexpr std::uint32_t kAll = 0xFF;
}  // namespace cap

inline std::uint32_t capability_from_name(const std::string& name) {
  if (name == "LOG") return cap::kLog;
  if (name == "STATE_READ") return cap::kStateRead;
  if (name == "STATE_WRITE") return cap::kStateWrite;
  if (name == "CELL_READ") return cap::kCellRead;
  if (name == "CELL_EMIT") return cap::kCellEmit;
  if (name == "TIMER") return cap::kTimer;
  if (name == "RAND") return cap::kRand;
  if (name == "CLOCK") return cap::kClock;
  throw std::invalid_argument("unknown capability '" + name + "'");
}

enum class EventKind : std::uint16_t {
  OnAttach = 0,
  OnDetach = 1,
  OnFeatureCell = 2,  // r1 = relay_cmd, r2 = direction
  OnTimer = 3,        // r1 = tag
  OnCircuitTeardown = 4,
};

struct PluginEntry {
  std::uint16_t event_id;
  std::uint32_t pc;

  bool operator==(const PluginEntry&) const = default;
};

struct PluginVersion {
  std::uint16_t major = 0, minor = 0, patch = 0;

  bool operator==(const PluginVersion&) const = default;
  std::string str() const {
    return std::to_string(major) + "." + std::to_string(minor) + "." +
           std::to_string(patch);
  }
};

struct PluginPackage {
  std::uint16_t format_version = 1;
  std::uint16_t flags = 0;  // bit0 = ephemeral-only
  std::string name;         // <= 32 bytes
  PluginVersion version;
  std::uint32_t capability_mask = 0;
  std::vector<std::uint8_t> feature_ids;  // each >= 32
  std::vector<PluginEntry> entries;
  std::uint32_t memory_size = 65536;
  Bytes code;
  KeyId signer_key_id{};
  Signature signature{};

  bool operator==(const PluginPackage&) const = default;

  const PluginEntry* entry_for(EventKind event) const {
    for (const auto& e : entries)
      if (e.event_id == static_cast<std::uint16_t>(event)) return &e;
    return nullptr;
  }
};

enum class PackageError {
  BadMagic,
  UnknownSigner,
  SignatureInvalid,
  VerifierRejected,
  UnknownCapability,
};

inline const char* package_error_name(PackageError e) {
  switch (e) {
    case PackageError::BadMagic: return "BadMagic";
    case PackageError::UnknownSigner: return "UnknownSigner";
    case PackageError::SignatureInvalid: return "SignatureInvalid";
    case PackageError::VerifierRejected: return "VerifierRejected";
    case PackageError::UnknownCapability: return "UnknownCapability";
  }
  return "?";
}

inline constexpr char kPackageMagic[4] = {'F', 'A', 'N', 'P'};
inline constexpr std::size_t kHostTableSize = 8;

class PackageLayoutError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline Bytes serialize_unsigned(const PluginPackage& p) {
  if (p.name.size() > 32) throw PackageLayoutError("name exceeds 32 bytes");
  if (p.feature_ids.size() > 255) throw PackageLayoutError("too many feature ids");
  if (p.entries.size() > 255) throw PackageLayoutError("too many entries");

  Bytes out;
  out.insert(out.end(), kPackageMagic, kPackageMagic + 4);
  auto push_u16 = [&](std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
  };
  auto push_u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  push_u16(p.format_version);
  push_u16(p.flags);
  std::array<std::uint8_t, 32> name{};
  std::memcpy(name.data(), p.name.data(), p.name.size());
  out.insert(out.end(), name.begin(), name.end());
  push_u16(p.version.major);
  push_u16(p.version.minor);
  push_u16(p.version.patch);
  push_u32(p.capability_mask);
  out.push_back(static_cast<std::uint8_t>(p.feature_ids.size()));
  out.insert(out.end(), p.feature_ids.begin(), p.feature_ids.end());
  out.push_back(static_cast<std::uint8_t>(p.entries.size()));
  for (const auto& e : p.entries) {
    push_u16(e.event_id);
    push_u32(e.pc);
  }
  push_u32(p.memory_size);
  push_u32(static_cast<std::uint32_t>(p.code.size()));
  out.insert(out.end(), p.code.begin(), p.code.end());
  return out;
}

}  // namespace detail

// Serializes and signs a package. The signature covers every byte that
// precedes the signer_key_id field.
inline Bytes package(PluginPackage p, const SigningKey& key) {
  Program program = parse_program(p.code);
  if (!verify(program, kHostTableSize).ok())
    throw PackageLayoutError("code fails verification");
  Bytes out = detail::serialize_unsigned(p);
  Signature sig = sign_detached(key.secret_key, out);
  out.insert(out.end(), key.public_key.begin(), key.public_key.end());
  out.insert(out.end(), sig.begin(), sig.end());
  return out;
}

// Check order is fixed: magic -> signer -> signature -> verifier -> capabilities.
inline Result<PluginPackage, PackageError> parse_and_verify(
    std::span<const std::uint8_t> bytes, const TrustStore& trusted_keys) {
  auto bad = [](PackageError e) { return Result<PluginPackage, PackageError>(e); };

  std::size_t n = bytes.size();
  if (n < 4 + 2 + 2 + 32 + 6 + 4 + 1 + 1 + 4 + 4 + 32 + 64) return bad(PackageError::BadMagic);
  if (std::memcmp(bytes.data(), kPackageMagic, 4) != 0) return bad(PackageError::BadMagic);

  PluginPackage p;
  std::size_t off = 4;
  auto need = [&](std::size_t k) { return off + k + 96 <= n; };
  p.format_version = get_u16(bytes.data() + off); off += 2;
  p.flags = get_u16(bytes.data() + off); off += 2;
  if (p.format_version != 1) return bad(PackageError::BadMagic);
  {
    const char* name = reinterpret_cast<const char*>(bytes.data() + off);
    std::size_t len = 0;
    while (len < 32 && name[len] != '\0') ++len;
    p.name.assign(name, len);
    off += 32;
  }
  p.version.major = get_u16(bytes.data() + off); off += 2;
  p.version.minor = get_u16(bytes.data() + off); off += 2;
  p.version.patch = get_u16(bytes.data() + off); off += 2;
  p.capability_mask = get_u32(bytes.data() + off); off += 4;
  std::uint8_t feature_count = bytes[off++];
  if (!need(feature_count)) return bad(PackageError::BadMagic);
  p.feature_ids.assign(bytes.begin() + off, bytes.begin() + off + feature_count);
  off += feature_count;
  std::uint8_t entry_count = bytes[off++];
  if (!need(std::size_t{entry_count} * 6)) return bad(PackageError::BadMagic);
  for (std::uint8_t i = 0; i < entry_count; ++i) {
    PluginEntry e{get_u16(bytes.data() + off), get_u32(bytes.data() + off + 2)};
    p.entries.push_back(e);
    off += 6;
  }
  if (!need(8)) return bad(PackageError::BadMagic);
  p.memory_size = get_u32(bytes.data() + off); off += 4;
  std::uint32_t code_len = get_u32(bytes.data() + off); off += 4;
  if (!need(code_len)) return bad(PackageError::BadMagic);
  p.code.assign(bytes.begin() + off, bytes.begin() + off + code_len);
  off += code_len;
  if (off + 96 != n) return bad(PackageError::BadMagic);

  std::copy_n(bytes.begin() + off, 32, p.signer_key_id.begin());
  std::copy_n(bytes.begin() + off + 32, 64, p.signature.begin());

  auto key_it = trusted_keys.find(p.signer_key_id);
  if (key_it == trusted_keys.end()) return bad(PackageError::UnknownSigner);
  if (!verify_detached(key_it->second, bytes.first(off), p.signature))
    return bad(PackageError::SignatureInvalid);

  Program program;
  try {
    program = parse_program(p.code);
  } catch (const ParseError&) {
    return bad(PackageError::VerifierRejected);
  }
  if (!verify(program, kHostTableSize).ok()) return bad(PackageError::VerifierRejected);
  for (auto id : p.feature_ids)
    if (id < kFeatureIdMin) return bad(PackageError::VerifierRejected);
  for (const auto& e : p.entries)
    if (e.pc >= program.size()) return bad(PackageError::VerifierRejected);
  if (p.memory_size < kArenaMin || p.memory_size > kArenaMax)
    return bad(PackageError::VerifierRejected);

  if (p.capability_mask & ~cap::kAll) return bad(PackageError::UnknownCapability);
  return p;
}

}  // namespace fan
