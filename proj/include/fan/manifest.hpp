#pragma once

#include <cstdint>
#include <ctime>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fan/common.hpp"
#include "fan/package.hpp"
#include "fan/signing.hpp"

namespace fan {

// Canonical JSON used for manifests, reports, and traces: UTF-8, object keys
// sorted lexicographically, no insignificant whitespace, integers base-10,
// binary fields lowercase hex. nlohmann::json with the default (ordered by
// key) object map plus dump() satisfies this.
inline std::string canonical_json(const nlohmann::json& j) { return j.dump(); }

inline std::string format_utc(std::time_t t) {
  char buf[32];
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::time_t parse_utc(const std::string& s) {
  std::tm tm{};
  if (!strptime(s.c_str(), "%Y-%m-%dT%H:%M:%SZ", &tm))
    throw std::invalid_argument("bad UTC timestamp '" + s + "'");
  return timegm(&tm);
}

struct TargetEntry {
  std::uint64_t length = 0;
  std::array<std::uint8_t, 32> hash{};
  std::uint32_t max_capabilities = 0;
};

struct RepoRoot {
  std::uint64_t version = 1;
  std::time_t expires = 0;
  std::map<KeyId, PublicKey> keys;
  std::uint32_t threshold = 1;
};

struct RepoTargets {
  std::uint64_t version = 1;
  std::time_t expires = 0;
  std::string hash_alg = "sha256";
  std::map<std::string, TargetEntry> targets;
};

struct ManifestSignature {
  KeyId key_id{};
  Signature sig{};
};

struct RepoManifest {
  RepoRoot root;
  RepoTargets targets;
  std::vector<ManifestSignature> signatures;  // over canonical targets bytes
};

enum class ManifestError {
  Expired,
  InsufficientSignatures,
  UnknownKeyId,
  CanonicalizationMismatch,
};

enum class ResolveError {
  UnknownTarget,
  HashMismatch,
  CapabilityEscalation,
};

inline const char* manifest_error_name(ManifestError e) {
  switch (e) {
    case ManifestError::Expired: return "Expired";
    case ManifestError::InsufficientSignatures: return "InsufficientSignatures";
    case ManifestError::UnknownKeyId: return "UnknownKeyId";
    case ManifestError::CanonicalizationMismatch: return "CanonicalizationMismatch";
  }
  return "?";
}

inline const char* resolve_error_name(ResolveError e) {
  switch (e) {
    case ResolveError::UnknownTarget: return "UnknownTarget";
    case ResolveError::HashMismatch: return "HashMismatch";
    case ResolveError::CapabilityEscalation: return "CapabilityEscalation";
  }
  return "?";
}

inline nlohmann::json root_to_json(const RepoRoot& r) {
  nlohmann::json keys = nlohmann::json::object();
  for (const auto& [id, pk] : r.keys) keys[to_hex(id)] = to_hex(pk);
  return {{"expires", format_utc(r.expires)},
          {"keys", keys},
          {"threshold", r.threshold},
          {"version", r.version}};
}

inline RepoRoot root_from_json(const nlohmann::json& j) {
  RepoRoot r;
  r.version = j.at("version").get<std::uint64_t>();
  r.expires = parse_utc(j.at("expires").get<std::string>());
  r.threshold = j.at("threshold").get<std::uint32_t>();
  for (const auto& [id, pk] : j.at("keys").items())
    r.keys[array_from_hex<32>(id)] = array_from_hex<32>(pk.get<std::string>());
  return r;
}

inline nlohmann::json targets_to_json(const RepoTargets& t) {
  nlohmann::json targets = nlohmann::json::object();
  for (const auto& [name, e] : t.targets)
    targets[name] = {{"hash", to_hex(e.hash)},
                     {"length", e.length},
                     {"max_capabilities", e.max_capabilities}};
  return {{"expires", format_utc(t.expires)},
          {"hash_alg", t.hash_alg},
          {"targets", targets},
          {"version", t.version}};
}

inline RepoTargets targets_from_json(const nlohmann::json& j) {
  RepoTargets t;
  t.version = j.at("version").get<std::uint64_t>();
  t.expires = parse_utc(j.at("expires").get<std::string>());
  t.hash_alg = j.at("hash_alg").get<std::string>();
  for (const auto& [name, e] : j.at("targets").items()) {
    TargetEntry entry;
    entry.length = e.at("length").get<std::uint64_t>();
    entry.hash = array_from_hex<32>(e.at("hash").get<std::string>());
    entry.max_capabilities = e.at("max_capabilities").get<std::uint32_t>();
    t.targets[name] = entry;
  }
  return t;
}

inline Bytes canonical_targets_bytes(const RepoTargets& t) {
  std::string s = canonical_json(targets_to_json(t));
  return Bytes(s.begin(), s.end());
}

inline ManifestSignature sign_targets(const RepoTargets& t, const SigningKey& key) {
  return {key.key_id(), sign_detached(key.secret_key, canonical_targets_bytes(t))};
}

// targets.json on disk: {"signatures": [...], "signed": {...}}.
inline nlohmann::json manifest_targets_file(const RepoManifest& m) {
  nlohmann::json sigs = nlohmann::json::array();
  for (const auto& s : m.signatures)
    sigs.push_back({{"key_id", to_hex(s.key_id)}, {"sig", to_hex(s.sig)}});
  return {{"signatures", sigs}, {"signed", targets_to_json(m.targets)}};
}

inline std::optional<ManifestError> verify_manifest(const RepoManifest& m,
                                                    std::time_t now) {
  if (m.root.threshold < 1 || m.root.threshold > m.root.keys.size())
    return ManifestError::InsufficientSignatures;
  if (m.root.expires <= now || m.targets.expires <= now) return ManifestError::Expired;

  Bytes msg = canonical_targets_bytes(m.targets);
  std::set<KeyId> seen;
  for (const auto& s : m.signatures) {
    auto it = m.root.keys.find(s.key_id);
    if (it == m.root.keys.end()) return ManifestError::UnknownKeyId;
    if (verify_detached(it->second, msg, s.sig)) seen.insert(s.key_id);
  }
  if (seen.size() < m.root.threshold) return ManifestError::InsufficientSignatures;
  return std::nullopt;
}

// Checks package bytes against a verified manifest's target entry.
inline std::optional<ResolveError> resolve_plugin(const RepoManifest& m,
                                                  const std::string& name,
                                                  std::span<const std::uint8_t> pkg_bytes,
                                                  std::uint32_t package_capability_mask) {
  auto it = m.targets.targets.find(name);
  if (it == m.targets.targets.end()) return ResolveError::UnknownTarget;
  const TargetEntry& e = it->second;
  if (pkg_bytes.size() != e.length) return ResolveError::HashMismatch;
  if (sha256(pkg_bytes) != e.hash) return ResolveError::HashMismatch;
  if (package_capability_mask & ~e.max_capabilities)
    return ResolveError::CapabilityEscalation;
  return std::nullopt;
}

}  // namespace fan
