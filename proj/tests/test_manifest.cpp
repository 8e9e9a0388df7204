#include <catch2/catch_amalgamated.hpp>

#include "fan/manifest.hpp"
#include "fan/samples.hpp"

using namespace fan;

namespace {

const std::time_t kNow = 1700000000;

SigningKey seeded_key(std::uint8_t b) {
  std::array<std::uint8_t, 32> seed{};
  seed.fill(b);
  return SigningKey::from_seed(seed);
}

RepoManifest make_manifest(const std::vector<SigningKey>& keys, std::uint32_t threshold,
                           std::span<const SigningKey> signers) {
  RepoManifest m;
  m.root.expires = kNow + 86400;
  m.root.threshold = threshold;
  for (const auto& k : keys) m.root.keys[k.key_id()] = k.public_key;
  m.targets.expires = kNow + 86400;
  for (const auto& k : signers) m.signatures.push_back(sign_targets(m.targets, k));
  return m;
}

}  // namespace

TEST_CASE("canonical json: sorted keys, no whitespace, hex binaries") {
  RepoRoot root;
  root.expires = kNow;
  SigningKey k = seeded_key(1);
  root.keys[k.key_id()] = k.public_key;
  std::string s = canonical_json(root_to_json(root));
  CHECK(s.find(' ') == std::string::npos);
  CHECK(s.find("\"expires\"") < s.find("\"keys\""));
  CHECK(s.find("\"keys\"") < s.find("\"threshold\""));
  CHECK(s.find("\"threshold\"") < s.find("\"version\""));
  // Round trip.
  RepoRoot back = root_from_json(nlohmann::json::parse(s));
  CHECK(back.expires == root.expires);
  CHECK(back.keys == root.keys);
}

TEST_CASE("utc timestamps round trip") {
  CHECK(parse_utc(format_utc(kNow)) == kNow);
  CHECK(format_utc(0) == "1970-01-01T00:00:00Z");
  CHECK_THROWS(parse_utc("not a time"));
}

TEST_CASE("threshold 2-of-3 verifies") {
  std::vector<SigningKey> keys = {seeded_key(1), seeded_key(2), seeded_key(3)};
  SigningKey signers[] = {keys[0], keys[2]};
  RepoManifest m = make_manifest(keys, 2, signers);
  CHECK_FALSE(verify_manifest(m, kNow).has_value());
}

TEST_CASE("duplicate-key signatures do not count twice") {
  std::vector<SigningKey> keys = {seeded_key(1), seeded_key(2)};
  SigningKey signers[] = {keys[0], keys[0]};
  RepoManifest m = make_manifest(keys, 2, signers);
  auto err = verify_manifest(m, kNow);
  REQUIRE(err.has_value());
  CHECK(*err == ManifestError::InsufficientSignatures);
}

TEST_CASE("expiry boundary") {
  std::vector<SigningKey> keys = {seeded_key(1)};
  SigningKey signers[] = {keys[0]};
  RepoManifest m = make_manifest(keys, 1, signers);
  m.targets.expires = kNow - 1;
  m.signatures = {sign_targets(m.targets, keys[0])};
  CHECK(verify_manifest(m, kNow) == ManifestError::Expired);

  m.targets.expires = kNow + 1;
  m.signatures = {sign_targets(m.targets, keys[0])};
  CHECK_FALSE(verify_manifest(m, kNow).has_value());

  m.root.expires = kNow;  // expires <= now is expired
  CHECK(verify_manifest(m, kNow) == ManifestError::Expired);
}

TEST_CASE("signature by unknown key id") {
  std::vector<SigningKey> keys = {seeded_key(1)};
  RepoManifest m = make_manifest(keys, 1, {});
  m.signatures.push_back(sign_targets(m.targets, seeded_key(9)));
  CHECK(verify_manifest(m, kNow) == ManifestError::UnknownKeyId);
}

TEST_CASE("k-of-n combinatorics for n <= 4") {
  for (unsigned n = 1; n <= 4; ++n) {
    std::vector<SigningKey> keys;
    for (unsigned i = 0; i < n; ++i) keys.push_back(seeded_key(static_cast<std::uint8_t>(10 + i)));
    for (unsigned k = 1; k <= n; ++k) {
      for (unsigned subset = 0; subset < (1u << n); ++subset) {
        std::vector<SigningKey> signers;
        for (unsigned i = 0; i < n; ++i)
          if (subset & (1u << i)) signers.push_back(keys[i]);
        RepoManifest m = make_manifest(keys, k, signers);
        bool should_pass = signers.size() >= k;
        bool passed = !verify_manifest(m, kNow).has_value();
        REQUIRE(passed == should_pass);
      }
    }
  }
}

TEST_CASE("tampered targets invalidate signatures") {
  std::vector<SigningKey> keys = {seeded_key(1)};
  SigningKey signers[] = {keys[0]};
  RepoManifest m = make_manifest(keys, 1, signers);
  m.targets.version = 2;  // signed bytes no longer match
  CHECK(verify_manifest(m, kNow) == ManifestError::InsufficientSignatures);
}

TEST_CASE("resolve_plugin: hash, length, capability ceiling") {
  SigningKey key = seeded_key(1);
  Bytes pkg_bytes = padding_plugin().build_signed(key);
  std::uint32_t caps = padding_plugin().capability_mask;

  RepoManifest m;
  TargetEntry e;
  e.length = pkg_bytes.size();
  e.hash = sha256(pkg_bytes);
  e.max_capabilities = caps;
  m.targets.targets["padding"] = e;

  CHECK_FALSE(resolve_plugin(m, "padding", pkg_bytes, caps).has_value());
  CHECK(resolve_plugin(m, "nope", pkg_bytes, caps) == ResolveError::UnknownTarget);

  Bytes truncated(pkg_bytes.begin(), pkg_bytes.end() - 1);
  CHECK(resolve_plugin(m, "padding", truncated, caps) == ResolveError::HashMismatch);

  Bytes flipped = pkg_bytes;
  flipped[10] ^= 1;
  CHECK(resolve_plugin(m, "padding", flipped, caps) == ResolveError::HashMismatch);

  m.targets.targets["padding"].max_capabilities = caps & ~cap::kTimer;
  CHECK(resolve_plugin(m, "padding", pkg_bytes, caps) == ResolveError::CapabilityEscalation);
}
