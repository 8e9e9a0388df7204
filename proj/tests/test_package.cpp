#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "fan/package.hpp"
#include "fan/samples.hpp"

using namespace fan;

namespace {

SigningKey test_key() {
  std::array<std::uint8_t, 32> seed{};
  seed.fill(0x42);
  return SigningKey::from_seed(seed);
}

PluginPackage minimal_package() {
  PluginPackage p;
  p.name = "mini";
  p.version = {1, 2, 3};
  p.capability_mask = cap::kLog;
  p.feature_ids = {40};
  p.entries = {{static_cast<std::uint16_t>(EventKind::OnFeatureCell), 0}};
  p.memory_size = 8192;
  p.code = Assembler::assemble_bytes("movi r0, 1\nexit");
  return p;
}

TrustStore store_with(const SigningKey& k) { return {{k.key_id(), k.public_key}}; }

}  // namespace

TEST_CASE("package round trips through parse_and_verify") {
  SigningKey key = test_key();
  PluginPackage p = minimal_package();
  Bytes bytes = package(p, key);
  auto r = parse_and_verify(bytes, store_with(key));
  REQUIRE(r.ok());
  const PluginPackage& q = r.value();
  CHECK(q.name == "mini");
  CHECK(q.version == PluginVersion{1, 2, 3});
  CHECK(q.capability_mask == cap::kLog);
  CHECK(q.feature_ids == std::vector<std::uint8_t>{40});
  CHECK(q.code == p.code);
  CHECK(q.signer_key_id == key.key_id());
}

TEST_CASE("every flipped byte is rejected") {
  SigningKey key = test_key();
  Bytes bytes = package(minimal_package(), key);
  TrustStore store = store_with(key);
  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) {
    Bytes mutated = bytes;
    mutated[rng() % mutated.size()] ^= static_cast<std::uint8_t>(1 + rng() % 255);
    auto r = parse_and_verify(mutated, store);
    REQUIRE_FALSE(r.ok());
  }
}

TEST_CASE("package size follows the normative layout") {
  SigningKey key = test_key();
  PluginPackage p = minimal_package();
  Bytes bytes = package(p, key);
  // header: 4 magic + 2 + 2 + 32 name + 6 version + 4 caps + 1 + features +
  // 1 + 6*entries + 4 memory + 4 code_len, then code, then 96 trailer.
  std::size_t expected = 4 + 2 + 2 + 32 + 6 + 4 + 1 + p.feature_ids.size() + 1 +
                         6 * p.entries.size() + 4 + 4 + p.code.size() + 32 + 64;
  CHECK(bytes.size() == expected);
  CHECK(p.code.size() == 16);  // 2 instructions
}

TEST_CASE("unknown signer is distinct from bad signature") {
  SigningKey key = test_key();
  SigningKey other = SigningKey::generate();
  Bytes bytes = package(minimal_package(), key);

  auto r1 = parse_and_verify(bytes, store_with(other));
  REQUIRE_FALSE(r1.ok());
  CHECK(r1.error() == PackageError::UnknownSigner);

  // Valid structure, signer present, but signature corrupted.
  Bytes tampered = bytes;
  tampered[tampered.size() - 1] ^= 1;
  auto r2 = parse_and_verify(tampered, store_with(key));
  REQUIRE_FALSE(r2.ok());
  CHECK(r2.error() == PackageError::SignatureInvalid);
}

TEST_CASE("signature is checked before the verifier") {
  SigningKey key = test_key();
  PluginPackage p = minimal_package();
  p.code = encode_program(Program{{{0xFF, 0, 0, 0, 0}}});  // verifier-invalid

  // package() refuses to sign invalid code, so build the bytes manually.
  Bytes body = detail::serialize_unsigned(p);
  Signature sig = sign_detached(key.secret_key, body);
  Bytes bytes = body;
  bytes.insert(bytes.end(), key.public_key.begin(), key.public_key.end());
  bytes.insert(bytes.end(), sig.begin(), sig.end());

  auto r = parse_and_verify(bytes, store_with(key));
  REQUIRE_FALSE(r.ok());
  CHECK(r.error() == PackageError::VerifierRejected);

  // Same package, unsigned-store: signer check must fire first.
  auto r2 = parse_and_verify(bytes, TrustStore{});
  REQUIRE_FALSE(r2.ok());
  CHECK(r2.error() == PackageError::UnknownSigner);
}

TEST_CASE("capability bits outside the ABI are rejected") {
  SigningKey key = test_key();
  PluginPackage p = minimal_package();
  p.capability_mask = 1u << 12;
  Bytes bytes = package(p, key);
  auto r = parse_and_verify(bytes, store_with(key));
  REQUIRE_FALSE(r.ok());
  CHECK(r.error() == PackageError::UnknownCapability);
}

TEST_CASE("bad magic and truncation") {
  SigningKey key = test_key();
  Bytes bytes = package(minimal_package(), key);
  Bytes bad = bytes;
  bad[0] = 'X';
  CHECK(parse_and_verify(bad, store_with(key)).error() == PackageError::BadMagic);
  Bytes shorty(bytes.begin(), bytes.begin() + 20);
  CHECK(parse_and_verify(shorty, store_with(key)).error() == PackageError::BadMagic);
}

TEST_CASE("sample plugins assemble, verify and stay small") {
  SigningKey key = test_key();
  for (const SamplePlugin& sample : sample_plugins()) {
    PluginPackage p = sample.build();
    CHECK(p.code.size() < 4096);
    CHECK(verify(parse_program(p.code), kHostTableSize).ok());
    Bytes bytes = sample.build_signed(key);
    CHECK(bytes.size() < 16 * 1024);
    auto r = parse_and_verify(bytes, store_with(key));
    REQUIRE(r.ok());
    CHECK(r.value().name == sample.name);
  }
}
