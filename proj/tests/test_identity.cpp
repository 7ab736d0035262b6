#include <doctest.h>

#include "roadalarm/identity.hpp"
#include "support.hpp"

#include <sodium.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <random>
#include <set>

using namespace roadalarm;

namespace {

// Test-side copy of the documented key derivation, used to look for leaks.
std::array<std::uint8_t, 32> derived_seed(const std::string& owner, std::uint64_t seed, const std::string& ref) {
  std::array<std::uint8_t, 16> key{};
  for (int i = 0; i < 8; ++i) key[i] = static_cast<std::uint8_t>(seed >> (8 * i));
  const std::string msg = owner + "/" + ref;
  std::array<std::uint8_t, 32> out{};
  crypto_generichash(out.data(), out.size(), reinterpret_cast<const unsigned char*>(msg.data()), msg.size(),
                     key.data(), key.size());
  return out;
}

Bytes reference_signed_bytes(const SignedEnvelope& env) {
  Bytes b = env.payload;
  const auto bits = std::bit_cast<std::uint64_t>(env.timestamp);
  for (int i = 7; i >= 0; --i) b.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  return b;
}

bool contains_window(const Bytes& hay, std::span<const std::uint8_t> needle) {
  return std::search(hay.begin(), hay.end(), needle.begin(), needle.end()) != hay.end();
}

Bytes flatten(const Certificate& c) {
  Bytes b = c.signed_bytes();
  b.insert(b.end(), c.signature.begin(), c.signature.end());
  return b;
}

Bytes flatten(const SignedEnvelope& e) {
  Bytes b = e.payload;
  b.insert(b.end(), e.signature.begin(), e.signature.end());
  auto c = flatten(e.certificate);
  b.insert(b.end(), c.begin(), c.end());
  return b;
}

struct Fixture {
  CertificateAuthority ca{"CA", 99};
  Hsm hsm{"VE-1", 7};
  LongTermCredential cred = ca.register_vehicle("VE-1", hsm, 0.0);
  TrustAnchors anchors = ca.anchors(5.0);
};

}  // namespace

TEST_SUITE("identity") {
  TEST_CASE("registration") {
    Fixture f;
    CHECK(f.cred.certificate.subject == "VE-1");
    CHECK(verify_signature(f.ca.public_key(), f.cred.certificate.signed_bytes(), f.cred.certificate.signature));
    Hsm other("VE-1", 8);
    CHECK_THROWS_AS(f.ca.register_vehicle("VE-1", other, 0.0), DuplicateIdentity);

    std::set<PublicKey> keys;
    std::vector<std::unique_ptr<Hsm>> hsms;
    for (int i = 0; i < 100; ++i) {
      hsms.push_back(std::make_unique<Hsm>("V" + std::to_string(i), 1000 + i));
      keys.insert(f.ca.register_vehicle("V" + std::to_string(i), *hsms.back(), 0.0).certificate.subject_key);
    }
    CHECK(keys.size() == 100);
  }

  TEST_CASE("pseudonyms carry no identity and resolve back") {
    Fixture f;
    auto batch = f.ca.issue_pseudonyms(f.cred, f.hsm, 10, 1.0);
    REQUIRE(batch.size() == 10);
    std::set<PublicKey> keys;
    for (const auto& p : batch) {
      CHECK(p.certificate.subject.empty());
      CHECK(p.certificate.role == Role::Pseudonym);
      const Bytes raw = flatten(p.certificate);
      CHECK_FALSE(contains_window(raw, std::span(reinterpret_cast<const std::uint8_t*>("VE-1"), 4)));
      CHECK(f.ca.resolve(p.public_key) == std::optional<std::string>("VE-1"));
      keys.insert(p.public_key);
    }
    CHECK(keys.size() == 10);
    CHECK(f.ca.issue_pseudonyms(f.cred, f.hsm, 0, 1.0).empty());
  }

  TEST_CASE("pseudonym issue needs the long-term key") {
    Fixture f;
    Hsm impostor("VE-1", 12345);
    CHECK_THROWS_AS(f.ca.issue_pseudonyms(f.cred, impostor, 3, 1.0), AuthFailure);
  }

  TEST_CASE("sign and verify") {
    Fixture f;
    f.hsm.advance_clock(10.0);
    const Bytes x{'x'};
    const auto env = hsm_sign(f.hsm, f.cred.key_ref, x);
    CHECK(env.timestamp == 10.0);
    auto out = verify_envelope(env, f.anchors, 10.0);
    REQUIRE(std::holds_alternative<Bytes>(out));
    CHECK(std::get<Bytes>(out) == x);
    CHECK_THROWS_AS(hsm_sign(f.hsm, "nope", x), UnknownKeyRef);

    CHECK(std::get<VerifyError>(verify_envelope(env, f.anchors, 10.0 + 5.0 + 1.0)) == VerifyError::StaleTimestamp);
    auto flipped = env;
    flipped.payload[0] ^= 0x01;
    CHECK(std::get<VerifyError>(verify_envelope(flipped, f.anchors, 10.0)) == VerifyError::SignatureError);

    CertificateAuthority rogue("CA", 1);
    CHECK(std::get<VerifyError>(verify_envelope(env, rogue.anchors(), 10.0)) == VerifyError::CertError);
  }

  TEST_CASE("hsm clock orders timestamps") {
    Fixture f;
    f.hsm.advance_clock(3.0);
    const auto a = hsm_sign(f.hsm, f.cred.key_ref, Bytes{1});
    f.hsm.advance_clock(4.5);
    const auto b = hsm_sign(f.hsm, f.cred.key_ref, Bytes{1});
    f.hsm.advance_clock(1.0);  // ignored
    const auto c = hsm_sign(f.hsm, f.cred.key_ref, Bytes{1});
    CHECK(a.timestamp < b.timestamp);
    CHECK(c.timestamp == b.timestamp);
  }

  TEST_CASE("signatures check out under an independent verifier") {
    Fixture f;
    auto g = roadalarm::testing::rng(11);
    std::uniform_int_distribution<int> len(0, 200), byte(0, 255);
    std::uniform_real_distribution<double> t(0.0, 1e5);
    for (int i = 0; i < 300; ++i) {
      Bytes p(len(g));
      for (auto& b : p) b = static_cast<std::uint8_t>(byte(g));
      f.hsm.advance_clock(f.hsm.now() + t(g) / 1e3);
      const auto env = hsm_sign(f.hsm, f.cred.key_ref, p);
      const Bytes m = reference_signed_bytes(env);
      CHECK(env.signed_bytes() == m);
      CHECK(crypto_sign_verify_detached(env.signature.data(), m.data(), m.size(),
                                        env.certificate.subject_key.data()) == 0);
      CHECK(std::holds_alternative<Bytes>(verify_envelope(env, f.anchors, env.timestamp)));
      CHECK(std::get<VerifyError>(verify_envelope(env, f.anchors, env.timestamp + 5.0 + 1e-6)) ==
            VerifyError::StaleTimestamp);
    }
  }

  TEST_CASE("no output carries private key bytes") {
    Fixture f;
    auto batch = f.ca.issue_pseudonyms(f.cred, f.hsm, 5, 0.0);
    std::vector<std::string> refs{f.cred.key_ref};
    for (const auto& p : batch) refs.push_back(p.key_ref);

    std::vector<Bytes> outputs;
    outputs.push_back(flatten(f.cred.certificate));
    for (const auto& ref : refs) {
      const auto env = f.hsm.sign(ref, Bytes{1, 2, 3});
      outputs.push_back(flatten(env));
      const auto pk = f.hsm.public_key(ref);
      outputs.emplace_back(pk.begin(), pk.end());
    }
    for (const auto& ref : refs) {
      const auto seed = derived_seed("VE-1", 7, ref);
      // The documented derivation must reproduce the public key...
      std::array<std::uint8_t, 32> pk{};
      std::array<std::uint8_t, 64> sk{};
      crypto_sign_seed_keypair(pk.data(), sk.data(), seed.data());
      CHECK(pk == f.hsm.public_key(ref));
      // ...and no 16-byte run of the secret may appear anywhere.
      for (const auto& out : outputs)
        for (std::size_t off = 0; off + 16 <= seed.size(); off += 8)
          CHECK_FALSE(contains_window(out, std::span(seed).subspan(off, 16)));
    }
  }

  TEST_CASE("pseudonym rotation") {
    Fixture f;
    PseudonymPool pool;
    pool.add(f.ca.issue_pseudonyms(f.cred, f.hsm, 5, 0.0));
    const auto& p1 = rotate_pseudonym(pool, "R2");
    CHECK(p1.index == pool.all().front().index);
    CHECK(p1.used_on_segment == std::optional<std::string>("R2"));

    std::set<PublicKey> seen{p1.public_key};
    for (const char* rid : {"R3", "R4", "R5", "R6"}) seen.insert(rotate_pseudonym(pool, rid).public_key);
    CHECK(seen.size() == 5);
    CHECK(pool.unused() == 0);
    CHECK_THROWS_AS(rotate_pseudonym(pool, "R7"), PseudonymPoolExhausted);
  }

  TEST_CASE("replay guard and certificate cache") {
    Fixture f;
    f.hsm.advance_clock(1.0);
    const auto env = hsm_sign(f.hsm, f.cred.key_ref, Bytes{9});
    ReplayGuard guard(5.0);
    CHECK_FALSE(guard.seen_before(env, 1.0));
    CHECK(guard.seen_before(env, 2.0));

    CertificateCache cache;
    CHECK_FALSE(check_envelope(env, f.anchors, 1.0, &cache).has_value());
    CHECK(cache.contains(env.certificate));
    // A cached certificate still has to carry a valid envelope signature.
    auto forged = env;
    forged.payload[0] ^= 0xff;
    CHECK(check_envelope(forged, f.anchors, 1.0, &cache) == VerifyError::SignatureError);
    // Altering any certified field misses the cache and fails the CA check.
    auto moved = env;
    moved.certificate.not_after += 1.0;
    CHECK(check_envelope(moved, f.anchors, 1.0, &cache) == VerifyError::CertError);
  }
}
