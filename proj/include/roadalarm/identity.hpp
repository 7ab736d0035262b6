#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace roadalarm {

using Bytes = std::vector<std::uint8_t>;
using PublicKey = std::array<std::uint8_t, 32>;
using Signature = std::array<std::uint8_t, 64>;

std::string to_hex(std::span<const std::uint8_t> bytes);

/// What a certified key is allowed to speak for.
enum class Role : std::uint8_t {
  Vehicle = 1,    // long-term vehicle identity
  Pseudonym = 2,  // short-term vehicle key, no identity
  Rsu = 3,
  MainRsu = 4,
  BaseStation = 5,
};

struct Certificate {
  PublicKey subject_key{};
  std::string subject;  // empty for pseudonyms
  Role role = Role::Pseudonym;
  std::string issuer;
  double not_before = 0;
  double not_after = 0;
  Signature signature{};

  /// Canonical bytes covered by the CA signature.
  Bytes signed_bytes() const;
  bool operator==(const Certificate&) const = default;
};

struct LongTermCredential {
  std::string vehicle_id;
  std::string key_ref;
  Certificate certificate;
};

struct Pseudonym {
  std::size_t index = 0;
  PublicKey public_key{};
  Certificate certificate;
  std::string key_ref;
  std::optional<std::string> used_on_segment;
};

struct SignedEnvelope {
  Bytes payload;
  double timestamp = 0;
  Signature signature{};
  Certificate certificate;

  /// payload || big-endian IEEE-754 timestamp
  Bytes signed_bytes() const;
  bool operator==(const SignedEnvelope&) const = default;
};

struct TrustAnchors {
  std::map<std::string, PublicKey> ca_keys;
  double freshness_window = 5.0;
};

enum class VerifyError { CertError, SignatureError, StaleTimestamp, Duplicate };

const char* to_string(VerifyError e);

class DuplicateIdentity : public std::runtime_error {
 public:
  explicit DuplicateIdentity(const std::string& id) : std::runtime_error("identity already registered: " + id) {}
};
class AuthFailure : public std::runtime_error {
 public:
  explicit AuthFailure(const std::string& id) : std::runtime_error("long-term authentication failed for " + id) {}
};
class UnknownKeyRef : public std::runtime_error {
 public:
  explicit UnknownKeyRef(const std::string& ref) : std::runtime_error("HSM holds no key " + ref) {}
};
class PseudonymPoolExhausted : public std::runtime_error {
 public:
  PseudonymPoolExhausted() : std::runtime_error("no unused pseudonym left") {}
};

/// Raw Ed25519 verification.
bool verify_signature(const PublicKey& key, std::span<const std::uint8_t> message, const Signature& sig);

/// Tamper-resistant key store and secure clock. Private keys never leave.
///
/// Key material is derived deterministically: the 32-byte Ed25519 seed of key
/// `ref` is BLAKE2b-256(owner + "/" + ref) keyed with 16 bytes: the
/// little-endian HSM seed followed by eight zero bytes. The same (owner, seed)
/// therefore replays the same keys.
class Hsm {
 public:
  Hsm(std::string owner, std::uint64_t seed);
  ~Hsm();
  Hsm(const Hsm&) = delete;
  Hsm& operator=(const Hsm&) = delete;

  const std::string& owner() const { return owner_; }

  PublicKey generate_key(const std::string& ref);
  bool holds(const std::string& ref) const;
  PublicKey public_key(const std::string& ref) const;
  void install_certificate(const std::string& ref, Certificate cert);
  const Certificate& certificate(const std::string& ref) const;

  /// Envelope stamped with the HSM clock and carrying the installed certificate.
  SignedEnvelope sign(const std::string& ref, std::span<const std::uint8_t> payload) const;
  Signature sign_raw(const std::string& ref, std::span<const std::uint8_t> message) const;

  /// The clock never moves backwards; earlier values are ignored.
  void advance_clock(double t);
  double now() const;

 private:
  struct Slot;
  const Slot& slot(const std::string& ref) const;

  std::string owner_;
  std::uint64_t seed_;
  double clock_ = 0;
  std::map<std::string, std::unique_ptr<Slot>> slots_;
  mutable std::mutex mutex_;
};

SignedEnvelope hsm_sign(const Hsm& hsm, const std::string& key_ref, std::span<const std::uint8_t> payload);

class CertificateAuthority {
 public:
  CertificateAuthority(std::string id, std::uint64_t seed, double cert_lifetime = 1.0e7);

  const std::string& id() const { return id_; }
  PublicKey public_key() const;
  TrustAnchors anchors(double freshness_window = 5.0) const;

  /// Creates the long-term key inside `hsm`, certifies it and records the identity.
  LongTermCredential register_vehicle(const std::string& vehicle_id, Hsm& hsm, double now);
  /// Same, for infrastructure units (RSU, mRSU, LBS).
  LongTermCredential register_unit(const std::string& unit_id, Role role, Hsm& hsm, double now);

  /// Challenge-authenticates the long-term key, then certifies `count` fresh
  /// HSM-generated pseudonym keys. Pseudonym certificates carry no subject.
  std::vector<Pseudonym> issue_pseudonyms(const LongTermCredential& credential, Hsm& hsm, std::size_t count,
                                          double now);

  /// Accountability lookup: pseudonym key -> long-term identity.
  std::optional<std::string> resolve(const PublicKey& pseudonym) const;

  std::size_t registered_count() const;

 private:
  Certificate certify(const PublicKey& key, const std::string& subject, Role role, double now);
  LongTermCredential enroll(const std::string& id, Role role, Hsm& hsm, double now);

  std::string id_;
  double lifetime_;
  std::unique_ptr<Hsm> hsm_;
  std::map<std::string, PublicKey> identities_;
  std::map<PublicKey, std::string> linkage_;
  std::map<std::string, std::size_t> pseudonym_batches_;
  std::uint64_t challenge_counter_ = 0;
  mutable std::mutex mutex_;
};

/// Remembers certificates whose CA signature already checked out, so a
/// verifier that hears the same sender repeatedly pays for one verification.
/// A hit needs the whole certificate to match; validity times are still
/// checked on every use.
class CertificateCache {
 public:
  explicit CertificateCache(std::size_t capacity = 4096) : capacity_(capacity) {}
  bool contains(const Certificate& cert) const;
  void insert(const Certificate& cert);
  std::size_t size() const { return certs_.size(); }

 private:
  std::size_t capacity_;
  std::map<Signature, Certificate> certs_;
  std::deque<Signature> order_;
};

/// Certificate chain, signature and freshness. nullopt means valid.
std::optional<VerifyError> check_envelope(const SignedEnvelope& env, const TrustAnchors& anchors, double now,
                                          CertificateCache* cache = nullptr);

std::variant<Bytes, VerifyError> verify_envelope(const SignedEnvelope& env, const TrustAnchors& anchors,
                                                 double now);

/// Verifier-side duplicate suppression: an envelope already accepted within the
/// freshness window is refused even though its timestamp is still fresh.
class ReplayGuard {
 public:
  explicit ReplayGuard(double window) : window_(window) {}
  /// Returns true if the envelope was seen before; records it otherwise.
  bool seen_before(const SignedEnvelope& env, double now);
  std::size_t size() const { return seen_.size(); }

 private:
  void prune(double now);
  double window_;
  std::map<Signature, double> seen_;
  std::deque<std::pair<double, Signature>> order_;
};

/// Pseudonyms held by one vehicle; each is used on exactly one segment.
class PseudonymPool {
 public:
  void add(std::vector<Pseudonym> batch);
  std::size_t unused() const;
  std::size_t size() const { return pool_.size(); }
  const Pseudonym* active() const;
  const std::vector<Pseudonym>& all() const { return pool_; }

  /// Lowest-index unused pseudonym becomes active and is bound to `rid`.
  const Pseudonym& rotate(const std::string& entering_rid);

 private:
  std::vector<Pseudonym> pool_;
  std::optional<std::size_t> active_;
};

inline const Pseudonym& rotate_pseudonym(PseudonymPool& pool, const std::string& entering_rid) {
  return pool.rotate(entering_rid);
}

}  // namespace roadalarm
