#include "roadalarm/identity.hpp"

#include <sodium.h>

#include <cmath>

#include "roadalarm/bytes.hpp"

namespace roadalarm {

namespace {

void ensure_sodium() {
  static const int rc = sodium_init();
  if (rc < 0) throw std::runtime_error("libsodium initialisation failed");
}

}  // namespace

std::string to_hex(std::span<const std::uint8_t> bytes) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  s.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    s.push_back(digits[b >> 4]);
    s.push_back(digits[b & 0xF]);
  }
  return s;
}

const char* to_string(VerifyError e) {
  switch (e) {
    case VerifyError::CertError: return "CertError";
    case VerifyError::SignatureError: return "SignatureError";
    case VerifyError::StaleTimestamp: return "StaleTimestamp";
    case VerifyError::Duplicate: return "Duplicate";
  }
  return "?";
}

Bytes Certificate::signed_bytes() const {
  ByteWriter w;
  w.u8('C');
  w.raw(subject_key);
  w.str(subject);
  w.u8(static_cast<std::uint8_t>(role));
  w.str(issuer);
  w.f64(not_before);
  w.f64(not_after);
  return w.take();
}

Bytes SignedEnvelope::signed_bytes() const {
  ByteWriter w;
  w.raw(payload);
  w.f64(timestamp);
  return w.take();
}

bool verify_signature(const PublicKey& key, std::span<const std::uint8_t> message, const Signature& sig) {
  ensure_sodium();
  return crypto_sign_verify_detached(sig.data(), message.data(), message.size(), key.data()) == 0;
}

struct Hsm::Slot {
  PublicKey pk{};
  std::array<std::uint8_t, crypto_sign_SECRETKEYBYTES> sk{};
  std::optional<Certificate> cert;
  ~Slot() { sodium_memzero(sk.data(), sk.size()); }
};

Hsm::Hsm(std::string owner, std::uint64_t seed) : owner_(std::move(owner)), seed_(seed) { ensure_sodium(); }

Hsm::~Hsm() = default;

PublicKey Hsm::generate_key(const std::string& ref) {
  std::lock_guard lock(mutex_);
  if (auto it = slots_.find(ref); it != slots_.end()) return it->second->pk;
  std::array<std::uint8_t, crypto_generichash_KEYBYTES_MIN> key{};
  for (int i = 0; i < 8; ++i) key[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(seed_ >> (8 * i));
  const std::string label = owner_ + "/" + ref;
  std::array<std::uint8_t, crypto_sign_SEEDBYTES> key_seed{};
  crypto_generichash(key_seed.data(), key_seed.size(), reinterpret_cast<const unsigned char*>(label.data()),
                     label.size(), key.data(), key.size());
  auto slot = std::make_unique<Slot>();
  crypto_sign_seed_keypair(slot->pk.data(), slot->sk.data(), key_seed.data());
  sodium_memzero(key_seed.data(), key_seed.size());
  const PublicKey pk = slot->pk;
  slots_.emplace(ref, std::move(slot));
  return pk;
}

bool Hsm::holds(const std::string& ref) const {
  std::lock_guard lock(mutex_);
  return slots_.count(ref) > 0;
}

const Hsm::Slot& Hsm::slot(const std::string& ref) const {
  auto it = slots_.find(ref);
  if (it == slots_.end()) throw UnknownKeyRef(ref);
  return *it->second;
}

PublicKey Hsm::public_key(const std::string& ref) const {
  std::lock_guard lock(mutex_);
  return slot(ref).pk;
}

void Hsm::install_certificate(const std::string& ref, Certificate cert) {
  std::lock_guard lock(mutex_);
  auto it = slots_.find(ref);
  if (it == slots_.end()) throw UnknownKeyRef(ref);
  it->second->cert = std::move(cert);
}

const Certificate& Hsm::certificate(const std::string& ref) const {
  std::lock_guard lock(mutex_);
  const Slot& s = slot(ref);
  if (!s.cert) throw UnknownKeyRef(ref + " (no certificate)");
  return *s.cert;
}

Signature Hsm::sign_raw(const std::string& ref, std::span<const std::uint8_t> message) const {
  std::lock_guard lock(mutex_);
  const Slot& s = slot(ref);
  Signature sig{};
  crypto_sign_detached(sig.data(), nullptr, message.data(), message.size(), s.sk.data());
  return sig;
}

SignedEnvelope Hsm::sign(const std::string& ref, std::span<const std::uint8_t> payload) const {
  SignedEnvelope env;
  env.payload.assign(payload.begin(), payload.end());
  {
    std::lock_guard lock(mutex_);
    const Slot& s = slot(ref);
    if (s.cert) env.certificate = *s.cert;
    env.timestamp = clock_;
  }
  env.signature = sign_raw(ref, env.signed_bytes());
  return env;
}

void Hsm::advance_clock(double t) {
  std::lock_guard lock(mutex_);
  if (t > clock_) clock_ = t;
}

double Hsm::now() const {
  std::lock_guard lock(mutex_);
  return clock_;
}

SignedEnvelope hsm_sign(const Hsm& hsm, const std::string& key_ref, std::span<const std::uint8_t> payload) {
  return hsm.sign(key_ref, payload);
}

CertificateAuthority::CertificateAuthority(std::string id, std::uint64_t seed, double cert_lifetime)
    : id_(std::move(id)), lifetime_(cert_lifetime), hsm_(std::make_unique<Hsm>(id_, seed)) {
  hsm_->generate_key("ca");
}

PublicKey CertificateAuthority::public_key() const { return hsm_->public_key("ca"); }

TrustAnchors CertificateAuthority::anchors(double freshness_window) const {
  TrustAnchors a;
  a.ca_keys[id_] = public_key();
  a.freshness_window = freshness_window;
  return a;
}

Certificate CertificateAuthority::certify(const PublicKey& key, const std::string& subject, Role role, double now) {
  Certificate c;
  c.subject_key = key;
  c.subject = subject;
  c.role = role;
  c.issuer = id_;
  c.not_before = now;
  c.not_after = now + lifetime_;
  c.signature = hsm_->sign_raw("ca", c.signed_bytes());
  return c;
}

LongTermCredential CertificateAuthority::enroll(const std::string& id, Role role, Hsm& hsm, double now) {
  std::lock_guard lock(mutex_);
  if (identities_.count(id)) throw DuplicateIdentity(id);
  const std::string ref = "long-term";
  const PublicKey pk = hsm.generate_key(ref);
  Certificate cert = certify(pk, id, role, now);
  hsm.install_certificate(ref, cert);
  identities_.emplace(id, pk);
  return LongTermCredential{id, ref, std::move(cert)};
}

LongTermCredential CertificateAuthority::register_vehicle(const std::string& vehicle_id, Hsm& hsm, double now) {
  return enroll(vehicle_id, Role::Vehicle, hsm, now);
}

LongTermCredential CertificateAuthority::register_unit(const std::string& unit_id, Role role, Hsm& hsm,
                                                       double now) {
  return enroll(unit_id, role, hsm, now);
}

std::vector<Pseudonym> CertificateAuthority::issue_pseudonyms(const LongTermCredential& credential, Hsm& hsm,
                                                              std::size_t count, double now) {
  std::lock_guard lock(mutex_);
  auto known = identities_.find(credential.vehicle_id);
  if (known == identities_.end() || known->second != credential.certificate.subject_key)
    throw AuthFailure(credential.vehicle_id);

  ByteWriter challenge;
  challenge.str("pseudonym-request");
  challenge.str(credential.vehicle_id);
  challenge.u64(++challenge_counter_);
  Signature response{};
  try {
    response = hsm.sign_raw(credential.key_ref, challenge.bytes());
  } catch (const UnknownKeyRef&) {
    throw AuthFailure(credential.vehicle_id);
  }
  if (!verify_signature(known->second, challenge.bytes(), response)) throw AuthFailure(credential.vehicle_id);

  std::size_t& issued = pseudonym_batches_[credential.vehicle_id];
  std::vector<Pseudonym> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    Pseudonym p;
    p.index = issued++;
    p.key_ref = "pseudonym-" + std::to_string(p.index);
    p.public_key = hsm.generate_key(p.key_ref);
    p.certificate = certify(p.public_key, "", Role::Pseudonym, now);
    hsm.install_certificate(p.key_ref, p.certificate);
    linkage_.emplace(p.public_key, credential.vehicle_id);
    out.push_back(std::move(p));
  }
  return out;
}

std::optional<std::string> CertificateAuthority::resolve(const PublicKey& pseudonym) const {
  std::lock_guard lock(mutex_);
  auto it = linkage_.find(pseudonym);
  if (it == linkage_.end()) return std::nullopt;
  return it->second;
}

std::size_t CertificateAuthority::registered_count() const {
  std::lock_guard lock(mutex_);
  return identities_.size();
}

bool CertificateCache::contains(const Certificate& cert) const {
  auto it = certs_.find(cert.signature);
  return it != certs_.end() && it->second == cert;
}

void CertificateCache::insert(const Certificate& cert) {
  if (capacity_ == 0 || certs_.count(cert.signature)) return;
  if (certs_.size() >= capacity_) {
    certs_.erase(order_.front());
    order_.pop_front();
  }
  certs_.emplace(cert.signature, cert);
  order_.push_back(cert.signature);
}

std::optional<VerifyError> check_envelope(const SignedEnvelope& env, const TrustAnchors& anchors, double now,
                                          CertificateCache* cache) {
  const Certificate& cert = env.certificate;
  auto ca = anchors.ca_keys.find(cert.issuer);
  if (ca == anchors.ca_keys.end()) return VerifyError::CertError;
  if (!(cert.not_before < cert.not_after)) return VerifyError::CertError;
  if (now < cert.not_before || now > cert.not_after) return VerifyError::CertError;
  if (!cache || !cache->contains(cert)) {
    if (!verify_signature(ca->second, cert.signed_bytes(), cert.signature)) return VerifyError::CertError;
    if (cache) cache->insert(cert);
  }
  if (!verify_signature(cert.subject_key, env.signed_bytes(), env.signature)) return VerifyError::SignatureError;
  if (!(std::abs(now - env.timestamp) <= anchors.freshness_window)) return VerifyError::StaleTimestamp;
  return std::nullopt;
}

std::variant<Bytes, VerifyError> verify_envelope(const SignedEnvelope& env, const TrustAnchors& anchors,
                                                 double now) {
  if (auto err = check_envelope(env, anchors, now)) return *err;
  return env.payload;
}

bool ReplayGuard::seen_before(const SignedEnvelope& env, double now) {
  prune(now);
  if (seen_.count(env.signature)) return true;
  seen_.emplace(env.signature, env.timestamp);
  order_.emplace_back(env.timestamp, env.signature);
  return false;
}

void ReplayGuard::prune(double now) {
  while (!order_.empty() && order_.front().first + window_ < now) {
    seen_.erase(order_.front().second);
    order_.pop_front();
  }
}

void PseudonymPool::add(std::vector<Pseudonym> batch) {
  for (auto& p : batch) pool_.push_back(std::move(p));
}

std::size_t PseudonymPool::unused() const {
  std::size_t n = 0;
  for (const auto& p : pool_)
    if (!p.used_on_segment) ++n;
  return n;
}

const Pseudonym* PseudonymPool::active() const { return active_ ? &pool_[*active_] : nullptr; }

const Pseudonym& PseudonymPool::rotate(const std::string& entering_rid) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < pool_.size(); ++i) {
    if (pool_[i].used_on_segment) continue;
    if (!best || pool_[i].index < pool_[*best].index) best = i;
  }
  if (!best) throw PseudonymPoolExhausted();
  pool_[*best].used_on_segment = entering_rid;
  active_ = best;
  return pool_[*best];
}

}  // namespace roadalarm
