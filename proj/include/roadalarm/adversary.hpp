#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "roadalarm/codec.hpp"
#include "roadalarm/identity.hpp"
#include "roadalarm/scenario.hpp"

namespace roadalarm {

/// A verbatim envelope recorded from the radio medium.
struct CapturedEnvelope {
  SignedEnvelope envelope;
  double captured_at = 0;
};

enum class ReplayKind { Fast, Stale };

struct PlannedReplay {
  SignedEnvelope envelope;
  double at = 0;
  ReplayKind kind = ReplayKind::Fast;
};

/// Kind of the index-th replay: fast while the running fast share stays at or
/// below `fast_fraction`.
ReplayKind replay_kind(std::size_t index, double fast_fraction);

/// Alternates fast and stale re-transmissions in the configured proportion.
std::vector<PlannedReplay> plan_replays(const std::vector<CapturedEnvelope>& captured, const AdversaryConfig& cfg,
                                        double freshness_window);

/// Attacker without any CA-certified key. It owns a device but cannot open
/// anybody else's HSM.
class Forger {
 public:
  explicit Forger(std::uint64_t seed);

  /// Signed under a self-generated key whose certificate names the real CA
  /// but carries a signature the CA never made.
  SignedEnvelope uncertified(const Bytes& payload, double now, const std::string& claimed_issuer);
  /// Signed under the attacker key but presenting a stolen real certificate.
  SignedEnvelope mismatched(const Bytes& payload, const Certificate& stolen, double now);

 private:
  Hsm hsm_;
};

/// Compromised but certified vehicle: it signs whatever the attacker wants.
struct BotnetMember {
  std::unique_ptr<Hsm> hsm;
  LongTermCredential credential;
  std::vector<Pseudonym> pseudonyms;
};

/// Fake report claiming a standstill `along` meters into the configured lane.
VeStateMsg botnet_report(const AdversaryConfig& cfg, const Segment& segment, Variant variant,
                         const std::string& mrsu_addr, double along, double now);

}  // namespace roadalarm
